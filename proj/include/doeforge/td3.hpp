#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "doeforge/env.hpp"
#include "doeforge/nn.hpp"
#include "doeforge/profiles.hpp"

namespace doeforge::td3 {

struct Transition {
  env::Observation s;
  double a = 0.0;
  double r = 0.0;
  env::Observation s2;
  bool done = false;  // true terminal only; truncations keep bootstrapping
};

/// Column-major minibatch: one transition per column.
struct Batch {
  Eigen::MatrixXd s;        // obs x B
  Eigen::RowVectorXd a;     // 1 x B
  Eigen::RowVectorXd r;     // 1 x B
  Eigen::MatrixXd s2;       // obs x B
  Eigen::RowVectorXd done;  // 1 x B, 0 or 1

  Eigen::Index size() const { return a.size(); }
};

/// Fixed-capacity ring; once full the oldest entry is overwritten first.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(const Transition& t);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }

  /// Entries from oldest to newest.
  std::vector<Transition> contents() const;

  /// Uniform with replacement. Throws ValidationError when fewer than
  /// `batch` transitions are stored.
  Batch sample(std::size_t batch, std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::vector<Transition> data_;
  std::size_t cursor_ = 0;  // next slot to overwrite once full
};

struct Td3Config {
  double gamma = 0.99;
  double rho = 0.995;
  int batch_size = 256;
  std::size_t buffer_capacity = 1000000;
  std::int64_t warmup_steps = 1000;
  double sigma_explore = 0.1;
  double sigma_target = 0.2;
  double noise_clip = 0.3;
  int policy_delay = 2;
  int updates_per_step = 1;  // learner updates per training step
  double actor_lr = 1e-3;
  double critic_lr = 1e-3;
  double final_layer_init = 3e-3;
  // Stop conditions. A training step is one round in which every parallel
  // environment advances once and the learner runs `updates_per_step` updates.
  std::int64_t max_steps = 50000;
  std::int64_t eval_interval = 2000;  // steps between evaluations
  int eval_episodes = 1;
  int patience = 10;  // evaluations without improvement; 0 disables

  void validate() const;
};

nlohmann::json toJson(const Td3Config& c);
/// Missing keys keep their defaults.
Td3Config td3ConfigFromJson(const nlohmann::json& j);

struct AgentNets {
  nn::MlpD actor, actor_target;
  nn::MlpD critic1, critic2;
  nn::MlpD critic_target1, critic_target2;
  nn::AdamD actor_opt, critic1_opt, critic2_opt;

  /// Learned networks randomly initialized, targets exact copies.
  static AgentNets initialize(const Td3Config& config, std::mt19937_64& rng,
                              int observation_size = env::kObservationSize);

  /// Rebuilds optimizer state for the current learned networks.
  void resetOptimizers(const Td3Config& config);
};

inline constexpr int kAgentFormatVersion = 1;

/// All six networks; optimizer moments are not stored.
nlohmann::json toJson(const AgentNets& nets);
AgentNets agentFromJson(const nlohmann::json& j, const Td3Config& config);

/// Actor checkpoint only, as used by generation.
nn::MlpD actorFromCheckpoint(const nlohmann::json& j);

/// Critic input: state rows stacked over the action row.
Eigen::MatrixXd criticInput(const Eigen::MatrixXd& s, const Eigen::RowVectorXd& a);

/// Clipped double-Q target with target policy smoothing.
Eigen::RowVectorXd targetQ(const Batch& batch, const AgentNets& nets, const Td3Config& config,
                           std::mt19937_64& rng);

/// MSE(q1, target) + MSE(q2, target).
double criticLoss(const Eigen::RowVectorXd& q1, const Eigen::RowVectorXd& q2, const Eigen::RowVectorXd& target);

/// -mean((q1 + q2) / 2).
double actorLoss(const Eigen::RowVectorXd& q1, const Eigen::RowVectorXd& q2);

/// One Adam step on both critics towards targetQ; returns the loss before the
/// step. Dropout is active in the learned critics.
double criticUpdate(const Batch& batch, AgentNets& nets, const Td3Config& config, std::mt19937_64& rng);

/// One Adam step on the actor through both critics (critics without dropout);
/// returns the loss before the step.
double actorUpdate(const Batch& batch, AgentNets& nets, const Td3Config& config, std::mt19937_64& rng);

/// target = rho * target + (1 - rho) * source, element-wise.
void polyakUpdate(nn::MlpD& target, const nn::MlpD& source, double rho);

/// Deterministic eval-mode action for one observation.
double act(const nn::MlpD& actor, const env::Observation& obs);

struct UpdateCounters {
  std::int64_t critic = 0;
  std::int64_t actor = 0;
  std::int64_t polyak = 0;
};

/// One learner iteration: critic update, and every `policy_delay`-th
/// iteration an actor update followed by Polyak updates of all three targets.
struct Learner {
  Td3Config config;
  UpdateCounters counters;
  double last_critic_loss = 0.0;
  double last_actor_loss = 0.0;

  void update(const Batch& batch, AgentNets& nets, std::mt19937_64& rng);
};

struct CurvePoint {
  std::int64_t step = 0;
  double eval_return = 0.0;
  double critic_loss = 0.0;  // mean over updates since the previous point
  double actor_loss = 0.0;
};

/// CSV `step,eval_return,critic_loss,actor_loss`.
std::string curveCsv(const std::vector<CurvePoint>& curve);

struct RolloutStats {
  double episode_return = 0.0;
  int steps = 0;
  bool terminal = false;
  int violations = 0;
  env::CoverageSnapshot coverage;
};

using Policy = std::function<double(const env::Observation&)>;

/// Full episode from reset(seed) under `policy`.
RolloutStats rollout(env::BatteryEnv& environment, std::uint64_t seed, const Policy& policy);

struct TrainResult {
  AgentNets nets;
  nn::MlpD best_actor;  // actor snapshot with the highest evaluation return
  double best_eval_return = 0.0;
  std::vector<CurvePoint> curve;
  UpdateCounters counters;
  std::int64_t steps = 0;
  std::int64_t env_transitions = 0;
  std::string stop_reason;
};

struct TrainHooks {
  // Called after each evaluation with the current networks.
  std::function<void(const AgentNets&, const CurvePoint&)> on_eval;
  // Called before every learner update; used by tests to observe schedules.
  std::function<void(std::int64_t step, const UpdateCounters&)> on_update;
};

/// TD3 over `envs` sharing one buffer. Evaluations run noise-free on
/// `eval_env` with fixed seeds.
TrainResult train(std::vector<env::BatteryEnv>& envs, env::BatteryEnv& eval_env, const Td3Config& config,
                  std::uint64_t seed, const TrainHooks& hooks = {});

struct Generated {
  profiles::CurrentProfile profile;
  env::EpisodeLog log;
};

/// Noise-free rollout of `actor` from reset(seed) for at most `max_steps`
/// steps per episode (0 means the env limit). With `episodes` > 1 each further
/// episode resumes from the cell state the previous one ended in, and the
/// returned log and profile cover the whole continuous session.
Generated generateDoe(const nn::MlpD& actor, env::BatteryEnv& environment, std::uint64_t seed, int max_steps = 0,
                      int episodes = 1);

}  // namespace doeforge::td3
