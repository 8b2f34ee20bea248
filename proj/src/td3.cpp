#include "doeforge/td3.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "doeforge/errors.hpp"
#include "doeforge/io.hpp"

namespace doeforge::td3 {

using Matrix = nn::MlpD::Matrix;

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ValidationError("replay buffer capacity must be positive");
}

void ReplayBuffer::push(const Transition& t) {
  if (!(t.a >= -1.0 && t.a <= 1.0)) throw ValidationError("transition action outside [-1, 1]");
  if (data_.size() < capacity_) {
    data_.push_back(t);
    return;
  }
  data_[cursor_] = t;
  cursor_ = (cursor_ + 1) % capacity_;
}

std::vector<Transition> ReplayBuffer::contents() const {
  std::vector<Transition> out;
  out.reserve(data_.size());
  for (std::size_t i = 0; i < data_.size(); ++i) out.push_back(data_[(cursor_ + i) % data_.size()]);
  return out;
}

Batch ReplayBuffer::sample(std::size_t batch, std::mt19937_64& rng) const {
  if (batch == 0) throw ValidationError("batch size must be positive");
  if (data_.size() < batch) {
    throw ValidationError("cannot sample " + std::to_string(batch) + " transitions from a buffer holding " +
                          std::to_string(data_.size()));
  }
  std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
  const auto n = static_cast<Eigen::Index>(batch);
  const auto dim = data_.front().s.size();
  Batch b{Eigen::MatrixXd(dim, n), Eigen::RowVectorXd(n), Eigen::RowVectorXd(n), Eigen::MatrixXd(dim, n),
          Eigen::RowVectorXd(n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    const Transition& t = data_[pick(rng)];
    b.s.col(j) = t.s;
    b.a[j] = t.a;
    b.r[j] = t.r;
    b.s2.col(j) = t.s2;
    b.done[j] = t.done ? 1.0 : 0.0;
  }
  return b;
}

void Td3Config::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ValidationError("td3 gamma must be in [0, 1]");
  if (!(rho >= 0.0 && rho <= 1.0)) throw ValidationError("td3 rho must be in [0, 1]");
  if (batch_size < 1) throw ValidationError("td3 batch_size must be >= 1");
  if (buffer_capacity < static_cast<std::size_t>(batch_size)) {
    throw ValidationError("td3 buffer_capacity must hold at least one batch");
  }
  if (warmup_steps < 0 || max_steps < 0) throw ValidationError("td3 step counts must be non-negative");
  if (!(sigma_explore >= 0.0) || !(sigma_target >= 0.0) || !(noise_clip >= 0.0)) {
    throw ValidationError("td3 noise parameters must be non-negative");
  }
  if (policy_delay < 1) throw ValidationError("td3 policy_delay must be >= 1");
  if (!(actor_lr > 0.0) || !(critic_lr > 0.0)) throw ValidationError("td3 learning rates must be positive");
  if (!(final_layer_init > 0.0)) throw ValidationError("td3 final_layer_init must be positive");
  if (eval_interval < 1 || eval_episodes < 1) throw ValidationError("td3 evaluation settings must be >= 1");
  if (patience < 0) throw ValidationError("td3 patience must be non-negative");
  if (updates_per_step < 1) throw ValidationError("td3 updates_per_step must be >= 1");
}

nlohmann::json toJson(const Td3Config& c) {
  return {{"gamma", c.gamma},
          {"rho", c.rho},
          {"batch_size", c.batch_size},
          {"buffer_capacity", c.buffer_capacity},
          {"warmup_steps", c.warmup_steps},
          {"sigma_explore", c.sigma_explore},
          {"sigma_target", c.sigma_target},
          {"noise_clip", c.noise_clip},
          {"policy_delay", c.policy_delay},
          {"updates_per_step", c.updates_per_step},
          {"actor_lr", c.actor_lr},
          {"critic_lr", c.critic_lr},
          {"final_layer_init", c.final_layer_init},
          {"max_steps", c.max_steps},
          {"eval_interval", c.eval_interval},
          {"eval_episodes", c.eval_episodes},
          {"patience", c.patience}};
}

Td3Config td3ConfigFromJson(const nlohmann::json& j) {
  Td3Config c;
  try {
    c.gamma = j.value("gamma", c.gamma);
    c.rho = j.value("rho", c.rho);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.buffer_capacity = j.value("buffer_capacity", c.buffer_capacity);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.sigma_explore = j.value("sigma_explore", c.sigma_explore);
    c.sigma_target = j.value("sigma_target", c.sigma_target);
    c.noise_clip = j.value("noise_clip", c.noise_clip);
    c.policy_delay = j.value("policy_delay", c.policy_delay);
    c.updates_per_step = j.value("updates_per_step", c.updates_per_step);
    c.actor_lr = j.value("actor_lr", c.actor_lr);
    c.critic_lr = j.value("critic_lr", c.critic_lr);
    c.final_layer_init = j.value("final_layer_init", c.final_layer_init);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.eval_interval = j.value("eval_interval", c.eval_interval);
    c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
    c.patience = j.value("patience", c.patience);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("td3 config: ") + e.what());
  }
  c.validate();
  return c;
}

AgentNets AgentNets::initialize(const Td3Config& config, std::mt19937_64& rng, int observation_size) {
  AgentNets n;
  n.actor = nn::MlpD::initialized(nn::actorSpec(observation_size), rng, config.final_layer_init);
  n.critic1 = nn::MlpD::initialized(nn::criticSpec(observation_size), rng, config.final_layer_init);
  n.critic2 = nn::MlpD::initialized(nn::criticSpec(observation_size), rng, config.final_layer_init);
  n.actor_target = n.actor;
  n.critic_target1 = n.critic1;
  n.critic_target2 = n.critic2;
  n.resetOptimizers(config);
  return n;
}

void AgentNets::resetOptimizers(const Td3Config& config) {
  actor_opt = nn::AdamD(actor, {.lr = config.actor_lr});
  critic1_opt = nn::AdamD(critic1, {.lr = config.critic_lr});
  critic2_opt = nn::AdamD(critic2, {.lr = config.critic_lr});
}

nlohmann::json toJson(const AgentNets& n) {
  return {{"format", "doeforge-agent"},
          {"format_version", kAgentFormatVersion},
          {"actor", nn::toJson(n.actor)},
          {"actor_target", nn::toJson(n.actor_target)},
          {"critic1", nn::toJson(n.critic1)},
          {"critic2", nn::toJson(n.critic2)},
          {"critic_target1", nn::toJson(n.critic_target1)},
          {"critic_target2", nn::toJson(n.critic_target2)}};
}

namespace {

void checkAgentHeader(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != "doeforge-agent") {
    throw ValidationError("not an agent checkpoint");
  }
  if (j.value("format_version", 0) != kAgentFormatVersion) {
    throw ValidationError("unsupported agent checkpoint format_version");
  }
}

void requireSameShape(const nn::MlpD& a, const nn::MlpD& b, const char* what) {
  if (!(a.spec().sizes == b.spec().sizes)) throw ValidationError(std::string(what) + ": shape mismatch");
}

}  // namespace

AgentNets agentFromJson(const nlohmann::json& j, const Td3Config& config) {
  checkAgentHeader(j);
  AgentNets n;
  try {
    n.actor = nn::mlpFromJson(j.at("actor"));
    n.actor_target = nn::mlpFromJson(j.at("actor_target"));
    n.critic1 = nn::mlpFromJson(j.at("critic1"));
    n.critic2 = nn::mlpFromJson(j.at("critic2"));
    n.critic_target1 = nn::mlpFromJson(j.at("critic_target1"));
    n.critic_target2 = nn::mlpFromJson(j.at("critic_target2"));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("agent checkpoint: ") + e.what());
  }
  requireSameShape(n.actor, n.actor_target, "actor target");
  requireSameShape(n.critic1, n.critic_target1, "critic target 1");
  requireSameShape(n.critic2, n.critic_target2, "critic target 2");
  if (n.critic1.inputSize() != n.actor.inputSize() + 1 || n.actor.outputSize() != 1) {
    throw ValidationError("agent checkpoint: critic input must be observation plus one action");
  }
  n.resetOptimizers(config);
  return n;
}

nn::MlpD actorFromCheckpoint(const nlohmann::json& j) {
  checkAgentHeader(j);
  if (!j.contains("actor")) throw ValidationError("agent checkpoint has no actor");
  auto actor = nn::mlpFromJson(j.at("actor"));
  if (actor.outputSize() != 1) throw ValidationError("actor must have a single output");
  return actor;
}

Eigen::MatrixXd criticInput(const Eigen::MatrixXd& s, const Eigen::RowVectorXd& a) {
  Eigen::MatrixXd x(s.rows() + 1, s.cols());
  x.topRows(s.rows()) = s;
  x.bottomRows(1) = a;
  return x;
}

Eigen::RowVectorXd targetQ(const Batch& batch, const AgentNets& nets, const Td3Config& config,
                           std::mt19937_64& rng) {
  Eigen::RowVectorXd a2 = nets.actor_target.forward(batch.s2).row(0);
  if (config.sigma_target > 0.0) {
    std::normal_distribution<double> noise(0.0, config.sigma_target);
    for (Eigen::Index j = 0; j < a2.size(); ++j) {
      a2[j] += std::clamp(noise(rng), -config.noise_clip, config.noise_clip);
    }
  }
  a2 = a2.cwiseMax(-1.0).cwiseMin(1.0);
  const Matrix x2 = criticInput(batch.s2, a2);
  const Eigen::RowVectorXd q1 = nets.critic_target1.forward(x2).row(0);
  const Eigen::RowVectorXd q2 = nets.critic_target2.forward(x2).row(0);
  const Eigen::RowVectorXd not_done = (1.0 - batch.done.array()).matrix();
  return batch.r + config.gamma * not_done.cwiseProduct(q1.cwiseMin(q2));
}

double criticLoss(const Eigen::RowVectorXd& q1, const Eigen::RowVectorXd& q2, const Eigen::RowVectorXd& target) {
  const double n = static_cast<double>(target.size());
  return (q1 - target).squaredNorm() / n + (q2 - target).squaredNorm() / n;
}

double actorLoss(const Eigen::RowVectorXd& q1, const Eigen::RowVectorXd& q2) {
  return -0.5 * (q1 + q2).mean();
}

namespace {

void requireFinite(double loss, const char* what, const Batch& batch) {
  if (!std::isfinite(loss)) {
    std::ostringstream msg;
    msg << what << " loss is not finite (batch " << batch.size() << ", reward range [" << batch.r.minCoeff() << ", "
        << batch.r.maxCoeff() << "])";
    throw NumericalError(msg.str());
  }
}

}  // namespace

double criticUpdate(const Batch& batch, AgentNets& nets, const Td3Config& config, std::mt19937_64& rng) {
  if (batch.size() == 0) throw ValidationError("critic update on an empty batch");
  const Eigen::RowVectorXd y = targetQ(batch, nets, config, rng);
  const Matrix x = criticInput(batch.s, batch.a);
  nn::MlpD::Cache c1, c2;
  const Eigen::RowVectorXd q1 = nets.critic1.forward(x, c1, &rng).row(0);
  const Eigen::RowVectorXd q2 = nets.critic2.forward(x, c2, &rng).row(0);
  const double loss = criticLoss(q1, q2, y);
  requireFinite(loss, "critic", batch);
  const double scale = 2.0 / static_cast<double>(batch.size());
  const auto g1 = nets.critic1.backward(c1, scale * (q1 - y));
  const auto g2 = nets.critic2.backward(c2, scale * (q2 - y));
  nets.critic1_opt.step(nets.critic1, g1);
  nets.critic2_opt.step(nets.critic2, g2);
  return loss;
}

double actorUpdate(const Batch& batch, AgentNets& nets, const Td3Config& /*config*/, std::mt19937_64& rng) {
  if (batch.size() == 0) throw ValidationError("actor update on an empty batch");
  nn::MlpD::Cache ca, c1, c2;
  const Eigen::RowVectorXd a = nets.actor.forward(batch.s, ca, &rng).row(0);
  const Matrix x = criticInput(batch.s, a);
  const Eigen::RowVectorXd q1 = nets.critic1.forward(x, c1, nullptr).row(0);
  const Eigen::RowVectorXd q2 = nets.critic2.forward(x, c2, nullptr).row(0);
  const double loss = actorLoss(q1, q2);
  requireFinite(loss, "actor", batch);
  const Matrix dq = Matrix::Constant(1, batch.size(), -0.5 / static_cast<double>(batch.size()));
  const auto g1 = nets.critic1.backward(c1, dq);
  const auto g2 = nets.critic2.backward(c2, dq);
  const auto last = g1.input.rows() - 1;
  const Matrix da = g1.input.row(last) + g2.input.row(last);
  const auto ga = nets.actor.backward(ca, da);
  nets.actor_opt.step(nets.actor, ga);
  return loss;
}

void polyakUpdate(nn::MlpD& target, const nn::MlpD& source, double rho) {
  if (!(target.spec().sizes == source.spec().sizes)) throw ValidationError("polyak update: shape mismatch");
  if (!(rho >= 0.0 && rho <= 1.0)) throw ValidationError("polyak rho must be in [0, 1]");
  auto& t = target.mutableLayers();
  const auto& s = source.layers();
  for (std::size_t l = 0; l < t.size(); ++l) {
    t[l].weight = rho * t[l].weight + (1.0 - rho) * s[l].weight;
    t[l].bias = rho * t[l].bias + (1.0 - rho) * s[l].bias;
  }
}

double act(const nn::MlpD& actor, const env::Observation& obs) {
  return actor.forward(Matrix(obs))(0, 0);
}

void Learner::update(const Batch& batch, AgentNets& nets, std::mt19937_64& rng) {
  last_critic_loss = criticUpdate(batch, nets, config, rng);
  ++counters.critic;
  if (counters.critic % config.policy_delay == 0) {
    last_actor_loss = actorUpdate(batch, nets, config, rng);
    ++counters.actor;
    polyakUpdate(nets.actor_target, nets.actor, config.rho);
    polyakUpdate(nets.critic_target1, nets.critic1, config.rho);
    polyakUpdate(nets.critic_target2, nets.critic2, config.rho);
    ++counters.polyak;
  }
}

std::string curveCsv(const std::vector<CurvePoint>& curve) {
  std::string out = "step,eval_return,critic_loss,actor_loss\n";
  for (const auto& p : curve) {
    out += std::to_string(p.step) + "," + io::formatDouble(p.eval_return) + "," + io::formatDouble(p.critic_loss) +
           "," + io::formatDouble(p.actor_loss) + "\n";
  }
  return out;
}

RolloutStats rollout(env::BatteryEnv& environment, std::uint64_t seed, const Policy& policy) {
  RolloutStats stats;
  env::Observation obs = environment.reset(seed);
  bool done = false;
  while (!done) {
    const auto out = environment.step(policy(obs));
    stats.episode_return += out.reward;
    stats.violations += out.violation ? 1 : 0;
    stats.terminal = out.terminal;
    done = out.done;
    obs = out.observation;
  }
  stats.steps = environment.steps();
  stats.coverage = environment.coverage();
  return stats;
}

TrainResult train(std::vector<env::BatteryEnv>& envs, env::BatteryEnv& eval_env, const Td3Config& config,
                  std::uint64_t seed, const TrainHooks& hooks) {
  config.validate();
  if (envs.empty()) throw ValidationError("training needs at least one environment");

  std::mt19937_64 rng(seed);
  TrainResult result;
  result.nets = AgentNets::initialize(config, rng);
  result.best_actor = result.nets.actor;
  result.best_eval_return = -std::numeric_limits<double>::infinity();
  result.stop_reason = "max_steps";

  std::vector<std::uint64_t> eval_seeds;
  {
    std::mt19937_64 eval_rng(seed ^ 0x9e3779b97f4a7c15ULL);
    for (int k = 0; k < config.eval_episodes; ++k) eval_seeds.push_back(eval_rng());
  }

  ReplayBuffer buffer(config.buffer_capacity);
  Learner learner{config, {}, 0.0, 0.0};
  std::uniform_real_distribution<double> uniform_action(-1.0, 1.0);
  std::normal_distribution<double> explore(0.0, config.sigma_explore > 0.0 ? config.sigma_explore : 1.0);

  std::vector<env::Observation> obs(envs.size());
  for (std::size_t i = 0; i < envs.size(); ++i) obs[i] = envs[i].reset(rng());

  double critic_sum = 0.0, actor_sum = 0.0;
  std::int64_t critic_n = 0, actor_n = 0;
  int stale_evals = 0;

  auto evaluate = [&](std::int64_t step) {
    double total = 0.0;
    for (auto s : eval_seeds) {
      total += rollout(eval_env, s, [&](const env::Observation& o) { return act(result.nets.actor, o); })
                   .episode_return;
    }
    CurvePoint p{step, total / static_cast<double>(eval_seeds.size()), critic_n ? critic_sum / critic_n : 0.0,
                 actor_n ? actor_sum / actor_n : 0.0};
    critic_sum = actor_sum = 0.0;
    critic_n = actor_n = 0;
    result.curve.push_back(p);
    if (p.eval_return > result.best_eval_return) {
      result.best_eval_return = p.eval_return;
      result.best_actor = result.nets.actor;
      stale_evals = 0;
    } else {
      ++stale_evals;
    }
    if (hooks.on_eval) hooks.on_eval(result.nets, p);
  };

  std::int64_t step = 0;
  while (step < config.max_steps) {
    ++step;
    for (std::size_t i = 0; i < envs.size(); ++i) {
      double a;
      if (result.env_transitions < config.warmup_steps) {
        a = uniform_action(rng);
      } else {
        a = act(result.nets.actor, obs[i]);
        if (config.sigma_explore > 0.0) a += explore(rng);
        a = std::clamp(a, -1.0, 1.0);
      }
      const auto out = envs[i].step(a);
      buffer.push({obs[i], a, out.reward, out.observation, out.terminal});
      ++result.env_transitions;
      obs[i] = out.done ? envs[i].reset(rng()) : out.observation;
    }

    for (int u = 0; u < config.updates_per_step && result.env_transitions >= config.warmup_steps &&
                    buffer.size() >= static_cast<std::size_t>(config.batch_size);
         ++u) {
      if (hooks.on_update) hooks.on_update(step, learner.counters);
      const std::int64_t actor_before = learner.counters.actor;
      learner.update(buffer.sample(static_cast<std::size_t>(config.batch_size), rng), result.nets, rng);
      critic_sum += learner.last_critic_loss;
      ++critic_n;
      if (learner.counters.actor != actor_before) {
        actor_sum += learner.last_actor_loss;
        ++actor_n;
      }
    }

    if (step % config.eval_interval == 0) {
      evaluate(step);
      if (config.patience > 0 && stale_evals >= config.patience) {
        result.stop_reason = "plateau";
        break;
      }
    }
  }
  if (step > 0 && (result.curve.empty() || result.curve.back().step != step)) evaluate(step);

  result.steps = step;
  result.counters = learner.counters;
  return result;
}

Generated generateDoe(const nn::MlpD& actor, env::BatteryEnv& environment, std::uint64_t seed, int max_steps,
                      int episodes) {
  if (actor.inputSize() != env::kObservationSize || actor.outputSize() != 1) {
    throw ValidationError("actor shape does not match the environment observation");
  }
  if (episodes < 1) throw ValidationError("generate: episodes must be >= 1");
  env::EpisodeLog session;
  for (int e = 0; e < episodes; ++e) {
    env::Observation obs = e == 0 ? environment.reset(seed) : environment.resume(environment.state());
    bool done = false;
    int steps = 0;
    while (!done && (max_steps <= 0 || steps < max_steps)) {
      const auto out = environment.step(act(actor, obs));
      obs = out.observation;
      done = out.done;
      ++steps;
    }
    const auto& log = environment.log();
    if (e == 0) {
      session.initial = log.initial;
      session.dt = log.dt;
    }
    const double offset = session.records.empty() ? 0.0 : session.records.back().t + session.dt;
    for (auto r : log.records) {
      r.t += offset;
      session.records.push_back(r);
    }
    session.final_coverage = log.final_coverage;
  }
  return {env::exportProfile(session), session};
}

}  // namespace doeforge::td3
