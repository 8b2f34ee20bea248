#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include <json.hpp>

#include "doeforge/ecm.hpp"
#include "doeforge/metrics.hpp"
#include "doeforge/profiles.hpp"

namespace doeforge::env {

/// Observation layout, every element in [0, 1]:
///   [0]      terminal voltage, normalized to [v_min, v_max]
///   [1]      last applied current, normalized to [-I_dis_max, I_chg_max]
///   [2]      SoC
///   [3..12]  voltage coverage histogram (counts / total)
///   [13..22] current coverage histogram
///   [23..32] SoC coverage histogram
///   [33..35] frequency-band visit fractions (low, mid, high)
///   [36..41] mean normalized current over the trailing 1, 4, 16, 64, 256, 1024 steps
///   [42]     elapsed steps / max episode steps
inline constexpr int kObservationSize = 43;
using Observation = Eigen::Matrix<double, kObservationSize, 1>;

namespace layout {
inline constexpr int kVoltage = 0;
inline constexpr int kCurrent = 1;
inline constexpr int kSoc = 2;
inline constexpr int kVoltageHist = 3;
inline constexpr int kCurrentHist = 13;
inline constexpr int kSocHist = 23;
inline constexpr int kBands = 33;
inline constexpr int kRecent = 36;
inline constexpr int kElapsed = 42;
}  // namespace layout

inline constexpr std::array<int, 6> kRecentWindows = {1, 4, 16, 64, 256, 1024};

struct RewardWeights {
  double w_time = 10.0;
  double w_freq = 5.0;
  double w_step = 0.01;
  double w_violation = 1.0;

  void validate() const;
};

struct EnvConfig {
  double dt = 1.0;
  int max_episode_steps = 20000;
  double v_min = 2.7;
  double v_max = 4.3;
  double i_charge_max = 20.0;
  double i_discharge_max = 30.0;  // magnitude
  double soc_init_min = 0.1;
  double soc_init_max = 0.9;
  double temp_init_min = 25.0;
  double temp_init_max = 25.0;
  // Episode ends once the mean voltage/current/SoC uniformity reaches this.
  // Values above 1 disable early termination.
  double coverage_target = 0.9;
  RewardWeights reward;
  metrics::BandSpec bands;
  double band_share_threshold = 0.2;

  void validate() const;
  metrics::CoverageEdges edges() const { return {v_min, v_max, i_discharge_max, i_charge_max}; }
};

nlohmann::json toJson(const EnvConfig& config);
/// Missing keys keep their defaults.
EnvConfig envConfigFromJson(const nlohmann::json& j);

struct CoverageSnapshot {
  Eigen::Vector3d time_uniformity = Eigen::Vector3d::Zero();  // voltage, current, soc
  double band_score = 0.0;
};

/// Weighted sum of coverage gains minus the per-step and violation penalties.
double computeReward(const CoverageSnapshot& before, const CoverageSnapshot& after, bool violation,
                     const RewardWeights& weights);

/// Maps a in [-1, 1] (clipped) to amps: a >= 0 scales by the charge limit,
/// a < 0 by the discharge limit.
double scaleAction(double action, const EnvConfig& config);

/// Everything an observation is built from.
struct ObservationInputs {
  double voltage = 0.0;
  double current = 0.0;
  double soc = 0.0;
  const metrics::TimeCoverage* coverage = nullptr;
  const metrics::BandCoverage* bands = nullptr;
  Eigen::Matrix<double, 6, 1> recent_means = Eigen::Matrix<double, 6, 1>::Zero();  // normalized currents
  int steps = 0;
};

Observation buildObservation(const ObservationInputs& in, const EnvConfig& config);

/// Current normalized to [0, 1] over [-I_dis_max, I_chg_max].
double normalizeCurrent(double current, const EnvConfig& config);

struct StepRecord {
  double t = 0.0;
  double action = 0.0;
  double current = 0.0;
  double voltage = 0.0;
  double soc = 0.0;
  double reward = 0.0;
  bool violation = false;
};

struct EpisodeLog {
  ecm::CellState initial;
  double dt = 1.0;
  std::vector<StepRecord> records;
  CoverageSnapshot final_coverage;
};

/// Zero-order-hold profile of the applied (post-safety) currents.
profiles::CurrentProfile exportProfile(const EpisodeLog& log);

/// CSV `t_s,action,current_a,voltage_v,soc,reward` plus a `.meta.json`
/// sidecar holding the initial state and dt.
void saveEpisodeLog(const EpisodeLog& log, const std::filesystem::path& path);

struct StepOutcome {
  Observation observation;
  double reward = 0.0;
  bool done = false;      // terminal or truncated
  bool terminal = false;  // coverage target reached
  bool violation = false;
  double current = 0.0;
  double voltage = 0.0;
};

/// Single-cell RL environment. Not thread-safe; use one instance per thread.
class BatteryEnv {
 public:
  BatteryEnv(ecm::EcmParams params, EnvConfig config);

  Observation reset(std::uint64_t seed);
  /// New episode (fresh coverage, log and step count) that continues from
  /// `state` instead of a random rested cell.
  Observation resume(const ecm::CellState& state);
  StepOutcome step(double action);

  Observation observation() const;
  CoverageSnapshot coverage() const;

  const EpisodeLog& log() const { return log_; }
  const ecm::CellState& state() const { return state_; }
  const EnvConfig& config() const { return config_; }
  const ecm::EcmParams& params() const { return params_; }
  const metrics::TimeCoverage& timeCoverage() const { return time_cov_; }
  const metrics::BandCoverage& bandCoverage() const { return band_cov_; }
  bool done() const { return done_; }
  int steps() const { return steps_; }
  bool active() const { return started_ && !done_; }

 private:
  Observation begin(ecm::CellState state);
  Eigen::Matrix<double, 6, 1> recentMeans() const;
  struct SafeStep {
    ecm::StepResult result;
    double current;
    bool violation;
  };
  // Applies the requested current unless it would leave the voltage window or
  // saturate SoC; then rests instead and flags a violation.
  SafeStep safeStep(double requested) const;

  ecm::EcmParams params_;
  EnvConfig config_;
  ecm::CellState state_;
  double voltage_ = 0.0;
  double current_ = 0.0;
  metrics::TimeCoverage time_cov_;
  metrics::BandCoverage band_cov_;
  std::vector<double> norm_current_prefix_;  // prefix sums of normalized applied currents
  EpisodeLog log_;
  int steps_ = 0;
  bool started_ = false;
  bool done_ = false;
};

}  // namespace doeforge::env
