#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "doeforge/ecm.hpp"

namespace doeforge::profiles {

enum class Source { Traditional, Ai, External };

std::string toString(Source source);
Source sourceFromString(const std::string& s);

struct ProfileMeta {
  std::string name;
  Source source = Source::External;
  // Hold time of the final sample. Zero means the profile ends at its last
  // timestamp.
  double dt_nominal = 0.0;
  double initial_soc = 1.0;
};

/// Time-stamped current sequence with zero-order hold between samples.
class CurrentProfile {
 public:
  CurrentProfile() = default;

  /// Validates: t strictly increasing from 0, currents finite, non-empty.
  CurrentProfile(std::vector<double> t, std::vector<double> current, ProfileMeta meta);

  /// Uniform grid t_k = k*dt, holding the last sample for dt.
  static CurrentProfile uniform(const std::vector<double>& current, double dt, ProfileMeta meta);

  std::size_t size() const { return t_.size(); }
  bool empty() const { return t_.empty(); }
  const std::vector<double>& times() const { return t_; }
  const std::vector<double>& currents() const { return current_; }
  const ProfileMeta& meta() const { return meta_; }
  ProfileMeta& meta() { return meta_; }

  /// Last timestamp plus the hold time of the final sample.
  double duration() const;

  /// Length of the interval over which sample i is applied.
  double interval(std::size_t i) const;

  /// True when t_k == k*dt_nominal exactly for every sample.
  bool isUniform() const;

  /// Zero-order hold; past the end the cell rests at 0 A.
  double sample(double t) const;

  /// Charge throughput in coulombs (signed).
  double chargeCoulombs() const;

  bool operator==(const CurrentProfile& other) const {
    return t_ == other.t_ && current_ == other.current_;
  }

 private:
  std::vector<double> t_;
  std::vector<double> current_;
  ProfileMeta meta_;
};

/// `b` appended after `a` ends. Requires a.duration() > last timestamp of a.
CurrentProfile concat(const CurrentProfile& a, const CurrentProfile& b);

enum class Direction { Charge, Discharge };

/// Constant +-(c_rate*capacity) A on a uniform dt grid. A non-positive
/// `duration` means a full charge or discharge, 3600/c_rate seconds.
CurrentProfile constantCurrent(double c_rate, double capacity_ah, Direction direction, double duration = 0.0,
                               double dt = 1.0);

struct PulseSpec {
  std::vector<double> amplitudes;  // A, positive magnitudes
  double pulse_duration = 10.0;    // s
  double rest_duration = 10.0;     // s
  std::vector<double> soc_points;  // strictly decreasing
  double start_soc = 1.0;
  double capacity_ah = 5.0;
  double reposition_c_rate = 1.0;
  double settle_duration = 0.0;  // rest after each repositioning discharge
  double dt = 1.0;

  void validate() const;
};

/// For each SoC point: discharge to it (on the nominal capacity), settle, then
/// per amplitude a charge pulse, rest, discharge pulse, rest.
CurrentProfile pulseProfile(const PulseSpec& spec);

/// Synthetic urban-like validation cycle: random pulses of log-uniform length
/// (1-60 s) and discharge-biased amplitude, lightly low-pass filtered.
struct DriveCycleSpec {
  double duration = 3600.0;
  double dt = 1.0;
  double max_charge_a = 20.0;
  double max_discharge_a = 30.0;
  double capacity_ah = 5.0;  // used to keep the cycle inside the SoC range
  double smoothing_tau = 2.0;    // s, first-order filter on the pulse train
  double initial_soc = 0.9;
};

CurrentProfile driveCycle(const DriveCycleSpec& spec, std::uint64_t seed);

/// CSV `t_s,current_a` plus a `<path>.meta.json` sidecar for the metadata.
void saveProfile(const CurrentProfile& profile, const std::filesystem::path& path);

/// Reads the CSV and, when present, the sidecar.
CurrentProfile loadProfile(const std::filesystem::path& path);

nlohmann::json metaToJson(const ProfileMeta& meta);
ProfileMeta metaFromJson(const nlohmann::json& j);

/// Replay result of a profile through a cell model.
struct Simulation {
  Eigen::VectorXd voltage;  // terminal voltage at the end of each sample interval
  Eigen::VectorXd soc;      // SoC at the end of each sample interval
  std::size_t saturated_steps = 0;
};

/// Open-loop replay: sample i is applied over interval(i).
Simulation simulate(const CurrentProfile& profile, const ecm::EcmParams& params, const ecm::CellState& initial);

struct LimitedProfile {
  CurrentProfile profile;
  std::size_t clamped_samples = 0;
};

/// Cycler-style safety guard: replays `profile` and substitutes 0 A for every
/// sample that would take the terminal voltage outside [v_min, v_max] or
/// saturate SoC. The result is the current actually applied.
LimitedProfile enforceLimits(const CurrentProfile& profile, const ecm::EcmParams& params,
                             const ecm::CellState& initial, double v_min, double v_max);

/// Traditional DoE recipe. The C-rates and pulse grid are stand-ins: the
/// original per-group test table is not available.
struct TraditionalRecipe {
  double capacity_ah = 5.0;
  double ocv_c_rate = 0.05;  // 0 skips the OCV test
  std::vector<double> rate_c_rates = {0.2, 0.5, 1.0, 2.0};
  double rate_rest = 1800.0;
  std::vector<double> pulse_c_rates = {0.5, 1.0, 2.0};
  std::vector<double> pulse_durations = {1.0, 10.0, 100.0};
  int pulse_soc_points = 10;
  double pulse_settle = 600.0;
  double dt = 1.0;

  void validate() const;
};

nlohmann::json recipeToJson(const TraditionalRecipe& r);
TraditionalRecipe recipeFromJson(const nlohmann::json& j);

/// OCV cycle, one rate test per C-rate and one pulse train per pulse
/// duration. Each profile starts from a rested full cell.
std::vector<CurrentProfile> traditionalSuite(const TraditionalRecipe& recipe);

double totalDuration(const std::vector<CurrentProfile>& suite);

}  // namespace doeforge::profiles
