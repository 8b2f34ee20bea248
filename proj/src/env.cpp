#include "doeforge/env.hpp"

#include <algorithm>
#include <cmath>

#include "doeforge/errors.hpp"
#include "doeforge/io.hpp"

namespace doeforge::env {

void RewardWeights::validate() const {
  if (!(w_time >= 0.0) || !(w_freq >= 0.0) || !(w_violation >= 0.0)) {
    throw ValidationError("reward weights must be non-negative");
  }
  if (!(w_step > 0.0)) throw ValidationError("reward w_step must be positive");
}

void EnvConfig::validate() const {
  if (!(dt > 0.0)) throw ValidationError("env dt must be positive");
  if (max_episode_steps < 1) throw ValidationError("env max_episode_steps must be >= 1");
  if (!(v_min < v_max)) throw ValidationError("env voltage limits need v_min < v_max");
  if (!(i_charge_max > 0.0) || !(i_discharge_max > 0.0)) throw ValidationError("env current limits must be positive");
  if (!(soc_init_min >= 0.0 && soc_init_min <= soc_init_max && soc_init_max <= 1.0)) {
    throw ValidationError("env initial SoC range must satisfy 0 <= min <= max <= 1");
  }
  if (!(temp_init_min <= temp_init_max)) throw ValidationError("env initial temperature range is inverted");
  if (!(coverage_target > 0.0)) throw ValidationError("env coverage_target must be positive");
  reward.validate();
  metrics::BandSpec b = bands;
  b.dt = dt;
  b.validate();
  if (!(band_share_threshold > 0.0 && band_share_threshold <= 1.0)) {
    throw ValidationError("env band_share_threshold must be in (0, 1]");
  }
}

nlohmann::json toJson(const EnvConfig& c) {
  return {{"dt", c.dt},
          {"max_episode_steps", c.max_episode_steps},
          {"v_min", c.v_min},
          {"v_max", c.v_max},
          {"i_charge_max", c.i_charge_max},
          {"i_discharge_max", c.i_discharge_max},
          {"soc_init", {c.soc_init_min, c.soc_init_max}},
          {"temp_init", {c.temp_init_min, c.temp_init_max}},
          {"coverage_target", c.coverage_target},
          {"reward",
           {{"w_time", c.reward.w_time},
            {"w_freq", c.reward.w_freq},
            {"w_step", c.reward.w_step},
            {"w_violation", c.reward.w_violation}}},
          {"bands",
           {{"window", c.bands.window},
            {"hop", c.bands.hop},
            {"low_upper_hz", c.bands.low_upper_hz},
            {"mid_upper_hz", c.bands.mid_upper_hz}}},
          {"band_share_threshold", c.band_share_threshold}};
}

EnvConfig envConfigFromJson(const nlohmann::json& j) {
  EnvConfig c;
  try {
    c.dt = j.value("dt", c.dt);
    c.max_episode_steps = j.value("max_episode_steps", c.max_episode_steps);
    c.v_min = j.value("v_min", c.v_min);
    c.v_max = j.value("v_max", c.v_max);
    c.i_charge_max = j.value("i_charge_max", c.i_charge_max);
    c.i_discharge_max = j.value("i_discharge_max", c.i_discharge_max);
    if (j.contains("soc_init")) {
      c.soc_init_min = j.at("soc_init").at(0).get<double>();
      c.soc_init_max = j.at("soc_init").at(1).get<double>();
    }
    if (j.contains("temp_init")) {
      c.temp_init_min = j.at("temp_init").at(0).get<double>();
      c.temp_init_max = j.at("temp_init").at(1).get<double>();
    }
    c.coverage_target = j.value("coverage_target", c.coverage_target);
    if (j.contains("reward")) {
      const auto& r = j.at("reward");
      c.reward.w_time = r.value("w_time", c.reward.w_time);
      c.reward.w_freq = r.value("w_freq", c.reward.w_freq);
      c.reward.w_step = r.value("w_step", c.reward.w_step);
      c.reward.w_violation = r.value("w_violation", c.reward.w_violation);
    }
    if (j.contains("bands")) {
      const auto& b = j.at("bands");
      c.bands.window = b.value("window", c.bands.window);
      c.bands.hop = b.value("hop", c.bands.hop);
      c.bands.low_upper_hz = b.value("low_upper_hz", c.bands.low_upper_hz);
      c.bands.mid_upper_hz = b.value("mid_upper_hz", c.bands.mid_upper_hz);
    }
    c.band_share_threshold = j.value("band_share_threshold", c.band_share_threshold);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("env config: ") + e.what());
  }
  c.bands.dt = c.dt;
  c.validate();
  return c;
}

double computeReward(const CoverageSnapshot& before, const CoverageSnapshot& after, bool violation,
                     const RewardWeights& w) {
  const double time_gain = (after.time_uniformity - before.time_uniformity).sum();
  const double band_gain = after.band_score - before.band_score;
  return w.w_time * time_gain + w.w_freq * band_gain - w.w_step - (violation ? w.w_violation : 0.0);
}

double scaleAction(double action, const EnvConfig& config) {
  if (std::isnan(action)) throw ValidationError("action is NaN");
  const double a = std::clamp(action, -1.0, 1.0);
  return a >= 0.0 ? a * config.i_charge_max : a * config.i_discharge_max;
}

double normalizeCurrent(double current, const EnvConfig& config) {
  const double span = config.i_charge_max + config.i_discharge_max;
  return std::clamp((current + config.i_discharge_max) / span, 0.0, 1.0);
}

Observation buildObservation(const ObservationInputs& in, const EnvConfig& config) {
  Observation obs = Observation::Zero();
  obs[layout::kVoltage] = std::clamp((in.voltage - config.v_min) / (config.v_max - config.v_min), 0.0, 1.0);
  obs[layout::kCurrent] = normalizeCurrent(in.current, config);
  obs[layout::kSoc] = std::clamp(in.soc, 0.0, 1.0);
  if (in.coverage != nullptr) {
    obs.segment<metrics::kTimeDomainBins>(layout::kVoltageHist) = in.coverage->voltage().normalized();
    obs.segment<metrics::kTimeDomainBins>(layout::kCurrentHist) = in.coverage->current().normalized();
    obs.segment<metrics::kTimeDomainBins>(layout::kSocHist) = in.coverage->soc().normalized();
  }
  if (in.bands != nullptr) obs.segment<3>(layout::kBands) = in.bands->visitFractions();
  obs.segment<6>(layout::kRecent) = in.recent_means.cwiseMax(0.0).cwiseMin(1.0);
  obs[layout::kElapsed] = std::clamp(static_cast<double>(in.steps) / config.max_episode_steps, 0.0, 1.0);
  return obs;
}

profiles::CurrentProfile exportProfile(const EpisodeLog& log) {
  if (log.records.empty()) throw ValidationError("cannot export an empty episode log");
  std::vector<double> currents;
  currents.reserve(log.records.size());
  for (const auto& r : log.records) currents.push_back(r.current);
  profiles::ProfileMeta meta;
  meta.name = "ai_doe";
  meta.source = profiles::Source::Ai;
  meta.initial_soc = log.initial.soc;
  return profiles::CurrentProfile::uniform(currents, log.dt, meta);
}

void saveEpisodeLog(const EpisodeLog& log, const std::filesystem::path& path) {
  std::string out = "t_s,action,current_a,voltage_v,soc,reward\n";
  for (const auto& r : log.records) {
    out += io::formatDouble(r.t) + "," + io::formatDouble(r.action) + "," + io::formatDouble(r.current) + "," +
           io::formatDouble(r.voltage) + "," + io::formatDouble(r.soc) + "," + io::formatDouble(r.reward) + "\n";
  }
  io::writeTextFile(path, out);
  nlohmann::json meta = {{"name", "episode_log"},
                         {"source", "ai"},
                         {"dt_nominal", log.dt},
                         {"initial_soc", log.initial.soc},
                         {"temp_c", log.initial.temp_c},
                         {"final_time_uniformity",
                          {log.final_coverage.time_uniformity[0], log.final_coverage.time_uniformity[1],
                           log.final_coverage.time_uniformity[2]}},
                         {"final_band_score", log.final_coverage.band_score}};
  io::writeTextFile(path.string() + ".meta.json", meta.dump(2) + "\n");
}

namespace {

EnvConfig withSyncedBands(EnvConfig c) {
  c.bands.dt = c.dt;
  return c;
}

}  // namespace

BatteryEnv::BatteryEnv(ecm::EcmParams params, EnvConfig config)
    : params_(std::move(params)),
      config_(withSyncedBands(std::move(config))),
      time_cov_(config_.edges()),
      band_cov_(config_.bands, config_.band_share_threshold) {
  config_.validate();
  params_.validate();
}

Observation BatteryEnv::reset(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double soc = config_.soc_init_min + (config_.soc_init_max - config_.soc_init_min) * unit(rng);
  const double temp = config_.temp_init_min + (config_.temp_init_max - config_.temp_init_min) * unit(rng);
  return begin(ecm::CellState::atRest(soc, temp, params_.numRc()));
}

Observation BatteryEnv::resume(const ecm::CellState& state) {
  if (state.v_rc.size() != static_cast<Eigen::Index>(params_.numRc())) {
    throw ValidationError("resume: state has " + std::to_string(state.v_rc.size()) + " RC voltages, cell has " +
                          std::to_string(params_.numRc()));
  }
  if (!(state.soc >= 0.0 && state.soc <= 1.0)) throw ValidationError("resume: SoC outside [0, 1]");
  return begin(state);
}

Observation BatteryEnv::begin(ecm::CellState state) {
  state_ = std::move(state);
  current_ = 0.0;
  voltage_ = ecm::terminalVoltage(state_, 0.0, params_);
  time_cov_ = metrics::TimeCoverage(config_.edges());
  band_cov_ = metrics::BandCoverage(config_.bands, config_.band_share_threshold);
  norm_current_prefix_.assign(1, 0.0);
  log_ = EpisodeLog{};
  log_.initial = state_;
  log_.dt = config_.dt;
  log_.records.reserve(static_cast<std::size_t>(config_.max_episode_steps));
  steps_ = 0;
  started_ = true;
  done_ = false;
  return observation();
}

Eigen::Matrix<double, 6, 1> BatteryEnv::recentMeans() const {
  Eigen::Matrix<double, 6, 1> means;
  const auto n = static_cast<int>(norm_current_prefix_.size()) - 1;
  for (int i = 0; i < 6; ++i) {
    const int w = std::min(kRecentWindows[static_cast<std::size_t>(i)], n);
    if (w == 0) {
      means[i] = normalizeCurrent(0.0, config_);
    } else {
      means[i] = (norm_current_prefix_[static_cast<std::size_t>(n)] - norm_current_prefix_[static_cast<std::size_t>(n - w)]) / w;
    }
  }
  return means;
}

Observation BatteryEnv::observation() const {
  ObservationInputs in;
  in.voltage = voltage_;
  in.current = current_;
  in.soc = state_.soc;
  in.coverage = &time_cov_;
  in.bands = &band_cov_;
  in.recent_means = recentMeans();
  in.steps = steps_;
  return buildObservation(in, config_);
}

CoverageSnapshot BatteryEnv::coverage() const { return {time_cov_.uniformities(), band_cov_.score()}; }

BatteryEnv::SafeStep BatteryEnv::safeStep(double requested) const {
  auto within = [&](const ecm::StepResult& r) {
    return !r.saturated && r.voltage >= config_.v_min && r.voltage <= config_.v_max;
  };
  auto candidate = ecm::step(state_, requested, config_.dt, params_);
  if (within(candidate)) return {std::move(candidate), requested, false};

  auto rest = ecm::step(state_, 0.0, config_.dt, params_);
  if (within(rest)) return {std::move(rest), 0.0, true};

  // Relaxation alone leaves the window: push back with the smallest current
  // that restores it.
  const double sign = rest.voltage > config_.v_max ? -1.0 : 1.0;
  double lo = 0.0;
  double hi = sign < 0.0 ? config_.i_discharge_max : config_.i_charge_max;
  if (within(ecm::step(state_, sign * hi, config_.dt, params_))) {
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (within(ecm::step(state_, sign * mid, config_.dt, params_))) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
  }
  return {ecm::step(state_, sign * hi, config_.dt, params_), sign * hi, true};
}

StepOutcome BatteryEnv::step(double action) {
  if (!started_) throw ValidationError("env step before reset");
  if (done_) throw ValidationError("env step on a finished episode");

  const CoverageSnapshot before = coverage();
  const double clipped = std::clamp(action, -1.0, 1.0);
  auto safe = safeStep(scaleAction(action, config_));

  state_ = std::move(safe.result.state);
  voltage_ = safe.result.voltage;
  current_ = safe.current;
  time_cov_.add(voltage_, current_, state_.soc);
  band_cov_.push(current_);
  norm_current_prefix_.push_back(norm_current_prefix_.back() + normalizeCurrent(current_, config_));
  ++steps_;

  const CoverageSnapshot after = coverage();
  StepOutcome out;
  out.reward = computeReward(before, after, safe.violation, config_.reward);
  out.violation = safe.violation;
  out.current = current_;
  out.voltage = voltage_;
  out.terminal = after.time_uniformity.mean() >= config_.coverage_target;
  out.done = out.terminal || steps_ >= config_.max_episode_steps;
  done_ = out.done;

  log_.records.push_back(StepRecord{static_cast<double>(steps_ - 1) * config_.dt, clipped, current_, voltage_,
                                    state_.soc, out.reward, safe.violation});
  log_.final_coverage = after;
  out.observation = observation();
  return out;
}

}  // namespace doeforge::env
