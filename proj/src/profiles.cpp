#include "doeforge/profiles.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "doeforge/errors.hpp"
#include "doeforge/io.hpp"

namespace doeforge::profiles {

std::string toString(Source source) {
  switch (source) {
    case Source::Traditional:
      return "traditional";
    case Source::Ai:
      return "ai";
    case Source::External:
      return "external";
  }
  return "external";
}

Source sourceFromString(const std::string& s) {
  if (s == "traditional") return Source::Traditional;
  if (s == "ai") return Source::Ai;
  if (s == "external") return Source::External;
  throw ValidationError("unknown profile source '" + s + "'");
}

CurrentProfile::CurrentProfile(std::vector<double> t, std::vector<double> current, ProfileMeta meta)
    : t_(std::move(t)), current_(std::move(current)), meta_(std::move(meta)) {
  if (t_.empty()) throw ValidationError("empty profile");
  if (t_.size() != current_.size()) throw ValidationError("profile time and current lengths differ");
  if (t_[0] != 0.0) throw ValidationError("profile must start at t = 0");
  for (std::size_t i = 0; i < t_.size(); ++i) {
    if (!std::isfinite(t_[i]) || !std::isfinite(current_[i])) {
      throw ValidationError("profile sample " + std::to_string(i) + " is not finite");
    }
    if (i > 0 && !(t_[i] > t_[i - 1])) {
      throw ValidationError("profile time is not strictly increasing at sample " + std::to_string(i));
    }
  }
  if (!(meta_.dt_nominal >= 0.0) || !std::isfinite(meta_.dt_nominal)) {
    throw ValidationError("profile dt_nominal must be finite and non-negative");
  }
}

CurrentProfile CurrentProfile::uniform(const std::vector<double>& current, double dt, ProfileMeta meta) {
  if (!(dt > 0.0)) throw ValidationError("uniform profile needs dt > 0");
  std::vector<double> t(current.size());
  for (std::size_t k = 0; k < t.size(); ++k) t[k] = static_cast<double>(k) * dt;
  meta.dt_nominal = dt;
  return CurrentProfile(std::move(t), current, std::move(meta));
}

double CurrentProfile::duration() const { return t_.empty() ? 0.0 : t_.back() + meta_.dt_nominal; }

double CurrentProfile::interval(std::size_t i) const {
  if (i + 1 < t_.size()) return t_[i + 1] - t_[i];
  if (meta_.dt_nominal > 0.0) return meta_.dt_nominal;
  if (t_.size() >= 2) return t_[t_.size() - 1] - t_[t_.size() - 2];
  throw ValidationError("single-sample profile without dt_nominal has no duration");
}

bool CurrentProfile::isUniform() const {
  if (!(meta_.dt_nominal > 0.0)) return false;
  for (std::size_t k = 0; k < t_.size(); ++k) {
    if (t_[k] != static_cast<double>(k) * meta_.dt_nominal) return false;
  }
  return true;
}

double CurrentProfile::sample(double t) const {
  if (t_.empty() || t < 0.0) return 0.0;
  const double last = t_.back();
  if (meta_.dt_nominal > 0.0 ? t >= last + meta_.dt_nominal : t > last) return 0.0;
  const auto it = std::upper_bound(t_.begin(), t_.end(), t);
  return current_[static_cast<std::size_t>(it - t_.begin()) - 1];
}

double CurrentProfile::chargeCoulombs() const {
  double q = 0.0;
  for (std::size_t i = 0; i < size(); ++i) q += current_[i] * interval(i);
  return q;
}

CurrentProfile concat(const CurrentProfile& a, const CurrentProfile& b) {
  const double offset = a.duration();
  if (!(offset > a.times().back())) {
    throw ValidationError("cannot append to a profile whose final sample has no hold time");
  }
  std::vector<double> t = a.times();
  std::vector<double> c = a.currents();
  for (std::size_t i = 0; i < b.size(); ++i) {
    t.push_back(offset + b.times()[i]);
    c.push_back(b.currents()[i]);
  }
  ProfileMeta meta = a.meta();
  meta.dt_nominal = b.meta().dt_nominal;
  if (a.meta().name != b.meta().name) meta.name = a.meta().name + "+" + b.meta().name;
  return CurrentProfile(std::move(t), std::move(c), meta);
}

namespace {

std::size_t stepsFor(double duration, double dt) {
  return static_cast<std::size_t>(std::max(1.0, std::round(duration / dt)));
}

void append(std::vector<double>& samples, double current, double duration, double dt) {
  samples.insert(samples.end(), stepsFor(duration, dt), current);
}

}  // namespace

CurrentProfile constantCurrent(double c_rate, double capacity_ah, Direction direction, double duration, double dt) {
  if (!(c_rate > 0.0)) throw ValidationError("constant-current profile needs c_rate > 0");
  if (!(capacity_ah > 0.0)) throw ValidationError("constant-current profile needs capacity > 0");
  if (duration <= 0.0) duration = 3600.0 / c_rate;
  const double amps = c_rate * capacity_ah * (direction == Direction::Charge ? 1.0 : -1.0);
  std::vector<double> samples;
  append(samples, amps, duration, dt);
  ProfileMeta meta;
  std::ostringstream name;
  name << "cc_" << (direction == Direction::Charge ? "charge_" : "discharge_") << c_rate << "C";
  meta.name = name.str();
  meta.source = Source::Traditional;
  meta.initial_soc = direction == Direction::Charge ? 0.0 : 1.0;
  return CurrentProfile::uniform(samples, dt, meta);
}

void PulseSpec::validate() const {
  if (!(pulse_duration > 0.0) || !(rest_duration > 0.0)) throw ValidationError("pulse durations must be positive");
  if (!(dt > 0.0)) throw ValidationError("pulse dt must be positive");
  if (!(capacity_ah > 0.0) || !(reposition_c_rate > 0.0)) {
    throw ValidationError("pulse repositioning needs positive capacity and C-rate");
  }
  if (settle_duration < 0.0) throw ValidationError("settle duration must be non-negative");
  if (!(start_soc >= 0.0 && start_soc <= 1.0)) throw ValidationError("pulse start SoC outside [0, 1]");
  for (std::size_t i = 0; i < soc_points.size(); ++i) {
    if (!(soc_points[i] >= 0.0 && soc_points[i] <= 1.0)) throw ValidationError("pulse SoC point outside [0, 1]");
    if (i > 0 && !(soc_points[i] < soc_points[i - 1])) {
      throw ValidationError("pulse SoC points must be strictly decreasing");
    }
  }
  for (double a : amplitudes) {
    if (!(a > 0.0) || !std::isfinite(a)) throw ValidationError("pulse amplitudes must be positive");
  }
}

CurrentProfile pulseProfile(const PulseSpec& spec) {
  spec.validate();
  if (!spec.soc_points.empty() && spec.soc_points.front() > spec.start_soc) {
    throw ValidationError("infeasible repositioning: SoC point " + std::to_string(spec.soc_points.front()) +
                          " is above the start SoC " + std::to_string(spec.start_soc) +
                          " and repositioning only discharges");
  }
  const double reposition_current = spec.reposition_c_rate * spec.capacity_ah;
  std::vector<double> samples;
  double soc = spec.start_soc;
  for (double target : spec.soc_points) {
    if (target < soc) {
      const double seconds = (soc - target) * spec.capacity_ah * 3600.0 / reposition_current;
      append(samples, -reposition_current, seconds, spec.dt);
      if (spec.settle_duration > 0.0) append(samples, 0.0, spec.settle_duration, spec.dt);
      soc = target;
    }
    for (double amp : spec.amplitudes) {
      append(samples, amp, spec.pulse_duration, spec.dt);
      append(samples, 0.0, spec.rest_duration, spec.dt);
      append(samples, -amp, spec.pulse_duration, spec.dt);
      append(samples, 0.0, spec.rest_duration, spec.dt);
    }
  }
  ProfileMeta meta;
  std::ostringstream name;
  name << "pulse_" << spec.pulse_duration << "s";
  meta.name = name.str();
  meta.source = Source::Traditional;
  meta.initial_soc = spec.start_soc;
  return CurrentProfile::uniform(samples, spec.dt, meta);
}

CurrentProfile driveCycle(const DriveCycleSpec& spec, std::uint64_t seed) {
  if (!(spec.duration > 0.0) || !(spec.dt > 0.0)) throw ValidationError("drive cycle needs positive duration and dt");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n = stepsFor(spec.duration, spec.dt);
  const double capacity_c = spec.capacity_ah * 3600.0;

  std::vector<double> raw;
  raw.reserve(n);
  double soc = spec.initial_soc;
  while (raw.size() < n) {
    const double length = std::exp(unit(rng) * std::log(60.0));
    const double u = unit(rng);
    double amps = 0.0;
    if (u >= 0.2) {
      const bool discharge = soc > 0.9 || (soc > 0.15 && unit(rng) < 0.65);
      amps = discharge ? -spec.max_discharge_a * 0.7 * unit(rng) : spec.max_charge_a * 0.5 * unit(rng);
    }
    const std::size_t k = std::min(stepsFor(length, spec.dt), n - raw.size());
    raw.insert(raw.end(), k, amps);
    soc += amps * static_cast<double>(k) * spec.dt / capacity_c;
  }

  std::vector<double> filtered(n);
  const double gain = spec.dt / (spec.smoothing_tau + spec.dt);
  double y = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    y += gain * (raw[i] - y);
    filtered[i] = y;
  }
  ProfileMeta meta;
  meta.name = "drive_cycle_" + std::to_string(seed);
  meta.source = Source::External;
  meta.initial_soc = spec.initial_soc;
  return CurrentProfile::uniform(filtered, spec.dt, meta);
}

nlohmann::json metaToJson(const ProfileMeta& meta) {
  return {{"name", meta.name},
          {"source", toString(meta.source)},
          {"dt_nominal", meta.dt_nominal},
          {"initial_soc", meta.initial_soc}};
}

ProfileMeta metaFromJson(const nlohmann::json& j) {
  ProfileMeta meta;
  meta.name = j.value("name", std::string());
  meta.source = sourceFromString(j.value("source", std::string("external")));
  meta.dt_nominal = j.value("dt_nominal", 0.0);
  meta.initial_soc = j.value("initial_soc", 1.0);
  return meta;
}

void saveProfile(const CurrentProfile& profile, const std::filesystem::path& path) {
  std::string out = "t_s,current_a\n";
  out.reserve(out.size() + profile.size() * 24);
  for (std::size_t i = 0; i < profile.size(); ++i) {
    out += io::formatDouble(profile.times()[i]);
    out += ',';
    out += io::formatDouble(profile.currents()[i]);
    out += '\n';
  }
  io::writeTextFile(path, out);
  io::writeTextFile(path.string() + ".meta.json", metaToJson(profile.meta()).dump(2) + "\n");
}

CurrentProfile loadProfile(const std::filesystem::path& path) {
  const auto table = io::readNumericCsv(path, {"t_s", "current_a"});
  const std::size_t ct = io::column(table, "t_s");
  const std::size_t ci = io::column(table, "current_a");
  if (table.rows.empty()) throw ValidationError(path.string() + ": empty profile");
  std::vector<double> t, c;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const double tr = table.rows[r][ct];
    if (r == 0 && tr != 0.0) {
      throw ValidationError(path.string() + ", line " + std::to_string(table.line_numbers[r]) + ": profile must start at t = 0");
    }
    if (r > 0 && !(tr > t.back())) {
      throw ValidationError(path.string() + ", line " + std::to_string(table.line_numbers[r]) +
                            ": time is not strictly increasing");
    }
    if (!std::isfinite(table.rows[r][ci])) {
      throw ValidationError(path.string() + ", line " + std::to_string(table.line_numbers[r]) + ": current is not finite");
    }
    t.push_back(tr);
    c.push_back(table.rows[r][ci]);
  }
  ProfileMeta meta;
  meta.name = path.stem().string();
  const std::filesystem::path sidecar = path.string() + ".meta.json";
  if (std::filesystem::exists(sidecar)) {
    try {
      meta = metaFromJson(nlohmann::json::parse(io::readTextFile(sidecar)));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(sidecar.string() + ": " + e.what());
    }
  }
  return CurrentProfile(std::move(t), std::move(c), meta);
}

Simulation simulate(const CurrentProfile& profile, const ecm::EcmParams& params, const ecm::CellState& initial) {
  Simulation sim;
  const auto n = static_cast<Eigen::Index>(profile.size());
  sim.voltage.resize(n);
  sim.soc.resize(n);
  const bool uniform = profile.isUniform();
  ecm::CellState state = initial;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const double dt = uniform ? profile.meta().dt_nominal : profile.interval(idx);
    auto res = ecm::step(state, profile.currents()[idx], dt, params);
    sim.voltage[i] = res.voltage;
    sim.soc[i] = res.state.soc;
    if (res.saturated) ++sim.saturated_steps;
    state = std::move(res.state);
  }
  return sim;
}

LimitedProfile enforceLimits(const CurrentProfile& profile, const ecm::EcmParams& params,
                             const ecm::CellState& initial, double v_min, double v_max) {
  if (!(v_min < v_max)) throw ValidationError("voltage limits need v_min < v_max");
  const bool uniform = profile.isUniform();
  std::vector<double> applied = profile.currents();
  std::size_t clamped = 0;
  ecm::CellState state = initial;
  for (std::size_t i = 0; i < applied.size(); ++i) {
    const double dt = uniform ? profile.meta().dt_nominal : profile.interval(i);
    auto res = ecm::step(state, applied[i], dt, params);
    if (applied[i] != 0.0 && (res.saturated || res.voltage < v_min || res.voltage > v_max)) {
      applied[i] = 0.0;
      ++clamped;
      res = ecm::step(state, 0.0, dt, params);
    }
    state = std::move(res.state);
  }
  return {CurrentProfile(profile.times(), std::move(applied), profile.meta()), clamped};
}

void TraditionalRecipe::validate() const {
  if (!(capacity_ah > 0.0) || !(ocv_c_rate >= 0.0) || !(dt > 0.0)) {
    throw ValidationError("recipe needs positive capacity and dt and a non-negative OCV C-rate");
  }
  for (double c : rate_c_rates)
    if (!(c > 0.0)) throw ValidationError("recipe rate C-rates must be positive");
  for (double c : pulse_c_rates)
    if (!(c > 0.0)) throw ValidationError("recipe pulse C-rates must be positive");
  for (double d : pulse_durations)
    if (!(d > 0.0)) throw ValidationError("recipe pulse durations must be positive");
  if (pulse_soc_points < 0) throw ValidationError("recipe pulse SoC point count must be non-negative");
  if (rate_rest < 0.0 || pulse_settle < 0.0) throw ValidationError("recipe rest durations must be non-negative");
  const bool pulses = pulse_soc_points > 0 && !pulse_c_rates.empty() && !pulse_durations.empty();
  if (ocv_c_rate == 0.0 && rate_c_rates.empty() && !pulses) throw ValidationError("recipe produces no profiles");
}

nlohmann::json recipeToJson(const TraditionalRecipe& r) {
  return {{"capacity_ah", r.capacity_ah},         {"ocv_c_rate", r.ocv_c_rate},
          {"rate_c_rates", r.rate_c_rates},       {"rate_rest", r.rate_rest},
          {"pulse_c_rates", r.pulse_c_rates},     {"pulse_durations", r.pulse_durations},
          {"pulse_soc_points", r.pulse_soc_points}, {"pulse_settle", r.pulse_settle},
          {"dt", r.dt}};
}

TraditionalRecipe recipeFromJson(const nlohmann::json& j) {
  TraditionalRecipe r;
  try {
    r.capacity_ah = j.value("capacity_ah", r.capacity_ah);
    r.ocv_c_rate = j.value("ocv_c_rate", r.ocv_c_rate);
    r.rate_c_rates = j.value("rate_c_rates", r.rate_c_rates);
    r.rate_rest = j.value("rate_rest", r.rate_rest);
    r.pulse_c_rates = j.value("pulse_c_rates", r.pulse_c_rates);
    r.pulse_durations = j.value("pulse_durations", r.pulse_durations);
    r.pulse_soc_points = j.value("pulse_soc_points", r.pulse_soc_points);
    r.pulse_settle = j.value("pulse_settle", r.pulse_settle);
    r.dt = j.value("dt", r.dt);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("recipe: ") + e.what());
  }
  r.validate();
  return r;
}

std::vector<CurrentProfile> traditionalSuite(const TraditionalRecipe& recipe) {
  recipe.validate();
  std::vector<CurrentProfile> suite;
  auto cycle = [&](double c_rate, double rest, const std::string& name) {
    std::vector<double> samples;
    const double amps = c_rate * recipe.capacity_ah;
    append(samples, -amps, 3600.0 / c_rate, recipe.dt);
    if (rest > 0.0) append(samples, 0.0, rest, recipe.dt);
    append(samples, amps, 3600.0 / c_rate, recipe.dt);
    ProfileMeta meta;
    meta.name = name;
    meta.source = Source::Traditional;
    meta.initial_soc = 1.0;
    return CurrentProfile::uniform(samples, recipe.dt, meta);
  };

  if (recipe.ocv_c_rate > 0.0) {
    std::ostringstream ocv_name;
    ocv_name << "ocv_" << recipe.ocv_c_rate << "C";
    suite.push_back(cycle(recipe.ocv_c_rate, 0.0, ocv_name.str()));
  }
  for (double c : recipe.rate_c_rates) {
    std::ostringstream name;
    name << "rate_" << c << "C";
    suite.push_back(cycle(c, recipe.rate_rest, name.str()));
  }
  if (recipe.pulse_soc_points > 0 && !recipe.pulse_c_rates.empty()) {
    for (double d : recipe.pulse_durations) {
      PulseSpec spec;
      for (double c : recipe.pulse_c_rates) spec.amplitudes.push_back(c * recipe.capacity_ah);
      spec.pulse_duration = d;
      spec.rest_duration = d;
      for (int k = 0; k < recipe.pulse_soc_points; ++k) {
        spec.soc_points.push_back(1.0 - (k + 0.5) / recipe.pulse_soc_points);
      }
      spec.capacity_ah = recipe.capacity_ah;
      spec.settle_duration = recipe.pulse_settle;
      spec.dt = recipe.dt;
      suite.push_back(pulseProfile(spec));
    }
  }
  return suite;
}

double totalDuration(const std::vector<CurrentProfile>& suite) {
  double total = 0.0;
  for (const auto& p : suite) total += p.duration();
  return total;
}

}  // namespace doeforge::profiles
