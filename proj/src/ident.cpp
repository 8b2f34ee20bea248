#include "doeforge/ident.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "doeforge/ecm_io.hpp"
#include "doeforge/errors.hpp"
#include "doeforge/io.hpp"

namespace doeforge::ident {

namespace {

void checkAxis(const std::vector<double>& axis, const std::string& what) {
  if (axis.size() < 2) throw ValidationError("ident: " + what + " needs at least 2 breakpoints");
  for (std::size_t i = 0; i < axis.size(); ++i) {
    if (!std::isfinite(axis[i])) throw ValidationError("ident: " + what + " breakpoint is not finite");
    if (i > 0 && !(axis[i] > axis[i - 1])) {
      throw ValidationError("ident: " + what + " breakpoints are not strictly increasing");
    }
  }
}

Eigen::VectorXd asVector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

int nearest(const std::vector<double>& axis, double value) {
  const auto it = std::lower_bound(axis.begin(), axis.end(), value);
  if (it == axis.begin()) return 0;
  if (it == axis.end()) return static_cast<int>(axis.size()) - 1;
  const auto hi = static_cast<int>(it - axis.begin());
  return (value - axis[hi - 1] <= axis[hi] - value) ? hi - 1 : hi;
}

std::vector<double> jsonVector(const nlohmann::json& j) { return j.get<std::vector<double>>(); }

double capacityAt(const KnownCell& known, double temp_c) { return known.capacity_ah({temp_c}); }

std::size_t totalSamples(const std::vector<Dataset>& data) {
  std::size_t n = 0;
  for (const auto& d : data) n += d.profile.size();
  return n;
}

// SoC after each sample by Ah counting, clamped to [0, 1].
Eigen::VectorXd socTrace(const Dataset& d, const KnownCell& known) {
  const double q = capacityAt(known, d.temp_c) * 3600.0;
  Eigen::VectorXd soc(static_cast<Eigen::Index>(d.profile.size()));
  double s = d.initial_soc;
  for (std::size_t i = 0; i < d.profile.size(); ++i) {
    s = std::clamp(s + d.profile.currents()[i] * d.profile.interval(i) / q, 0.0, 1.0);
    soc[static_cast<Eigen::Index>(i)] = s;
  }
  return soc;
}

}  // namespace

void IdentSpec::validate() const {
  checkAxis(soc_breakpoints, "soc");
  checkAxis(current_breakpoints, "current");
  if (!(r0_fallback > 0.0) || !(r_init > 0.0) || !(tau1_init > 0.0) || !(tau2_init > 0.0)) {
    throw ValidationError("ident: initial resistances and time constants must be positive");
  }
  if (!(min_current_step > 0.0)) throw ValidationError("ident: min_current_step must be positive");
  if (solver.max_iterations < 0) throw ValidationError("ident: max_iterations must be non-negative");
  if (!(solver.tol_g >= 0.0) || !(solver.tol_x >= 0.0) || !(solver.tol_f >= 0.0)) {
    throw ValidationError("ident: solver tolerances must be non-negative");
  }
  if (min_support < 0) throw ValidationError("ident: min_support must be non-negative");
  if (!(smoothing >= 0.0) || !std::isfinite(smoothing)) throw ValidationError("ident: smoothing must be >= 0");
}

int IdentSpec::numParams() const { return numSoc() * numCurrent() + 4 * numSoc(); }

nlohmann::json toJson(const IdentSpec& s) {
  return {{"soc_breakpoints", s.soc_breakpoints},
          {"current_breakpoints", s.current_breakpoints},
          {"temp_c", s.temp_c},
          {"r0_fallback", s.r0_fallback},
          {"min_current_step", s.min_current_step},
          {"r_init", s.r_init},
          {"tau1_init", s.tau1_init},
          {"tau2_init", s.tau2_init},
          {"tol_g", s.solver.tol_g},
          {"tol_x", s.solver.tol_x},
          {"tol_f", s.solver.tol_f},
          {"max_iterations", s.solver.max_iterations},
          {"min_support", s.min_support},
          {"smoothing", s.smoothing},
          {"fill_unsupported", s.fill_unsupported}};
}

IdentSpec identSpecFromJson(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("ident spec must be a JSON object");
  IdentSpec s;
  try {
    if (j.contains("soc_breakpoints")) s.soc_breakpoints = jsonVector(j["soc_breakpoints"]);
    if (j.contains("current_breakpoints")) s.current_breakpoints = jsonVector(j["current_breakpoints"]);
    s.temp_c = j.value("temp_c", s.temp_c);
    s.r0_fallback = j.value("r0_fallback", s.r0_fallback);
    s.min_current_step = j.value("min_current_step", s.min_current_step);
    s.r_init = j.value("r_init", s.r_init);
    s.tau1_init = j.value("tau1_init", s.tau1_init);
    s.tau2_init = j.value("tau2_init", s.tau2_init);
    s.solver.tol_g = j.value("tol_g", s.solver.tol_g);
    s.solver.tol_x = j.value("tol_x", s.solver.tol_x);
    s.solver.tol_f = j.value("tol_f", s.solver.tol_f);
    s.solver.max_iterations = j.value("max_iterations", s.solver.max_iterations);
    s.min_support = j.value("min_support", s.min_support);
    s.smoothing = j.value("smoothing", s.smoothing);
    s.fill_unsupported = j.value("fill_unsupported", s.fill_unsupported);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("ident spec: ") + e.what());
  }
  s.validate();
  return s;
}

void Dataset::validate() const {
  if (profile.empty()) throw ValidationError("ident: empty dataset");
  if (static_cast<std::size_t>(voltage.size()) != profile.size()) {
    throw ValidationError("ident: profile has " + std::to_string(profile.size()) + " samples but " +
                          std::to_string(voltage.size()) + " voltages");
  }
  if (!voltage.allFinite()) throw ValidationError("ident: measured voltage is not finite");
  if (!(initial_soc >= 0.0 && initial_soc <= 1.0)) throw ValidationError("ident: initial soc outside [0, 1]");
}

Dataset loadMeasurement(const std::filesystem::path& path, const KnownCell& known) {
  const auto table = io::readNumericCsv(path, {"t_s", "current_a", "voltage_v"});
  const std::size_t ct = io::column(table, "t_s");
  const std::size_t ci = io::column(table, "current_a");
  const std::size_t cv = io::column(table, "voltage_v");
  if (table.rows.empty()) throw ValidationError(path.string() + ": no measurement rows");
  std::vector<double> t, c;
  Eigen::VectorXd v(static_cast<Eigen::Index>(table.rows.size()));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = path.string() + ", line " + std::to_string(table.line_numbers[r]) + ": ";
    if (r == 0 && row[ct] != 0.0) throw ValidationError(where + "measurement must start at t = 0");
    if (r > 0 && !(row[ct] > t.back())) throw ValidationError(where + "time is not strictly increasing");
    if (!std::isfinite(row[ci]) || !std::isfinite(row[cv])) throw ValidationError(where + "non-finite value");
    t.push_back(row[ct]);
    c.push_back(row[ci]);
    v[static_cast<Eigen::Index>(r)] = row[cv];
  }
  profiles::ProfileMeta meta;
  meta.name = path.stem().string();
  bool have_meta = false;
  const std::filesystem::path sidecar = path.string() + ".meta.json";
  if (std::filesystem::exists(sidecar)) {
    try {
      meta = profiles::metaFromJson(nlohmann::json::parse(io::readTextFile(sidecar)));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(sidecar.string() + ": " + e.what());
    }
    have_meta = true;
  }
  Dataset d;
  d.profile = profiles::CurrentProfile(std::move(t), std::move(c), meta);
  d.voltage = std::move(v);
  if (have_meta) {
    d.initial_soc = meta.initial_soc;
  } else {
    if (table.header.end() == std::find(table.header.begin(), table.header.end(), "soc")) {
      throw ValidationError(path.string() + ": no soc column and no metadata sidecar to give the initial soc");
    }
    const double soc0 = table.rows[0][io::column(table, "soc")];
    const double q = capacityAt(known, d.temp_c) * 3600.0;
    d.initial_soc = std::clamp(soc0 - d.profile.currents()[0] * d.profile.interval(0) / q, 0.0, 1.0);
  }
  d.validate();
  return d;
}

void saveMeasurement(const Dataset& data, const Eigen::VectorXd& soc, const std::filesystem::path& path) {
  data.validate();
  if (static_cast<std::size_t>(soc.size()) != data.profile.size()) {
    throw ValidationError("measurement: soc length differs from the profile");
  }
  std::string out = "t_s,current_a,voltage_v,soc\n";
  out.reserve(out.size() + data.profile.size() * 48);
  for (std::size_t i = 0; i < data.profile.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    out += io::formatDouble(data.profile.times()[i]);
    out += ',';
    out += io::formatDouble(data.profile.currents()[i]);
    out += ',';
    out += io::formatDouble(data.voltage[k]);
    out += ',';
    out += io::formatDouble(soc[k]);
    out += '\n';
  }
  io::writeTextFile(path, out);
  profiles::ProfileMeta meta = data.profile.meta();
  meta.initial_soc = data.initial_soc;
  io::writeTextFile(path.string() + ".meta.json", profiles::metaToJson(meta).dump(2) + "\n");
}

Eigen::VectorXd encode(const ecm::EcmParams& params, const IdentSpec& spec) {
  spec.validate();
  if (params.numRc() != 2) throw ValidationError("ident: encode needs a 2-RC parameter set");
  const int ns = spec.numSoc(), nc = spec.numCurrent();
  Eigen::VectorXd x(spec.numParams());
  int k = 0;
  for (int s = 0; s < ns; ++s)
    for (int c = 0; c < nc; ++c)
      x[k++] = std::log(params.r0({spec.soc_breakpoints[s], spec.temp_c, spec.current_breakpoints[c]}));
  for (const auto& rc : params.rc) {
    for (int s = 0; s < ns; ++s) x[k++] = std::log(rc.resistance({spec.soc_breakpoints[s], spec.temp_c}));
    for (int s = 0; s < ns; ++s) x[k++] = std::log(rc.capacitance({spec.soc_breakpoints[s], spec.temp_c}));
  }
  return x;
}

ecm::EcmParams decode(const Eigen::VectorXd& x, const IdentSpec& spec, const KnownCell& known) {
  if (x.size() != spec.numParams()) {
    throw ValidationError("ident: parameter vector has " + std::to_string(x.size()) + " entries, expected " +
                          std::to_string(spec.numParams()));
  }
  if (!x.allFinite()) throw NumericalError("ident: parameter vector is not finite");
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double v = std::exp(x[j]);
    if (!std::isfinite(v) || v == 0.0) {
      throw NumericalError("ident: parameter " + std::to_string(j) + " outside the representable range");
    }
  }
  const int ns = spec.numSoc(), nc = spec.numCurrent();
  const Eigen::VectorXd soc = asVector(spec.soc_breakpoints);
  const Eigen::VectorXd temp = Eigen::VectorXd::Constant(1, spec.temp_c);
  const Eigen::VectorXd cur = asVector(spec.current_breakpoints);

  ecm::EcmParams p;
  p.name = "identified";
  p.ocv = known.ocv;
  p.capacity_ah = known.capacity_ah;
  p.r0 = LookupTable3D({soc, temp, cur}, x.head(ns * nc).array().exp().matrix());
  int k = ns * nc;
  for (int b = 0; b < 2; ++b) {
    ecm::RcPair rc{LookupTable2D({soc, temp}, x.segment(k, ns).array().exp().matrix()),
                   LookupTable2D({soc, temp}, x.segment(k + ns, ns).array().exp().matrix())};
    p.rc.push_back(std::move(rc));
    k += 2 * ns;
  }
  return p;
}

profiles::Simulation replay(const ecm::EcmParams& params, const Dataset& data) {
  return profiles::simulate(data.profile, params, ecm::CellState::atRest(data.initial_soc, data.temp_c, params.numRc()));
}

Eigen::VectorXd residuals(const Eigen::VectorXd& x, const std::vector<Dataset>& data, const IdentSpec& spec,
                          const KnownCell& known) {
  if (data.empty()) throw ValidationError("ident: no data");
  for (const auto& d : data) d.validate();
  const ecm::EcmParams p = decode(x, spec, known);
  const int ns = spec.numSoc();
  const int smooth_rows = spec.smoothing > 0.0 ? (spec.numCurrent() + 4) * (ns - 1) : 0;
  Eigen::VectorXd f(static_cast<Eigen::Index>(totalSamples(data)) + smooth_rows);
  Eigen::Index off = 0;
  for (const auto& d : data) {
    const auto sim = replay(p, d);
    f.segment(off, d.voltage.size()) = sim.voltage - d.voltage;
    off += d.voltage.size();
  }
  if (smooth_rows > 0) {
    const double w = std::sqrt(spec.smoothing);
    const int nc = spec.numCurrent();
    for (int c = 0; c < nc; ++c)
      for (int s = 0; s + 1 < ns; ++s) f[off++] = w * (x[(s + 1) * nc + c] - x[s * nc + c]);
    for (int t = 0; t < 4; ++t) {
      const int base = ns * nc + t * ns;
      for (int s = 0; s + 1 < ns; ++s) f[off++] = w * (x[base + s + 1] - x[base + s]);
    }
  }
  return f;
}

Eigen::MatrixXd jacobian(const Eigen::VectorXd& x, const std::vector<Dataset>& data, const IdentSpec& spec,
                         const KnownCell& known) {
  const Eigen::VectorXd f = residuals(x, data, spec, known);
  return lm::forwardJacobian<double>([&](const Eigen::VectorXd& xp) { return residuals(xp, data, spec, known); }, x,
                                     f);
}

Support support(const std::vector<Dataset>& data, const IdentSpec& spec, const KnownCell& known) {
  Support s;
  s.r0 = Eigen::MatrixXi::Zero(spec.numSoc(), spec.numCurrent());
  s.soc = Eigen::VectorXi::Zero(spec.numSoc());
  for (const auto& d : data) {
    const Eigen::VectorXd soc = socTrace(d, known);
    for (std::size_t i = 0; i < d.profile.size(); ++i) {
      const int ks = nearest(spec.soc_breakpoints, soc[static_cast<Eigen::Index>(i)]);
      ++s.soc[ks];
      const double current = d.profile.currents()[i];
      if (current != 0.0) ++s.r0(ks, nearest(spec.current_breakpoints, current));
    }
  }
  return s;
}

Eigen::VectorXd initialGuess(const std::vector<Dataset>& data, const IdentSpec& spec) {
  std::vector<double> estimates;
  for (const auto& d : data) {
    const auto& c = d.profile.currents();
    for (std::size_t i = 1; i < c.size(); ++i) {
      const double di = c[i] - c[i - 1];
      if (std::abs(di) < spec.min_current_step) continue;
      const double r = (d.voltage[static_cast<Eigen::Index>(i)] - d.voltage[static_cast<Eigen::Index>(i - 1)]) / di;
      if (r > 0.0 && std::isfinite(r)) estimates.push_back(r);
    }
  }
  double r0 = spec.r0_fallback;
  if (!estimates.empty()) {
    auto mid = estimates.begin() + static_cast<std::ptrdiff_t>(estimates.size() / 2);
    std::nth_element(estimates.begin(), mid, estimates.end());
    r0 = std::clamp(*mid, 1e-4, 1.0);
  }
  const int ns = spec.numSoc(), nc = spec.numCurrent();
  Eigen::VectorXd x(spec.numParams());
  x.head(ns * nc).setConstant(std::log(r0));
  x.segment(ns * nc, ns).setConstant(std::log(spec.r_init));
  x.segment(ns * nc + ns, ns).setConstant(std::log(spec.tau1_init / spec.r_init));
  x.segment(ns * nc + 2 * ns, ns).setConstant(std::log(spec.r_init));
  x.segment(ns * nc + 3 * ns, ns).setConstant(std::log(spec.tau2_init / spec.r_init));
  return x;
}

metrics::ErrorStats evaluate(const ecm::EcmParams& params, const Dataset& holdout) {
  holdout.validate();
  const auto sim = replay(params, holdout);
  const Eigen::VectorXd current = Eigen::Map<const Eigen::VectorXd>(
      holdout.profile.currents().data(), static_cast<Eigen::Index>(holdout.profile.size()));
  return metrics::errorStats(sim.voltage, holdout.voltage, sim.soc, current);
}

namespace {

// Index of the supported entry nearest to i, or -1.
Eigen::Index nearestSupported(Eigen::Index i, Eigen::Index n, const std::function<bool(Eigen::Index)>& ok) {
  for (Eigen::Index d = 1; d < n; ++d) {
    if (i - d >= 0 && ok(i - d)) return i - d;
    if (i + d < n && ok(i + d)) return i + d;
  }
  return -1;
}

}  // namespace

int fillUnsupported(Eigen::VectorXd& x, const Support& support, const IdentSpec& spec) {
  if (x.size() != spec.numParams()) throw ValidationError("ident: parameter vector has the wrong length");
  const Eigen::Index ns = spec.numSoc(), nc = spec.numCurrent();
  const Eigen::VectorXd fitted = x;
  int changed = 0;
  auto r0ok = [&](Eigen::Index s, Eigen::Index c) { return support.r0(s, c) >= spec.min_support; };
  for (Eigen::Index s = 0; s < ns; ++s) {
    for (Eigen::Index c = 0; c < nc; ++c) {
      if (r0ok(s, c)) continue;
      const auto near_s = nearestSupported(s, ns, [&](Eigen::Index k) { return r0ok(k, c); });
      if (near_s < 0) continue;
      x[s * nc + c] = fitted[near_s * nc + c];
      ++changed;
    }
  }
  for (Eigen::Index s = 0; s < ns; ++s) {
    if (support.soc[s] >= spec.min_support) continue;
    const auto near = nearestSupported(s, ns, [&](Eigen::Index k) { return support.soc[k] >= spec.min_support; });
    if (near < 0) continue;
    for (Eigen::Index b = 0; b < 4; ++b) x[ns * nc + b * ns + s] = fitted[ns * nc + b * ns + near];
    changed += 4;
  }
  return changed;
}

IdentResult identify(const std::vector<Dataset>& data, const IdentSpec& spec, const KnownCell& known) {
  spec.validate();
  if (data.empty()) throw ValidationError("ident: no data");
  for (const auto& d : data) d.validate();

  IdentResult r;
  r.spec = spec;
  r.support = support(data, spec, known);
  const int covered = static_cast<int>((r.support.soc.array() > 0).count());
  if (covered < 2) r.warnings.push_back("data covers fewer than 2 soc breakpoints");

  // Trial points outside the representable range count as infinitely bad.
  auto fn = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    try {
      return residuals(x, data, spec, known);
    } catch (const NumericalError&) {
      return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(totalSamples(data)),
                                       std::numeric_limits<double>::infinity());
    }
  };
  auto jac = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& f) { return lm::forwardJacobian<double>(fn, x, f); };
  auto sol = lm::solve<double>(fn, jac, initialGuess(data, spec), spec.solver);

  r.x = std::move(sol.x);
  r.report = std::move(sol.report);
  r.residuals = std::move(sol.residuals);
  if (spec.fill_unsupported) {
    const int filled = fillUnsupported(r.x, r.support, spec);
    if (filled > 0) {
      r.warnings.push_back(std::to_string(filled) + " parameters at unsupported breakpoints copied from neighbours");
      r.residuals = residuals(r.x, data, spec, known);
    }
  }
  r.params = decode(r.x, spec, known);
  r.residual_norm = r.residuals.norm();

  const auto n = static_cast<Eigen::Index>(totalSamples(data));
  Eigen::VectorXd v_sim(n), v_meas(n), soc(n), cur(n);
  Eigen::Index off = 0;
  for (const auto& d : data) {
    const auto sim = replay(r.params, d);
    const auto m = d.voltage.size();
    v_sim.segment(off, m) = sim.voltage;
    v_meas.segment(off, m) = d.voltage;
    soc.segment(off, m) = sim.soc;
    cur.segment(off, m) = Eigen::Map<const Eigen::VectorXd>(d.profile.currents().data(), m);
    off += m;
  }
  r.fit = metrics::errorStats(v_sim, v_meas, soc, cur);
  return r;
}

nlohmann::json toJson(const IdentResult& r) {
  nlohmann::json report = {{"iterations", r.report.iterations},
                           {"accepted", r.report.accepted},
                           {"rejected", r.report.rejected},
                           {"initial_cost", r.report.initial_cost},
                           {"final_cost", r.report.final_cost},
                           {"lambda", r.report.lambda},
                           {"stop_reason", r.report.stop_reason},
                           {"cost_history", r.report.cost_history}};
  nlohmann::json r0_support = nlohmann::json::array();
  for (Eigen::Index s = 0; s < r.support.r0.rows(); ++s) {
    std::vector<int> row(r.support.r0.cols());
    for (Eigen::Index c = 0; c < r.support.r0.cols(); ++c) row[c] = r.support.r0(s, c);
    r0_support.push_back(row);
  }
  return {{"format", "doeforge-ident"},
          {"format_version", kIdentFormatVersion},
          {"spec", toJson(r.spec)},
          {"params", ecm::toJson(r.params)},
          {"x", std::vector<double>(r.x.data(), r.x.data() + r.x.size())},
          {"residual_count", r.residuals.size()},
          {"residual_norm", r.residual_norm},
          {"report", report},
          {"fit", metrics::toJson(r.fit)},
          {"support",
           {{"r0", r0_support}, {"soc", std::vector<int>(r.support.soc.data(), r.support.soc.data() + r.support.soc.size())}}},
          {"warnings", r.warnings}};
}

ecm::EcmParams paramsFromResultJson(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", std::string()) != "doeforge-ident") {
    throw ValidationError("not an identification result (format != doeforge-ident)");
  }
  if (j.value("format_version", 0) != kIdentFormatVersion) {
    throw ValidationError("unsupported identification result version " + std::to_string(j.value("format_version", 0)));
  }
  if (!j.contains("params")) throw ValidationError("identification result has no params");
  return ecm::paramsFromJson(j["params"]);
}

std::string resultCsv(const IdentResult& r) {
  const auto& spec = r.spec;
  std::string out = "table,soc,current_a,value,support\n";
  for (int s = 0; s < spec.numSoc(); ++s) {
    for (int c = 0; c < spec.numCurrent(); ++c) {
      const double v = r.params.r0({spec.soc_breakpoints[s], spec.temp_c, spec.current_breakpoints[c]});
      out += "r0," + io::formatDouble(spec.soc_breakpoints[s]) + "," + io::formatDouble(spec.current_breakpoints[c]) +
             "," + io::formatDouble(v) + "," + std::to_string(r.support.r0(s, c)) + "\n";
    }
  }
  const char* names[2][2] = {{"r1", "c1"}, {"r2", "c2"}};
  for (int b = 0; b < 2; ++b) {
    for (int which = 0; which < 2; ++which) {
      const auto& table = which == 0 ? r.params.rc[b].resistance : r.params.rc[b].capacitance;
      for (int s = 0; s < spec.numSoc(); ++s) {
        out += std::string(names[b][which]) + "," + io::formatDouble(spec.soc_breakpoints[s]) + ",," +
               io::formatDouble(table({spec.soc_breakpoints[s], spec.temp_c})) + "," + std::to_string(r.support.soc[s]) +
               "\n";
      }
    }
  }
  return out;
}

}  // namespace doeforge::ident
