#include "doeforge/metrics.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>

#include "doeforge/errors.hpp"
#include "doeforge/io.hpp"

namespace doeforge::metrics {

Histogram::Histogram(double lo, double hi, int bins) : lo_(lo), hi_(hi), counts_(Counts::Zero(bins)) {
  if (!(hi > lo) || bins < 1) throw ValidationError("histogram needs hi > lo and at least one bin");
}

int Histogram::binOf(double value) const {
  const int n = bins();
  if (!(value > lo_)) return 0;  // also catches NaN
  if (value >= hi_) return n - 1;
  const int b = static_cast<int>((value - lo_) / (hi_ - lo_) * n);
  return b < n ? b : n - 1;
}

void Histogram::merge(const Histogram& other) {
  if (other.lo_ != lo_ || other.hi_ != hi_ || other.bins() != bins()) {
    throw ValidationError("cannot merge histograms with different edges");
  }
  counts_ += other.counts_;
  total_ += other.total_;
}

Eigen::VectorXd Histogram::normalized() const {
  if (total_ == 0) return Eigen::VectorXd::Zero(bins());
  return counts_.cast<double>() / static_cast<double>(total_);
}

Histogram2D::Histogram2D(Histogram x_axis, Histogram y_axis)
    : x_(std::move(x_axis)),
      y_(std::move(y_axis)),
      counts_(Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(x_.bins(), y_.bins())) {}

void Histogram2D::add(double x, double y) { ++counts_(x_.binOf(x), y_.binOf(y)); }

TimeCoverage::TimeCoverage(const CoverageEdges& e)
    : voltage_(e.v_min, e.v_max), current_(-e.i_discharge_max, e.i_charge_max), soc_(0.0, 1.0) {}

void TimeCoverage::add(double voltage, double current, double soc) {
  voltage_.add(voltage);
  current_.add(current);
  soc_.add(soc);
}

void TimeCoverage::merge(const TimeCoverage& other) {
  voltage_.merge(other.voltage_);
  current_.merge(other.current_);
  soc_.merge(other.soc_);
}

Eigen::Vector3d TimeCoverage::uniformities() const {
  return {uniformity(voltage_), uniformity(current_), uniformity(soc_)};
}

void BandSpec::validate() const {
  if (window < 4 || (window & (window - 1)) != 0) throw ValidationError("band window must be a power of two >= 4");
  if (hop < 1) throw ValidationError("band hop must be >= 1");
  if (!(dt > 0.0)) throw ValidationError("band dt must be positive");
  if (!(low_upper_hz > 0.0) || !(mid_upper_hz > low_upper_hz)) {
    throw ValidationError("band edges must satisfy 0 < low < mid");
  }
}

int BandSpec::bandOfBin(int k) const {
  const double f = k / (window * dt);
  if (f <= low_upper_hz) return 0;
  if (f <= mid_upper_hz) return 1;
  return 2;
}

std::optional<BandEnergies> bandEnergies(std::span<const double> samples, const BandSpec& spec) {
  spec.validate();
  const auto w = static_cast<std::size_t>(spec.window);
  if (samples.size() < w) return std::nullopt;
  const auto window = samples.last(w);

  double mean = 0.0;
  for (double v : window) mean += v;
  mean /= static_cast<double>(w);

  std::vector<double> x(w);
  for (std::size_t n = 0; n < w; ++n) {
    const double hann = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(w)));
    x[n] = hann * (window[n] - mean);
  }
  std::vector<std::complex<double>> spectrum;
  Eigen::FFT<double> fft;
  fft.fwd(spectrum, x);

  double e[3] = {0.0, 0.0, 0.0};
  const int half = spec.window / 2;
  for (int k = 1; k <= half; ++k) {
    const double p = std::norm(spectrum[static_cast<std::size_t>(k)]) / spec.window;
    e[spec.bandOfBin(k)] += (k == half) ? p : 2.0 * p;
  }
  return BandEnergies{e[0], e[1], e[2]};
}

BandCoverage::BandCoverage(const BandSpec& spec, double share_threshold)
    : spec_(spec), share_threshold_(share_threshold), ring_(static_cast<std::size_t>(spec.window), 0.0) {
  spec_.validate();
  if (!(share_threshold > 0.0 && share_threshold <= 1.0)) {
    throw ValidationError("band share threshold must be in (0, 1]");
  }
}

bool BandCoverage::push(double value) {
  const auto w = static_cast<std::int64_t>(spec_.window);
  ring_[static_cast<std::size_t>(seen_ % w)] = value;
  ++seen_;
  if (seen_ < w || (seen_ - w) % spec_.hop != 0) return false;

  std::vector<double> ordered(static_cast<std::size_t>(w));
  for (std::int64_t i = 0; i < w; ++i) ordered[static_cast<std::size_t>(i)] = ring_[static_cast<std::size_t>((seen_ + i) % w)];
  const auto e = bandEnergies(ordered, spec_);
  ++windows_;
  const double total = e->total();
  energy_ += e->asVector();
  if (total > 0.0) {
    const Eigen::Vector3d share = e->asVector() / total;
    for (int b = 0; b < 3; ++b)
      if (share[b] >= share_threshold_) ++visits_[b];
  }
  return true;
}

void BandCoverage::merge(const BandCoverage& other) {
  energy_ += other.energy_;
  visits_ += other.visits_;
  windows_ += other.windows_;
}

Eigen::Vector3d BandCoverage::visitFractions() const {
  if (windows_ == 0) return Eigen::Vector3d::Zero();
  return visits_.cast<double>() / static_cast<double>(windows_);
}

ErrorStats errorStats(const Eigen::VectorXd& v_model, const Eigen::VectorXd& v_ref, const Eigen::VectorXd& soc,
                      const Eigen::VectorXd& current, const ErrorStatsConfig& config) {
  const auto n = v_model.size();
  if (n == 0) throw ValidationError("error statistics need at least one sample");
  if (v_ref.size() != n || soc.size() != n || current.size() != n) {
    throw ValidationError("error statistics: sequence lengths differ");
  }
  ErrorStats s;
  s.count = n;
  s.error = Histogram(-config.error_half_range_v, config.error_half_range_v, config.error_bins);
  const Histogram soc_axis(0.0, 1.0);
  const Histogram cur_axis(-config.i_discharge_max, config.i_charge_max);
  s.error_vs_soc = Histogram2D(soc_axis, s.error);
  s.error_vs_current = Histogram2D(cur_axis, s.error);

  Eigen::VectorXd abs_soc = Eigen::VectorXd::Zero(soc_axis.bins());
  Eigen::VectorXd abs_cur = Eigen::VectorXd::Zero(cur_axis.bins());
  Eigen::VectorXd n_soc = Eigen::VectorXd::Zero(soc_axis.bins());
  Eigen::VectorXd n_cur = Eigen::VectorXd::Zero(cur_axis.bins());

  double sum_abs = 0.0, sum_sq = 0.0, sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double e = v_model[i] - v_ref[i];
    const double a = std::abs(e);
    sum += e;
    sum_abs += a;
    sum_sq += e * e;
    s.max_abs = std::max(s.max_abs, a);
    s.error.add(e);
    s.error_vs_soc.add(soc[i], e);
    s.error_vs_current.add(current[i], e);
    const int bs = soc_axis.binOf(soc[i]);
    const int bc = cur_axis.binOf(current[i]);
    abs_soc[bs] += a;
    n_soc[bs] += 1.0;
    abs_cur[bc] += a;
    n_cur[bc] += 1.0;
  }
  const double dn = static_cast<double>(n);
  s.mae = sum_abs / dn;
  s.rmse = std::sqrt(sum_sq / dn);
  s.mean = sum / dn;
  s.mae_by_soc = Eigen::VectorXd::Constant(soc_axis.bins(), std::nan(""));
  s.mae_by_current = Eigen::VectorXd::Constant(cur_axis.bins(), std::nan(""));
  for (int b = 0; b < soc_axis.bins(); ++b)
    if (n_soc[b] > 0) s.mae_by_soc[b] = abs_soc[b] / n_soc[b];
  for (int b = 0; b < cur_axis.bins(); ++b)
    if (n_cur[b] > 0) s.mae_by_current[b] = abs_cur[b] / n_cur[b];
  return s;
}

nlohmann::json toJson(const Histogram& hist) {
  std::vector<std::int64_t> counts(hist.counts().data(), hist.counts().data() + hist.counts().size());
  return {{"lo", hist.lo()}, {"hi", hist.hi()}, {"bins", hist.bins()}, {"counts", counts}, {"total", hist.total()}};
}

nlohmann::json toJson(const Histogram2D& hist) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < hist.counts().rows(); ++i) {
    std::vector<std::int64_t> row;
    for (Eigen::Index j = 0; j < hist.counts().cols(); ++j) row.push_back(hist.counts()(i, j));
    rows.push_back(row);
  }
  return {{"x", {{"lo", hist.xAxis().lo()}, {"hi", hist.xAxis().hi()}, {"bins", hist.xAxis().bins()}}},
          {"y", {{"lo", hist.yAxis().lo()}, {"hi", hist.yAxis().hi()}, {"bins", hist.yAxis().bins()}}},
          {"counts", rows}};
}

namespace {

nlohmann::json nanAsNull(const Eigen::VectorXd& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::isnan(v[i])) {
      arr.push_back(nullptr);
    } else {
      arr.push_back(v[i]);
    }
  }
  return arr;
}

}  // namespace

nlohmann::json toJson(const ErrorStats& stats) {
  return {{"count", stats.count},
          {"mae_v", stats.mae},
          {"rmse_v", stats.rmse},
          {"max_abs_v", stats.max_abs},
          {"mean_v", stats.mean},
          {"error_hist", toJson(stats.error)},
          {"error_vs_soc", toJson(stats.error_vs_soc)},
          {"error_vs_current", toJson(stats.error_vs_current)},
          {"mae_by_soc_v", nanAsNull(stats.mae_by_soc)},
          {"mae_by_current_v", nanAsNull(stats.mae_by_current)}};
}

nlohmann::json toJson(const TimeCoverage& cov) {
  const auto u = cov.uniformities();
  return {{"voltage", toJson(cov.voltage())},
          {"current", toJson(cov.current())},
          {"soc", toJson(cov.soc())},
          {"uniformity", {{"voltage", u[0]}, {"current", u[1]}, {"soc", u[2]}, {"combined", u.mean()}}}};
}

std::string histogramCsv(const Histogram& hist) {
  std::string out = "bin,lo,hi,count\n";
  for (int b = 0; b < hist.bins(); ++b) {
    out += std::to_string(b) + "," + io::formatDouble(hist.edge(b)) + "," + io::formatDouble(hist.edge(b + 1)) + "," +
           std::to_string(hist.counts()[b]) + "\n";
  }
  return out;
}

std::string histogram2DCsv(const Histogram2D& hist) {
  std::string out = "x_lo,x_hi,y_lo,y_hi,count\n";
  for (int i = 0; i < hist.xAxis().bins(); ++i) {
    for (int j = 0; j < hist.yAxis().bins(); ++j) {
      out += io::formatDouble(hist.xAxis().edge(i)) + "," + io::formatDouble(hist.xAxis().edge(i + 1)) + "," +
             io::formatDouble(hist.yAxis().edge(j)) + "," + io::formatDouble(hist.yAxis().edge(j + 1)) + "," +
             std::to_string(hist.counts()(i, j)) + "\n";
    }
  }
  return out;
}

}  // namespace doeforge::metrics
