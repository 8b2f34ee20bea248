#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

namespace doeforge::metrics {

using Counts = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1>;

inline constexpr int kTimeDomainBins = 10;

/// Fixed-edge histogram over [lo, hi] with equal-width bins. Out-of-range
/// values land in the edge bins.
class Histogram {
 public:
  Histogram() = default;
  Histogram(double lo, double hi, int bins = kTimeDomainBins);

  int binOf(double value) const;
  void add(double value) {
    ++counts_[binOf(value)];
    ++total_;
  }
  void merge(const Histogram& other);

  double lo() const { return lo_; }
  double hi() const { return hi_; }
  int bins() const { return static_cast<int>(counts_.size()); }
  double edge(int i) const { return lo_ + (hi_ - lo_) * i / bins(); }
  const Counts& counts() const { return counts_; }
  std::int64_t total() const { return total_; }

  /// counts / total; all zeros when empty.
  Eigen::VectorXd normalized() const;

  bool operator==(const Histogram& o) const {
    return lo_ == o.lo_ && hi_ == o.hi_ && counts_ == o.counts_ && total_ == o.total_;
  }

 private:
  double lo_ = 0.0;
  double hi_ = 1.0;
  Counts counts_;
  std::int64_t total_ = 0;
};

/// Normalized Shannon entropy of a count vector, in [0, 1]; 0 when empty.
template <typename Derived>
double uniformity(const Eigen::DenseBase<Derived>& counts) {
  const double total = static_cast<double>(counts.derived().sum());
  const auto n = counts.size();
  if (!(total > 0.0) || n < 2) return 0.0;
  double h = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double c = static_cast<double>(counts.derived()(i));
    if (c > 0.0) {
      const double p = c / total;
      h -= p * std::log(p);
    }
  }
  return h / std::log(static_cast<double>(n));
}

inline double uniformity(const Histogram& hist) { return uniformity(hist.counts()); }

/// 2-D count grid over two fixed-edge axes.
class Histogram2D {
 public:
  Histogram2D() = default;
  Histogram2D(Histogram x_axis, Histogram y_axis);

  void add(double x, double y);
  const Histogram& xAxis() const { return x_; }
  const Histogram& yAxis() const { return y_; }
  const Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>& counts() const { return counts_; }
  std::int64_t total() const { return counts_.sum(); }

 private:
  Histogram x_;  // edges only
  Histogram y_;
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> counts_;
};

/// Edges for the time-domain coverage histograms.
struct CoverageEdges {
  double v_min = 2.7;
  double v_max = 4.3;
  double i_discharge_max = 30.0;  // magnitude
  double i_charge_max = 20.0;
};

/// Voltage, current and SoC histograms of visited values.
class TimeCoverage {
 public:
  TimeCoverage() : TimeCoverage(CoverageEdges{}) {}
  explicit TimeCoverage(const CoverageEdges& edges);

  void add(double voltage, double current, double soc);
  void merge(const TimeCoverage& other);

  const Histogram& voltage() const { return voltage_; }
  const Histogram& current() const { return current_; }
  const Histogram& soc() const { return soc_; }

  /// Uniformity of (voltage, current, soc).
  Eigen::Vector3d uniformities() const;
  double combined() const { return uniformities().mean(); }

 private:
  Histogram voltage_;
  Histogram current_;
  Histogram soc_;
};

/// Frequency-band layout. Bands are (0, low_upper_hz], (low_upper_hz,
/// mid_upper_hz] and (mid_upper_hz, Nyquist].
struct BandSpec {
  double dt = 1.0;
  int window = 256;  // power of two
  int hop = 64;
  double low_upper_hz = 1.0 / 200.0;
  double mid_upper_hz = 1.0 / 20.0;

  void validate() const;
  /// Band index (0 low, 1 mid, 2 high) of DFT bin k >= 1.
  int bandOfBin(int k) const;
};

struct BandEnergies {
  double low = 0.0;
  double mid = 0.0;
  double high = 0.0;
  double total() const { return low + mid + high; }
  Eigen::Vector3d asVector() const { return {low, mid, high}; }
};

/// One-sided energy of the mean-removed, Hann-windowed last `spec.window`
/// samples, split by band. Empty when fewer than `spec.window` samples are
/// available. Band energies sum to the AC energy of the windowed signal.
std::optional<BandEnergies> bandEnergies(std::span<const double> samples, const BandSpec& spec);

/// Streaming band coverage over a sliding window. Every `hop` samples once
/// the window is full, the bands holding at least `share_threshold` of the
/// window's AC energy are counted as visited.
class BandCoverage {
 public:
  BandCoverage() : BandCoverage(BandSpec{}) {}
  explicit BandCoverage(const BandSpec& spec, double share_threshold = 0.2);

  /// Returns true when a window was evaluated on this push.
  bool push(double value);
  void merge(const BandCoverage& other);

  const Eigen::Vector3d& energy() const { return energy_; }
  const Counts& visits() const { return visits_; }
  std::int64_t windows() const { return windows_; }

  /// visits / evaluated windows, each in [0, 1].
  Eigen::Vector3d visitFractions() const;
  /// Uniformity of the visit counts across the three bands.
  double score() const { return uniformity(visits_); }

 private:
  BandSpec spec_;
  double share_threshold_;
  std::vector<double> ring_;
  std::int64_t seen_ = 0;
  Eigen::Vector3d energy_ = Eigen::Vector3d::Zero();
  Counts visits_ = Counts::Zero(3);
  std::int64_t windows_ = 0;
};

struct ErrorStatsConfig {
  double error_half_range_v = 0.0205;  // 41 bins of 1 mV centred on zero
  int error_bins = 41;
  double i_discharge_max = 30.0;
  double i_charge_max = 20.0;
};

struct ErrorStats {
  std::int64_t count = 0;
  double mae = 0.0;
  double rmse = 0.0;
  double max_abs = 0.0;
  double mean = 0.0;
  Histogram error;             // signed error, V
  Histogram2D error_vs_soc;    // x: soc, y: signed error
  Histogram2D error_vs_current;
  Eigen::VectorXd mae_by_soc;  // per SoC bin, NaN where empty
  Eigen::VectorXd mae_by_current;
};

/// Errors are v_model - v_ref. Throws ValidationError on length mismatch or
/// empty input.
ErrorStats errorStats(const Eigen::VectorXd& v_model, const Eigen::VectorXd& v_ref, const Eigen::VectorXd& soc,
                      const Eigen::VectorXd& current, const ErrorStatsConfig& config = {});

nlohmann::json toJson(const Histogram& hist);
nlohmann::json toJson(const Histogram2D& hist);
nlohmann::json toJson(const ErrorStats& stats);
nlohmann::json toJson(const TimeCoverage& cov);

/// Per-bin CSV rows: `bin,lo,hi,count`.
std::string histogramCsv(const Histogram& hist);
/// `x_lo,x_hi,y_lo,y_hi,count` rows.
std::string histogram2DCsv(const Histogram2D& hist);

}  // namespace doeforge::metrics
