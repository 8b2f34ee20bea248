#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>

#include "doeforge/errors.hpp"

namespace doeforge {

/// Dense N-dimensional lookup table with multilinear interpolation.
///
/// Values are stored flattened with the first axis varying slowest. Queries
/// outside an axis range clamp to the nearest breakpoint. An axis may hold a
/// single breakpoint, in which case the table is constant along it.
template <typename Scalar, int Dim>
class LookupTable {
  static_assert(Dim >= 1 && Dim <= 3, "LookupTable supports 1 to 3 dimensions");

 public:
  using Axis = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Values = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Coords = std::array<Scalar, Dim>;

  LookupTable() = default;

  LookupTable(std::array<Axis, Dim> axes, Values values)
      : axes_(std::move(axes)), values_(std::move(values)) {
    Eigen::Index expected = 1;
    for (int d = 0; d < Dim; ++d) {
      const Axis& axis = axes_[d];
      if (axis.size() < 1) {
        throw ValidationError("lookup table axis " + std::to_string(d) + " is empty");
      }
      for (Eigen::Index i = 0; i < axis.size(); ++i) {
        if (!std::isfinite(axis[i])) {
          throw ValidationError("lookup table axis " + std::to_string(d) + " has a non-finite breakpoint");
        }
        if (i > 0 && !(axis[i] > axis[i - 1])) {
          throw ValidationError("lookup table axis " + std::to_string(d) +
                                " breakpoints are not strictly increasing");
        }
      }
      expected *= axis.size();
    }
    if (values_.size() != expected) {
      throw ValidationError("lookup table grid has " + std::to_string(values_.size()) + " values, axes require " +
                            std::to_string(expected));
    }
    if (!values_.allFinite()) {
      throw ValidationError("lookup table grid has non-finite values");
    }
  }

  /// Convenience constructor for a constant table on single-point axes.
  static LookupTable constant(Scalar value) {
    std::array<Axis, Dim> axes;
    for (auto& a : axes) a = Axis::Zero(1);
    return LookupTable(axes, Values::Constant(1, value));
  }

  Scalar operator()(const Coords& coords) const {
    std::array<Eigen::Index, Dim> lo{};
    std::array<Scalar, Dim> frac{};
    for (int d = 0; d < Dim; ++d) locate(axes_[d], coords[d], lo[d], frac[d]);

    Scalar result(0);
    for (int corner = 0; corner < (1 << Dim); ++corner) {
      Scalar weight(1);
      Eigen::Index flat = 0;
      bool skip = false;
      for (int d = 0; d < Dim; ++d) {
        const bool upper = (corner >> d) & 1;
        if (upper && frac[d] == Scalar(0)) {
          skip = true;
          break;
        }
        weight *= upper ? frac[d] : Scalar(1) - frac[d];
        flat = flat * axes_[d].size() + lo[d] + (upper ? 1 : 0);
      }
      if (!skip) result += weight * values_[flat];
    }
    return result;
  }

  template <typename... Args>
    requires(sizeof...(Args) == Dim)
  Scalar operator()(Args... args) const {
    return (*this)(Coords{static_cast<Scalar>(args)...});
  }

  const Axis& axis(int d) const { return axes_[d]; }
  const std::array<Axis, Dim>& axes() const { return axes_; }
  const Values& values() const { return values_; }
  Eigen::Index size() const { return values_.size(); }

  /// Flat index of a grid node.
  Eigen::Index index(const std::array<Eigen::Index, Dim>& node) const {
    Eigen::Index flat = 0;
    for (int d = 0; d < Dim; ++d) flat = flat * axes_[d].size() + node[d];
    return flat;
  }

  /// Same axes, new values (validated).
  LookupTable withValues(Values values) const { return LookupTable(axes_, std::move(values)); }

  LookupTable scaled(Scalar factor) const { return withValues(values_ * factor); }

 private:
  static void locate(const Axis& axis, Scalar x, Eigen::Index& lo, Scalar& frac) {
    const Eigen::Index n = axis.size();
    if (n == 1 || !(x > axis[0])) {
      lo = 0;
      frac = Scalar(0);
      return;
    }
    if (x >= axis[n - 1]) {
      lo = n - 2;
      frac = Scalar(1);
      return;
    }
    const Scalar* begin = axis.data();
    const Scalar* hi = std::upper_bound(begin, begin + n, x);
    lo = static_cast<Eigen::Index>(hi - begin) - 1;
    frac = (x - axis[lo]) / (axis[lo + 1] - axis[lo]);
  }

  std::array<Axis, Dim> axes_;
  Values values_;
};

using LookupTable1D = LookupTable<double, 1>;
using LookupTable2D = LookupTable<double, 2>;
using LookupTable3D = LookupTable<double, 3>;

}  // namespace doeforge
