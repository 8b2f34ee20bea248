#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "doeforge/lookup_table.hpp"

namespace doeforge::ecm {

/// One parallel resistor-capacitor branch; both tables are indexed (soc, temp_c).
struct RcPair {
  LookupTable2D resistance;
  LookupTable2D capacitance;
};

/// Parameters of an equivalent-circuit cell model.
///
/// Sign convention used everywhere in this library: positive current charges
/// the cell.
struct EcmParams {
  std::string name;
  LookupTable2D ocv;          // (soc, temp_c) -> V
  LookupTable3D r0;           // (soc, temp_c, current_a) -> Ohm
  std::vector<RcPair> rc;     // 2 or 3 branches
  LookupTable1D capacity_ah;  // temp_c -> Ah

  /// Throws ValidationError when resistances, capacitances or capacity are not
  /// strictly positive, or the branch count is not 2 or 3.
  void validate() const;

  std::size_t numRc() const { return rc.size(); }

  /// Copy with every resistance table multiplied by `r_scale`, every
  /// capacitance by `c_scale` and the capacity by `q_scale`.
  EcmParams perturbed(double r_scale, double c_scale, double q_scale) const;
};

struct CellState {
  double soc = 1.0;
  Eigen::VectorXd v_rc;  // one voltage per RC branch
  double temp_c = 25.0;

  static CellState atRest(double soc, double temp_c, std::size_t num_rc) {
    return CellState{soc, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_rc)), temp_c};
  }
};

struct StepResult {
  CellState state;
  double voltage = 0.0;
  bool saturated = false;  // SoC clamped at 0 or 1 during this step
};

/// Zero-order-hold coefficients of dv/dt = -v/(RC) + i/C: v' = alpha*v + beta*i.
struct RcCoefficients {
  double alpha;
  double beta;
};

RcCoefficients rcDiscretize(double resistance, double capacitance, double dt);

/// Advance the cell by `dt` seconds at constant `current`.
///
/// RC parameters use the pre-step SoC; OCV and R0 use the post-step SoC.
StepResult step(const CellState& state, double current, double dt, const EcmParams& params);

/// Terminal voltage of a state at the given instantaneous current, without
/// advancing time.
double terminalVoltage(const CellState& state, double current, const EcmParams& params);

}  // namespace doeforge::ecm
