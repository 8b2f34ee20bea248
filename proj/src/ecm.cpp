#include "doeforge/ecm.hpp"

#include <algorithm>
#include <cmath>

#include "doeforge/errors.hpp"

namespace doeforge::ecm {

namespace {

template <typename Table>
void requirePositive(const Table& table, const std::string& what) {
  if (table.size() == 0 || !(table.values().minCoeff() > 0.0)) {
    throw ValidationError(what + " must be strictly positive everywhere");
  }
}

}  // namespace

void EcmParams::validate() const {
  if (rc.size() != 2 && rc.size() != 3) {
    throw ValidationError("cell model must have 2 or 3 RC pairs, got " + std::to_string(rc.size()));
  }
  if (ocv.size() == 0) throw ValidationError("OCV table is empty");
  requirePositive(r0, "series resistance r0");
  for (std::size_t i = 0; i < rc.size(); ++i) {
    requirePositive(rc[i].resistance, "RC pair " + std::to_string(i + 1) + " resistance");
    requirePositive(rc[i].capacitance, "RC pair " + std::to_string(i + 1) + " capacitance");
  }
  requirePositive(capacity_ah, "capacity");
}

EcmParams EcmParams::perturbed(double r_scale, double c_scale, double q_scale) const {
  EcmParams out = *this;
  out.r0 = r0.scaled(r_scale);
  for (auto& pair : out.rc) {
    pair.resistance = pair.resistance.scaled(r_scale);
    pair.capacitance = pair.capacitance.scaled(c_scale);
  }
  out.capacity_ah = capacity_ah.scaled(q_scale);
  return out;
}

RcCoefficients rcDiscretize(double resistance, double capacitance, double dt) {
  if (!(resistance > 0.0) || !(capacitance > 0.0) || !(dt > 0.0)) {
    throw ValidationError("rcDiscretize requires R > 0, C > 0 and dt > 0");
  }
  const double x = -dt / (resistance * capacitance);
  return {std::exp(x), -resistance * std::expm1(x)};
}

StepResult step(const CellState& state, double current, double dt, const EcmParams& params) {
  if (!std::isfinite(current)) throw ValidationError("cell step: current is not finite");
  if (!(dt > 0.0)) throw ValidationError("cell step: dt must be positive");
  if (state.v_rc.size() != static_cast<Eigen::Index>(params.rc.size())) {
    throw ValidationError("cell step: state has " + std::to_string(state.v_rc.size()) + " RC voltages, model has " +
                          std::to_string(params.rc.size()));
  }

  StepResult out;
  out.state = state;
  const double temp = state.temp_c;

  const double capacity = params.capacity_ah(temp);
  const double unclamped = state.soc + current * dt / (3600.0 * capacity);
  out.state.soc = std::clamp(unclamped, 0.0, 1.0);
  out.saturated = out.state.soc != unclamped;

  double v_rc_sum = 0.0;
  for (std::size_t i = 0; i < params.rc.size(); ++i) {
    const auto& pair = params.rc[i];
    const auto k = rcDiscretize(pair.resistance(state.soc, temp), pair.capacitance(state.soc, temp), dt);
    const auto idx = static_cast<Eigen::Index>(i);
    out.state.v_rc[idx] = k.alpha * state.v_rc[idx] + k.beta * current;
    v_rc_sum += out.state.v_rc[idx];
  }

  out.voltage = params.ocv(out.state.soc, temp) + current * params.r0(out.state.soc, temp, current) + v_rc_sum;
  return out;
}

double terminalVoltage(const CellState& state, double current, const EcmParams& params) {
  return params.ocv(state.soc, state.temp_c) + current * params.r0(state.soc, state.temp_c, current) + state.v_rc.sum();
}

}  // namespace doeforge::ecm
