#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "doeforge/ecm.hpp"
#include "doeforge/lm.hpp"
#include "doeforge/metrics.hpp"
#include "doeforge/profiles.hpp"

namespace doeforge::ident {

/// Parameterization of the 2-RC model being fitted.
struct IdentSpec {
  std::vector<double> soc_breakpoints = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::vector<double> current_breakpoints = {-30.0, -1.0, 1.0, 20.0};
  double temp_c = 25.0;

  // Initial guess.
  double r0_fallback = 0.01;
  double min_current_step = 0.5;  // |dI| used for the dV/dI estimate
  double r_init = 0.005;
  double tau1_init = 30.0;
  double tau2_init = 300.0;

  lm::Options solver;
  std::int64_t min_support = 30;  // samples for a breakpoint to count as exercised
  double smoothing = 0.0;         // weight of first differences across SoC, 0 = off
  // After the fit, breakpoints below min_support take the value of the
  // nearest supported breakpoint (same current for r0).
  bool fill_unsupported = true;

  void validate() const;
  int numParams() const;
  int numSoc() const { return static_cast<int>(soc_breakpoints.size()); }
  int numCurrent() const { return static_cast<int>(current_breakpoints.size()); }
};

nlohmann::json toJson(const IdentSpec& spec);
IdentSpec identSpecFromJson(const nlohmann::json& j);

/// Known parts of the model: OCV table and capacity.
struct KnownCell {
  LookupTable2D ocv;
  LookupTable1D capacity_ah;

  static KnownCell from(const ecm::EcmParams& params) { return {params.ocv, params.capacity_ah}; }
};

/// Applied current profile with the voltage measured at the end of every
/// sample interval.
struct Dataset {
  profiles::CurrentProfile profile;
  Eigen::VectorXd voltage;
  double initial_soc = 1.0;
  double temp_c = 25.0;

  void validate() const;
};

/// Measurement CSV `t_s,current_a,voltage_v,soc` with profile metadata in a
/// `.meta.json` sidecar. Without a sidecar the initial SoC is back-computed
/// from the first soc row.
Dataset loadMeasurement(const std::filesystem::path& path, const KnownCell& known);
void saveMeasurement(const Dataset& data, const Eigen::VectorXd& soc, const std::filesystem::path& path);

/// Layout of x: r0 on the (soc, current) grid with soc outermost, then R1, C1,
/// R2, C2 on the soc grid. All entries are natural logs.
Eigen::VectorXd encode(const ecm::EcmParams& params, const IdentSpec& spec);
ecm::EcmParams decode(const Eigen::VectorXd& x, const IdentSpec& spec, const KnownCell& known);

/// v_sim - v_meas for every sample of every dataset, in order, followed by the
/// smoothing rows when enabled.
Eigen::VectorXd residuals(const Eigen::VectorXd& x, const std::vector<Dataset>& data, const IdentSpec& spec,
                          const KnownCell& known);

Eigen::MatrixXd jacobian(const Eigen::VectorXd& x, const std::vector<Dataset>& data, const IdentSpec& spec,
                         const KnownCell& known);

struct Support {
  Eigen::MatrixXi r0;   // soc x current: samples with nonzero current nearest each node
  Eigen::VectorXi soc;  // samples nearest each soc breakpoint
};

Support support(const std::vector<Dataset>& data, const IdentSpec& spec, const KnownCell& known);

Eigen::VectorXd initialGuess(const std::vector<Dataset>& data, const IdentSpec& spec);

struct IdentResult {
  IdentSpec spec;
  ecm::EcmParams params;
  Eigen::VectorXd x;
  Eigen::VectorXd residuals;
  double residual_norm = 0.0;  // |f(x_hat)|
  lm::Report report;
  metrics::ErrorStats fit;
  Support support;
  std::vector<std::string> warnings;
};

IdentResult identify(const std::vector<Dataset>& data, const IdentSpec& spec, const KnownCell& known);

/// Copies each unsupported breakpoint of `x` from the nearest supported one:
/// r0 along SoC at the same current (never across currents), the RC
/// parameters along SoC. Returns the number of parameters changed.
int fillUnsupported(Eigen::VectorXd& x, const Support& support, const IdentSpec& spec);

/// Simulated voltage of `params` over `data.profile` from a rested state.
profiles::Simulation replay(const ecm::EcmParams& params, const Dataset& data);

/// Errors of `params` on held-out data.
metrics::ErrorStats evaluate(const ecm::EcmParams& params, const Dataset& holdout);

inline constexpr int kIdentFormatVersion = 1;

nlohmann::json toJson(const IdentResult& result);
/// Decoded parameters of a saved result.
ecm::EcmParams paramsFromResultJson(const nlohmann::json& j);

/// Rows `table,soc,current_a,value,support`; current_a is empty for the RC
/// tables.
std::string resultCsv(const IdentResult& result);

}  // namespace doeforge::ident
