#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "doeforge/env.hpp"
#include "doeforge/ident.hpp"
#include "doeforge/profiles.hpp"
#include "doeforge/td3.hpp"

namespace doeforge::pipeline {

struct MethodInputs {
  std::filesystem::path result;                     // identification result JSON
  std::vector<std::filesystem::path> measurements;  // data the result was fitted on
  std::filesystem::path evaluation;                 // optional evaluate output to cross-check
};

/// Everything a pipeline stage needs. Relative paths are resolved against the
/// directory of the config file.
struct RunConfig {
  std::string cell = "builtin:refcell";
  std::uint64_t seed = 1;
  env::EnvConfig env;
  td3::Td3Config td3;

  // train
  int num_envs = 4;
  double perturbation = 0.2;  // per-env uniform scaling of R, C and capacity tables

  // generate
  std::filesystem::path checkpoint;
  int generate_max_steps = 0;  // 0: env episode limit
  int generate_episodes = 1;   // later episodes continue from the previous end state

  // traditional
  profiles::TraditionalRecipe recipe;
  std::optional<profiles::DriveCycleSpec> validation_cycle = profiles::DriveCycleSpec{};

  // simulate
  std::vector<std::filesystem::path> profiles;
  double noise_v = 1e-3;

  // identify
  ident::IdentSpec ident;
  std::vector<std::filesystem::path> measurements;

  // evaluate
  std::filesystem::path result;
  std::filesystem::path holdout;

  // compare (holdout shared with evaluate)
  MethodInputs ai;
  MethodInputs traditional;

  void validate() const;
};

RunConfig runConfigFromJson(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig loadRunConfig(const std::filesystem::path& path);
nlohmann::json toJson(const RunConfig& config);

nlohmann::json toJson(const profiles::DriveCycleSpec& spec);
profiles::DriveCycleSpec driveCycleFromJson(const nlohmann::json& j);

/// Cells for parallel training: the nominal cell with every R, C and capacity
/// table scaled by an independent factor in [1 - p, 1 + p] per env.
std::vector<ecm::EcmParams> perturbedCells(const ecm::EcmParams& nominal, int count, double p, std::uint64_t seed);

struct StageOptions {
  std::filesystem::path out = "out";
  std::optional<std::int64_t> steps;  // train only: overrides td3.max_steps
};

// Each stage validates and loads every input before writing anything, and
// returns a summary that is also written to <out>/<stage>.json.
nlohmann::json cmdTrain(const RunConfig& config, const StageOptions& opt, const td3::TrainHooks& hooks = {});
nlohmann::json cmdGenerate(const RunConfig& config, const StageOptions& opt);
nlohmann::json cmdTraditional(const RunConfig& config, const StageOptions& opt);
nlohmann::json cmdSimulate(const RunConfig& config, const StageOptions& opt);
nlohmann::json cmdIdentify(const RunConfig& config, const StageOptions& opt);
nlohmann::json cmdEvaluate(const RunConfig& config, const StageOptions& opt);
nlohmann::json cmdCompare(const RunConfig& config, const StageOptions& opt);

/// 100 * (1 - ai / traditional).
double durationReductionPercent(double duration_ai, double duration_traditional);

/// Measurement with Gaussian voltage noise of standard deviation `noise_v`.
struct Measurement {
  ident::Dataset data;
  Eigen::VectorXd soc;
  Eigen::VectorXd clean_voltage;
};

Measurement measure(const profiles::CurrentProfile& profile, const ecm::EcmParams& cell, double noise_v,
                    std::uint64_t seed);

/// Coverage of measured data on the env histogram edges: voltage, current and
/// SoC (by Ah counting with the cell capacity) plus band visits of the current.
struct DataCoverage {
  metrics::TimeCoverage time;
  metrics::BandCoverage bands;
};

DataCoverage dataCoverage(const std::vector<ident::Dataset>& data, const ecm::EcmParams& cell,
                          const env::EnvConfig& env);

/// Format versions of every persisted artifact, one per line.
std::string versionText();

}  // namespace doeforge::pipeline
