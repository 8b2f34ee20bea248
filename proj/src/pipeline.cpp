#include "doeforge/pipeline.hpp"

#include <random>
#include <set>

#include "doeforge/ecm_io.hpp"
#include "doeforge/errors.hpp"
#include "doeforge/io.hpp"
#include "doeforge/nn.hpp"

namespace doeforge::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kCellSeedSalt = 0x5851f42d4c957f2dULL;
constexpr std::uint64_t kNoiseSeedSalt = 0x14057b7ef767814fULL;
constexpr std::uint64_t kCycleSeedSalt = 0x2545f4914f6cdd1dULL;

fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

std::vector<fs::path> pathList(const json& j, const fs::path& base, const std::string& what) {
  if (!j.is_array()) throw ValidationError(what + " must be a list of paths");
  std::vector<fs::path> out;
  for (const auto& e : j) {
    if (!e.is_string()) throw ValidationError(what + " must contain strings");
    out.push_back(resolve(base, e.get<std::string>()));
  }
  return out;
}

std::vector<std::string> pathStrings(const std::vector<fs::path>& paths) {
  std::vector<std::string> out;
  for (const auto& p : paths) out.push_back(p.string());
  return out;
}

void requireFile(const fs::path& p, const std::string& what) {
  if (p.empty()) throw ValidationError(what + " is not set in the config");
  if (!fs::is_regular_file(p)) throw ValidationError(what + " not found: " + p.string());
}

void requireFiles(const std::vector<fs::path>& paths, const std::string& what) {
  if (paths.empty()) throw ValidationError(what + " list is empty in the config");
  for (const auto& p : paths) requireFile(p, what);
}

json parseJsonFile(const fs::path& path) {
  try {
    return json::parse(io::readTextFile(path));
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string dumpJson(const json& j) { return j.dump(2) + "\n"; }

ecm::EcmParams loadCell(const RunConfig& c) { return ecm::resolveCell(c.cell); }

json hashEntry(const fs::path& p) { return {{"path", p.string()}, {"hash", io::fileHash(p)}}; }

// Coverage of every uniformity and the band score.
json coverageJson(const DataCoverage& cov) {
  const Eigen::Vector3d u = cov.time.uniformities();
  return {{"voltage", u[0]},      {"current", u[1]}, {"soc", u[2]}, {"combined", u.mean()},
          {"band_score", cov.bands.score()}, {"band_windows", cov.bands.windows()}};
}

std::vector<ident::Dataset> loadMeasurements(const std::vector<fs::path>& paths, const ident::KnownCell& known) {
  std::vector<ident::Dataset> data;
  for (const auto& p : paths) data.push_back(ident::loadMeasurement(p, known));
  return data;
}

double totalDurationOf(const std::vector<ident::Dataset>& data) {
  double t = 0.0;
  for (const auto& d : data) t += d.profile.duration();
  return t;
}

std::size_t totalSamplesOf(const std::vector<ident::Dataset>& data) {
  std::size_t n = 0;
  for (const auto& d : data) n += d.profile.size();
  return n;
}

std::string safeName(const std::string& name) {
  std::string out;
  for (char ch : name) out += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-') ? ch : '_';
  return out.empty() ? "profile" : out;
}

void writeErrorCsvs(const fs::path& out, const std::string& prefix, const metrics::ErrorStats& s) {
  io::writeTextFile(out / (prefix + "error_hist.csv"), metrics::histogramCsv(s.error));
  io::writeTextFile(out / (prefix + "error_vs_soc.csv"), metrics::histogram2DCsv(s.error_vs_soc));
  io::writeTextFile(out / (prefix + "error_vs_current.csv"), metrics::histogram2DCsv(s.error_vs_current));
}

json errorSummary(const metrics::ErrorStats& s) {
  return {{"count", s.count}, {"mae_mv", s.mae * 1e3}, {"rmse_mv", s.rmse * 1e3}, {"max_abs_mv", s.max_abs * 1e3},
          {"mean_mv", s.mean * 1e3}};
}

nn::MlpD loadActor(const fs::path& path) {
  const json j = parseJsonFile(path);
  const std::string format = j.is_object() ? j.value("format", std::string()) : std::string();
  if (format == "doeforge-mlp") return nn::mlpFromJson(j);
  if (format == "doeforge-agent") return td3::actorFromCheckpoint(j);
  throw ValidationError(path.string() + ": not a network or agent checkpoint");
}

}  // namespace

void RunConfig::validate() const {
  env.validate();
  td3.validate();
  recipe.validate();
  ident.validate();
  if (num_envs < 1) throw ValidationError("config: num_envs must be >= 1");
  if (!(perturbation >= 0.0 && perturbation < 1.0)) throw ValidationError("config: perturbation must be in [0, 1)");
  if (generate_max_steps < 0) throw ValidationError("config: generate max_steps must be >= 0");
  if (generate_episodes < 1) throw ValidationError("config: generate episodes must be >= 1");
  if (!(noise_v >= 0.0) || !std::isfinite(noise_v)) throw ValidationError("config: noise_v must be >= 0");
  if (validation_cycle && (!(validation_cycle->duration > 0.0) || !(validation_cycle->dt > 0.0))) {
    throw ValidationError("config: validation cycle needs positive duration and dt");
  }
}

json toJson(const profiles::DriveCycleSpec& s) {
  return {{"duration", s.duration},           {"dt", s.dt},
          {"max_charge_a", s.max_charge_a},   {"max_discharge_a", s.max_discharge_a},
          {"capacity_ah", s.capacity_ah},     {"smoothing_tau", s.smoothing_tau},
          {"initial_soc", s.initial_soc}};
}

profiles::DriveCycleSpec driveCycleFromJson(const json& j) {
  profiles::DriveCycleSpec s;
  try {
    s.duration = j.value("duration", s.duration);
    s.dt = j.value("dt", s.dt);
    s.max_charge_a = j.value("max_charge_a", s.max_charge_a);
    s.max_discharge_a = j.value("max_discharge_a", s.max_discharge_a);
    s.capacity_ah = j.value("capacity_ah", s.capacity_ah);
    s.smoothing_tau = j.value("smoothing_tau", s.smoothing_tau);
    s.initial_soc = j.value("initial_soc", s.initial_soc);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("validation cycle: ") + e.what());
  }
  return s;
}

namespace {

// Every key must exist in the reference document (the serialized defaults);
// nested objects are checked recursively.
void rejectUnknownKeys(const json& given, const json& reference, const std::string& where) {
  for (const auto& [key, value] : given.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!reference.contains(key)) throw ValidationError("config: unknown key '" + path + "'");
    if (value.is_object() && reference[key].is_object()) rejectUnknownKeys(value, reference[key], path);
  }
}

}  // namespace

RunConfig runConfigFromJson(const json& j, const fs::path& base) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  rejectUnknownKeys(j, toJson(RunConfig{}), "");
  if (!j.contains("seed")) throw ValidationError("config: 'seed' is required");
  RunConfig c;
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("cell")) {
      c.cell = j["cell"].get<std::string>();
      if (c.cell.rfind("builtin:", 0) != 0) c.cell = resolve(base, c.cell).string();
    }
    if (j.contains("env")) c.env = env::envConfigFromJson(j["env"]);
    if (j.contains("td3")) c.td3 = td3::td3ConfigFromJson(j["td3"]);
    if (j.contains("train")) {
      const auto& t = j["train"];
      c.num_envs = t.value("num_envs", c.num_envs);
      c.perturbation = t.value("perturbation", c.perturbation);
    }
    if (j.contains("generate")) {
      const auto& g = j["generate"];
      if (g.contains("checkpoint")) c.checkpoint = resolve(base, g["checkpoint"].get<std::string>());
      c.generate_max_steps = g.value("max_steps", c.generate_max_steps);
      c.generate_episodes = g.value("episodes", c.generate_episodes);
    }
    if (j.contains("traditional")) {
      const auto& t = j["traditional"];
      if (t.contains("recipe")) c.recipe = profiles::recipeFromJson(t["recipe"]);
      if (t.contains("validation")) {
        if (t["validation"].is_null()) {
          c.validation_cycle.reset();
        } else {
          c.validation_cycle = driveCycleFromJson(t["validation"]);
        }
      }
    }
    if (j.contains("simulate")) {
      const auto& s = j["simulate"];
      if (s.contains("profiles")) c.profiles = pathList(s["profiles"], base, "simulate.profiles");
      c.noise_v = s.value("noise_v", c.noise_v);
    }
    if (j.contains("identify")) {
      const auto& s = j["identify"];
      if (s.contains("spec")) c.ident = ident::identSpecFromJson(s["spec"]);
      if (s.contains("measurements")) c.measurements = pathList(s["measurements"], base, "identify.measurements");
    }
    if (j.contains("evaluate")) {
      const auto& e = j["evaluate"];
      if (e.contains("result")) c.result = resolve(base, e["result"].get<std::string>());
      if (e.contains("holdout")) c.holdout = resolve(base, e["holdout"].get<std::string>());
    }
    if (j.contains("compare")) {
      const auto& cm = j["compare"];
      auto method = [&](const char* key, MethodInputs& m) {
        if (!cm.contains(key)) return;
        const auto& mj = cm[key];
        if (mj.contains("result")) m.result = resolve(base, mj["result"].get<std::string>());
        if (mj.contains("measurements")) {
          m.measurements = pathList(mj["measurements"], base, std::string("compare.") + key + ".measurements");
        }
        if (mj.contains("evaluation")) m.evaluation = resolve(base, mj["evaluation"].get<std::string>());
      };
      method("ai", c.ai);
      method("traditional", c.traditional);
      if (cm.contains("holdout")) c.holdout = resolve(base, cm["holdout"].get<std::string>());
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig loadRunConfig(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw ValidationError("config not found: " + path.string());
  return runConfigFromJson(parseJsonFile(path), path.parent_path());
}

json toJson(const RunConfig& c) {
  auto method = [](const MethodInputs& m) {
    return json{{"result", m.result.string()},
                {"measurements", pathStrings(m.measurements)},
                {"evaluation", m.evaluation.string()}};
  };
  return {{"cell", c.cell},
          {"seed", c.seed},
          {"env", env::toJson(c.env)},
          {"td3", td3::toJson(c.td3)},
          {"train", {{"num_envs", c.num_envs}, {"perturbation", c.perturbation}}},
          {"generate", {{"checkpoint", c.checkpoint.string()}, {"max_steps", c.generate_max_steps},
                        {"episodes", c.generate_episodes}}},
          {"traditional",
           {{"recipe", profiles::recipeToJson(c.recipe)},
            {"validation", c.validation_cycle ? toJson(*c.validation_cycle) : json(nullptr)}}},
          {"simulate", {{"profiles", pathStrings(c.profiles)}, {"noise_v", c.noise_v}}},
          {"identify", {{"spec", ident::toJson(c.ident)}, {"measurements", pathStrings(c.measurements)}}},
          {"evaluate", {{"result", c.result.string()}, {"holdout", c.holdout.string()}}},
          {"compare", {{"ai", method(c.ai)}, {"traditional", method(c.traditional)}, {"holdout", c.holdout.string()}}}};
}

std::vector<ecm::EcmParams> perturbedCells(const ecm::EcmParams& nominal, int count, double p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> scale(1.0 - p, 1.0 + p);
  std::vector<ecm::EcmParams> cells;
  for (int i = 0; i < count; ++i) {
    const double r = scale(rng), c = scale(rng), q = scale(rng);
    cells.push_back(nominal.perturbed(r, c, q));
    cells.back().name = nominal.name + "-env" + std::to_string(i);
  }
  return cells;
}

double durationReductionPercent(double duration_ai, double duration_traditional) {
  if (!(duration_traditional > 0.0)) throw ValidationError("traditional duration must be positive");
  return 100.0 * (1.0 - duration_ai / duration_traditional);
}

Measurement measure(const profiles::CurrentProfile& profile, const ecm::EcmParams& cell, double noise_v,
                    std::uint64_t seed) {
  if (!(noise_v >= 0.0)) throw ValidationError("measurement noise must be non-negative");
  Measurement m;
  m.data.profile = profile;
  m.data.initial_soc = profile.meta().initial_soc;
  const auto sim = ident::replay(cell, m.data);
  m.clean_voltage = sim.voltage;
  m.soc = sim.soc;
  m.data.voltage = sim.voltage;
  if (noise_v > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_v);
    for (Eigen::Index i = 0; i < m.data.voltage.size(); ++i) m.data.voltage[i] += noise(rng);
  }
  return m;
}

DataCoverage dataCoverage(const std::vector<ident::Dataset>& data, const ecm::EcmParams& cell,
                          const env::EnvConfig& env) {
  DataCoverage cov{metrics::TimeCoverage(env.edges()), metrics::BandCoverage(env.bands, env.band_share_threshold)};
  for (const auto& d : data) {
    metrics::BandCoverage bands(env.bands, env.band_share_threshold);
    const auto sim = ident::replay(cell, d);
    for (std::size_t i = 0; i < d.profile.size(); ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      cov.time.add(d.voltage[k], d.profile.currents()[i], sim.soc[k]);
      bands.push(d.profile.currents()[i]);
    }
    cov.bands.merge(bands);
  }
  return cov;
}

json cmdTrain(const RunConfig& config, const StageOptions& opt, const td3::TrainHooks& hooks) {
  config.validate();
  td3::Td3Config tc = config.td3;
  if (opt.steps) tc.max_steps = *opt.steps;
  tc.validate();
  const auto nominal = loadCell(config);

  const auto cells = perturbedCells(nominal, config.num_envs, config.perturbation, config.seed ^ kCellSeedSalt);
  std::vector<env::BatteryEnv> envs;
  for (const auto& c : cells) envs.emplace_back(c, config.env);
  env::BatteryEnv eval_env(nominal, config.env);
  const auto result = td3::train(envs, eval_env, tc, config.seed, hooks);

  io::writeTextFile(opt.out / "checkpoint.json", dumpJson(td3::toJson(result.nets)));
  io::writeTextFile(opt.out / "actor.json", dumpJson(nn::toJson(result.best_actor)));
  io::writeTextFile(opt.out / "curve.csv", td3::curveCsv(result.curve));
  json summary = {{"stage", "train"},
                  {"seed", config.seed},
                  {"steps", result.steps},
                  {"env_transitions", result.env_transitions},
                  {"stop_reason", result.stop_reason},
                  {"updates",
                   {{"critic", result.counters.critic}, {"actor", result.counters.actor}, {"polyak", result.counters.polyak}}},
                  {"best_eval_return", result.curve.empty() ? json(nullptr) : json(result.best_eval_return)},
                  {"cells", json::array()},
                  {"td3", td3::toJson(tc)},
                  {"env", env::toJson(config.env)}};
  for (const auto& c : cells) summary["cells"].push_back(c.name);
  io::writeTextFile(opt.out / "train.json", dumpJson(summary));
  return summary;
}

json cmdGenerate(const RunConfig& config, const StageOptions& opt) {
  config.validate();
  requireFile(config.checkpoint, "generate.checkpoint");
  const auto actor = loadActor(config.checkpoint);
  if (actor.inputSize() != env::kObservationSize || actor.outputSize() != 1) {
    throw ValidationError(config.checkpoint.string() + ": actor shape does not match the environment observation");
  }
  env::EnvConfig ec = config.env;
  if (config.generate_max_steps > 0) ec.max_episode_steps = config.generate_max_steps;
  env::BatteryEnv environment(loadCell(config), ec);
  auto gen = td3::generateDoe(actor, environment, config.seed, 0, config.generate_episodes);
  gen.profile.meta().name = "ai_doe";

  int violations = 0;
  metrics::TimeCoverage time(ec.edges());
  metrics::BandCoverage bands(ec.bands, ec.band_share_threshold);
  for (const auto& r : gen.log.records) {
    violations += r.violation ? 1 : 0;
    time.add(r.voltage, r.current, r.soc);
    bands.push(r.current);
  }
  const Eigen::Vector3d u = time.uniformities();
  profiles::saveProfile(gen.profile, opt.out / "ai_profile.csv");
  env::saveEpisodeLog(gen.log, opt.out / "episode_log.csv");
  json summary = {{"stage", "generate"},
                  {"seed", config.seed},
                  {"checkpoint", hashEntry(config.checkpoint)},
                  {"profile", "ai_profile.csv"},
                  {"episodes", config.generate_episodes},
                  {"steps", gen.log.records.size()},
                  {"duration_s", gen.profile.duration()},
                  {"terminal", environment.steps() < ec.max_episode_steps},
                  {"violations", violations},
                  {"initial_soc", gen.profile.meta().initial_soc},
                  {"uniformity",
                   {{"voltage", u[0]},
                    {"current", u[1]},
                    {"soc", u[2]},
                    {"combined", u.mean()},
                    {"band_score", bands.score()}}}};
  io::writeTextFile(opt.out / "generate.json", dumpJson(summary));
  return summary;
}

json cmdTraditional(const RunConfig& config, const StageOptions& opt) {
  config.validate();
  const auto cell = loadCell(config);
  const auto suite = profiles::traditionalSuite(config.recipe);
  std::vector<profiles::LimitedProfile> guarded;
  for (const auto& p : suite) {
    guarded.push_back(profiles::enforceLimits(
        p, cell, ecm::CellState::atRest(p.meta().initial_soc, config.ident.temp_c, cell.numRc()), config.env.v_min,
        config.env.v_max));
  }
  std::optional<profiles::LimitedProfile> validation;
  if (config.validation_cycle) {
    auto cycle = profiles::driveCycle(*config.validation_cycle, config.seed ^ kCycleSeedSalt);
    cycle.meta().name = "validation_drive_cycle";
    validation = profiles::enforceLimits(
        cycle, cell, ecm::CellState::atRest(cycle.meta().initial_soc, config.ident.temp_c, cell.numRc()),
        config.env.v_min, config.env.v_max);
  }

  json files = json::array();
  double total = 0.0;
  for (std::size_t k = 0; k < guarded.size(); ++k) {
    const auto& lp = guarded[k];
    const std::string name = "trad_" + std::to_string(k) + "_" + safeName(lp.profile.meta().name) + ".csv";
    profiles::saveProfile(lp.profile, opt.out / name);
    total += lp.profile.duration();
    files.push_back({{"file", name},
                     {"name", lp.profile.meta().name},
                     {"duration_s", lp.profile.duration()},
                     {"samples", lp.profile.size()},
                     {"clamped_samples", lp.clamped_samples},
                     {"hash", io::fileHash(opt.out / name)}});
  }
  json summary = {{"stage", "traditional"},
                  {"recipe", profiles::recipeToJson(config.recipe)},
                  {"profiles", files},
                  {"total_duration_s", total},
                  {"total_duration_h", total / 3600.0}};
  if (validation) {
    profiles::saveProfile(validation->profile, opt.out / "validation_drive_cycle.csv");
    summary["validation"] = {{"file", "validation_drive_cycle.csv"},
                             {"duration_s", validation->profile.duration()},
                             {"samples", validation->profile.size()},
                             {"clamped_samples", validation->clamped_samples},
                             {"hash", io::fileHash(opt.out / "validation_drive_cycle.csv")}};
  }
  io::writeTextFile(opt.out / "traditional.json", dumpJson(summary));
  return summary;
}

json cmdSimulate(const RunConfig& config, const StageOptions& opt) {
  config.validate();
  requireFiles(config.profiles, "simulate.profiles");
  const auto cell = loadCell(config);
  std::vector<profiles::CurrentProfile> inputs;
  for (const auto& p : config.profiles) inputs.push_back(profiles::loadProfile(p));

  std::vector<Measurement> outputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const std::uint64_t seed = config.seed ^ (kNoiseSeedSalt * (k + 1));
    outputs.push_back(measure(inputs[k], cell, config.noise_v, seed));
  }
  json files = json::array();
  std::set<std::string> used;
  for (std::size_t k = 0; k < outputs.size(); ++k) {
    std::string name = config.profiles[k].stem().string() + ".meas.csv";
    if (!used.insert(name).second) name = std::to_string(k) + "_" + name;
    ident::saveMeasurement(outputs[k].data, outputs[k].soc, opt.out / name);
    files.push_back({{"file", name},
                     {"profile", hashEntry(config.profiles[k])},
                     {"samples", inputs[k].size()},
                     {"duration_s", inputs[k].duration()},
                     {"noise_seed", config.seed ^ (kNoiseSeedSalt * (k + 1))}});
  }
  json summary = {{"stage", "simulate"}, {"cell", config.cell}, {"noise_v", config.noise_v}, {"measurements", files}};
  io::writeTextFile(opt.out / "simulate.json", dumpJson(summary));
  return summary;
}

json cmdIdentify(const RunConfig& config, const StageOptions& opt) {
  config.validate();
  requireFiles(config.measurements, "identify.measurements");
  const auto known = ident::KnownCell::from(loadCell(config));
  const auto data = loadMeasurements(config.measurements, known);
  const auto result = ident::identify(data, config.ident, known);

  io::writeTextFile(opt.out / "ident_result.json", dumpJson(ident::toJson(result)));
  io::writeTextFile(opt.out / "ident_result.csv", ident::resultCsv(result));
  std::string res = "sample,residual_v\n";
  for (Eigen::Index i = 0; i < result.residuals.size(); ++i) {
    res += std::to_string(i) + "," + io::formatDouble(result.residuals[i]) + "\n";
  }
  io::writeTextFile(opt.out / "residuals.csv", res);
  writeErrorCsvs(opt.out, "fit_", result.fit);

  json inputs = json::array();
  for (const auto& p : config.measurements) inputs.push_back(hashEntry(p));
  json summary = {{"stage", "identify"},
                  {"measurements", inputs},
                  {"samples", totalSamplesOf(data)},
                  {"duration_s", totalDurationOf(data)},
                  {"result", "ident_result.json"},
                  {"iterations", result.report.iterations},
                  {"stop_reason", result.report.stop_reason},
                  {"residual_norm", result.residual_norm},
                  {"fit", errorSummary(result.fit)},
                  {"warnings", result.warnings}};
  io::writeTextFile(opt.out / "identify.json", dumpJson(summary));
  return summary;
}

json cmdEvaluate(const RunConfig& config, const StageOptions& opt) {
  config.validate();
  requireFile(config.result, "evaluate.result");
  requireFile(config.holdout, "holdout");
  const auto params = ident::paramsFromResultJson(parseJsonFile(config.result));
  const auto known = ident::KnownCell::from(loadCell(config));
  const auto holdout = ident::loadMeasurement(config.holdout, known);
  const auto stats = ident::evaluate(params, holdout);

  writeErrorCsvs(opt.out, "holdout_", stats);
  json summary = {{"stage", "evaluate"},
                  {"result", hashEntry(config.result)},
                  {"holdout", hashEntry(config.holdout)},
                  {"holdout_hash", io::fileHash(config.holdout)},
                  {"errors", errorSummary(stats)},
                  {"stats", metrics::toJson(stats)}};
  io::writeTextFile(opt.out / "evaluate.json", dumpJson(summary));
  return summary;
}

json cmdCompare(const RunConfig& config, const StageOptions& opt) {
  config.validate();
  requireFile(config.holdout, "holdout");
  const std::string holdout_hash = io::fileHash(config.holdout);
  const auto cell = loadCell(config);
  const auto known = ident::KnownCell::from(cell);
  const auto holdout = ident::loadMeasurement(config.holdout, known);

  struct Loaded {
    std::string key;
    const MethodInputs* in;
    ecm::EcmParams params;
    std::vector<ident::Dataset> data;
    metrics::ErrorStats stats;
    DataCoverage coverage;
  };
  std::vector<Loaded> methods;
  for (const auto& [key, in] : {std::pair<std::string, const MethodInputs*>{"ai", &config.ai},
                                std::pair<std::string, const MethodInputs*>{"traditional", &config.traditional}}) {
    requireFile(in->result, "compare." + key + ".result");
    requireFiles(in->measurements, "compare." + key + ".measurements");
    if (!in->evaluation.empty()) {
      requireFile(in->evaluation, "compare." + key + ".evaluation");
      const json ev = parseJsonFile(in->evaluation);
      if (ev.value("holdout_hash", std::string()) != holdout_hash) {
        throw ValidationError("compare: " + key + " evaluation used a different holdout (hash " +
                              ev.value("holdout_hash", std::string("none")) + ", expected " + holdout_hash + ")");
      }
    }
    Loaded m{key, in, ident::paramsFromResultJson(parseJsonFile(in->result)), loadMeasurements(in->measurements, known),
             {}, {}};
    methods.push_back(std::move(m));
  }
  for (auto& m : methods) {
    m.stats = ident::evaluate(m.params, holdout);
    m.coverage = dataCoverage(m.data, cell, config.env);
  }

  json report = {{"stage", "compare"}, {"holdout", hashEntry(config.holdout)}, {"holdout_hash", holdout_hash}};
  for (const auto& m : methods) {
    const double duration = totalDurationOf(m.data);
    report["methods"][m.key] = {{"result", hashEntry(m.in->result)},
                                {"duration_s", duration},
                                {"duration_h", duration / 3600.0},
                                {"samples", totalSamplesOf(m.data)},
                                {"holdout", errorSummary(m.stats)},
                                {"uniformity", coverageJson(m.coverage)},
                                {"band_visit_fractions",
                                 std::vector<double>{m.coverage.bands.visitFractions()[0],
                                                     m.coverage.bands.visitFractions()[1],
                                                     m.coverage.bands.visitFractions()[2]}}};
    writeErrorCsvs(opt.out, m.key + "_", m.stats);
    io::writeTextFile(opt.out / (m.key + "_voltage_hist.csv"), metrics::histogramCsv(m.coverage.time.voltage()));
    io::writeTextFile(opt.out / (m.key + "_current_hist.csv"), metrics::histogramCsv(m.coverage.time.current()));
    io::writeTextFile(opt.out / (m.key + "_soc_hist.csv"), metrics::histogramCsv(m.coverage.time.soc()));
  }
  const double t_ai = totalDurationOf(methods[0].data), t_trad = totalDurationOf(methods[1].data);
  report["duration_reduction_pct"] = durationReductionPercent(t_ai, t_trad);
  report["mae_ratio"] = methods[1].stats.mae > 0.0 ? json(methods[0].stats.mae / methods[1].stats.mae) : json(nullptr);
  io::writeTextFile(opt.out / "compare.json", dumpJson(report));
  return report;
}

std::string versionText() {
  std::string s;
  s += "network format " + std::to_string(nn::kNetworkFormatVersion) + "\n";
  s += "agent checkpoint format " + std::to_string(td3::kAgentFormatVersion) + "\n";
  s += "cell parameter format " + std::to_string(ecm::kParamsFormatVersion) + "\n";
  s += "identification result format " + std::to_string(ident::kIdentFormatVersion) + "\n";
  return s;
}

}  // namespace doeforge::pipeline
