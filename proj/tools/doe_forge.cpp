#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "doeforge/errors.hpp"
#include "doeforge/pipeline.hpp"

using namespace doeforge;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct Args {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::optional<std::int64_t> steps;
};

using Stage = nlohmann::json (*)(const pipeline::RunConfig&, const pipeline::StageOptions&);

nlohmann::json train(const pipeline::RunConfig& c, const pipeline::StageOptions& o) {
  td3::TrainHooks hooks;
  hooks.on_eval = [](const td3::AgentNets&, const td3::CurvePoint& p) {
    std::cerr << "step " << p.step << " eval_return " << p.eval_return << " critic_loss " << p.critic_loss
              << " actor_loss " << p.actor_loss << "\n";
  };
  return pipeline::cmdTrain(c, o, hooks);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Design-of-experiments forge: RL-generated battery test profiles and ECM identification"};
  app.require_subcommand(0, 1);
  bool version = false;
  app.add_flag("--version", version, "Print artifact format versions");

  const std::map<std::string, std::pair<std::string, Stage>> stages = {
      {"train", {"Train the TD3 agent on perturbed simulated cells", &train}},
      {"generate", {"Roll out the trained actor to produce an AI DoE profile", &pipeline::cmdGenerate}},
      {"traditional", {"Build the traditional DoE suite and a validation drive cycle", &pipeline::cmdTraditional}},
      {"simulate", {"Replay profiles through the plant cell with voltage noise", &pipeline::cmdSimulate}},
      {"identify", {"Fit the 2-RC model to measurements", &pipeline::cmdIdentify}},
      {"evaluate", {"Score an identified model on held-out measurements", &pipeline::cmdEvaluate}},
      {"compare", {"Compare AI and traditional DoE results on a common holdout", &pipeline::cmdCompare}},
  };

  Args args;
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, entry] : stages) {
    auto* sub = app.add_subcommand(name, entry.first);
    sub->add_option("--config", args.config, "Run config JSON")->required();
    sub->add_option("--seed", args.seed, "Override the config seed");
    sub->add_option("--out", args.out, "Output directory")->capture_default_str();
    if (name == "train") sub->add_option("--steps", args.steps, "Override td3.max_steps");
    subs[name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  if (version) {
    std::cout << pipeline::versionText();
    return 0;
  }

  for (const auto& [name, sub] : subs) {
    if (!sub->parsed()) continue;
    try {
      auto config = pipeline::loadRunConfig(args.config);
      if (args.seed) config.seed = *args.seed;
      pipeline::StageOptions opt;
      opt.out = args.out;
      opt.steps = args.steps;
      const auto summary = stages.at(name).second(config, opt);
      std::cout << summary.dump(2) << "\n";
      return 0;
    } catch (const ValidationError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitValidation;
    } catch (const NumericalError& e) {
      std::cerr << "numerical failure: " << e.what() << "\n";
      return kExitRuntime;
    } catch (const std::exception& e) {
      std::cerr << "runtime failure: " << e.what() << "\n";
      return kExitRuntime;
    }
  }
  std::cerr << app.help();
  return kExitValidation;
}
