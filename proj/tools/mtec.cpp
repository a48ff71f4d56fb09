// mtec — content-request preprocessing, Top-K prediction, coded placement
// and cache simulation, staged behind one experiment configuration.
#include <filesystem>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "mtec/common.hpp"
#include "mtec/experiment.hpp"

namespace {

struct CliArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::string seed;
  std::string out;
  bool quiet = false;
};

int run_stage(const std::string& stage, const CliArgs& a) {
  std::string text;
  if (a.config_path.empty()) {
    text = mtec::experiment::default_config_text();
  } else {
    if (!std::filesystem::exists(a.config_path))
      throw mtec::ConfigError("config file '" + a.config_path + "' not found");
    text = mtec::read_file(a.config_path);
  }

  std::vector<std::pair<std::string, std::string>> overrides;
  for (const auto& s : a.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0)
      throw mtec::ConfigError("--set expects section.key=value, got '" + s + "'");
    overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  // dedicated flags outrank --set overrides
  if (!a.seed.empty()) overrides.emplace_back("run.seed", a.seed);
  if (!a.out.empty()) overrides.emplace_back("output.dir", a.out);

  mtec::experiment::ExperimentConfig cfg = mtec::experiment::load_config(text, overrides);
  cfg.quiet = a.quiet;

  if (stage == "preprocess") mtec::experiment::run_preprocess(cfg);
  else if (stage == "train") mtec::experiment::run_train(cfg);
  else if (stage == "place") mtec::experiment::run_place(cfg);
  else if (stage == "simulate") mtec::experiment::run_simulate(cfg);
  else if (stage == "report") mtec::experiment::run_report(cfg);
  else if (stage == "all") mtec::experiment::run_all(cfg);
  else throw mtec::ConfigError("unknown stage '" + stage + "'");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string(mtec::kToolVersion) +
               " — predictive coded content placement for FAP/UAV clusters"};
  app.require_subcommand(1);

  CliArgs args;
  auto add_common = [&args](CLI::App* cmd) {
    cmd->add_option("--config", args.config_path,
                    "experiment configuration file (INI); built-in defaults when omitted");
    cmd->add_option("--set", args.sets,
                    "override one config field as section.key=value (repeatable)");
    cmd->add_option("--seed", args.seed, "override run.seed");
    cmd->add_option("--out", args.out, "override output.dir");
    cmd->add_flag("--quiet", args.quiet, "suppress progress lines");
  };
  add_common(&app);

  const std::vector<std::pair<std::string, std::string>> stages = {
      {"preprocess", "ingest or synthesize the trace and build windowed samples"},
      {"train", "train the dual-path Top-K predictor on the preprocessed samples"},
      {"place", "turn predictions into coded/uncoded placement plans per cache size"},
      {"simulate", "replay the trace against each policy and record metrics"},
      {"report", "aggregate the policy-by-cache-size summary tables"},
      {"all", "run every stage in order"},
  };
  for (const auto& [name, desc] : stages) add_common(app.add_subcommand(name, desc));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage problems exit 1, --help exits 0
  }

  const std::string stage = app.get_subcommands().front()->get_name();
  try {
    return run_stage(stage, args);
  } catch (const mtec::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const mtec::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const mtec::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
