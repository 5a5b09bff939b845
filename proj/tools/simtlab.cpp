// simtlab: experiment driver for the simultaneous-translation laboratory.
//
// Subcommands: generate, train, evaluate, sweep, dump-params.
// Exit codes: 0 success, 1 configuration error, 2 runtime failure,
// 3 partial sweep failure.

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "simt/checkpoint.hpp"
#include "simt/experiment.hpp"

namespace {

// Applies a dotted-path override ("training.lr=0.001") onto the config JSON.
// The value is parsed as JSON when possible so numbers, booleans and arrays
// keep their types; anything unparsable is taken as a string.
void apply_override(nlohmann::json& config, const std::string& spec) {
  const size_t eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw std::invalid_argument("--set expects key.path=value, got '" + spec + "'");
  }
  const std::string path = spec.substr(0, eq);
  const std::string raw = spec.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  nlohmann::json* node = &config;
  size_t start = 0;
  while (true) {
    const size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (key.empty()) throw std::invalid_argument("--set: empty key segment in '" + path + "'");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_path, "experiment config file (JSON)")
      ->required();
  cmd->add_option("-o,--out", args.out_dir,
                  "output directory (overrides config and SIMTLAB_OUT)");
  cmd->add_option("--set", args.overrides,
                  "override a config value, e.g. --set training.lr=0.001")
      ->take_all();
}

// Resolution order, weakest first: config file, --set overrides, the
// SIMTLAB_OUT environment variable, then --out.
simt::ExperimentConfig resolve_config(const CommonArgs& args) {
  std::ifstream in(args.config_path);
  if (!in) throw std::invalid_argument("config: cannot open " + args.config_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config: " + args.config_path + " is not valid JSON: " +
                                e.what());
  }
  for (const std::string& spec : args.overrides) apply_override(j, spec);
  simt::ExperimentConfig config = simt::config_from_json(j);
  if (const char* env = std::getenv("SIMTLAB_OUT"); env != nullptr && *env != '\0') {
    config.out_dir = env;
  }
  if (!args.out_dir.empty()) config.out_dir = args.out_dir;
  return config;
}

int dispatch(const CommonArgs& args,
             const std::function<int(const simt::ExperimentConfig&, std::ostream&)>& fn) {
  try {
    return fn(resolve_config(args), std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"simtlab: wait-k / HMT curriculum training laboratory"};
  app.require_subcommand(1);

  CommonArgs generate_args, train_args, evaluate_args, sweep_args;
  CLI::App* generate = app.add_subcommand("generate", "write a synthetic parallel corpus");
  add_common(generate, generate_args);
  CLI::App* train = app.add_subcommand("train", "train a model on the generated corpus");
  add_common(train, train_args);
  CLI::App* evaluate = app.add_subcommand("evaluate", "decode and score a trained checkpoint");
  add_common(evaluate, evaluate_args);
  CLI::App* sweep = app.add_subcommand("sweep", "train and evaluate a grid of variants");
  add_common(sweep, sweep_args);

  std::string ckpt_path;
  CLI::App* dump = app.add_subcommand("dump-params", "describe a checkpoint's tensors");
  dump->add_option("checkpoint", ckpt_path, "checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;  // --help exits 0; bad usage is a config error
  }

  if (generate->parsed()) return dispatch(generate_args, simt::run_generate);
  if (train->parsed()) return dispatch(train_args, simt::run_train);
  if (evaluate->parsed()) return dispatch(evaluate_args, simt::run_evaluate);
  if (sweep->parsed()) return dispatch(sweep_args, simt::run_sweep);
  if (dump->parsed()) {
    try {
      std::cout << simt::describe_checkpoint(ckpt_path);
      return 0;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    }
  }
  return 1;
}
