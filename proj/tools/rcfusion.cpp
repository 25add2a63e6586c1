// SPDX-License-Identifier: Apache-2.0
// Command-line entry point: train, eval, ablate, gradcheck, gendata.
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <Eigen/Core>

#include "rcf/commands.hpp"
#include "rcf/errors.hpp"

namespace {

using namespace rcf;
namespace fs = std::filesystem;

/// Default configuration, or the one in `path`, with the data source and
/// seed overridden when given.
RunConfig resolve(const std::optional<std::string>& path, const std::optional<std::string>& data,
                  const std::optional<std::uint64_t>& seed) {
  RunConfig config = path ? load_run_config(*path) : RunConfig{};
  if (data) config.data = *data;
  if (seed) config.train.seed = *seed;
  return config;
}

void apply_threads() {
  const char* env = std::getenv("RCF_THREADS");
  if (env == nullptr) return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || n < 1)
    throw ConfigError(std::string("RCF_THREADS must be a positive integer, got '") + env + "'");
  Eigen::setNbThreads(static_cast<int>(n));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-level RGB-D fusion classifier"};
  app.require_subcommand(1);

  std::optional<std::string> config_path, data;
  std::optional<std::uint64_t> seed;

  auto* train = app.add_subcommand("train", "multi-start initialization and full training");
  std::string out_ckpt, metrics, modality;
  train->add_option("--config", config_path, "run configuration (key = value)");
  train->add_option("--data", data, "dataset directory, or 'synth'");
  train->add_option("--out", out_ckpt, "checkpoint to write")->required();
  train->add_option("--metrics", metrics, "per-epoch CSV (default: <out>.metrics.csv)");
  train->add_option("--seed", seed, "training seed");
  train->add_option("--modality", modality, "rgbd | rgb | depth")
      ->check(CLI::IsMember({"rgbd", "rgb", "depth"}));

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ckpt, split = "test";
  std::optional<std::string> confusion;
  eval->add_option("--ckpt", ckpt, "checkpoint")->required();
  eval->add_option("--data", data, "dataset directory or 'synth' (default: from the run)");
  eval->add_option("--split", split, "train | test")->check(CLI::IsMember({"train", "test"}));
  eval->add_option("--confusion", confusion, "K x K confusion CSV to write");

  auto* ablate = app.add_subcommand("ablate", "compare fusion heads under one seed");
  std::vector<std::string> variants;
  std::string ablate_csv = "ablation.csv";
  ablate->add_option("--variant", variants, "full | res5 | fc (repeatable; default all)")
      ->check(CLI::IsMember({"full", "res5", "fc"}));
  ablate->add_option("--config", config_path, "run configuration");
  ablate->add_option("--data", data, "dataset directory, or 'synth'");
  ablate->add_option("--seed", seed, "training seed");
  ablate->add_option("--out", ablate_csv, "comparison CSV");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every gradient");
  gradcheck->add_option("--config", config_path, "run configuration (head, biases, order)");
  gradcheck->add_option("--seed", seed, "seed of weights and inputs");

  auto* gendata = app.add_subcommand("gendata", "write the synthetic dataset to disk");
  std::optional<std::string> synth_config;
  std::string out_dir;
  gendata->add_option("--synth-config", synth_config, "run configuration; synth.* keys are used");
  gendata->add_option("--out", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    apply_threads();
    if (*train) {
      RunConfig config = resolve(config_path, data, seed);
      if (!modality.empty()) config.model.modality = parse_modality(modality);
      if (metrics.empty()) metrics = out_ckpt + ".metrics.csv";
      cmd_train(config, out_ckpt, metrics, std::cout);
    } else if (*eval) {
      cmd_eval(ckpt, data, split == "train" ? Split::train : Split::test,
               confusion ? std::optional<fs::path>(*confusion) : std::nullopt, std::cout);
    } else if (*ablate) {
      std::vector<Head> heads;
      if (variants.empty()) variants = {"full", "res5", "fc"};
      for (const auto& v : variants) heads.push_back(parse_head(v));
      cmd_ablate(resolve(config_path, data, seed), heads, ablate_csv, std::cout);
    } else if (*gradcheck) {
      const RunConfig config = resolve(config_path, std::nullopt, std::nullopt);
      const GradcheckReport report = cmd_gradcheck(config.model, seed.value_or(0), std::cout);
      if (!report.result.passed) {
        std::cerr << "gradient check failed in parameter '" << report.result.worst_param << "'\n";
        return kExitNumeric;
      }
    } else if (*gendata) {
      const RunConfig config = synth_config ? load_run_config(*synth_config) : RunConfig{};
      cmd_gendata(config.synth, out_dir, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kExitOk;
}
