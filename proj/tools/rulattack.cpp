#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "rulattack/cli.hpp"
#include "rulattack/error.hpp"

namespace fs = std::filesystem;
using namespace rulattack;

namespace {

struct Flags {
  std::optional<std::string> config;
  std::optional<std::string> data_dir;
  std::optional<std::string> out;
  std::vector<std::string> models;
  std::optional<std::string> kind;
  std::optional<double> epsilon;
  std::optional<std::size_t> iterations;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<int> engine;
  bool scaled = false;
  bool full_scale = false;
};

RunConfig resolve(const Flags& f) {
  RunConfig cfg = f.config ? load_run_config(*f.config) : RunConfig{};
  if (f.data_dir) cfg.data_dir = *f.data_dir;
  apply_environment(cfg);
  if (f.out) cfg.output_dir = *f.out;
  if (f.kind) cfg.attack.kind = parse_attack_kind(*f.kind);
  if (f.epsilon) cfg.attack.epsilon = *f.epsilon;
  if (f.iterations) cfg.attack.iterations = *f.iterations;
  if (f.seed) cfg.seed = *f.seed;
  if (f.workers) cfg.attack.workers = *f.workers;
  if (f.scaled) cfg.scaled = true;
  if (f.full_scale) cfg.scaled = false;
  return cfg;
}

fs::path single_model(const Flags& f) {
  if (f.models.size() != 1) throw Error(ErrorKind::kConfigError, "exactly one --model is required");
  return f.models.front();
}

std::vector<fs::path> model_paths(const Flags& f) { return {f.models.begin(), f.models.end()}; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial attacks on remaining-useful-life regressors"};
  app.require_subcommand(1);
  Flags f;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "INI run configuration");
    sub->add_option("--data-dir", f.data_dir, "directory holding train_/test_/RUL_<id>.txt");
    sub->add_option("--out", f.out, "output directory");
    sub->add_option("--seed", f.seed, "run seed");
    sub->add_flag("--scaled", f.scaled, "desk-scale model presets");
    sub->add_flag("--full-scale", f.full_scale, "full-size model presets");
  };
  const auto attack_opts = [&](CLI::App* sub) {
    sub->add_option("--kind", f.kind, "fgsm or bim");
    sub->add_option("--epsilon", f.epsilon, "L-infinity budget in normalized units");
    sub->add_option("--iterations", f.iterations, "BIM iterations");
    sub->add_option("--workers", f.workers, "crafting threads");
  };

  auto* ingest = app.add_subcommand("ingest", "parse, select channels, normalize and cache windows");
  auto* train = app.add_subcommand("train", "train the configured model families");
  auto* predict = app.add_subcommand("predict", "clean predictions on the evaluation subset");
  auto* attack = app.add_subcommand("attack", "attack report and signatures for one model");
  auto* piecewise = app.add_subcommand("piecewise", "per-cycle RUL curve of one test engine");
  auto* sweep = app.add_subcommand("sweep", "RMSE against epsilon for FGSM and BIM");
  auto* transfer = app.add_subcommand("transfer", "cross-model transfer matrix");
  for (auto* sub : {ingest, train, predict, attack, piecewise, sweep, transfer}) common(sub);
  for (auto* sub : {attack, piecewise, sweep, transfer}) attack_opts(sub);
  for (auto* sub : {predict, attack, piecewise, sweep}) sub->add_option("--model", f.models, "checkpoint")->required();
  transfer->add_option("--model", f.models, "checkpoints (two or more)")->required();
  piecewise->add_option("--engine", f.engine, "test unit id");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = resolve(f);
    if (ingest->parsed()) {
      const IngestSummary s = cmd_ingest(cfg);
      fmt::print("train_engines={} test_engines={} subset={} channels={} cache={}\n", s.train_engines,
                 s.test_engines, s.subset_engines, fmt::join(s.kept_channels, ","), s.cache.string());
    } else if (train->parsed()) {
      for (const auto& p : cmd_train(cfg)) fmt::print("{}\n", p.string());
    } else if (predict->parsed()) {
      fmt::print("{}\n", cmd_predict(cfg, single_model(f)).string());
    } else if (attack->parsed()) {
      fmt::print("{}\n", cmd_attack(cfg, single_model(f)).string());
    } else if (piecewise->parsed()) {
      fmt::print("{}\n", cmd_piecewise(cfg, single_model(f), f.engine).string());
    } else if (sweep->parsed()) {
      fmt::print("{}\n", cmd_sweep(cfg, single_model(f)).string());
    } else if (transfer->parsed()) {
      fmt::print("{}\n", cmd_transfer(cfg, model_paths(f)).string());
    }
  } catch (const Error& e) {
    fmt::print(stderr, "{}: {}\n", e.name(), e.what());
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    fmt::print(stderr, "DataNotFound: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "InternalError: {}\n", e.what());
    return 4;
  }
  return 0;
}
