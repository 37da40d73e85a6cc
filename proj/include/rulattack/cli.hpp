#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rulattack/attack.hpp"
#include "rulattack/data_pipeline.hpp"
#include "rulattack/model.hpp"

namespace rulattack {

struct RunConfig {
  std::filesystem::path data_dir;
  std::string dataset_id = "FD001";
  std::vector<Family> families{Family::kLstm, Family::kGru, Family::kCnn1d};
  bool scaled = true;
  double rul_cap = 130.0;
  /// Stride between consecutive training windows.
  std::size_t stride = 1;
  /// Engines with fewer test cycles are left out of attack evaluation.
  std::size_t min_cycles = 150;
  TrainConfig train;
  AttackConfig attack = AttackConfig::bim(0.3, kDefaultBimIterations);
  std::vector<double> sweep_epsilons{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4};
  int piecewise_engine = 17;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 2021;

  /// Throws ConfigError.
  void validate() const;
};

/// Reads an INI file with [data], [model], [train], [attack], [sweep],
/// [piecewise] and [run] sections. Unknown keys are a ConfigError so typos
/// do not silently fall back to defaults.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& text);

/// CMAPSS_DATA_DIR, when set and data_dir is still empty.
void apply_environment(RunConfig& cfg);

struct IngestSummary {
  std::size_t train_engines = 0;
  std::size_t test_engines = 0;
  std::size_t subset_engines = 0;
  std::vector<std::size_t> kept_channels;  // 1-based sensor ids
  std::filesystem::path cache;
};

// Each command writes only below cfg.output_dir and throws rulattack::Error.

IngestSummary cmd_ingest(const RunConfig& cfg);
/// One checkpoint and history CSV per configured family; returns the
/// checkpoint paths in family order.
std::vector<std::filesystem::path> cmd_train(const RunConfig& cfg);
std::filesystem::path cmd_predict(const RunConfig& cfg, const std::filesystem::path& model_path);
/// Report CSV plus one signature CSV per engine. Returns the report path.
std::filesystem::path cmd_attack(const RunConfig& cfg, const std::filesystem::path& model_path);
std::filesystem::path cmd_piecewise(const RunConfig& cfg, const std::filesystem::path& model_path,
                                    std::optional<int> engine_id = std::nullopt);
std::filesystem::path cmd_sweep(const RunConfig& cfg, const std::filesystem::path& model_path);
std::filesystem::path cmd_transfer(const RunConfig& cfg, const std::vector<std::filesystem::path>& model_paths);

/// Test engines of the configured dataset normalized with the model's
/// statistics and restricted to the min_cycles subset.
std::vector<NormalizedEngine> evaluation_engines(const RunConfig& cfg, const NormalizationStats& stats);

}  // namespace rulattack
