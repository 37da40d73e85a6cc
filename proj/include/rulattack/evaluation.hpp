#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rulattack/attack.hpp"
#include "rulattack/data_pipeline.hpp"
#include "rulattack/model.hpp"

namespace rulattack {

/// sqrt(mean((p - t)^2)). Throws EmptyInput / ShapeMismatch.
double rmse(std::span<const double> predictions, std::span<const double> truths);

/// 100 * (attacked - clean) / clean
double pct_increase(double clean_rmse, double attacked_rmse);

struct EngineRow {
  int engine_id = 0;
  double true_rul = 0.0;
  double clean_prediction = 0.0;
  double attacked_prediction = 0.0;
};

struct AttackReport {
  std::string model_id;
  AttackConfig config;
  double clean_rmse = 0.0;
  double attacked_rmse = 0.0;
  double pct_increase = 0.0;
  std::vector<EngineRow> rows;
};

struct AttackRun {
  AttackReport report;
  std::vector<AdversarialExample> examples;
};

/// Crafts one adversarial example per window of `subset` (one terminal
/// window per engine) and compares clean with attacked RMSE.
AttackRun evaluate_attack(const RegressionModel& model, const std::string& model_id,
                          std::span<const LabeledWindow> subset, const AttackConfig& config);

struct PiecewisePoint {
  int cycle = 0;
  double true_rul = 0.0;
  double predicted = 0.0;
  /// Present only when an attack was requested.
  std::optional<double> attacked;
};

/// Predictions for every window ending at cycles seq_len..end of one
/// engine, optionally under attack. Throws TooShort.
std::vector<PiecewisePoint> piecewise_rul(const RegressionModel& model, const NormalizedEngine& engine,
                                          double rul_cap, const AttackConfig* attack = nullptr);

struct SweepRow {
  double epsilon = 0.0;
  double fgsm_rmse = 0.0;
  double bim_rmse = 0.0;
};

struct SweepOptions {
  bool fgsm = true;
  bool bim = true;
  std::size_t bim_iterations = kDefaultBimIterations;
  std::size_t workers = 1;
};

/// One FGSM/BIM pair per epsilon; BIM uses alpha = epsilon / iterations.
/// Epsilons must ascend and stay within the admissible budget. Kinds not
/// requested are reported as NaN.
std::vector<SweepRow> epsilon_sweep(const RegressionModel& model, std::span<const LabeledWindow> subset,
                                    std::span<const double> epsilons, const SweepOptions& options = {});

struct NamedModel {
  std::string id;
  const RegressionModel* model = nullptr;
};

struct TransferEntry {
  std::string source;
  std::string target;
  double fgsm_rmse = 0.0;
  double bim_rmse = 0.0;
};

struct TransferMatrix {
  std::vector<std::string> models;
  std::vector<double> clean_rmse;  // per model, on the same subset
  std::vector<TransferEntry> entries;  // ordered pairs, source != target

  const TransferEntry& at(const std::string& source, const std::string& target) const;
};

/// Perturbed engine trajectory: the crafted window written over the cycles
/// it covers, untouched elsewhere.
NormalizedEngine inject(const NormalizedEngine& engine, const AdversarialExample& example);

/// Crafts FGSM and BIM examples once per source model on each engine's
/// terminal window, injects them into the trajectories and evaluates every
/// other model on windows re-cut to its own sequence length.
TransferMatrix transfer_matrix(std::span<const NamedModel> models,
                               const std::vector<NormalizedEngine>& engines, double rul_cap,
                               const AttackConfig& fgsm, const AttackConfig& bim);

}  // namespace rulattack
