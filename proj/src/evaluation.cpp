#include "rulattack/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rulattack/error.hpp"

namespace rulattack {

double rmse(std::span<const double> predictions, std::span<const double> truths) {
  if (predictions.empty()) throw Error(ErrorKind::kEmptyInput, "rmse of an empty sequence");
  if (predictions.size() != truths.size()) {
    throw Error(ErrorKind::kShapeMismatch, "rmse: " + std::to_string(predictions.size()) +
                                               " predictions vs " + std::to_string(truths.size()) + " truths");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double r = predictions[i] - truths[i];
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(predictions.size()));
}

double pct_increase(double clean_rmse, double attacked_rmse) {
  if (clean_rmse == 0.0) {
    return attacked_rmse == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  return 100.0 * (attacked_rmse - clean_rmse) / clean_rmse;
}

namespace {

std::vector<Tensor> values_of(std::span<const LabeledWindow> windows) {
  std::vector<Tensor> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(w.window.values);
  return out;
}

std::vector<Tensor> values_of(const std::vector<AdversarialExample>& examples) {
  std::vector<Tensor> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(e.perturbed.values);
  return out;
}

std::vector<double> labels_of(std::span<const LabeledWindow> windows) {
  std::vector<double> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(w.rul);
  return out;
}

}  // namespace

AttackRun evaluate_attack(const RegressionModel& model, const std::string& model_id,
                          std::span<const LabeledWindow> subset, const AttackConfig& config) {
  if (subset.empty()) throw Error(ErrorKind::kEmptyInput, "evaluation subset is empty");
  AttackRun run;
  run.examples = craft_batch(model, subset, config);
  const auto clean = predict_batch(model, values_of(subset));
  const auto attacked = predict_batch(model, values_of(run.examples));
  const auto truth = labels_of(subset);

  AttackReport& r = run.report;
  r.model_id = model_id;
  r.config = config;
  r.clean_rmse = rmse(clean, truth);
  r.attacked_rmse = rmse(attacked, truth);
  r.pct_increase = pct_increase(r.clean_rmse, r.attacked_rmse);
  for (std::size_t i = 0; i < subset.size(); ++i) {
    r.rows.push_back({subset[i].window.engine_id, truth[i], clean[i], attacked[i]});
  }
  return run;
}

std::vector<PiecewisePoint> piecewise_rul(const RegressionModel& model, const NormalizedEngine& engine,
                                          double rul_cap, const AttackConfig* attack) {
  const std::size_t seq = model.spec.seq_len;
  if (engine.num_cycles() < seq) {
    throw Error(ErrorKind::kTooShort, "unit " + std::to_string(engine.unit_id) + " has " +
                                          std::to_string(engine.num_cycles()) + " cycles, sequence length is " +
                                          std::to_string(seq));
  }
  const WindowSet set = make_windows({engine}, seq, rul_cap, 1);
  const auto clean = predict_batch(model, values_of(set.windows));
  std::vector<double> attacked;
  if (attack) {
    const auto examples = craft_batch(model, set.windows, *attack);
    attacked = predict_batch(model, values_of(examples));
  }
  std::vector<PiecewisePoint> curve;
  curve.reserve(set.windows.size());
  for (std::size_t i = 0; i < set.windows.size(); ++i) {
    PiecewisePoint p;
    p.cycle = set.windows[i].window.end_cycle;
    p.true_rul = set.windows[i].rul;
    p.predicted = clean[i];
    if (attack) p.attacked = attacked[i];
    curve.push_back(p);
  }
  return curve;
}

std::vector<SweepRow> epsilon_sweep(const RegressionModel& model, std::span<const LabeledWindow> subset,
                                    std::span<const double> epsilons, const SweepOptions& options) {
  if (subset.empty()) throw Error(ErrorKind::kEmptyInput, "sweep subset is empty");
  if (!std::is_sorted(epsilons.begin(), epsilons.end())) {
    throw Error(ErrorKind::kConfigError, "sweep epsilons must be sorted ascending");
  }
  const auto truth = labels_of(subset);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<SweepRow> rows;
  for (double eps : epsilons) {
    SweepRow row{eps, nan, nan};
    if (options.fgsm) {
      AttackConfig cfg = AttackConfig::fgsm(eps);
      cfg.workers = options.workers;
      row.fgsm_rmse = rmse(predict_batch(model, values_of(craft_batch(model, subset, cfg))), truth);
    }
    if (options.bim) {
      AttackConfig cfg = AttackConfig::bim(eps, options.bim_iterations);
      cfg.workers = options.workers;
      row.bim_rmse = rmse(predict_batch(model, values_of(craft_batch(model, subset, cfg))), truth);
    }
    rows.push_back(row);
  }
  return rows;
}

const TransferEntry& TransferMatrix::at(const std::string& source, const std::string& target) const {
  for (const auto& e : entries) {
    if (e.source == source && e.target == target) return e;
  }
  throw Error(ErrorKind::kConfigError, "no transfer entry " + source + " -> " + target);
}

NormalizedEngine inject(const NormalizedEngine& engine, const AdversarialExample& example) {
  const SensorWindow& w = example.perturbed;
  if (w.engine_id != engine.unit_id || w.channels() != engine.values.dim(1) ||
      w.end_cycle > static_cast<int>(engine.num_cycles()) || w.end_cycle < static_cast<int>(w.seq_len())) {
    throw Error(ErrorKind::kShapeMismatch, "adversarial window does not belong to unit " +
                                               std::to_string(engine.unit_id));
  }
  NormalizedEngine out = engine;
  const std::size_t channels = w.channels();
  const std::size_t first = static_cast<std::size_t>(w.end_cycle) - w.seq_len();
  std::copy(w.values.data().begin(), w.values.data().end(),
            out.values.data().begin() + static_cast<std::ptrdiff_t>(first * channels));
  return out;
}

TransferMatrix transfer_matrix(std::span<const NamedModel> models,
                               const std::vector<NormalizedEngine>& engines, double rul_cap,
                               const AttackConfig& fgsm, const AttackConfig& bim) {
  TransferMatrix matrix;
  for (const auto& m : models) matrix.models.push_back(m.id);
  if (models.empty()) return matrix;
  for (const auto& m : models) {
    if (m.model->norm_stats.kept_channels != models.front().model->norm_stats.kept_channels ||
        m.model->spec.input_channels != models.front().model->spec.input_channels) {
      throw Error(ErrorKind::kShapeMismatch, "models " + models.front().id + " and " + m.id +
                                                 " do not share a channel set");
    }
  }

  // Only engines long enough for every model take part, so every cell of
  // the matrix is computed on the same units.
  std::size_t longest = 0;
  for (const auto& m : models) longest = std::max(longest, m.model->spec.seq_len);
  const auto pool = filter_min_cycles(engines, longest);
  if (pool.empty()) throw Error(ErrorKind::kEmptyInput, "no engine is long enough for every model");

  std::vector<WindowSet> clean_sets;
  for (const auto& m : models) {
    WindowSet set = terminal_windows(pool, m.model->spec.seq_len, rul_cap);
    const auto truth = labels_of(set.windows);
    matrix.clean_rmse.push_back(rmse(predict_batch(*m.model, values_of(set.windows)), truth));
    clean_sets.push_back(std::move(set));
  }
  if (models.size() < 2) return matrix;

  for (std::size_t a = 0; a < models.size(); ++a) {
    const auto fgsm_examples = craft_batch(*models[a].model, clean_sets[a].windows, fgsm);
    const auto bim_examples = craft_batch(*models[a].model, clean_sets[a].windows, bim);
    std::vector<NormalizedEngine> fgsm_traj, bim_traj;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      fgsm_traj.push_back(inject(pool[i], fgsm_examples[i]));
      bim_traj.push_back(inject(pool[i], bim_examples[i]));
    }
    for (std::size_t b = 0; b < models.size(); ++b) {
      if (a == b) continue;
      const std::size_t seq = models[b].model->spec.seq_len;
      const auto fw = terminal_windows(fgsm_traj, seq, rul_cap);
      const auto bw = terminal_windows(bim_traj, seq, rul_cap);
      TransferEntry e;
      e.source = models[a].id;
      e.target = models[b].id;
      e.fgsm_rmse = rmse(predict_batch(*models[b].model, values_of(fw.windows)), labels_of(fw.windows));
      e.bim_rmse = rmse(predict_batch(*models[b].model, values_of(bw.windows)), labels_of(bw.windows));
      matrix.entries.push_back(std::move(e));
    }
  }
  return matrix;
}

}  // namespace rulattack
