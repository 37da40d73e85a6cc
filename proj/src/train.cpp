#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "rulattack/error.hpp"
#include "rulattack/model.hpp"
#include "rulattack/random.hpp"

namespace rulattack {

void TrainConfig::validate() const {
  const auto fail = [](const std::string& why) { throw Error(ErrorKind::kConfigError, why); };
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be >= 0");
  if (batch_size == 0) fail("batch_size must be positive");
  if (max_epochs == 0) fail("max_epochs must be positive");
  if (early_stop_patience == 0) fail("early_stop_patience must be positive");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    fail("validation_fraction must lie in (0,1)");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0,1)");
}

namespace {

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

// Holds out whole units so validation windows never overlap training ones.
Split split_by_unit(const std::vector<LabeledWindow>& data, double fraction, Rng& rng) {
  std::vector<int> units;
  for (const auto& w : data) {
    if (std::find(units.begin(), units.end(), w.window.engine_id) == units.end()) {
      units.push_back(w.window.engine_id);
    }
  }
  Split split;
  if (units.size() >= 2) {
    for (std::size_t i = units.size(); i > 1; --i) std::swap(units[i - 1], units[rng.below(i)]);
    const auto n_val = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(units.size()))), 1,
        units.size() - 1);
    const std::set<int> held(units.begin(), units.begin() + static_cast<std::ptrdiff_t>(n_val));
    for (std::size_t i = 0; i < data.size(); ++i) {
      (held.count(data[i].window.engine_id) ? split.validation : split.train).push_back(i);
    }
  } else {
    std::vector<std::size_t> idx(data.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    const auto n_val = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(idx.size()))), 1,
        idx.size() - 1);
    split.validation.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    split.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
    std::sort(split.validation.begin(), split.validation.end());
    std::sort(split.train.begin(), split.train.end());
  }
  return split;
}

std::size_t feature_width(const ModelSpec& spec) {
  return spec.family == Family::kCnn1d ? spec.seq_len * spec.layer_widths.back()
                                       : spec.layer_widths.back();
}

double rmse_on(const RegressionModel& model, const std::vector<LabeledWindow>& data,
               const std::vector<std::size_t>& idx) {
  std::vector<Tensor> windows;
  windows.reserve(idx.size());
  for (auto i : idx) windows.push_back(data[i].window.values);
  const auto pred = predict_batch(model, windows);
  double acc = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const double r = pred[k] - data[idx[k]].rul;
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(idx.size()));
}

}  // namespace

TrainResult train(RegressionModel model, const std::vector<LabeledWindow>& dataset,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.size() < 2) throw Error(ErrorKind::kEmptyInput, "training needs at least two windows");
  for (const auto& w : dataset) {
    if (w.window.values.shape() != Shape{model.spec.seq_len, model.spec.input_channels}) {
      throw Error(ErrorKind::kShapeMismatch, "training window " + shape_string(w.window.values.shape()) +
                                                 " does not match " + model.spec.label());
    }
  }

  Rng split_rng(cfg.seed, "split");
  Rng shuffle_rng(cfg.seed, "shuffle");
  Rng dropout_rng(cfg.seed, "dropout");
  const Split split = split_by_unit(dataset, cfg.validation_fraction, split_rng);

  const std::size_t np = model.parameters.size();
  std::vector<Tensor> m(np), v(np);
  for (std::size_t p = 0; p < np; ++p) {
    m[p] = Tensor(model.parameters[p].value.shape(), 0.0);
    v[p] = Tensor(model.parameters[p].value.shape(), 0.0);
  }

  TrainResult result;
  std::vector<Parameter> best = model.parameters;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  std::size_t step = 0;
  std::vector<std::size_t> order = split.train;
  const std::size_t features = feature_width(model.spec);

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    double sse = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      std::vector<Tensor> windows;
      std::vector<double> labels;
      windows.reserve(n);
      for (std::size_t k = 0; k < n; ++k) {
        windows.push_back(dataset[order[start + k]].window.values);
        labels.push_back(dataset[order[start + k]].rul);
      }

      Tensor mask;
      if (cfg.dropout > 0.0) {
        mask = Tensor({n, features}, 0.0);
        const double keep = 1.0 - cfg.dropout;
        for (double& x : mask.data()) x = dropout_rng.uniform() < keep ? 1.0 / keep : 0.0;
      }

      Tape tape;
      std::vector<Var> params;
      params.reserve(np);
      for (const auto& p : model.parameters) params.push_back(tape.variable(p.value));
      std::vector<Tensor> grads;
      double loss_value = 0.0;
      try {
        const Var input = tape.constant(stack_windows(windows));
        const Var pred = forward(model.spec, params, input, cfg.dropout > 0.0 ? &mask : nullptr);
        const Var loss = mean_squared_error(pred, tape.constant(Tensor({n, 1}, labels)));
        loss_value = loss.value()[0];
        grads = tape.gradients(loss, params);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kNonFinite) throw;
        throw Error(ErrorKind::kDiverged, "epoch " + std::to_string(epoch) + ": " + e.what());
      }
      sse += loss_value * static_cast<double>(n);

      ++step;
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (std::size_t p = 0; p < np; ++p) {
        Tensor& w = model.parameters[p].value;
        const Tensor& g = grads[p];
        for (std::size_t i = 0; i < w.size(); ++i) {
          m[p][i] = cfg.beta1 * m[p][i] + (1.0 - cfg.beta1) * g[i];
          v[p][i] = cfg.beta2 * v[p][i] + (1.0 - cfg.beta2) * g[i] * g[i];
          const double update = cfg.learning_rate * (m[p][i] / bc1) / (std::sqrt(v[p][i] / bc2) + cfg.adam_epsilon);
          // weights are stored at single precision
          w[i] = static_cast<float>(w[i] - update);
        }
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_rmse = std::sqrt(sse / static_cast<double>(order.size()));
    stats.validation_rmse = rmse_on(model, dataset, split.validation);
    if (!std::isfinite(stats.train_rmse) || !std::isfinite(stats.validation_rmse)) {
      throw Error(ErrorKind::kDiverged, "non-finite loss at epoch " + std::to_string(epoch));
    }
    result.history.push_back(stats);

    if (stats.validation_rmse < best_val) {
      best_val = stats.validation_rmse;
      best = model.parameters;
      result.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= cfg.early_stop_patience) {
      break;
    }
  }

  model.parameters = std::move(best);
  result.model = std::move(model);
  return result;
}

}  // namespace rulattack
