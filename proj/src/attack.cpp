#include "rulattack/attack.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <exception>
#include <string>
#include <thread>

#include "rulattack/error.hpp"

namespace rulattack {

std::string_view attack_name(AttackKind kind) { return kind == AttackKind::kFgsm ? "fgsm" : "bim"; }

AttackKind parse_attack_kind(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "fgsm") return AttackKind::kFgsm;
  if (lower == "bim") return AttackKind::kBim;
  throw Error(ErrorKind::kConfigError, "unknown attack kind '" + std::string(text) + "'");
}

double AttackConfig::step_size() const {
  if (kind == AttackKind::kFgsm) return epsilon;
  return alpha ? *alpha : epsilon / static_cast<double>(iterations);
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0) || epsilon > kMaxEpsilon) {
    throw Error(ErrorKind::kEpsilonOutOfRange,
                "epsilon " + std::to_string(epsilon) + " outside [0, " + std::to_string(kMaxEpsilon) + "]");
  }
  if (kind == AttackKind::kBim) {
    if (iterations == 0) throw Error(ErrorKind::kConfigError, "BIM needs at least one iteration");
    const double a = step_size();
    if (!(a > 0.0) && epsilon > 0.0) throw Error(ErrorKind::kConfigError, "BIM step size must be positive");
  }
  if (workers == 0) throw Error(ErrorKind::kConfigError, "workers must be positive");
}

AttackConfig AttackConfig::fgsm(double epsilon) {
  AttackConfig c;
  c.kind = AttackKind::kFgsm;
  c.epsilon = epsilon;
  return c;
}

AttackConfig AttackConfig::bim(double epsilon, std::size_t iterations) {
  AttackConfig c;
  c.kind = AttackKind::kBim;
  c.epsilon = epsilon;
  c.iterations = iterations;
  return c;
}

namespace {

bool all_zero(const Tensor& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](double v) { return v == 0.0; });
}

// Iterated signed-gradient steps on the perturbation, clipped to the
// epsilon box after every step. FGSM is the single step of size epsilon.
std::vector<AdversarialExample> craft_chunk(const RegressionModel& model,
                                            std::span<const LabeledWindow> windows,
                                            const AttackConfig& cfg) {
  const std::size_t n = windows.size();
  const std::size_t steps = cfg.kind == AttackKind::kFgsm ? 1 : cfg.iterations;
  const double step = cfg.step_size();
  const double eps = cfg.epsilon;

  std::vector<Tensor> originals;
  originals.reserve(n);
  for (const auto& w : windows) originals.push_back(w.window.values);

  std::vector<double> labels(n);
  if (cfg.use_model_label) {
    labels = predict_batch(model, originals);
  } else {
    for (std::size_t i = 0; i < n; ++i) labels[i] = windows[i].rul;
  }

  std::vector<Tensor> delta;
  delta.reserve(n);
  for (const auto& o : originals) delta.emplace_back(o.shape(), 0.0);
  std::vector<Tensor> current = originals;
  std::vector<bool> zero(n, false);

  for (std::size_t it = 0; it < steps; ++it) {
    const auto grads = input_gradients(model, current, labels);
    for (std::size_t i = 0; i < n; ++i) {
      const Tensor& g = grads[i].grad;
      if (it == 0) zero[i] = all_zero(g);
      Tensor& d = delta[i];
      Tensor& x = current[i];
      const Tensor& m = originals[i];
      for (std::size_t k = 0; k < d.size(); ++k) {
        d[k] = std::clamp(d[k] + step * sign(g[k]), -eps, eps);
        if (cfg.clip_to_data_range) {
          x[k] = std::clamp(m[k] + d[k], 0.0, 1.0);
          d[k] = x[k] - m[k];
        } else {
          x[k] = m[k] + d[k];
        }
      }
    }
  }

  std::vector<AdversarialExample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const SensorWindow& src = windows[i].window;
    AdversarialExample ex;
    ex.original = src;
    ex.perturbed = SensorWindow{std::move(current[i]), src.engine_id, src.end_cycle};
    ex.perturbation = std::move(delta[i]);
    ex.label_used = labels[i];
    ex.zero_gradient = zero[i];
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace

std::vector<AdversarialExample> craft_batch(const RegressionModel& model,
                                            std::span<const LabeledWindow> windows,
                                            const AttackConfig& config) {
  config.validate();
  if (windows.empty()) return {};
  const Shape& shape = windows.front().window.values.shape();
  for (const auto& w : windows) {
    if (w.window.values.shape() != shape) {
      throw Error(ErrorKind::kShapeMismatch, "batch windows differ in shape: " + shape_string(shape) +
                                                 " and " + shape_string(w.window.values.shape()));
    }
  }

  const std::size_t workers = std::min(config.workers, windows.size());
  if (workers <= 1) return craft_chunk(model, windows, config);

  std::vector<std::vector<AdversarialExample>> parts(workers);
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  const std::size_t per = (windows.size() + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = std::min(windows.size(), w * per);
    const std::size_t end = std::min(windows.size(), begin + per);
    threads.emplace_back([&, w, begin, end] {
      try {
        parts[w] = craft_chunk(model, windows.subspan(begin, end - begin), config);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<AdversarialExample> out;
  out.reserve(windows.size());
  for (auto& p : parts) {
    for (auto& ex : p) out.push_back(std::move(ex));
  }
  return out;
}

AdversarialExample craft(const RegressionModel& model, const SensorWindow& window, double rul_label,
                         const AttackConfig& config) {
  const LabeledWindow lw{window, rul_label};
  return craft_batch(model, std::span<const LabeledWindow>(&lw, 1), config).front();
}

AdversarialExample craft_fgsm(const RegressionModel& model, const SensorWindow& window, double rul_label,
                              double epsilon, bool clip_to_data_range) {
  AttackConfig cfg = AttackConfig::fgsm(epsilon);
  cfg.clip_to_data_range = clip_to_data_range;
  return craft(model, window, rul_label, cfg);
}

AdversarialExample craft_bim(const RegressionModel& model, const SensorWindow& window, double rul_label,
                             double epsilon, std::size_t iterations, double alpha,
                             bool clip_to_data_range) {
  AttackConfig cfg = AttackConfig::bim(epsilon, iterations);
  cfg.alpha = alpha;
  cfg.clip_to_data_range = clip_to_data_range;
  return craft(model, window, rul_label, cfg);
}

}  // namespace rulattack
