#pragma once

// Independent reference computations used by the tests: central finite
// differences, brute-force loops and small fixtures.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "rulattack/data_pipeline.hpp"
#include "rulattack/model.hpp"
#include "rulattack/random.hpp"
#include "rulattack/tape.hpp"
#include "rulattack/tensor.hpp"

namespace oracle {

using rulattack::Rng;
using rulattack::Shape;
using rulattack::Tensor;

inline constexpr double kStep = 1e-4;
inline constexpr double kRelTol = 1e-4;
// Below this absolute difference two derivatives count as equal; it sits
// above the rounding noise of a central difference with kStep.
inline constexpr double kAbsFloor = 1e-6;

inline bool derivatives_agree(double analytic, double numeric, double rel = kRelTol, double abs = kAbsFloor) {
  const double diff = std::abs(analytic - numeric);
  return diff <= abs || diff <= rel * std::max(std::abs(analytic), std::abs(numeric));
}

inline double central_difference(const std::function<double(const Tensor&)>& f, Tensor x, std::size_t i,
                                 double h = kStep) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double up = f(x);
  x[i] = x0 - h;
  const double down = f(x);
  return (up - down) / (2.0 * h);
}

struct Difference {
  double central = 0.0;
  // The one-sided slopes disagree: a ReLU kink lies within h of x and the
  // central difference is not an estimate of the derivative there.
  bool straddles_kink = false;
};

inline Difference screened_difference(const std::function<double(const Tensor&)>& f, Tensor x, std::size_t i,
                                      double h = kStep) {
  const double x0 = x[i];
  const double mid = f(x);
  x[i] = x0 + h;
  const double up = f(x);
  x[i] = x0 - h;
  const double down = f(x);
  const double forward = (up - mid) / h, backward = (mid - down) / h;
  Difference d;
  d.central = (up - down) / (2.0 * h);
  d.straddles_kink = std::abs(forward - backward) > 1e-3 * std::max({std::abs(forward), std::abs(backward), 1.0});
  return d;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Loss used by the model checks: squared error of the single prediction.
inline double model_loss(const rulattack::ModelSpec& spec, const std::vector<Tensor>& params, const Tensor& window,
                         double label) {
  rulattack::Tape tape;
  std::vector<rulattack::Var> p;
  for (const auto& t : params) p.push_back(tape.constant(t));
  const auto x = tape.constant(window.reshaped({1, window.dim(0), window.dim(1)}));
  const auto y = rulattack::forward(spec, p, x);
  return std::pow(y.value()[0] - label, 2);
}

// Analytic gradients of model_loss: parameters first, input last.
inline std::vector<Tensor> model_loss_gradients(const rulattack::ModelSpec& spec, const std::vector<Tensor>& params,
                                                const Tensor& window, double label) {
  rulattack::Tape tape;
  std::vector<rulattack::Var> p;
  for (const auto& t : params) p.push_back(tape.variable(t));
  const auto x = tape.variable(window.reshaped({1, window.dim(0), window.dim(1)}));
  const auto y = rulattack::forward(spec, p, x);
  const auto loss = rulattack::sum_squared_error(y, tape.constant(Tensor({1, 1}, label)));
  std::vector<rulattack::Var> wrt = p;
  wrt.push_back(x);
  auto grads = tape.gradients(loss, wrt);
  grads.back() = grads.back().reshaped(window.shape());
  return grads;
}

inline std::vector<Tensor> parameter_values(const rulattack::RegressionModel& m) {
  std::vector<Tensor> out;
  for (const auto& p : m.parameters) out.push_back(p.value);
  return out;
}

// Random non-zero biases so that the bias gradients are exercised away
// from the initial point.
inline void jitter_parameters(rulattack::RegressionModel& m, Rng& rng, double amount = 0.1) {
  for (auto& p : m.parameters) {
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] += rng.uniform(-amount, amount);
  }
}

// Toy run-to-failure engine whose channels move linearly with the cycle.
inline rulattack::NormalizedEngine ramp_engine(int id, std::size_t cycles, std::size_t channels,
                                               double final_rul = 0.0) {
  rulattack::NormalizedEngine e;
  e.unit_id = id;
  e.final_rul = final_rul;
  e.values = Tensor({cycles, channels});
  for (std::size_t t = 0; t < cycles; ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double v = static_cast<double>(t) / static_cast<double>(cycles);
      e.values.at(t, c) = c % 2 == 0 ? v : 1.0 - v;
    }
  }
  return e;
}

inline std::vector<Tensor> window_values(const std::vector<rulattack::LabeledWindow>& w) {
  std::vector<Tensor> out;
  for (const auto& x : w) out.push_back(x.window.values);
  return out;
}

}  // namespace oracle
