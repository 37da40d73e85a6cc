#include "rulattack/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include <fmt/format.h>

#include "rulattack/error.hpp"
#include "rulattack/random.hpp"

namespace rulattack {

std::string_view family_name(Family family) {
  switch (family) {
    case Family::kLstm: return "LSTM";
    case Family::kGru: return "GRU";
    case Family::kCnn1d: return "CNN";
  }
  return "?";
}

Family parse_family(std::string_view text) {
  std::string upper(text);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (upper == "LSTM") return Family::kLstm;
  if (upper == "GRU") return Family::kGru;
  if (upper == "CNN" || upper == "CNN1D") return Family::kCnn1d;
  throw Error(ErrorKind::kInvalidSpec, "unknown model family '" + std::string(text) + "'");
}

void ModelSpec::validate() const {
  const auto fail = [](const std::string& why) { throw Error(ErrorKind::kInvalidSpec, why); };
  if (layer_widths.empty()) fail("at least one layer width is required");
  if (std::find(layer_widths.begin(), layer_widths.end(), 0u) != layer_widths.end()) {
    fail("layer widths must be positive");
  }
  if (seq_len == 0) fail("seq_len must be positive");
  if (input_channels == 0) fail("input_channels must be positive");
  if (dense_head.empty() || dense_head.back() != 1) fail("dense head must end in a width of 1");
  if (std::find(dense_head.begin(), dense_head.end(), 0u) != dense_head.end()) {
    fail("dense widths must be positive");
  }
  if (family == Family::kCnn1d && kernel_width == 0) fail("kernel_width must be positive");
  if (!(target_scale > 0.0) || !std::isfinite(target_scale)) fail("target_scale must be positive");
}

std::string ModelSpec::label() const {
  return fmt::format("{}({}) lh({})", family_name(family), fmt::join(layer_widths, ","), seq_len);
}

namespace presets {
namespace {

ModelSpec make(Family f, std::vector<std::size_t> widths, std::size_t seq, std::size_t channels,
               std::vector<std::size_t> head) {
  ModelSpec s;
  s.family = f;
  s.layer_widths = std::move(widths);
  s.seq_len = seq;
  s.input_channels = channels;
  s.dense_head = std::move(head);
  s.kernel_width = 3;
  s.target_scale = 130.0;
  return s;
}

}  // namespace

ModelSpec full_lstm(std::size_t c) { return make(Family::kLstm, {100, 100, 100, 100}, 80, c, {1}); }
ModelSpec full_gru(std::size_t c) { return make(Family::kGru, {100, 100, 100}, 80, c, {1}); }
ModelSpec full_cnn(std::size_t c) { return make(Family::kCnn1d, {64, 64, 64, 64}, 100, c, {40, 40, 1}); }
ModelSpec scaled_lstm(std::size_t c) { return make(Family::kLstm, {32, 32}, 30, c, {1}); }
ModelSpec scaled_gru(std::size_t c) { return make(Family::kGru, {32, 32}, 30, c, {1}); }
ModelSpec scaled_cnn(std::size_t c) { return make(Family::kCnn1d, {16, 16}, 30, c, {40, 40, 1}); }

ModelSpec for_family(Family family, bool scaled, std::size_t channels) {
  switch (family) {
    case Family::kLstm: return scaled ? scaled_lstm(channels) : full_lstm(channels);
    case Family::kGru: return scaled ? scaled_gru(channels) : full_gru(channels);
    case Family::kCnn1d: return scaled ? scaled_cnn(channels) : full_cnn(channels);
  }
  throw Error(ErrorKind::kInvalidSpec, "unknown family");
}

}  // namespace presets

std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelSpec& spec) {
  spec.validate();
  std::vector<std::pair<std::string, Shape>> layout;
  std::size_t in = spec.input_channels;
  std::size_t features = 0;
  for (std::size_t l = 0; l < spec.layer_widths.size(); ++l) {
    const std::size_t h = spec.layer_widths[l];
    switch (spec.family) {
      case Family::kLstm:
        layout.emplace_back(fmt::format("lstm{}.weight", l), Shape{4 * h, h + in});
        layout.emplace_back(fmt::format("lstm{}.bias", l), Shape{4 * h});
        break;
      case Family::kGru:
        layout.emplace_back(fmt::format("gru{}.gates.weight", l), Shape{2 * h, h + in});
        layout.emplace_back(fmt::format("gru{}.gates.bias", l), Shape{2 * h});
        layout.emplace_back(fmt::format("gru{}.candidate.weight", l), Shape{h, h + in});
        layout.emplace_back(fmt::format("gru{}.candidate.bias", l), Shape{h});
        break;
      case Family::kCnn1d:
        layout.emplace_back(fmt::format("conv{}.kernel", l), Shape{h, spec.kernel_width, in});
        layout.emplace_back(fmt::format("conv{}.bias", l), Shape{h});
        break;
    }
    in = h;
  }
  features = spec.family == Family::kCnn1d ? in * spec.seq_len : in;
  for (std::size_t d = 0; d < spec.dense_head.size(); ++d) {
    const std::size_t out = spec.dense_head[d];
    layout.emplace_back(fmt::format("dense{}.weight", d), Shape{out, features});
    layout.emplace_back(fmt::format("dense{}.bias", d), Shape{out});
    features = out;
  }
  return layout;
}

const Tensor& RegressionModel::parameter(std::string_view name) const {
  for (const auto& p : parameters) {
    if (p.name == name) return p.value;
  }
  throw Error(ErrorKind::kInvalidSpec, "no parameter named '" + std::string(name) + "'");
}

Tensor& RegressionModel::parameter(std::string_view name) {
  return const_cast<Tensor&>(std::as_const(*this).parameter(name));
}

std::size_t RegressionModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters) n += p.value.size();
  return n;
}

RegressionModel build(const ModelSpec& spec, std::uint64_t seed) {
  RegressionModel model;
  model.spec = spec;
  Rng rng(seed, "init");
  for (auto& [name, shape] : parameter_layout(spec)) {
    Tensor t(shape, 0.0);
    const bool is_bias = name.ends_with(".bias");
    if (!is_bias) {
      double fan_in = 0.0, fan_out = 0.0;
      if (shape.size() == 3) {  // conv kernel [out, width, in]
        fan_in = static_cast<double>(shape[1] * shape[2]);
        fan_out = static_cast<double>(shape[0] * shape[1]);
      } else {
        // stacked gate matrices are sized per gate
        std::size_t gates = 1;
        if (name.starts_with("lstm")) gates = 4;
        if (name.find(".gates.") != std::string::npos) gates = 2;
        fan_in = static_cast<double>(shape[1]);
        fan_out = static_cast<double>(shape[0] / gates);
      }
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      for (double& v : t.data()) v = static_cast<float>(rng.uniform(-limit, limit));
    } else if (name.starts_with("lstm")) {
      const std::size_t h = shape[0] / 4;
      for (std::size_t i = h; i < 2 * h; ++i) t[i] = 1.0;
    }
    model.parameters.push_back({name, std::move(t)});
  }
  return model;
}

namespace {

Var linear(Var x, Var weight, Var bias) { return add(matmul_nt(x, weight), bias); }

std::vector<Var> lstm_layer(Tape& tape, const std::vector<Var>& inputs, Var weight, Var bias,
                            std::size_t batch, std::size_t h, bool keep_sequence) {
  Var hidden = tape.constant(Tensor({batch, h}, 0.0));
  Var cell = tape.constant(Tensor({batch, h}, 0.0));
  std::vector<Var> outputs;
  for (const Var& x : inputs) {
    const Var z = linear(concat(hidden, x), weight, bias);
    const Var in_gate = sigmoid(slice(z, 1, 0, h));
    const Var forget_gate = sigmoid(slice(z, 1, h, 2 * h));
    const Var candidate = tanh(slice(z, 1, 2 * h, 3 * h));
    const Var out_gate = sigmoid(slice(z, 1, 3 * h, 4 * h));
    cell = add(mul(forget_gate, cell), mul(in_gate, candidate));
    hidden = mul(out_gate, tanh(cell));
    if (keep_sequence) outputs.push_back(hidden);
  }
  if (!keep_sequence) outputs.push_back(hidden);
  return outputs;
}

std::vector<Var> gru_layer(Tape& tape, const std::vector<Var>& inputs, std::span<const Var> p,
                           std::size_t batch, std::size_t h, bool keep_sequence) {
  Var hidden = tape.constant(Tensor({batch, h}, 0.0));
  std::vector<Var> outputs;
  for (const Var& x : inputs) {
    const Var gates = sigmoid(linear(concat(hidden, x), p[0], p[1]));
    const Var update = slice(gates, 1, 0, h);
    const Var reset = slice(gates, 1, h, 2 * h);
    const Var candidate = tanh(linear(concat(mul(reset, hidden), x), p[2], p[3]));
    hidden = add(mul(one_minus(update), candidate), mul(update, hidden));
    if (keep_sequence) outputs.push_back(hidden);
  }
  if (!keep_sequence) outputs.push_back(hidden);
  return outputs;
}

}  // namespace

Var forward(const ModelSpec& spec, std::span<const Var> params, Var input,
            const Tensor* feature_mask) {
  const Shape& s = input.shape();
  if (s.size() != 3 || s[1] != spec.seq_len || s[2] != spec.input_channels) {
    throw Error(ErrorKind::kShapeMismatch,
                "model " + spec.label() + " expects [batch," + std::to_string(spec.seq_len) + "," +
                    std::to_string(spec.input_channels) + "], got " + shape_string(s));
  }
  Tape& tape = *input.tape();
  const std::size_t batch = s[0];
  const std::size_t layers = spec.layer_widths.size();
  std::size_t next = 0;
  Var features;

  if (spec.family == Family::kCnn1d) {
    Var x = input;
    for (std::size_t l = 0; l < layers; ++l) {
      x = relu(conv1d(x, params[next], params[next + 1], true));
      next += 2;
    }
    features = reshape(x, Shape{batch, spec.seq_len * spec.layer_widths.back()});
  } else {
    std::vector<Var> seq;
    seq.reserve(spec.seq_len);
    for (std::size_t t = 0; t < spec.seq_len; ++t) seq.push_back(timestep(input, t));
    for (std::size_t l = 0; l < layers; ++l) {
      const bool last = l + 1 == layers;
      const std::size_t h = spec.layer_widths[l];
      if (spec.family == Family::kLstm) {
        seq = lstm_layer(tape, seq, params[next], params[next + 1], batch, h, !last);
        next += 2;
      } else {
        seq = gru_layer(tape, seq, params.subspan(next, 4), batch, h, !last);
        next += 4;
      }
    }
    features = seq.back();
  }

  if (feature_mask) features = mul(features, tape.constant(*feature_mask));
  Var y = features;
  for (std::size_t d = 0; d < spec.dense_head.size(); ++d) {
    y = linear(y, params[next], params[next + 1]);
    next += 2;
    if (d + 1 < spec.dense_head.size()) y = relu(y);
  }
  return scale(y, spec.target_scale);
}

Tensor stack_windows(std::span<const Tensor> windows) {
  if (windows.empty()) throw Error(ErrorKind::kEmptyInput, "no windows to stack");
  const Shape& first = windows.front().shape();
  if (first.size() != 2) throw Error(ErrorKind::kShapeMismatch, "window must be rank 2, got " + shape_string(first));
  std::vector<double> data;
  data.reserve(windows.size() * windows.front().size());
  for (const Tensor& w : windows) {
    if (w.shape() != first) {
      throw Error(ErrorKind::kShapeMismatch,
                  "windows differ in shape: " + shape_string(first) + " and " + shape_string(w.shape()));
    }
    data.insert(data.end(), w.data().begin(), w.data().end());
  }
  return Tensor({windows.size(), first[0], first[1]}, std::move(data));
}

namespace {

constexpr std::size_t kChunk = 256;

std::vector<Var> constants(Tape& tape, const RegressionModel& model) {
  std::vector<Var> vars;
  vars.reserve(model.parameters.size());
  for (const auto& p : model.parameters) vars.push_back(tape.constant(p.value));
  return vars;
}

}  // namespace

std::vector<double> predict_batch(const RegressionModel& model, std::span<const Tensor> windows) {
  std::vector<double> out;
  out.reserve(windows.size());
  for (std::size_t start = 0; start < windows.size(); start += kChunk) {
    const auto part = windows.subspan(start, std::min(kChunk, windows.size() - start));
    Tape tape;
    const auto params = constants(tape, model);
    const Var pred = forward(model.spec, params, tape.constant(stack_windows(part)));
    out.insert(out.end(), pred.value().data().begin(), pred.value().data().end());
  }
  return out;
}

double predict(const RegressionModel& model, const Tensor& window) {
  return predict_batch(model, std::span<const Tensor>(&window, 1)).front();
}

double predict(const RegressionModel& model, const SensorWindow& window) {
  return predict(model, window.values);
}

std::vector<InputGradient> input_gradients(const RegressionModel& model,
                                           std::span<const Tensor> windows,
                                           std::span<const double> labels) {
  if (windows.size() != labels.size()) {
    throw Error(ErrorKind::kShapeMismatch, "windows and labels differ in count");
  }
  std::vector<InputGradient> out;
  out.reserve(windows.size());
  for (std::size_t start = 0; start < windows.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, windows.size() - start);
    Tape tape;
    const auto params = constants(tape, model);
    const Var input = tape.variable(stack_windows(windows.subspan(start, n)));
    const Var pred = forward(model.spec, params, input);
    const Var target = tape.constant(
        Tensor({n, 1}, std::vector<double>(labels.begin() + start, labels.begin() + start + n)));
    // Summed (not averaged) so each window's gradient is independent of n.
    const Var loss = sum_squared_error(pred, target);
    const Var wrt[] = {input};
    const Tensor g = tape.gradients(loss, wrt).front();
    const std::size_t rows = model.spec.seq_len, cols = model.spec.input_channels;
    for (std::size_t i = 0; i < n; ++i) {
      InputGradient r;
      r.prediction = pred.value()[i];
      const double residual = r.prediction - labels[start + i];
      r.loss = residual * residual;
      r.grad = Tensor({rows, cols}, std::vector<double>(g.data().begin() + i * rows * cols,
                                                        g.data().begin() + (i + 1) * rows * cols));
      out.push_back(std::move(r));
    }
  }
  return out;
}

InputGradient loss_and_input_gradient(const RegressionModel& model, const Tensor& window,
                                      double rul_label) {
  return input_gradients(model, std::span<const Tensor>(&window, 1), std::span<const double>(&rul_label, 1))
      .front();
}

InputGradient loss_and_input_gradient(const RegressionModel& model, const SensorWindow& window,
                                      double rul_label) {
  return loss_and_input_gradient(model, window.values, rul_label);
}

}  // namespace rulattack
