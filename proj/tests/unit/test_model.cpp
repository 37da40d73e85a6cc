#include <doctest.h>

#include <cmath>
#include <sstream>

#include "oracle.hpp"
#include "rulattack/error.hpp"
#include "rulattack/model.hpp"

using namespace rulattack;

namespace {

ModelSpec small_spec(Family family, std::size_t channels = 3) {
  ModelSpec s;
  s.family = family;
  s.layer_widths = family == Family::kCnn1d ? std::vector<std::size_t>{4, 3} : std::vector<std::size_t>{5, 4};
  s.seq_len = 6;
  s.input_channels = channels;
  s.dense_head = family == Family::kCnn1d ? std::vector<std::size_t>{5, 1} : std::vector<std::size_t>{1};
  s.target_scale = 10.0;
  return s;
}

std::vector<Tensor> random_windows(std::size_t count, const ModelSpec& spec, Rng& rng) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(oracle::random_tensor({spec.seq_len, spec.input_channels}, rng, 0, 1));
  return out;
}

// Closed-form parameter counts.
std::size_t expected_count(const ModelSpec& s) {
  std::size_t total = 0, in = s.input_channels;
  for (std::size_t h : s.layer_widths) {
    switch (s.family) {
      case Family::kLstm: total += 4 * h * (h + in) + 4 * h; break;
      case Family::kGru: total += 3 * h * (h + in) + 3 * h; break;
      case Family::kCnn1d: total += h * s.kernel_width * in + h; break;
    }
    in = h;
  }
  std::size_t features = s.family == Family::kCnn1d ? in * s.seq_len : in;
  for (std::size_t d : s.dense_head) {
    total += d * features + d;
    features = d;
  }
  return total;
}

}  // namespace

TEST_CASE("LSTM first-layer weight covers hidden plus input") {
  const auto model = build(presets::full_lstm(14), 1);
  CHECK(model.parameter("lstm0.weight").shape() == Shape{400, 114});
  CHECK(model.parameter("lstm1.weight").shape() == Shape{400, 200});
  const Tensor& bias = model.parameter("lstm0.bias");
  CHECK(bias[0] == 0.0);
  CHECK(bias[100] == 1.0);  // forget gate
  CHECK(bias[199] == 1.0);
  CHECK(bias[200] == 0.0);
}

TEST_CASE("parameter counts match closed forms") {
  for (const auto& spec : {presets::full_lstm(14), presets::full_gru(14), presets::full_cnn(14),
                           presets::scaled_lstm(14), presets::scaled_gru(14), presets::scaled_cnn(14)}) {
    CAPTURE(spec.label());
    CHECK(build(spec, 3).parameter_count() == expected_count(spec));
  }
  CHECK(presets::full_cnn(14).label() == "CNN(64,64,64,64) lh(100)");
  CHECK(presets::scaled_gru(14).label() == "GRU(32,32) lh(30)");
}

TEST_CASE("building is deterministic per seed") {
  const auto a = build(presets::scaled_gru(14), 99);
  const auto b = build(presets::scaled_gru(14), 99);
  const auto c = build(presets::scaled_gru(14), 100);
  for (std::size_t i = 0; i < a.parameters.size(); ++i) CHECK(a.parameters[i].value == b.parameters[i].value);
  CHECK(a.parameters[0].value != c.parameters[0].value);
}

TEST_CASE("invalid specs are rejected") {
  ModelSpec s = small_spec(Family::kCnn1d);
  s.dense_head = {40, 2};
  CHECK_THROWS_AS(s.validate(), Error);
  s = small_spec(Family::kGru);
  s.layer_widths.clear();
  CHECK_THROWS_AS(build(s, 1), Error);
  s = small_spec(Family::kLstm);
  s.seq_len = 0;
  CHECK_THROWS_AS(s.validate(), Error);
  CHECK_THROWS_AS(parse_family("transformer"), Error);
  CHECK(parse_family("cnn1d") == Family::kCnn1d);
}

TEST_CASE("zero dense head predicts zero") {
  for (Family f : {Family::kLstm, Family::kGru, Family::kCnn1d}) {
    auto model = build(small_spec(f), 4);
    for (auto& p : model.parameters) {
      if (p.name.starts_with("dense")) p.value = Tensor(p.value.shape(), 0.0);
    }
    CHECK(predict(model, Tensor({6, 3}, 0.0)) == 0.0);
  }
}

TEST_CASE("prediction is pure and independent of batch packing") {
  Rng rng(21);
  for (Family f : {Family::kLstm, Family::kGru, Family::kCnn1d}) {
    auto model = build(small_spec(f), 8);
    oracle::jitter_parameters(model, rng);
    const auto windows = random_windows(300, model.spec, rng);
    const auto batch = predict_batch(model, windows);
    for (std::size_t i = 0; i < windows.size(); i += 37) {
      CHECK(predict(model, windows[i]) == batch[i]);
      CHECK(predict(model, windows[i]) == predict(model, windows[i]));
    }
  }
}

TEST_CASE("mismatched windows are rejected") {
  const auto model = build(small_spec(Family::kGru), 1);
  CHECK_THROWS_AS(predict(model, Tensor({5, 3}, 0.0)), Error);
  CHECK_THROWS_AS(predict(model, Tensor({6, 2}, 0.0)), Error);
}

TEST_CASE("input gradients agree with central differences") {
  Rng rng(31);
  for (Family f : {Family::kLstm, Family::kGru, Family::kCnn1d}) {
    CAPTURE(family_name(f));
    auto model = build(small_spec(f), 12);
    oracle::jitter_parameters(model, rng);
    const auto windows = random_windows(20, model.spec, rng);
    std::vector<double> labels;
    for (std::size_t i = 0; i < windows.size(); ++i) labels.push_back(rng.uniform(0, 20));
    const auto grads = input_gradients(model, windows, labels);
    const auto params = oracle::parameter_values(model);
    std::size_t compared = 0, kinks = 0;
    for (std::size_t w = 0; w < windows.size(); ++w) {
      const auto loss = [&](const Tensor& x) { return oracle::model_loss(model.spec, params, x, labels[w]); };
      CHECK(grads[w].loss == doctest::Approx(loss(windows[w])).epsilon(1e-12));
      for (std::size_t i = 0; i < windows[w].size(); i += 5) {
        const auto d = oracle::screened_difference(loss, windows[w], i);
        // only the CNN has ReLU kinks
        if (f == Family::kCnn1d && d.straddles_kink) {
          ++kinks;
          continue;
        }
        ++compared;
        CHECK(oracle::derivatives_agree(grads[w].grad[i], d.central));
      }
    }
    CHECK(kinks * 20 <= compared);
  }
}

TEST_CASE("loss and gradient vanish at the model's own output") {
  Rng rng(2);
  auto model = build(small_spec(Family::kGru), 5);
  const auto x = random_windows(1, model.spec, rng)[0];
  const double y = predict(model, x);
  const auto g = loss_and_input_gradient(model, x, y);
  CHECK(g.loss == 0.0);
  for (double v : g.grad.data()) CHECK(v == 0.0);
}

TEST_CASE("mirroring the residual flips the gradient") {
  Rng rng(6);
  auto model = build(small_spec(Family::kLstm), 5);
  const auto x = random_windows(1, model.spec, rng)[0];
  const double y = predict(model, x);
  const auto above = loss_and_input_gradient(model, x, y + 3.0);
  const auto below = loss_and_input_gradient(model, x, y - 3.0);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(above.grad[i] == doctest::Approx(-below.grad[i]).epsilon(1e-12));
}

TEST_CASE("per-window gradients do not depend on the batch") {
  Rng rng(17);
  auto model = build(small_spec(Family::kCnn1d), 5);
  const auto windows = random_windows(5, model.spec, rng);
  const std::vector<double> labels{1, 2, 3, 4, 5};
  const auto batch = input_gradients(model, windows, labels);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    CHECK(loss_and_input_gradient(model, windows[i], labels[i]).grad == batch[i].grad);
  }
}

TEST_CASE("a small GRU learns a ramp to failure") {
  std::vector<NormalizedEngine> engines;
  for (int u = 1; u <= 8; ++u) engines.push_back(oracle::ramp_engine(u, static_cast<std::size_t>(30 + 2 * u), 2));
  ModelSpec spec;
  spec.family = Family::kGru;
  spec.layer_widths = {8};
  spec.seq_len = 5;
  spec.input_channels = 2;
  spec.target_scale = 40;
  const auto data = make_windows(engines, spec.seq_len, 40).windows;
  REQUIRE(data.size() >= 200);
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.batch_size = 16;
  cfg.max_epochs = 150;
  cfg.early_stop_patience = 150;
  cfg.seed = 3;
  const auto result = train(build(spec, 1), data, cfg);
  std::vector<double> truth;
  for (const auto& w : data) truth.push_back(w.rul);
  const auto pred = predict_batch(result.model, oracle::window_values(data));
  double sse = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sse += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  const double range = *std::max_element(truth.begin(), truth.end()) - *std::min_element(truth.begin(), truth.end());
  CHECK(std::sqrt(sse / static_cast<double>(pred.size())) < 0.1 * range);
  CHECK(result.history.size() <= cfg.max_epochs);

  // the kept epoch is never worse than the last one on validation
  CHECK(result.history[result.best_epoch - 1].validation_rmse <= result.history.back().validation_rmse);
}

TEST_CASE("zero learning rate leaves parameters untouched") {
  const auto engines = std::vector{oracle::ramp_engine(1, 20, 3), oracle::ramp_engine(2, 22, 3)};
  const auto model = build(small_spec(Family::kLstm), 9);
  TrainConfig cfg;
  cfg.learning_rate = 0;
  cfg.max_epochs = 1;
  const auto result = train(model, make_windows(engines, 6, 30).windows, cfg);
  for (std::size_t i = 0; i < model.parameters.size(); ++i) CHECK(result.model.parameters[i].value == model.parameters[i].value);
}

TEST_CASE("training is reproducible for a fixed seed") {
  const auto engines = std::vector{oracle::ramp_engine(1, 20, 3), oracle::ramp_engine(2, 24, 3), oracle::ramp_engine(3, 26, 3)};
  const auto data = make_windows(engines, 6, 30).windows;
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.dropout = 0.2;
  cfg.seed = 5;
  const auto a = train(build(small_spec(Family::kCnn1d), 2), data, cfg);
  const auto b = train(build(small_spec(Family::kCnn1d), 2), data, cfg);
  for (std::size_t i = 0; i < a.model.parameters.size(); ++i) CHECK(a.model.parameters[i].value == b.model.parameters[i].value);
}

TEST_CASE("invalid training configs are rejected") {
  TrainConfig cfg;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.dropout = 1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  Rng rng(44);
  for (Family f : {Family::kLstm, Family::kGru, Family::kCnn1d}) {
    auto model = build(small_spec(f), 10);
    model.norm_stats = NormalizationStats{{1, 2, 6}, {0.5, 1.25, -3.0}, {2.0, 9.5, 4.0}};
    std::stringstream buf;
    save(model, buf);
    const auto back = load(buf);
    CHECK(back.spec == model.spec);
    CHECK(back.norm_stats == model.norm_stats);
    const auto windows = random_windows(100, model.spec, rng);
    CHECK(predict_batch(back, windows) == predict_batch(model, windows));

    // re-saving gives the same bytes
    std::stringstream again;
    save(back, again);
    CHECK(again.str() == buf.str());
  }
}

TEST_CASE("damaged checkpoints are rejected") {
  const auto model = build(small_spec(Family::kGru), 10);
  std::stringstream buf;
  save(model, buf);
  const std::string bytes = buf.str();

  std::istringstream truncated(bytes.substr(0, bytes.size() - 7));
  try {
    load(truncated);
    FAIL("expected CorruptCheckpoint");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kCorruptCheckpoint);
  }

  std::string future = bytes;
  future.replace(0, future.find('\n'), "rulattack-checkpoint 2");
  std::istringstream in(future);
  try {
    load(in);
    FAIL("expected VersionMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kVersionMismatch);
  }

  std::istringstream garbage("not a checkpoint\n");
  CHECK_THROWS_AS(load(garbage), Error);
}
