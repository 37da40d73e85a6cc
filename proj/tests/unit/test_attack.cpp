#include <doctest.h>

#include <cmath>

#include "oracle.hpp"
#include "rulattack/attack.hpp"
#include "rulattack/error.hpp"

using namespace rulattack;

namespace {

RegressionModel tiny_model(Family f, std::uint64_t seed) {
  ModelSpec s;
  s.family = f;
  s.layer_widths = {6};
  s.seq_len = 8;
  s.input_channels = 3;
  s.dense_head = f == Family::kCnn1d ? std::vector<std::size_t>{4, 1} : std::vector<std::size_t>{1};
  s.target_scale = 50;
  return build(s, seed);
}

std::vector<LabeledWindow> random_windows(std::size_t n, Rng& rng) {
  std::vector<LabeledWindow> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({SensorWindow{oracle::random_tensor({8, 3}, rng, 0, 1), static_cast<int>(i + 1), 40},
                   rng.uniform(0, 130)});
  }
  return out;
}

}  // namespace

TEST_CASE("three-valued sign") {
  CHECK(sign(0.0) == 0.0);
  CHECK(sign(-0.0) == 0.0);
  CHECK(sign(1e-300) == 1.0);
  CHECK(sign(-2.0) == -1.0);
}

TEST_CASE("zero budget leaves the window unchanged") {
  Rng rng(1);
  const auto model = tiny_model(Family::kGru, 2);
  const auto w = random_windows(3, rng);
  for (auto cfg : {AttackConfig::fgsm(0.0), AttackConfig::bim(0.0, 7)}) {
    for (const auto& ex : craft_batch(model, w, cfg)) {
      CHECK(ex.perturbed.values == ex.original.values);
      for (double d : ex.perturbation.data()) CHECK(d == 0.0);
    }
  }
}

TEST_CASE("a model that ignores its input is flagged") {
  Rng rng(2);
  auto model = tiny_model(Family::kLstm, 3);
  for (auto& p : model.parameters) p.value = Tensor(p.value.shape(), 0.0);
  const auto ex = craft_fgsm(model, random_windows(1, rng)[0].window, 50.0, 0.3);
  CHECK(ex.zero_gradient);
  CHECK(ex.perturbed.values == ex.original.values);
}

TEST_CASE("FGSM moves every coordinate by exactly epsilon or not at all") {
  Rng rng(3);
  for (Family f : {Family::kLstm, Family::kGru, Family::kCnn1d}) {
    const auto model = tiny_model(f, 4);
    const auto windows = random_windows(10, rng);
    for (double eps : {0.05, 0.3, 1.4}) {
      for (const auto& ex : craft_batch(model, windows, AttackConfig::fgsm(eps))) {
        for (std::size_t i = 0; i < ex.perturbation.size(); ++i) {
          const double d = ex.perturbation[i];
          CHECK((d == eps || d == -eps || d == 0.0));
          CHECK(ex.perturbed.values[i] == ex.original.values[i] + d);
        }
      }
    }
  }
}

TEST_CASE("FGSM steps along the loss gradient") {
  Rng rng(13);
  const auto model = tiny_model(Family::kGru, 4);
  const auto w = random_windows(1, rng)[0];
  const auto g = loss_and_input_gradient(model, w.window, w.rul);
  const auto ex = craft_fgsm(model, w.window, w.rul, 0.1);
  for (std::size_t i = 0; i < g.grad.size(); ++i) CHECK(ex.perturbation[i] == 0.1 * sign(g.grad[i]));
}

TEST_CASE("BIM stays inside the epsilon box") {
  Rng rng(5);
  for (Family f : {Family::kLstm, Family::kGru, Family::kCnn1d}) {
    const auto model = tiny_model(f, 6);
    const auto windows = random_windows(6, rng);
    for (double eps : {0.01, 0.3, 1.0}) {
      AttackConfig cfg = AttackConfig::bim(eps, 25);
      cfg.alpha = eps / 4;  // large steps push against the box
      for (const auto& ex : craft_batch(model, windows, cfg)) {
        for (std::size_t i = 0; i < ex.perturbation.size(); ++i) {
          CHECK(std::abs(ex.perturbed.values[i] - ex.original.values[i]) <= eps + 1e-9);
        }
      }
    }
  }
}

TEST_CASE("clipping to the data range keeps values in [0,1]") {
  Rng rng(7);
  const auto model = tiny_model(Family::kCnn1d, 8);
  AttackConfig cfg = AttackConfig::bim(0.8, 10);
  cfg.clip_to_data_range = true;
  for (const auto& ex : craft_batch(model, random_windows(5, rng), cfg)) {
    for (std::size_t i = 0; i < ex.perturbation.size(); ++i) {
      CHECK((ex.perturbed.values[i] >= 0.0 && ex.perturbed.values[i] <= 1.0));
      CHECK(std::abs(ex.perturbation[i]) <= 0.8);
    }
  }
}

TEST_CASE("one BIM step of size epsilon is FGSM") {
  Rng rng(9);
  for (Family f : {Family::kLstm, Family::kGru, Family::kCnn1d}) {
    const auto model = tiny_model(f, 10);
    const auto w = random_windows(4, rng);
    AttackConfig bim = AttackConfig::bim(0.3, 1);
    bim.alpha = 0.3;
    const auto a = craft_batch(model, w, AttackConfig::fgsm(0.3));
    const auto b = craft_batch(model, w, bim);
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(a[i].perturbed.values == b[i].perturbed.values);
  }
}

TEST_CASE("default BIM step is epsilon over iterations") {
  CHECK(AttackConfig::bim(0.3).step_size() == doctest::Approx(0.003));
  CHECK(AttackConfig::bim(0.3).iterations == 100);
  CHECK(AttackConfig::fgsm(0.3).step_size() == 0.3);
}

TEST_CASE("budgets outside [0, 1.4] are rejected") {
  const auto model = tiny_model(Family::kGru, 1);
  Rng rng(1);
  const auto w = random_windows(1, rng);
  for (double eps : {2.0, -0.1, 1.4000001, std::nan("")}) {
    try {
      craft_batch(model, w, AttackConfig::fgsm(eps));
      FAIL("expected EpsilonOutOfRange");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kEpsilonOutOfRange);
      CHECK(exit_code(e.kind()) == 3);
    }
  }
  CHECK_NOTHROW(AttackConfig::fgsm(1.4).validate());
  CHECK_THROWS_AS(AttackConfig::bim(0.3, 0).validate(), Error);
  CHECK_THROWS_AS(parse_attack_kind("pgd"), Error);
  CHECK(parse_attack_kind("BIM") == AttackKind::kBim);
}

TEST_CASE("batches of one and zero") {
  Rng rng(11);
  const auto model = tiny_model(Family::kLstm, 12);
  const auto w = random_windows(3, rng);
  const auto batch = craft_batch(model, w, AttackConfig::bim(0.2, 5));
  const auto single = craft(model, w[1].window, w[1].rul, AttackConfig::bim(0.2, 5));
  CHECK(single.perturbed.values == batch[1].perturbed.values);
  CHECK(craft_batch(model, std::vector<LabeledWindow>{}, AttackConfig::fgsm(0.3)).empty());
}

TEST_CASE("crafting does not touch its input") {
  Rng rng(12);
  const auto model = tiny_model(Family::kGru, 13);
  const auto w = random_windows(4, rng);
  const auto copy = w;
  craft_batch(model, w, AttackConfig::bim(0.5, 10));
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(w[i].window.values == copy[i].window.values);
}

TEST_CASE("worker count does not change results") {
  Rng rng(14);
  const auto model = tiny_model(Family::kCnn1d, 15);
  const auto w = random_windows(11, rng);
  AttackConfig cfg = AttackConfig::bim(0.3, 10);
  const auto serial = craft_batch(model, w, cfg);
  cfg.workers = 4;
  const auto parallel = craft_batch(model, w, cfg);
  for (std::size_t i = 0; i < w.size(); ++i) {
    CHECK(serial[i].perturbed.values == parallel[i].perturbed.values);
    CHECK(serial[i].original.engine_id == parallel[i].original.engine_id);
  }
}

TEST_CASE("mixed window shapes are rejected") {
  Rng rng(15);
  const auto model = tiny_model(Family::kGru, 1);
  auto w = random_windows(2, rng);
  w[1].window.values = Tensor({7, 3}, 0.5);
  CHECK_THROWS_AS(craft_batch(model, w, AttackConfig::fgsm(0.1)), Error);
}

TEST_CASE("the prediction-as-label variant has no gradient at the clean point") {
  Rng rng(16);
  const auto model = tiny_model(Family::kGru, 1);
  AttackConfig cfg = AttackConfig::fgsm(0.3);
  cfg.use_model_label = true;
  const auto ex = craft_batch(model, random_windows(1, rng), cfg)[0];
  CHECK(ex.zero_gradient);
  CHECK(ex.label_used == predict(model, ex.original));
}
