#include "rulattack/synthetic.hpp"

#include <array>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "rulattack/data_pipeline.hpp"
#include "rulattack/error.hpp"
#include "rulattack/random.hpp"

namespace rulattack {
namespace {

struct SensorModel {
  double base;
  double drift;  // total change at failure
  double noise;  // per-cycle standard deviation
  int decimals;
  double toggle = 0.0;  // probability of dropping one quantization step
};

// Ranges modelled on the single-condition turbofan fleet.
constexpr std::array<SensorModel, kSensorCount> kSensors{{
    {518.67, 0.0, 0.0, 2},
    {642.25, 1.40, 0.30, 2},
    {1585.5, 22.0, 5.0, 2},
    {1401.0, 32.0, 6.5, 2},
    {14.62, 0.0, 0.0, 2},
    {21.61, 0.0, 0.0, 2, 0.02},
    {554.45, -3.2, 0.65, 2},
    {2388.04, 0.24, 0.05, 2},
    {9052.0, 45.0, 9.0, 2},
    {1.30, 0.0, 0.0, 2},
    {47.30, 1.05, 0.21, 2},
    {522.05, -2.9, 0.55, 2},
    {2388.04, 0.24, 0.05, 2},
    {8135.0, 34.0, 7.0, 2},
    {8.4050, 0.13, 0.028, 4},
    {0.03, 0.0, 0.0, 2},
    {391.6, 5.5, 1.1, 0},
    {2388.0, 0.0, 0.0, 0},
    {100.0, 0.0, 0.0, 2},
    {38.96, -0.62, 0.14, 2},
    {23.37, -0.37, 0.085, 4},
}};

struct Unit {
  int life;
  double curvature;
  double initial_wear;
  std::array<double, kSensorCount> offset;
  std::array<double, kSensorCount> sensitivity;
};

Unit draw_unit(Rng& rng, const SyntheticConfig& cfg) {
  Unit u{};
  const double r = rng.uniform();
  u.life = cfg.min_life + static_cast<int>(std::floor(cfg.life_span * r * r));
  u.curvature = rng.uniform(3.0, 6.5);
  u.initial_wear = rng.uniform(0.0, 0.08);
  for (std::size_t s = 0; s < kSensorCount; ++s) {
    u.offset[s] = 0.3 * kSensors[s].noise * rng.normal();
    u.sensitivity[s] = rng.uniform(0.8, 1.2);
  }
  return u;
}

void emit_cycles(std::string& out, Rng& rng, int unit_id, const Unit& u, int cycles) {
  const double denom = std::expm1(u.curvature);
  for (int t = 1; t <= cycles; ++t) {
    const double frac = static_cast<double>(t) / u.life;
    const double health = u.initial_wear + (1.0 - u.initial_wear) * std::expm1(u.curvature * frac) / denom;
    out += fmt::format("{} {} {:.4f} {:.4f} 100.0", unit_id, t, 0.0022 * rng.normal(), 0.0003 * rng.normal());
    for (std::size_t s = 0; s < kSensorCount; ++s) {
      const SensorModel& m = kSensors[s];
      double v = m.base;
      if (m.noise > 0.0) {
        v += u.offset[s] + u.sensitivity[s] * m.drift * health + m.noise * rng.normal();
      } else if (m.toggle > 0.0 && rng.uniform() < m.toggle) {
        v -= std::pow(10.0, -m.decimals);
      }
      out += fmt::format(" {:.{}f}", v, m.decimals);
    }
    out += " \n";
  }
}

}  // namespace

SyntheticCmapss generate_synthetic_cmapss(const SyntheticConfig& cfg) {
  SyntheticCmapss data;
  Rng train_rng(cfg.seed, "synthetic/train");
  for (std::size_t i = 0; i < cfg.train_units; ++i) {
    const Unit u = draw_unit(train_rng, cfg);
    emit_cycles(data.train, train_rng, static_cast<int>(i + 1), u, u.life);
  }
  Rng test_rng(cfg.seed, "synthetic/test");
  for (std::size_t i = 0; i < cfg.test_units; ++i) {
    const Unit u = draw_unit(test_rng, cfg);
    int rul = 0;
    do {
      rul = cfg.min_test_rul + static_cast<int>(test_rng.below(static_cast<std::uint64_t>(cfg.test_rul_span)));
    } while (u.life - rul < cfg.min_test_cycles);
    emit_cycles(data.test, test_rng, static_cast<int>(i + 1), u, u.life - rul);
    data.rul += fmt::format("{}\n", rul);
  }
  return data;
}

void write_synthetic_cmapss(const std::filesystem::path& dir, const std::string& dataset_id,
                            const SyntheticConfig& cfg) {
  const SyntheticCmapss data = generate_synthetic_cmapss(cfg);
  std::filesystem::create_directories(dir);
  const auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw Error(ErrorKind::kDataNotFound, "cannot write " + (dir / name).string());
    out << text;
  };
  write("train_" + dataset_id + ".txt", data.train);
  write("test_" + dataset_id + ".txt", data.test);
  write("RUL_" + dataset_id + ".txt", data.rul);
}

}  // namespace rulattack
