#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace rulattack {

/// Run-to-failure simulator emitting files in the C-MAPSS single-condition
/// layout. Each unit degrades along an exponential health curve; the 14
/// trending sensors drift by a fixed fraction of their noise level, and
/// the remaining 7 are constant or toggle between two quantization levels.
struct SyntheticConfig {
  std::size_t train_units = 100;
  std::size_t test_units = 100;
  std::uint64_t seed = 2021;
  int min_life = 128;
  int life_span = 235;
  int min_test_rul = 7;
  int test_rul_span = 139;
  int min_test_cycles = 31;
};

struct SyntheticCmapss {
  std::string train;
  std::string test;
  std::string rul;
};

SyntheticCmapss generate_synthetic_cmapss(const SyntheticConfig& cfg);

/// Writes train_<id>.txt, test_<id>.txt and RUL_<id>.txt into `dir`.
void write_synthetic_cmapss(const std::filesystem::path& dir, const std::string& dataset_id,
                            const SyntheticConfig& cfg);

}  // namespace rulattack
