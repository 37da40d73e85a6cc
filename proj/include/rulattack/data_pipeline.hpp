#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "rulattack/tensor.hpp"

namespace rulattack {

inline constexpr std::size_t kSettingCount = 3;
inline constexpr std::size_t kSensorCount = 21;
/// unit, cycle, settings, sensors
inline constexpr std::size_t kMinFieldsPerLine = 2 + kSettingCount + kSensorCount;

struct EngineRecord {
  int unit_id = 0;
  int cycle = 0;
  std::array<double, kSettingCount> op_settings{};
  std::array<double, kSensorCount> sensors{};

  friend bool operator==(const EngineRecord&, const EngineRecord&) = default;
};

/// All records of one unit, cycles 1..n in order.
struct Engine {
  int unit_id = 0;
  std::vector<EngineRecord> records;
  /// RUL at the last recorded cycle: 0 for run-to-failure training units,
  /// the ground-truth value for truncated test units.
  double final_rul = 0.0;

  std::size_t num_cycles() const { return records.size(); }
};

struct NormalizationStats {
  /// 0-based sensor indices, ascending.
  std::vector<std::size_t> kept_channels;
  /// Training-split range of each kept channel (same order).
  std::vector<double> min;
  std::vector<double> max;

  std::size_t num_channels() const { return kept_channels.size(); }
  friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;
};

/// Normalized trajectory of one unit, values[cycle - 1][channel].
struct NormalizedEngine {
  int unit_id = 0;
  Tensor values;
  double final_rul = 0.0;

  std::size_t num_cycles() const { return values.dim(0); }
};

struct SensorWindow {
  Tensor values;  // [seq_len, channels]
  int engine_id = 0;
  int end_cycle = 0;

  std::size_t seq_len() const { return values.dim(0); }
  std::size_t channels() const { return values.dim(1); }
};

struct LabeledWindow {
  SensorWindow window;
  double rul = 0.0;
};

struct WindowSet {
  std::vector<LabeledWindow> windows;
  /// Units shorter than the sequence length; skipped, not fatal.
  std::vector<int> too_short;
};

struct ChannelSelection {
  double variance_epsilon = 1e-8;
  /// Channels that only toggle between fewer distinct raw levels carry
  /// quantization noise rather than a trend.
  std::size_t min_distinct_levels = 3;
};

/// Parses whitespace-separated C-MAPSS rows. Records come back grouped by
/// unit (in order of first appearance) and ordered by cycle.
std::vector<EngineRecord> parse_cmapss(std::istream& in);

std::vector<Engine> group_by_unit(const std::vector<EngineRecord>& records);

/// One non-negative value per line; line i is the RUL of test unit i.
std::vector<double> parse_rul_file(std::istream& in);

/// Attaches ground-truth RUL values to test units (unit ids 1..n).
void attach_final_rul(std::vector<Engine>& engines, const std::vector<double>& rul);

/// Keeps channels whose training variance on the [0,1] scale reaches
/// `variance_epsilon` and which show at least `min_distinct_levels` raw
/// values. Returns the kept channels with their training ranges.
NormalizationStats select_informative_channels(const std::vector<Engine>& train,
                                               const ChannelSelection& rule = {});

std::vector<NormalizedEngine> normalize(const std::vector<Engine>& engines,
                                        const NormalizationStats& stats);

/// Inverse of the min-max map for kept channel `position`.
double denormalize(const NormalizationStats& stats, std::size_t position, double value);

/// Piece-wise label for a window ending at `end_cycle` of an engine with
/// `num_cycles` cycles and RUL `final_rul` at its last cycle.
double piecewise_label(const NormalizedEngine& engine, int end_cycle, double rul_cap);

/// Cuts the window ending at `end_cycle` (1-based, inclusive). Throws
/// TooShort when fewer than seq_len cycles precede it.
SensorWindow cut_window(const NormalizedEngine& engine, int end_cycle, std::size_t seq_len);

WindowSet make_windows(const std::vector<NormalizedEngine>& engines, std::size_t seq_len,
                       double rul_cap, std::size_t stride = 1);

/// The last window of each engine (one per unit).
WindowSet terminal_windows(const std::vector<NormalizedEngine>& engines, std::size_t seq_len,
                           double rul_cap);

template <typename EngineT>
std::vector<EngineT> filter_min_cycles(const std::vector<EngineT>& engines,
                                       std::size_t min_cycles = 150) {
  std::vector<EngineT> out;
  for (const auto& e : engines) {
    if (e.num_cycles() >= min_cycles) out.push_back(e);
  }
  return out;
}

struct CmapssSplit {
  std::vector<Engine> train;
  std::vector<Engine> test;
};

/// Reads train_<id>.txt, test_<id>.txt and RUL_<id>.txt from `dir`.
/// Throws DataNotFound when a file is missing.
CmapssSplit load_cmapss(const std::filesystem::path& dir, const std::string& dataset_id);

struct PreparedData {
  NormalizationStats stats;
  std::vector<NormalizedEngine> train;
  std::vector<NormalizedEngine> test;
};

/// Channel selection and normalization fitted on the training split only.
PreparedData prepare(const CmapssSplit& split, const ChannelSelection& rule = {});

/// Text cache of a windowed dataset: a header describing the format
/// version, sequence length, cap, channels and statistics, then one CSV
/// row per window (engine, end_cycle, rul, row-major values).
struct DatasetCache {
  std::size_t seq_len = 0;
  double rul_cap = 0.0;
  NormalizationStats stats;
  std::vector<LabeledWindow> windows;
};

inline constexpr int kDatasetCacheVersion = 1;

void write_dataset_cache(std::ostream& out, const DatasetCache& cache);
DatasetCache read_dataset_cache(std::istream& in);

}  // namespace rulattack
