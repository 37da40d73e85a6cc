#include "rulattack/data_pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string_view>

#include "rulattack/error.hpp"

namespace rulattack {
namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) fields.push_back(line.substr(start, i - start));
  }
  return fields;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

[[noreturn]] void malformed(std::size_t line_no, const std::string& why) {
  throw Error(ErrorKind::kMalformedLine, "line " + std::to_string(line_no) + ": " + why);
}

}  // namespace

std::vector<EngineRecord> parse_cmapss(std::istream& in) {
  std::vector<int> unit_order;
  std::map<int, std::vector<EngineRecord>> by_unit;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_fields(line);
    if (fields.empty()) continue;
    if (fields.size() < kMinFieldsPerLine) {
      malformed(line_no, "expected at least " + std::to_string(kMinFieldsPerLine) + " fields, got " +
                             std::to_string(fields.size()));
    }
    EngineRecord rec;
    if (!parse_number(fields[0], rec.unit_id) || rec.unit_id <= 0) malformed(line_no, "bad unit id");
    if (!parse_number(fields[1], rec.cycle) || rec.cycle <= 0) malformed(line_no, "bad cycle");
    for (std::size_t i = 0; i < kSettingCount; ++i) {
      if (!parse_number(fields[2 + i], rec.op_settings[i])) malformed(line_no, "bad setting value");
    }
    for (std::size_t i = 0; i < kSensorCount; ++i) {
      if (!parse_number(fields[2 + kSettingCount + i], rec.sensors[i])) {
        malformed(line_no, "bad sensor value '" + std::string(fields[2 + kSettingCount + i]) + "'");
      }
    }
    auto [it, inserted] = by_unit.try_emplace(rec.unit_id);
    if (inserted) unit_order.push_back(rec.unit_id);
    it->second.push_back(rec);
  }

  std::vector<EngineRecord> out;
  for (int unit : unit_order) {
    auto& recs = by_unit[unit];
    std::stable_sort(recs.begin(), recs.end(),
                     [](const EngineRecord& a, const EngineRecord& b) { return a.cycle < b.cycle; });
    for (std::size_t i = 0; i < recs.size(); ++i) {
      if (recs[i].cycle != static_cast<int>(i) + 1) {
        throw Error(ErrorKind::kNonContiguousCycles,
                    "unit " + std::to_string(unit) + ": expected cycle " + std::to_string(i + 1) +
                        ", found " + std::to_string(recs[i].cycle));
      }
    }
    out.insert(out.end(), recs.begin(), recs.end());
  }
  return out;
}

std::vector<Engine> group_by_unit(const std::vector<EngineRecord>& records) {
  std::vector<Engine> engines;
  for (const auto& r : records) {
    if (engines.empty() || engines.back().unit_id != r.unit_id) {
      engines.push_back(Engine{r.unit_id, {}, 0.0});
    }
    engines.back().records.push_back(r);
  }
  return engines;
}

std::vector<double> parse_rul_file(std::istream& in) {
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_fields(line);
    if (fields.empty()) continue;
    double v = 0.0;
    if (fields.size() != 1 || !parse_number(fields[0], v) || v < 0.0) {
      malformed(line_no, "expected one non-negative RUL value");
    }
    values.push_back(v);
  }
  return values;
}

void attach_final_rul(std::vector<Engine>& engines, const std::vector<double>& rul) {
  for (auto& e : engines) {
    const auto idx = static_cast<std::size_t>(e.unit_id - 1);
    if (idx >= rul.size()) {
      throw Error(ErrorKind::kMalformedLine,
                  "no ground-truth RUL for unit " + std::to_string(e.unit_id));
    }
    e.final_rul = rul[idx];
  }
}

NormalizationStats select_informative_channels(const std::vector<Engine>& train,
                                               const ChannelSelection& rule) {
  NormalizationStats stats;
  for (std::size_t ch = 0; ch < kSensorCount; ++ch) {
    double lo = 0.0, hi = 0.0;
    std::size_t n = 0;
    std::set<double> levels;
    for (const auto& e : train) {
      for (const auto& r : e.records) {
        const double v = r.sensors[ch];
        if (n == 0) lo = hi = v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        if (levels.size() < rule.min_distinct_levels) levels.insert(v);
        ++n;
      }
    }
    if (n < 2 || hi <= lo || levels.size() < rule.min_distinct_levels) continue;

    // two-pass variance on the normalized scale
    const double range = hi - lo;
    double mean = 0.0;
    for (const auto& e : train) {
      for (const auto& r : e.records) mean += (r.sensors[ch] - lo) / range;
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const auto& e : train) {
      for (const auto& r : e.records) {
        const double d = (r.sensors[ch] - lo) / range - mean;
        var += d * d;
      }
    }
    var /= static_cast<double>(n);
    if (var < rule.variance_epsilon) continue;

    stats.kept_channels.push_back(ch);
    stats.min.push_back(lo);
    stats.max.push_back(hi);
  }
  if (stats.kept_channels.empty()) {
    throw Error(ErrorKind::kAllChannelsConstant, "no sensor channel varies over the training split");
  }
  return stats;
}

std::vector<NormalizedEngine> normalize(const std::vector<Engine>& engines,
                                        const NormalizationStats& stats) {
  const std::size_t n = stats.num_channels();
  for (std::size_t j = 0; j < n; ++j) {
    if (!(stats.max[j] > stats.min[j])) {
      throw Error(ErrorKind::kDegenerateChannel,
                  "sensor " + std::to_string(stats.kept_channels[j] + 1) + " has max == min");
    }
  }
  std::vector<NormalizedEngine> out;
  out.reserve(engines.size());
  for (const auto& e : engines) {
    Tensor values({e.records.size(), n});
    for (std::size_t t = 0; t < e.records.size(); ++t) {
      for (std::size_t j = 0; j < n; ++j) {
        const double raw = e.records[t].sensors[stats.kept_channels[j]];
        const double v = (raw - stats.min[j]) / (stats.max[j] - stats.min[j]);
        values.at(t, j) = std::clamp(v, 0.0, 1.0);
      }
    }
    out.push_back(NormalizedEngine{e.unit_id, std::move(values), e.final_rul});
  }
  return out;
}

double denormalize(const NormalizationStats& stats, std::size_t position, double value) {
  return stats.min.at(position) + value * (stats.max.at(position) - stats.min.at(position));
}

double piecewise_label(const NormalizedEngine& engine, int end_cycle, double rul_cap) {
  const double remaining =
      engine.final_rul + static_cast<double>(static_cast<int>(engine.num_cycles()) - end_cycle);
  return std::min(rul_cap, remaining);
}

SensorWindow cut_window(const NormalizedEngine& engine, int end_cycle, std::size_t seq_len) {
  const auto cycles = static_cast<int>(engine.num_cycles());
  if (end_cycle > cycles || end_cycle < static_cast<int>(seq_len)) {
    throw Error(ErrorKind::kTooShort, "unit " + std::to_string(engine.unit_id) + " has " +
                                          std::to_string(cycles) + " cycles, window of " +
                                          std::to_string(seq_len) + " ending at cycle " +
                                          std::to_string(end_cycle) + " does not fit");
  }
  const std::size_t channels = engine.values.dim(1);
  const std::size_t first = static_cast<std::size_t>(end_cycle) - seq_len;
  std::vector<double> data(engine.values.data().begin() + static_cast<std::ptrdiff_t>(first * channels),
                           engine.values.data().begin() +
                               static_cast<std::ptrdiff_t>((first + seq_len) * channels));
  return SensorWindow{Tensor({seq_len, channels}, std::move(data)), engine.unit_id, end_cycle};
}

WindowSet make_windows(const std::vector<NormalizedEngine>& engines, std::size_t seq_len,
                       double rul_cap, std::size_t stride) {
  if (seq_len == 0 || stride == 0) {
    throw Error(ErrorKind::kInvalidSpec, "seq_len and stride must be positive");
  }
  WindowSet set;
  for (const auto& e : engines) {
    if (e.num_cycles() < seq_len) {
      set.too_short.push_back(e.unit_id);
      continue;
    }
    for (std::size_t end = seq_len; end <= e.num_cycles(); end += stride) {
      const int end_cycle = static_cast<int>(end);
      set.windows.push_back({cut_window(e, end_cycle, seq_len), piecewise_label(e, end_cycle, rul_cap)});
    }
  }
  return set;
}

WindowSet terminal_windows(const std::vector<NormalizedEngine>& engines, std::size_t seq_len,
                           double rul_cap) {
  WindowSet set;
  for (const auto& e : engines) {
    if (e.num_cycles() < seq_len) {
      set.too_short.push_back(e.unit_id);
      continue;
    }
    const int end_cycle = static_cast<int>(e.num_cycles());
    set.windows.push_back({cut_window(e, end_cycle, seq_len), piecewise_label(e, end_cycle, rul_cap)});
  }
  return set;
}

namespace {

std::vector<EngineRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kDataNotFound, "cannot open " + path.string());
  return parse_cmapss(in);
}

}  // namespace

CmapssSplit load_cmapss(const std::filesystem::path& dir, const std::string& dataset_id) {
  CmapssSplit split;
  split.train = group_by_unit(read_records(dir / ("train_" + dataset_id + ".txt")));
  split.test = group_by_unit(read_records(dir / ("test_" + dataset_id + ".txt")));
  const auto rul_path = dir / ("RUL_" + dataset_id + ".txt");
  std::ifstream rul_in(rul_path);
  if (!rul_in) throw Error(ErrorKind::kDataNotFound, "cannot open " + rul_path.string());
  attach_final_rul(split.test, parse_rul_file(rul_in));
  return split;
}

PreparedData prepare(const CmapssSplit& split, const ChannelSelection& rule) {
  PreparedData data;
  data.stats = select_informative_channels(split.train, rule);
  data.train = normalize(split.train, data.stats);
  data.test = normalize(split.test, data.stats);
  return data;
}

}  // namespace rulattack
