#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "rulattack/data_pipeline.hpp"
#include "rulattack/error.hpp"

namespace rulattack {
namespace {

[[noreturn]] void corrupt(const std::string& why) {
  throw Error(ErrorKind::kCorruptDataset, "dataset cache: " + why);
}

std::string expect_header(std::istream& in, const std::string& key) {
  std::string line;
  if (!std::getline(in, line)) corrupt("missing header line '" + key + "'");
  const std::string prefix = "#" + key;
  if (line.rfind(prefix, 0) != 0) corrupt("expected '" + prefix + "', got '" + line + "'");
  return line.size() > prefix.size() ? line.substr(prefix.size() + 1) : std::string();
}

template <typename T>
std::vector<T> parse_list(const std::string& text) {
  std::vector<T> out;
  std::istringstream ss(text);
  std::string tok;
  while (ss >> tok) {
    T v{};
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) corrupt("bad value '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace

void write_dataset_cache(std::ostream& out, const DatasetCache& cache) {
  const auto& s = cache.stats;
  std::vector<std::size_t> sensor_ids;
  for (auto c : s.kept_channels) sensor_ids.push_back(c + 1);
  fmt::print(out, "#rulattack-dataset {}\n", kDatasetCacheVersion);
  fmt::print(out, "#seq_len {}\n", cache.seq_len);
  fmt::print(out, "#rul_cap {}\n", cache.rul_cap);
  fmt::print(out, "#channels {}\n", fmt::join(sensor_ids, " "));
  fmt::print(out, "#min {}\n", fmt::join(s.min, " "));
  fmt::print(out, "#max {}\n", fmt::join(s.max, " "));
  fmt::print(out, "#windows {}\n", cache.windows.size());
  out << "engine,end_cycle,rul";
  for (std::size_t t = 0; t < cache.seq_len; ++t) {
    for (auto id : sensor_ids) fmt::print(out, ",t{}_s{}", t, id);
  }
  out << '\n';
  for (const auto& w : cache.windows) {
    fmt::print(out, "{},{},{}", w.window.engine_id, w.window.end_cycle, w.rul);
    for (double v : w.window.values.data()) fmt::print(out, ",{}", v);
    out << '\n';
  }
}

DatasetCache read_dataset_cache(std::istream& in) {
  DatasetCache cache;
  const auto version = parse_list<int>(expect_header(in, "rulattack-dataset"));
  if (version.size() != 1) corrupt("bad version line");
  if (version[0] != kDatasetCacheVersion) {
    throw Error(ErrorKind::kVersionMismatch,
                "dataset cache version " + std::to_string(version[0]) + " is not supported");
  }
  const auto seq = parse_list<std::size_t>(expect_header(in, "seq_len"));
  const auto cap = parse_list<double>(expect_header(in, "rul_cap"));
  const auto ids = parse_list<std::size_t>(expect_header(in, "channels"));
  cache.stats.min = parse_list<double>(expect_header(in, "min"));
  cache.stats.max = parse_list<double>(expect_header(in, "max"));
  const auto count = parse_list<std::size_t>(expect_header(in, "windows"));
  if (seq.size() != 1 || cap.size() != 1 || count.size() != 1 || ids.empty() ||
      cache.stats.min.size() != ids.size() || cache.stats.max.size() != ids.size()) {
    corrupt("inconsistent header");
  }
  cache.seq_len = seq[0];
  cache.rul_cap = cap[0];
  for (auto id : ids) {
    if (id == 0) corrupt("sensor ids are 1-based");
    cache.stats.kept_channels.push_back(id - 1);
  }
  std::string line;
  if (!std::getline(in, line)) corrupt("missing column header");

  const std::size_t n = ids.size();
  const std::size_t width = cache.seq_len * n;
  for (std::size_t row = 0; row < count[0]; ++row) {
    if (!std::getline(in, line)) corrupt("expected " + std::to_string(count[0]) + " rows");
    for (char& c : line) {
      if (c == ',') c = ' ';
    }
    const auto fields = parse_list<double>(line);
    if (fields.size() != 3 + width) corrupt("row " + std::to_string(row + 1) + " has wrong arity");
    LabeledWindow w;
    w.window.engine_id = static_cast<int>(fields[0]);
    w.window.end_cycle = static_cast<int>(fields[1]);
    w.rul = fields[2];
    w.window.values = Tensor({cache.seq_len, n}, std::vector<double>(fields.begin() + 3, fields.end()));
    cache.windows.push_back(std::move(w));
  }
  return cache;
}

}  // namespace rulattack
