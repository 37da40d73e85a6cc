#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "rulattack/error.hpp"
#include "rulattack/model.hpp"

// Layout: UTF-8 header lines (magic + version, spec, channel list,
// normalization stats, parameter manifest), a "payload <n>" line, then n
// little-endian IEEE-754 single-precision values in manifest order.

namespace rulattack {
namespace {

constexpr const char* kMagic = "rulattack-checkpoint";

[[noreturn]] void corrupt(const std::string& why) {
  throw Error(ErrorKind::kCorruptCheckpoint, "checkpoint: " + why);
}

std::vector<std::string> tokens(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string t;
  while (ss >> t) out.push_back(t);
  return out;
}

template <typename T>
T number(const std::string& s) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) corrupt("bad number '" + s + "'");
  return v;
}

template <typename T>
std::vector<T> numbers(const std::vector<std::string>& toks, std::size_t from = 1) {
  std::vector<T> out;
  for (std::size_t i = from; i < toks.size(); ++i) out.push_back(number<T>(toks[i]));
  return out;
}

std::vector<std::string> keyed_line(std::istream& in, const std::string& key) {
  std::string line;
  if (!std::getline(in, line)) corrupt("truncated header, expected '" + key + "'");
  auto toks = tokens(line);
  if (toks.empty() || toks[0] != key) corrupt("expected '" + key + "', got '" + line + "'");
  return toks;
}

}  // namespace

void save(const RegressionModel& model, std::ostream& out) {
  const ModelSpec& s = model.spec;
  const NormalizationStats& ns = model.norm_stats;
  std::vector<std::size_t> ids;
  for (auto c : ns.kept_channels) ids.push_back(c + 1);

  fmt::print(out, "{} {}\n", kMagic, kCheckpointVersion);
  fmt::print(out, "family {}\n", family_name(s.family));
  fmt::print(out, "layer_widths {}\n", fmt::join(s.layer_widths, " "));
  fmt::print(out, "seq_len {}\n", s.seq_len);
  fmt::print(out, "input_channels {}\n", s.input_channels);
  fmt::print(out, "dense_head {}\n", fmt::join(s.dense_head, " "));
  fmt::print(out, "kernel_width {}\n", s.kernel_width);
  fmt::print(out, "target_scale {}\n", s.target_scale);
  fmt::print(out, "channels {}\n", fmt::join(ids, " "));
  fmt::print(out, "norm_min {}\n", fmt::join(ns.min, " "));
  fmt::print(out, "norm_max {}\n", fmt::join(ns.max, " "));
  fmt::print(out, "parameters {}\n", model.parameters.size());
  std::size_t total = 0;
  for (const auto& p : model.parameters) {
    fmt::print(out, "param {} {}\n", p.name, fmt::join(p.value.shape(), " "));
    total += p.value.size();
  }
  fmt::print(out, "payload {}\n", total);
  for (const auto& p : model.parameters) {
    for (double v : p.value.data()) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      const char bytes[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                             static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
      out.write(bytes, 4);
    }
  }
}

void save(const RegressionModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kDataNotFound, "cannot write " + path.string());
  save(model, out);
  if (!out) throw Error(ErrorKind::kDataNotFound, "failed writing " + path.string());
}

RegressionModel load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) corrupt("empty file");
  const auto magic = tokens(line);
  if (magic.size() != 2 || magic[0] != kMagic) corrupt("missing magic header");
  const int version = number<int>(magic[1]);
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::kVersionMismatch, "checkpoint format version " + std::to_string(version) +
                                                 " is not supported (expected " +
                                                 std::to_string(kCheckpointVersion) + ")");
  }

  RegressionModel model;
  ModelSpec& s = model.spec;
  try {
    const auto fam = keyed_line(in, "family");
    if (fam.size() != 2) corrupt("bad family line");
    s.family = parse_family(fam[1]);
    s.layer_widths = numbers<std::size_t>(keyed_line(in, "layer_widths"));
    s.seq_len = numbers<std::size_t>(keyed_line(in, "seq_len")).at(0);
    s.input_channels = numbers<std::size_t>(keyed_line(in, "input_channels")).at(0);
    s.dense_head = numbers<std::size_t>(keyed_line(in, "dense_head"));
    s.kernel_width = numbers<std::size_t>(keyed_line(in, "kernel_width")).at(0);
    s.target_scale = numbers<double>(keyed_line(in, "target_scale")).at(0);
    s.validate();
  } catch (const std::out_of_range&) {
    corrupt("missing spec value");
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kInvalidSpec) corrupt(e.what());
    throw;
  }

  for (auto id : numbers<std::size_t>(keyed_line(in, "channels"))) {
    if (id == 0) corrupt("channel ids are 1-based");
    model.norm_stats.kept_channels.push_back(id - 1);
  }
  model.norm_stats.min = numbers<double>(keyed_line(in, "norm_min"));
  model.norm_stats.max = numbers<double>(keyed_line(in, "norm_max"));
  const std::size_t nc = model.norm_stats.kept_channels.size();
  if (model.norm_stats.min.size() != nc || model.norm_stats.max.size() != nc) {
    corrupt("normalization stats do not match channel list");
  }

  const auto count_line = keyed_line(in, "parameters");
  if (count_line.size() != 2) corrupt("bad parameters line");
  const auto count = number<std::size_t>(count_line[1]);
  const auto layout = parameter_layout(s);
  if (count != layout.size()) corrupt("parameter count does not match the spec");
  std::size_t total = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const auto toks = keyed_line(in, "param");
    if (toks.size() < 3) corrupt("bad param line");
    Shape shape;
    for (std::size_t k = 2; k < toks.size(); ++k) shape.push_back(number<std::size_t>(toks[k]));
    if (toks[1] != layout[i].first || shape != layout[i].second) {
      corrupt("parameter '" + toks[1] + "' does not match the spec layout");
    }
    total += shape_size(shape);
    model.parameters.push_back({toks[1], Tensor(shape, 0.0)});
  }
  const auto payload = keyed_line(in, "payload");
  if (payload.size() != 2 || number<std::size_t>(payload[1]) != total) corrupt("payload size mismatch");

  for (auto& p : model.parameters) {
    for (double& v : p.value.data()) {
      unsigned char bytes[4];
      if (!in.read(reinterpret_cast<char*>(bytes), 4)) corrupt("truncated payload");
      const std::uint32_t bits = static_cast<std::uint32_t>(bytes[0]) |
                                 (static_cast<std::uint32_t>(bytes[1]) << 8) |
                                 (static_cast<std::uint32_t>(bytes[2]) << 16) |
                                 (static_cast<std::uint32_t>(bytes[3]) << 24);
      v = static_cast<double>(std::bit_cast<float>(bits));
    }
    if (!p.value.all_finite()) corrupt("non-finite parameter in '" + p.name + "'");
  }
  if (in.peek() != std::char_traits<char>::eof()) corrupt("trailing bytes after payload");
  return model;
}

RegressionModel load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kDataNotFound, "cannot open checkpoint " + path.string());
  return load(in);
}

}  // namespace rulattack
