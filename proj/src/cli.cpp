#include "rulattack/cli.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "rulattack/error.hpp"
#include "rulattack/evaluation.hpp"
#include "rulattack/random.hpp"
#include "rulattack/report_io.hpp"

namespace rulattack {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

void RunConfig::validate() const {
  if (dataset_id.empty()) throw Error(ErrorKind::kConfigError, "dataset id is empty");
  if (families.empty()) throw Error(ErrorKind::kConfigError, "no model family configured");
  if (!(rul_cap > 0.0)) throw Error(ErrorKind::kConfigError, "rul_cap must be positive");
  if (stride == 0) throw Error(ErrorKind::kConfigError, "stride must be positive");
  if (output_dir.empty()) throw Error(ErrorKind::kConfigError, "output_dir is empty");
  train.validate();
}

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T as(const pt::ptree& node, const std::string& key) {
  try {
    return node.get_value<T>();
  } catch (const pt::ptree_error&) {
    throw Error(ErrorKind::kConfigError, "bad value '" + node.data() + "' for " + key);
  }
}

bool as_bool(const pt::ptree& node, const std::string& key) {
  std::string v = trim(node.data());
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error(ErrorKind::kConfigError, "bad boolean '" + node.data() + "' for " + key);
}

std::vector<double> as_doubles(const pt::ptree& node, const std::string& key) {
  std::vector<double> out;
  for (const auto& item : split_list(node.data())) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorKind::kConfigError, "bad number '" + item + "' in " + key);
    }
  }
  return out;
}

void apply_key(RunConfig& cfg, const std::string& section, const std::string& key, const pt::ptree& v) {
  const std::string name = section + "." + key;
  if (name == "data.dir") cfg.data_dir = trim(v.data());
  else if (name == "data.dataset") cfg.dataset_id = trim(v.data());
  else if (name == "data.rul_cap") cfg.rul_cap = as<double>(v, name);
  else if (name == "data.stride") cfg.stride = as<std::size_t>(v, name);
  else if (name == "data.min_cycles") cfg.min_cycles = as<std::size_t>(v, name);
  else if (name == "model.families") {
    cfg.families.clear();
    for (const auto& f : split_list(v.data())) {
      try {
        cfg.families.push_back(parse_family(f));
      } catch (const Error&) {
        throw Error(ErrorKind::kConfigError, "unknown family '" + f + "'");
      }
    }
  } else if (name == "model.scaled") cfg.scaled = as_bool(v, name);
  else if (name == "train.learning_rate") cfg.train.learning_rate = as<double>(v, name);
  else if (name == "train.batch_size") cfg.train.batch_size = as<std::size_t>(v, name);
  else if (name == "train.max_epochs") cfg.train.max_epochs = as<std::size_t>(v, name);
  else if (name == "train.patience") cfg.train.early_stop_patience = as<std::size_t>(v, name);
  else if (name == "train.validation_fraction") cfg.train.validation_fraction = as<double>(v, name);
  else if (name == "train.dropout") cfg.train.dropout = as<double>(v, name);
  else if (name == "attack.kind") cfg.attack.kind = parse_attack_kind(trim(v.data()));
  else if (name == "attack.epsilon") cfg.attack.epsilon = as<double>(v, name);
  else if (name == "attack.iterations") cfg.attack.iterations = as<std::size_t>(v, name);
  else if (name == "attack.alpha") cfg.attack.alpha = as<double>(v, name);
  else if (name == "attack.clip_to_data_range") cfg.attack.clip_to_data_range = as_bool(v, name);
  else if (name == "attack.workers") cfg.attack.workers = as<std::size_t>(v, name);
  else if (name == "sweep.epsilons") cfg.sweep_epsilons = as_doubles(v, name);
  else if (name == "piecewise.engine") cfg.piecewise_engine = as<int>(v, name);
  else if (name == "run.output_dir") cfg.output_dir = trim(v.data());
  else if (name == "run.seed") cfg.seed = as<std::uint64_t>(v, name);
  else throw Error(ErrorKind::kConfigError, "unknown config key " + name);
}

RunConfig from_tree(const pt::ptree& tree) {
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw Error(ErrorKind::kConfigError, "key '" + section + "' outside a section");
    for (const auto& [key, value] : body) apply_key(cfg, section, key, value);
  }
  return cfg;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  std::istringstream in(text);
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorKind::kConfigError, e.message() + " at line " + std::to_string(e.line()));
  }
  return from_tree(tree);
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kDataNotFound, "config file " + path.string() + " not found");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

void apply_environment(RunConfig& cfg) {
  if (!cfg.data_dir.empty()) return;
  if (const char* env = std::getenv("CMAPSS_DATA_DIR"); env && *env) cfg.data_dir = env;
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

CmapssSplit load_split(const RunConfig& cfg) {
  if (cfg.data_dir.empty()) throw Error(ErrorKind::kDataNotFound, "no data directory configured");
  return load_cmapss(cfg.data_dir, cfg.dataset_id);
}

std::string model_id(const RegressionModel& model) { return lower(family_name(model.spec.family)); }

fs::path output(const RunConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.output_dir);
  return cfg.output_dir / name;
}

template <typename Fn>
void write_file(const fs::path& path, Fn&& fn) {
  std::ofstream out = open_output(path);
  fn(out);
  out.flush();
  if (!out) throw Error(ErrorKind::kDataNotFound, "failed writing " + path.string());
}

std::vector<Tensor> values_of(const std::vector<LabeledWindow>& windows) {
  std::vector<Tensor> out;
  for (const auto& w : windows) out.push_back(w.window.values);
  return out;
}

}  // namespace

std::vector<NormalizedEngine> evaluation_engines(const RunConfig& cfg, const NormalizationStats& stats) {
  const CmapssSplit split = load_split(cfg);
  return filter_min_cycles(normalize(split.test, stats), cfg.min_cycles);
}

IngestSummary cmd_ingest(const RunConfig& cfg) {
  cfg.validate();
  const CmapssSplit split = load_split(cfg);
  const PreparedData data = prepare(split);
  IngestSummary s;
  s.train_engines = split.train.size();
  s.test_engines = split.test.size();
  s.subset_engines = filter_min_cycles(data.test, cfg.min_cycles).size();
  for (std::size_t c : data.stats.kept_channels) s.kept_channels.push_back(c + 1);

  const std::size_t seq_len = presets::for_family(cfg.families.front(), cfg.scaled, data.stats.num_channels()).seq_len;
  DatasetCache cache{seq_len, cfg.rul_cap, data.stats, make_windows(data.train, seq_len, cfg.rul_cap, cfg.stride).windows};
  s.cache = output(cfg, fmt::format("train_{}_lh{}.csv", cfg.dataset_id, seq_len));
  write_file(s.cache, [&](std::ostream& out) { write_dataset_cache(out, cache); });
  write_file(output(cfg, "ingest_summary.csv"), [&](std::ostream& out) {
    out << "metric,value\n";
    out << "train_engines," << s.train_engines << '\n';
    out << "test_engines," << s.test_engines << '\n';
    out << "subset_engines," << s.subset_engines << '\n';
    out << "informative_channels," << s.kept_channels.size() << '\n';
    out << "kept_sensors," << csv_field(fmt::format("{}", fmt::join(s.kept_channels, ","))) << '\n';
  });
  return s;
}

std::vector<fs::path> cmd_train(const RunConfig& cfg) {
  cfg.validate();
  const PreparedData data = prepare(load_split(cfg));
  std::vector<fs::path> paths;
  for (Family family : cfg.families) {
    const ModelSpec spec = presets::for_family(family, cfg.scaled, data.stats.num_channels());
    const std::string id = lower(family_name(family));
    RegressionModel model = build(spec, stream_seed(cfg.seed, "model/" + id));
    model.norm_stats = data.stats;
    TrainConfig tc = cfg.train;
    tc.seed = stream_seed(cfg.seed, "train/" + id);
    const WindowSet windows = make_windows(data.train, spec.seq_len, cfg.rul_cap, cfg.stride);
    const TrainResult result = train(std::move(model), windows.windows, tc);

    const fs::path ckpt = output(cfg, id + ".ckpt");
    save(result.model, ckpt);
    write_file(output(cfg, id + "_history.csv"), [&](std::ostream& out) { write_history_csv(out, result.history); });
    paths.push_back(ckpt);
  }
  return paths;
}

std::filesystem::path cmd_predict(const RunConfig& cfg, const fs::path& model_path) {
  cfg.validate();
  const RegressionModel model = load(model_path);
  const auto engines = evaluation_engines(cfg, model.norm_stats);
  const WindowSet set = terminal_windows(engines, model.spec.seq_len, cfg.rul_cap);
  if (set.windows.empty()) throw Error(ErrorKind::kEmptyInput, "no engine in the evaluation subset");
  const auto predictions = predict_batch(model, values_of(set.windows));
  const fs::path path = output(cfg, model_id(model) + "_predictions.csv");
  write_file(path, [&](std::ostream& out) {
    out << "engine_id,true_rul,predicted_rul\n";
    for (std::size_t i = 0; i < set.windows.size(); ++i) {
      out << set.windows[i].window.engine_id << ',' << csv_number(set.windows[i].rul) << ','
          << csv_number(predictions[i]) << '\n';
    }
  });
  return path;
}

std::filesystem::path cmd_attack(const RunConfig& cfg, const fs::path& model_path) {
  cfg.validate();
  cfg.attack.validate();
  const RegressionModel model = load(model_path);
  const std::string id = model_id(model);
  const auto engines = evaluation_engines(cfg, model.norm_stats);
  const WindowSet set = terminal_windows(engines, model.spec.seq_len, cfg.rul_cap);
  const AttackRun run = evaluate_attack(model, id, set.windows, cfg.attack);

  const std::string tag = fmt::format("{}_{}_eps{}", id, attack_name(cfg.attack.kind), cfg.attack.epsilon);
  const fs::path report = output(cfg, tag + ".csv");
  write_file(report, [&](std::ostream& out) { write_attack_report_csv(out, run.report); });
  for (const auto& ex : run.examples) {
    write_file(output(cfg, fmt::format("{}_signatures/engine_{}.csv", tag, ex.original.engine_id)),
               [&](std::ostream& out) { write_signature_csv(out, ex, model.norm_stats); });
  }
  return report;
}

std::filesystem::path cmd_piecewise(const RunConfig& cfg, const fs::path& model_path, std::optional<int> engine_id) {
  cfg.validate();
  if (cfg.attack.epsilon > 0.0) cfg.attack.validate();
  const RegressionModel model = load(model_path);
  const int wanted = engine_id.value_or(cfg.piecewise_engine);
  const auto engines = normalize(load_split(cfg).test, model.norm_stats);
  const auto it = std::find_if(engines.begin(), engines.end(), [&](const auto& e) { return e.unit_id == wanted; });
  if (it == engines.end()) throw Error(ErrorKind::kDataNotFound, "test unit " + std::to_string(wanted) + " not found");

  const AttackConfig* attack = cfg.attack.epsilon > 0.0 ? &cfg.attack : nullptr;
  const auto curve = piecewise_rul(model, *it, cfg.rul_cap, attack);
  const std::string tag = fmt::format("{}_piecewise_engine{}", model_id(model), wanted);
  const fs::path path = output(cfg, tag + ".csv");
  write_file(path, [&](std::ostream& out) { write_piecewise_csv(out, curve); });

  Series truth{"true RUL", {}, {}}, clean{"predicted", {}, {}}, attacked{"attacked", {}, {}};
  for (const auto& p : curve) {
    truth.x.push_back(p.cycle);
    truth.y.push_back(p.true_rul);
    clean.x.push_back(p.cycle);
    clean.y.push_back(p.predicted);
    if (p.attacked) {
      attacked.x.push_back(p.cycle);
      attacked.y.push_back(*p.attacked);
    }
  }
  std::vector<Series> series{truth, clean};
  if (attack) series.push_back(attacked);
  write_file(output(cfg, tag + ".svg"), [&](std::ostream& out) {
    write_line_chart_svg(out, fmt::format("Engine {} ({})", wanted, model.spec.label()), "cycle", "RUL", series);
  });
  return path;
}

std::filesystem::path cmd_sweep(const RunConfig& cfg, const fs::path& model_path) {
  cfg.validate();
  const RegressionModel model = load(model_path);
  for (double eps : cfg.sweep_epsilons) {
    if (!(eps >= 0.0) || eps > kMaxEpsilon) {
      throw Error(ErrorKind::kEpsilonOutOfRange, fmt::format("sweep epsilon {} outside [0, {}]", eps, kMaxEpsilon));
    }
  }
  const auto engines = evaluation_engines(cfg, model.norm_stats);
  const WindowSet set = terminal_windows(engines, model.spec.seq_len, cfg.rul_cap);
  SweepOptions opts;
  opts.bim_iterations = cfg.attack.kind == AttackKind::kBim ? cfg.attack.iterations : kDefaultBimIterations;
  opts.workers = cfg.attack.workers;
  const auto rows = epsilon_sweep(model, set.windows, cfg.sweep_epsilons, opts);

  const std::string tag = model_id(model) + "_sweep";
  const fs::path path = output(cfg, tag + ".csv");
  write_file(path, [&](std::ostream& out) { write_sweep_csv(out, rows); });
  Series f{"FGSM", {}, {}}, b{"BIM", {}, {}};
  for (const auto& r : rows) {
    f.x.push_back(r.epsilon);
    f.y.push_back(r.fgsm_rmse);
    b.x.push_back(r.epsilon);
    b.y.push_back(r.bim_rmse);
  }
  write_file(output(cfg, tag + ".svg"), [&](std::ostream& out) {
    write_line_chart_svg(out, "RMSE vs perturbation (" + model.spec.label() + ")", "epsilon", "RMSE", {f, b});
  });
  return path;
}

std::filesystem::path cmd_transfer(const RunConfig& cfg, const std::vector<fs::path>& model_paths) {
  cfg.validate();
  std::vector<RegressionModel> models;
  for (const auto& p : model_paths) models.push_back(load(p));
  std::vector<NamedModel> named;
  std::set<std::string> seen;
  for (const auto& m : models) {
    std::string id = model_id(m);
    for (int k = 2; !seen.insert(id).second; ++k) id = model_id(m) + std::to_string(k);
    named.push_back({id, &m});
  }
  if (models.empty()) throw Error(ErrorKind::kConfigError, "transfer needs model checkpoints");
  AttackConfig fgsm = AttackConfig::fgsm(cfg.attack.epsilon);
  AttackConfig bim = AttackConfig::bim(cfg.attack.epsilon,
                                       cfg.attack.kind == AttackKind::kBim ? cfg.attack.iterations : kDefaultBimIterations);
  fgsm.workers = bim.workers = cfg.attack.workers;
  fgsm.clip_to_data_range = bim.clip_to_data_range = cfg.attack.clip_to_data_range;
  if (cfg.attack.kind == AttackKind::kBim) bim.alpha = cfg.attack.alpha;
  const auto engines = normalize(load_split(cfg).test, models.front().norm_stats);
  const auto subset = filter_min_cycles(engines, cfg.min_cycles);
  const TransferMatrix matrix = transfer_matrix(named, subset, cfg.rul_cap, fgsm, bim);

  const fs::path path = output(cfg, "transfer.csv");
  write_file(path, [&](std::ostream& out) { write_transfer_csv(out, matrix); });
  write_file(output(cfg, "transfer_clean.csv"), [&](std::ostream& out) {
    out << "model,clean_rmse\n";
    for (std::size_t i = 0; i < matrix.models.size(); ++i) {
      out << csv_field(matrix.models[i]) << ',' << csv_number(matrix.clean_rmse[i]) << '\n';
    }
  });
  return path;
}

}  // namespace rulattack
