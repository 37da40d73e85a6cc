#include "rulattack/report_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "rulattack/error.hpp"

namespace rulattack {

std::string csv_field(std::string_view text) {
  if (text.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(text);
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string csv_number(double value) {
  if (std::isnan(value)) return "nan";
  return fmt::format("{}", value);
}

void write_history_csv(std::ostream& out, const std::vector<EpochStats>& history) {
  out << "epoch,train_rmse,validation_rmse\n";
  for (const auto& h : history) {
    out << h.epoch << ',' << csv_number(h.train_rmse) << ',' << csv_number(h.validation_rmse) << '\n';
  }
}

void write_attack_report_csv(std::ostream& out, const AttackReport& report) {
  out << "engine_id,true_rul,clean_prediction,attacked_prediction\n";
  for (const auto& r : report.rows) {
    out << r.engine_id << ',' << csv_number(r.true_rul) << ',' << csv_number(r.clean_prediction) << ','
        << csv_number(r.attacked_prediction) << '\n';
  }
  out << "rmse,," << csv_number(report.clean_rmse) << ',' << csv_number(report.attacked_rmse) << '\n';
}

void write_transfer_csv(std::ostream& out, const TransferMatrix& matrix) {
  out << "source,target,fgsm_rmse,bim_rmse\n";
  for (const auto& e : matrix.entries) {
    out << csv_field(e.source) << ',' << csv_field(e.target) << ',' << csv_number(e.fgsm_rmse) << ','
        << csv_number(e.bim_rmse) << '\n';
  }
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "epsilon,fgsm_rmse,bim_rmse\n";
  for (const auto& r : rows) {
    out << csv_number(r.epsilon) << ',' << csv_number(r.fgsm_rmse) << ',' << csv_number(r.bim_rmse) << '\n';
  }
}

void write_piecewise_csv(std::ostream& out, const std::vector<PiecewisePoint>& curve) {
  const bool attacked = !curve.empty() && curve.front().attacked.has_value();
  out << "cycle,true_rul,predicted_rul" << (attacked ? ",attacked_rul" : "") << '\n';
  for (const auto& p : curve) {
    out << p.cycle << ',' << csv_number(p.true_rul) << ',' << csv_number(p.predicted);
    if (attacked) out << ',' << csv_number(p.attacked.value_or(std::numeric_limits<double>::quiet_NaN()));
    out << '\n';
  }
}

void write_signature_csv(std::ostream& out, const AdversarialExample& example,
                         const NormalizationStats& stats) {
  out << "cycle,channel,original,perturbed\n";
  const SensorWindow& o = example.original;
  const std::size_t rows = o.seq_len(), cols = o.channels();
  const int first_cycle = o.end_cycle - static_cast<int>(rows) + 1;
  for (std::size_t c = 0; c < cols; ++c) {
    const std::size_t sensor = c < stats.kept_channels.size() ? stats.kept_channels[c] + 1 : c + 1;
    for (std::size_t t = 0; t < rows; ++t) {
      out << first_cycle + static_cast<int>(t) << ',' << sensor << ',' << csv_number(o.values.at(t, c)) << ','
          << csv_number(example.perturbed.values.at(t, c)) << '\n';
    }
  }
}

namespace {

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void write_line_chart_svg(std::ostream& out, const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<Series>& series) {
  constexpr double width = 720, height = 420, left = 70, right = 160, top = 40, bottom = 60;
  constexpr const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!(x1 >= x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  y0 = std::min(y0, 0.0);
  const double pw = width - left - right, ph = height - top - bottom;
  const auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  const auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  fmt::print(out, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
             width, height, width, height);
  fmt::print(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
  fmt::print(out, "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
             left + pw / 2, xml_escape(title));
  fmt::print(out, "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n", left, top, pw, ph);
  for (int k = 0; k <= 5; ++k) {
    const double xv = x0 + (x1 - x0) * k / 5.0, yv = y0 + (y1 - y0) * k / 5.0;
    fmt::print(out, "<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{:.3g}</text>\n",
               px(xv), top + ph + 16, xv);
    fmt::print(out, "<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{:.3g}</text>\n",
               left - 6, py(yv) + 4, yv);
    fmt::print(out, "<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"#ddd\"/>\n", left, py(yv),
               left + pw, py(yv));
  }
  fmt::print(out, "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n",
             left + pw / 2, height - 18, xml_escape(x_label));
  fmt::print(out, "<text x=\"18\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>\n",
             top + ph / 2, top + ph / 2, xml_escape(y_label));
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = colors[s % std::size(colors)];
    std::string points;
    for (std::size_t i = 0; i < series[s].x.size() && i < series[s].y.size(); ++i) {
      if (!std::isfinite(series[s].y[i])) continue;
      points += fmt::format("{:.2f},{:.2f} ", px(series[s].x[i]), py(series[s].y[i]));
    }
    fmt::print(out, "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.8\" points=\"{}\"/>\n", color, points);
    const double ly = top + 14 + 20.0 * static_cast<double>(s);
    fmt::print(out, "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"2\"/>\n", left + pw + 12, ly,
               left + pw + 36, ly, color);
    fmt::print(out, "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n", left + pw + 42,
               ly + 4, xml_escape(series[s].name));
  }
  out << "</svg>\n";
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kDataNotFound, "cannot write " + path.string());
  return out;
}

}  // namespace rulattack
