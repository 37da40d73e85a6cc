#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "rulattack/attack.hpp"
#include "rulattack/data_pipeline.hpp"
#include "rulattack/evaluation.hpp"
#include "rulattack/model.hpp"

namespace rulattack {

/// RFC-4180 field: quoted when it contains a comma, quote or line break.
std::string csv_field(std::string_view text);
/// Shortest representation that round-trips the double.
std::string csv_number(double value);

void write_history_csv(std::ostream& out, const std::vector<EpochStats>& history);
/// Engine rows, then a final "rmse" row with the clean and attacked RMSE
/// in the prediction columns.
void write_attack_report_csv(std::ostream& out, const AttackReport& report);
void write_transfer_csv(std::ostream& out, const TransferMatrix& matrix);
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);
void write_piecewise_csv(std::ostream& out, const std::vector<PiecewisePoint>& curve);
/// Attack signature of one engine: cycle, channel (1-based sensor id),
/// original and perturbed normalized values.
void write_signature_csv(std::ostream& out, const AdversarialExample& example,
                         const NormalizationStats& stats);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Standalone SVG line chart; output depends only on the arguments.
void write_line_chart_svg(std::ostream& out, const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<Series>& series);

/// Opens `path` for writing, creating parent directories.
std::ofstream open_output(const std::filesystem::path& path);

}  // namespace rulattack
