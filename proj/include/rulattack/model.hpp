#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rulattack/data_pipeline.hpp"
#include "rulattack/tape.hpp"
#include "rulattack/tensor.hpp"

namespace rulattack {

enum class Family { kLstm, kGru, kCnn1d };

std::string_view family_name(Family family);
/// Accepts LSTM, GRU, CNN or CNN1D in any case; throws InvalidSpec.
Family parse_family(std::string_view text);

struct ModelSpec {
  Family family = Family::kGru;
  /// Recurrent units per layer, or filters per conv layer.
  std::vector<std::size_t> layer_widths;
  std::size_t seq_len = 0;
  std::size_t input_channels = 0;
  /// Fully connected layers after the feature extractor; ends in 1.
  std::vector<std::size_t> dense_head{1};
  std::size_t kernel_width = 3;
  /// The network regresses RUL / target_scale; predictions are rescaled.
  double target_scale = 1.0;

  /// Throws InvalidSpec.
  void validate() const;
  /// e.g. "GRU(32,32) lh(30)"
  std::string label() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

namespace presets {

ModelSpec full_lstm(std::size_t channels);  // LSTM(100,100,100,100) lh(80)
ModelSpec full_gru(std::size_t channels);   // GRU(100,100,100) lh(80)
ModelSpec full_cnn(std::size_t channels);   // CNN(64,64,64,64) lh(100), dense 40-40-1
ModelSpec scaled_lstm(std::size_t channels); // LSTM(32,32) lh(30)
ModelSpec scaled_gru(std::size_t channels);  // GRU(32,32) lh(30)
ModelSpec scaled_cnn(std::size_t channels);  // CNN(16,16) lh(30), dense 40-40-1

/// Full-size (false) or desk-scale (true) spec of a family.
ModelSpec for_family(Family family, bool scaled, std::size_t channels);

}  // namespace presets

struct Parameter {
  std::string name;
  Tensor value;
};

/// Parameter names and shapes implied by a spec, in manifest order.
std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelSpec& spec);

class RegressionModel {
 public:
  ModelSpec spec;
  std::vector<Parameter> parameters;
  NormalizationStats norm_stats;

  const Tensor& parameter(std::string_view name) const;
  Tensor& parameter(std::string_view name);
  std::size_t parameter_count() const;
};

/// Glorot-uniform weights, zero biases, LSTM forget-gate bias 1. Values
/// are rounded to single precision so checkpoints round-trip exactly.
RegressionModel build(const ModelSpec& spec, std::uint64_t seed);

/// Records the forward pass of a [batch, seq_len, channels] input.
/// `params` follows parameter_layout order. Returns [batch, 1].
/// `feature_mask`, when given, multiplies the features entering the dense
/// head (training-time dropout).
Var forward(const ModelSpec& spec, std::span<const Var> params, Var input,
            const Tensor* feature_mask = nullptr);

/// Stacks [seq_len, channels] windows into one [batch, seq_len, channels].
Tensor stack_windows(std::span<const Tensor> windows);

double predict(const RegressionModel& model, const SensorWindow& window);
double predict(const RegressionModel& model, const Tensor& window);
std::vector<double> predict_batch(const RegressionModel& model, std::span<const Tensor> windows);

struct InputGradient {
  double prediction = 0.0;
  double loss = 0.0;  // squared error
  Tensor grad;        // d loss / d window, [seq_len, channels]
};

InputGradient loss_and_input_gradient(const RegressionModel& model, const Tensor& window,
                                      double rul_label);
InputGradient loss_and_input_gradient(const RegressionModel& model, const SensorWindow& window,
                                      double rul_label);
/// Per-window results identical to calling the single-window form.
std::vector<InputGradient> input_gradients(const RegressionModel& model,
                                           std::span<const Tensor> windows,
                                           std::span<const double> labels);

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 100;
  std::size_t early_stop_patience = 10;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;
  /// Inverted dropout on the features entering the dense head.
  double dropout = 0.0;

  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_rmse = 0.0;
  double validation_rmse = 0.0;
};

struct TrainResult {
  RegressionModel model;
  std::vector<EpochStats> history;
  /// Epoch whose parameters were kept.
  std::size_t best_epoch = 0;
};

/// Minimizes mean squared error with Adam, holding out whole units for
/// validation and keeping the parameters of the best validation epoch.
/// Throws Diverged on a non-finite loss.
TrainResult train(RegressionModel model, const std::vector<LabeledWindow>& dataset,
                  const TrainConfig& cfg);

inline constexpr int kCheckpointVersion = 1;

void save(const RegressionModel& model, std::ostream& out);
void save(const RegressionModel& model, const std::filesystem::path& path);
/// Throws CorruptCheckpoint or VersionMismatch.
RegressionModel load(std::istream& in);
RegressionModel load(const std::filesystem::path& path);

}  // namespace rulattack
