#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "rulattack/data_pipeline.hpp"
#include "rulattack/model.hpp"

namespace rulattack {

enum class AttackKind { kFgsm, kBim };

std::string_view attack_name(AttackKind kind);
/// "fgsm" or "bim", case-insensitive; throws ConfigError.
AttackKind parse_attack_kind(std::string_view text);

/// Largest admissible L-infinity budget on the normalized scale.
inline constexpr double kMaxEpsilon = 1.4;
inline constexpr std::size_t kDefaultBimIterations = 100;

struct AttackConfig {
  AttackKind kind = AttackKind::kFgsm;
  double epsilon = 0.3;
  std::size_t iterations = kDefaultBimIterations;
  /// BIM step; epsilon / iterations when unset.
  std::optional<double> alpha;
  /// Additionally clamp the perturbed window to [0,1].
  bool clip_to_data_range = false;
  /// Use the model's clean prediction instead of the ground-truth label.
  bool use_model_label = false;
  /// Threads used by craft_batch; results do not depend on it.
  std::size_t workers = 1;

  double step_size() const;
  /// Throws EpsilonOutOfRange or ConfigError.
  void validate() const;

  static AttackConfig fgsm(double epsilon);
  static AttackConfig bim(double epsilon, std::size_t iterations = kDefaultBimIterations);
};

struct AdversarialExample {
  SensorWindow original;
  SensorWindow perturbed;
  Tensor perturbation;  // perturbed = original + perturbation
  double label_used = 0.0;
  /// The loss gradient vanished at the clean window, so nothing moved.
  bool zero_gradient = false;
};

/// Three-valued sign: sign(0) == 0.
inline double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

AdversarialExample craft_fgsm(const RegressionModel& model, const SensorWindow& window, double rul_label,
                              double epsilon, bool clip_to_data_range = false);

AdversarialExample craft_bim(const RegressionModel& model, const SensorWindow& window, double rul_label,
                             double epsilon, std::size_t iterations, double alpha,
                             bool clip_to_data_range = false);

AdversarialExample craft(const RegressionModel& model, const SensorWindow& window, double rul_label,
                         const AttackConfig& config);

/// Elementwise equal to crafting each window on its own. Fails fast on
/// the first model error.
std::vector<AdversarialExample> craft_batch(const RegressionModel& model,
                                            std::span<const LabeledWindow> windows,
                                            const AttackConfig& config);

}  // namespace rulattack
