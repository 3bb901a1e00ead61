#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mgnm/registry.hpp"
#include "mgnm/scene.hpp"

namespace mgnm::evaluation {

inline constexpr int kRareThreshold = 10;

/// HOI classes with their training-instance counts; a class is rare when it has
/// fewer than ten training instances.
struct SplitRegistry {
  HoiRegistry classes;
  std::vector<int> train_counts;

  /// Counts training ground truth per class. Throws ConfigError for a triplet
  /// whose (action, object) pair is not registered.
  static SplitRegistry from_training(const HoiRegistry& classes, std::span<const HoiGroundTruth> train_gts);

  bool rare(int hoi_class) const { return train_counts.at(static_cast<std::size_t>(hoi_class)) < kRareThreshold; }
  std::vector<int> rare_classes() const;
};

/// Greedy matching within each (image, HOI class) group. Predictions are visited
/// in the given order (descending score expected); each claims the unmatched
/// ground truth of its class with the highest min(IoU_h, IoU_o) above the
/// threshold, ties going to the lower ground-truth index. Returns one TP flag
/// per prediction. Ground truth without an object box never matches here.
std::vector<bool> match_predictions(std::span<const HoiPrediction> predictions,
                                    std::span<const HoiGroundTruth> ground_truth, const HoiRegistry& registry,
                                    double iou_threshold = 0.5);

/// Area under the precision-envelope PR curve. `flags` follow descending score.
double average_precision(const std::vector<bool>& flags, std::size_t num_gt);

enum class HicoSetting { Default, KnownObject };

struct HicoMetrics {
  double full = 0.0;
  double rare = 0.0;
  double non_rare = 0.0;
  /// Evaluable classes (at least one test ground truth) per subset.
  int full_classes = 0;
  int rare_classes = 0;
  int non_rare_classes = 0;
  /// Per-class AP; nullopt for classes without test ground truth.
  std::vector<std::optional<double>> class_ap;
};

HicoMetrics evaluate_hico(std::span<const HoiPrediction> predictions, std::span<const HoiGroundTruth> ground_truth,
                          const SplitRegistry& splits, HicoSetting setting);

enum class VcocoScenario { One = 1, Two = 2 };

struct VcocoMetrics {
  double role_ap = 0.0;
  int actions = 0;
  std::vector<std::optional<double>> action_ap;
};

/// Role AP with one role per action. For ground truth lacking an object box,
/// Scenario 1 demands the empty-box sentinel as predicted object; Scenario 2
/// ignores the object.
VcocoMetrics evaluate_vcoco(std::span<const HoiPrediction> predictions, std::span<const HoiGroundTruth> ground_truth,
                            int num_actions, VcocoScenario scenario, double iou_threshold = 0.5);

/// Precision/recall points in descending-score order, for plotting.
struct PrCurve {
  std::vector<double> recall;
  std::vector<double> precision;
};
PrCurve pr_curve(const std::vector<bool>& flags, std::size_t num_gt);

/// TP flags in global score order for one HOI class, as evaluate_hico sees them.
std::vector<bool> class_flags(std::span<const HoiPrediction> predictions, std::span<const HoiGroundTruth> ground_truth,
                              const HoiRegistry& registry, int hoi_class, HicoSetting setting, std::size_t* num_gt);

}  // namespace mgnm::evaluation
