#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "mgnm/dataset.hpp"

namespace mgnm::synth {

enum class TaskKind { SpatialRule, VisualRule, CategoryRule, Mixed };

std::string_view to_string(TaskKind kind);
/// Accepts "spatial-rule", "visual-rule", "category-rule" and "mixed". Throws ConfigError.
TaskKind parse_task_kind(std::string_view text);

struct SynthTaskSpec {
  TaskKind kind = TaskKind::SpatialRule;
  /// Non-person object categories.
  int num_categories = 4;
  /// Zero picks the task's natural count (2 per rule family, 6 for mixed).
  int num_actions = 0;
  int train_scenes = 256;
  int test_scenes = 64;
  /// Object categories are drawn with weight (rank + 1)^-exponent; zero is balanced.
  double long_tail = 0.0;
  std::uint64_t seed = 0;
  /// Stub-provider base seed the visual rule reads; defaults to `seed`.
  std::optional<std::uint64_t> provider_seed;
  /// Width of the stub image embedding the visual rule reads.
  int visual_dim = 64;
  double image_width = 640.0;
  double image_height = 480.0;

  int actions() const;
  void validate() const;
};

// Label rules. Every person x non-person-object pair receives one label per rule
// family the task includes:
//   spatial-rule   a0 iff IoU > 0.3 and the human centre lies above the object centre, else a1
//   visual-rule    a0 iff coordinate 0 of the stub image embedding is positive, else a1
//   category-rule  a0 iff the scene holds an object of odd category id, else a1
// Mixed tasks use actions 0-1, 2-3 and 4-5 for the three families in that order.
inline constexpr double kSpatialIouThreshold = 0.3;

/// Seeded scenes with 1-3 persons and 1-4 objects whose detections are the
/// ground-truth boxes with scores in [0.5, 1]. Geometry near a rule boundary is
/// resampled so labels keep a margin. Embeddings no rule reads come from shared
/// keys: "synthetic/person" and "synthetic/object" for appearance, and
/// "synthetic/image" for the image-level lookups unless the visual rule is active.
Dataset generate_synthetic(const SynthTaskSpec& spec);

}  // namespace mgnm::synth
