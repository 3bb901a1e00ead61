#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mgnm/geometry.hpp"

namespace mgnm {

/// Annotated HOI triplet. The object box is absent for V-COCO occluded objects.
struct HoiGroundTruth {
  std::string image_key;
  Box human;
  std::optional<Box> object;
  CategoryId object_category = 0;
  ActionId action = 0;

  friend bool operator==(const HoiGroundTruth&, const HoiGroundTruth&) = default;
};

/// Scored <human, action, object> triplet.
struct HoiPrediction {
  std::string image_key;
  Box human;
  /// Box::empty_sentinel() when the predictor asserts the object is not visible.
  Box object;
  CategoryId object_category = 0;
  ActionId action = 0;
  /// Index into the HOI registry, or -1 when not resolved.
  int hoi_class = -1;
  double score = 0.0;
  double logit = 0.0;
  double human_score = 1.0;
  double object_score = 1.0;
  double action_probability = 0.0;
  int pair_index = -1;

  friend bool operator==(const HoiPrediction&, const HoiPrediction&) = default;
};

/// One image: frozen detector output plus its annotations.
struct SceneRecord {
  std::string image_key;
  double width = 0.0;
  double height = 0.0;
  std::vector<Detection> detections;
  std::vector<HoiGroundTruth> ground_truth;
  /// Appearance embedding key per raw detection; empty means "<image_key>#<index>".
  std::vector<std::string> appearance_keys;
  /// Key of the image-level embeddings (visual vector, backbone map); empty means image_key.
  std::string embedding_key;
};

}  // namespace mgnm
