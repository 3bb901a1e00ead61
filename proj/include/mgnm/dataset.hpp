#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mgnm/registry.hpp"
#include "mgnm/scene.hpp"

namespace mgnm {

inline constexpr int kDatasetVersion = 1;
inline constexpr int kPredictionsVersion = 1;

/// Annotated scenes plus the registries that give their ids meaning.
struct Dataset {
  std::string name;
  NameRegistry categories;
  NameRegistry actions;
  HoiRegistry hoi;
  /// Base seed of the stub providers the scenes were generated against.
  std::uint64_t provider_seed = 0;
  std::vector<SceneRecord> train;
  std::vector<SceneRecord> test;

  /// Throws UnknownCategory for unregistered category or action ids and
  /// ConfigError for a ground-truth triplet outside the HOI registry.
  void validate() const;

  std::vector<HoiGroundTruth> train_ground_truth() const;
  std::vector<HoiGroundTruth> test_ground_truth() const;

  friend bool operator==(const Dataset&, const Dataset&);
};

/// JSON container (docs/FORMATS.md). Load validates registries; malformed scenes
/// raise ParseError carrying the scene's position (train scenes first).
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path);
std::string dataset_to_json(const Dataset& dataset);
Dataset dataset_from_json(const std::string& text);

void save_predictions(const std::filesystem::path& path, std::span<const HoiPrediction> predictions);
std::vector<HoiPrediction> load_predictions(const std::filesystem::path& path);

}  // namespace mgnm
