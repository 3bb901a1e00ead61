#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mgnm/config.hpp"
#include "mgnm/evaluation.hpp"
#include "mgnm/model.hpp"
#include "mgnm/training.hpp"

namespace mgnm {

/// One normalized attention matrix (pairs x backbone cells) of a decoder head.
struct AttentionMap {
  std::string image_key;
  int layer = 0;
  int head = 0;
  Matrix weights;
};

std::vector<SceneFeatures> extract_all(std::span<const SceneRecord> scenes, const ProviderSet& providers,
                                       const NameRegistry& categories, const ModelConfig& model);

/// Inference on one image: forward pass, then score composition.
std::vector<HoiPrediction> predict_scene(const Model& model, ParameterStore& store, const SceneFeatures& scene,
                                         const HoiRegistry& registry, std::vector<AttentionMap>* attention = nullptr);
std::vector<HoiPrediction> predict(const Model& model, ParameterStore& store, std::span<const SceneFeatures> scenes,
                                   const HoiRegistry& registry);

struct EvalReport {
  evaluation::HicoMetrics hico_default;
  evaluation::HicoMetrics hico_known_object;
  evaluation::VcocoMetrics vcoco_scenario1;
  evaluation::VcocoMetrics vcoco_scenario2;
};

/// Every metric setting against the dataset's test split, with rare classes
/// taken from its training split.
EvalReport evaluate_all(std::span<const HoiPrediction> predictions, const Dataset& dataset);
std::string report_to_json(const EvalReport& report);
/// Plain-text table of the same numbers.
std::string report_to_text(const EvalReport& report);

struct RunOutcome {
  std::vector<training::EpochRecord> history;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  EvalReport report;
  std::vector<HoiPrediction> predictions;
  ParameterStore store;
  ModelConfig model;
};

/// Trains on the dataset's training split and evaluates on its test split.
/// With `out_dir`, writes metrics.jsonl, the checkpoint and optimizer state,
/// predictions.json and report.json there.
RunOutcome run_experiment(const RunConfig& config, const Dataset& dataset,
                          const std::optional<std::filesystem::path>& out_dir = std::nullopt);

}  // namespace mgnm
