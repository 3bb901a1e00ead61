#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mgnm/decoder.hpp"
#include "mgnm/graph.hpp"
#include "mgnm/providers.hpp"
#include "mgnm/registry.hpp"
#include "mgnm/scene.hpp"

namespace mgnm {

struct ModelConfig {
  graph::GraphDims dims;
  int backbone_dim = 64;
  /// Refinement iterations of the MFI loop.
  int steps = 2;
  graph::StageFlags stages;
  int decoder_layers = 2;
  int decoder_heads = 4;
  /// Zero means 4 * 2 * node_dim.
  int decoder_ff = 0;
  int num_actions = 2;
  bool adapter = true;
  double adapter_mix = 0.5;
  bool adapter_trainable_mix = true;
  double score_lambda = 1.0;
  PairPolicy pairs;
  DetectionPolicy detection;

  decoder::DecoderConfig decoder() const {
    return {decoder_layers, decoder_heads, 2 * dims.node_dim, decoder_ff, backbone_dim};
  }
  void validate() const;
  /// Identifies the parameter layout; checkpoints refuse to load across hashes.
  std::uint64_t hash() const;

  friend bool operator==(const ModelConfig& a, const ModelConfig& b);
};

/// Frozen per-image inputs: everything the detector and encoders provide.
struct SceneFeatures {
  std::string image_key;
  double width = 0.0;
  double height = 0.0;
  DetectionSet detections;
  PairTable pairs;
  Matrix appearance;        // nodes x d
  Matrix visual;            // 1 x d_v
  Matrix text_per_node;     // nodes x d_t
  Matrix interaction_text;  // P x d_t
  Matrix backbone;          // K x d_b
};

/// Filters detections, enumerates pairs and looks up every embedding. Returns
/// nullopt when the image has no human-object pair.
std::optional<SceneFeatures> extract_features(const SceneRecord& scene, const ProviderSet& providers,
                                              const NameRegistry& categories, const ModelConfig& config);

/// Same, over an explicit (already filtered) detection list. `raw_count` is the
/// size of the detector output the source indices refer to; -1 infers it.
/// Non-empty `appearance_keys` replace the derived per-index keys; a non-empty
/// `embedding_key` replaces image_key for the visual and backbone lookups.
std::optional<SceneFeatures> extract_features(const std::string& image_key, double width, double height,
                                              const DetectionSet& detections, const ProviderSet& providers,
                                              const NameRegistry& categories, const ModelConfig& config,
                                              int raw_count = -1,
                                              std::span<const std::string> appearance_keys = {},
                                              const std::string& embedding_key = {});

struct ForwardResult {
  ad::Var logits;         // P x A
  ad::Var refined_pairs;  // P x 2d, output of the MFI loop
  ad::Var decoded;        // P x 2d
  std::vector<std::vector<Matrix>> attention;
  std::vector<graph::IterationSnapshot> snapshots;
};

/// The trainable interaction predictor: adapters, MFI graph, decoder, action head.
class Model {
 public:
  explicit Model(ModelConfig config);

  const ModelConfig& config() const noexcept { return config_; }
  void register_parameters(ParameterStore& store) const;
  ForwardResult forward(ad::Tape& tape, ParameterStore& store, const SceneFeatures& scene,
                        bool keep_snapshots = false) const;

 private:
  ModelConfig config_;
};

}  // namespace mgnm
