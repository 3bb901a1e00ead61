#pragma once

#include <string>
#include <vector>

#include "mgnm/autodiff.hpp"
#include "mgnm/nn.hpp"
#include "mgnm/parameter_store.hpp"
#include "mgnm/registry.hpp"
#include "mgnm/scene.hpp"

namespace mgnm::decoder {

struct DecoderConfig {
  int layers = 2;
  int heads = 4;
  /// Query width, 2 * node dim.
  int width = 128;
  /// Zero means 4 * width.
  int ff_width = 0;
  int backbone_dim = 64;

  int feedforward() const { return ff_width > 0 ? ff_width : 4 * width; }
  void validate() const;
};

/// Registers the backbone projection, every decoder block and the action head.
void register_parameters(ParameterStore& store, const DecoderConfig& cfg, int num_actions);

struct DecodeResult {
  ad::Var out;
  /// attention[layer][head] is a P x K matrix whose rows sum to one.
  std::vector<std::vector<Matrix>> attention;
};

/// Pair features attend to the projected backbone map through `layers` blocks of
/// {cross-attention, residual, norm, feed-forward, residual, norm}. Output row p
/// stays aligned with input row p.
DecodeResult decode(ad::Tape& tape, ParameterStore& store, const DecoderConfig& cfg,
                    const ad::Var& pair_features, const ad::Var& backbone);

/// Multi-label action logits, P x A.
ad::Var action_logits(ad::Tape& tape, ParameterStore& store, const ad::Var& decoded);

double sigmoid(double x) noexcept;

/// score = (s_h * s_o)^lambda * sigmoid(logit) for every (pair, action) whose
/// (action, object category) is a registered HOI class; sorted by descending score.
std::vector<HoiPrediction> compose_scores(const Matrix& logits, const PairTable& pairs,
                                          const DetectionSet& detections, const HoiRegistry& registry,
                                          double lambda, const std::string& image_key);

}  // namespace mgnm::decoder
