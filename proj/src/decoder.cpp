#include "mgnm/decoder.hpp"

#include <algorithm>
#include <cmath>

#include "mgnm/errors.hpp"

namespace mgnm::decoder {

namespace {
std::string block(int layer) { return "decoder." + std::to_string(layer); }
nn::AttentionConfig attention_config(const DecoderConfig& cfg) { return {cfg.width, cfg.width, cfg.heads}; }
}  // namespace

void DecoderConfig::validate() const {
  if (layers < 0) throw ConfigError("decoder layers must be non-negative");
  if (width < 2) throw ConfigError("decoder width must be at least 2");
  if (heads < 1 || width % heads != 0) throw ConfigError("decoder heads must divide the width");
  if (backbone_dim < 1) throw ConfigError("backbone dim must be positive");
}

void register_parameters(ParameterStore& store, const DecoderConfig& cfg, int num_actions) {
  cfg.validate();
  if (num_actions < 1) throw ConfigError("need at least one action");
  if (cfg.layers > 0) nn::register_linear(store, "decoder.kv_proj", cfg.backbone_dim, cfg.width);
  for (int l = 0; l < cfg.layers; ++l) {
    nn::register_cross_attention(store, block(l) + ".attn", attention_config(cfg));
    nn::register_layer_norm(store, block(l) + ".ln1", cfg.width);
    nn::register_linear(store, block(l) + ".ff1", cfg.width, cfg.feedforward());
    nn::register_linear(store, block(l) + ".ff2", cfg.feedforward(), cfg.width);
    nn::register_layer_norm(store, block(l) + ".ln2", cfg.width);
  }
  nn::register_linear(store, "head.action", cfg.width, num_actions);
}

DecodeResult decode(ad::Tape& tape, ParameterStore& store, const DecoderConfig& cfg,
                    const ad::Var& pair_features, const ad::Var& backbone) {
  if (pair_features.cols() != cfg.width) throw ShapeError("decoder: pair feature width mismatch");
  DecodeResult result;
  result.out = pair_features;
  if (cfg.layers == 0) return result;
  if (backbone.cols() != cfg.backbone_dim) throw ShapeError("decoder: backbone width mismatch");
  const ad::Var memory = nn::linear(tape, store, "decoder.kv_proj", backbone);
  ad::Var x = pair_features;
  for (int l = 0; l < cfg.layers; ++l) {
    nn::AttentionResult attn = nn::cross_attention(tape, store, block(l) + ".attn", attention_config(cfg), x, memory);
    x = nn::layer_norm(tape, store, block(l) + ".ln1", ad::add(x, attn.out));
    const ad::Var ff = nn::linear(tape, store, block(l) + ".ff2", ad::relu(nn::linear(tape, store, block(l) + ".ff1", x)));
    x = nn::layer_norm(tape, store, block(l) + ".ln2", ad::add(x, ff));
    result.attention.push_back(std::move(attn.weights));
  }
  result.out = x;
  return result;
}

ad::Var action_logits(ad::Tape& tape, ParameterStore& store, const ad::Var& decoded) {
  return nn::linear(tape, store, "head.action", decoded);
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<HoiPrediction> compose_scores(const Matrix& logits, const PairTable& pairs,
                                          const DetectionSet& detections, const HoiRegistry& registry,
                                          double lambda, const std::string& image_key) {
  if (lambda < 0.0) throw ConfigError("score exponent lambda must be non-negative");
  if (static_cast<std::size_t>(logits.rows()) != pairs.size()) throw ShapeError("one logit row per pair expected");
  std::vector<HoiPrediction> out;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const Detection& h = detections.at(static_cast<std::size_t>(pairs.pairs[p].human));
    const Detection& o = detections.at(static_cast<std::size_t>(pairs.pairs[p].object));
    const double detector = std::pow(h.score * o.score, lambda);
    for (Eigen::Index a = 0; a < logits.cols(); ++a) {
      const auto hoi = registry.find(static_cast<ActionId>(a), o.category);
      if (!hoi) continue;
      HoiPrediction pred;
      pred.image_key = image_key;
      pred.human = h.box;
      pred.object = o.box;
      pred.object_category = o.category;
      pred.action = static_cast<ActionId>(a);
      pred.hoi_class = *hoi;
      pred.logit = logits(static_cast<Eigen::Index>(p), a);
      pred.action_probability = sigmoid(pred.logit);
      pred.human_score = h.score;
      pred.object_score = o.score;
      pred.score = detector * pred.action_probability;
      pred.pair_index = static_cast<int>(p);
      out.push_back(std::move(pred));
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const HoiPrediction& a, const HoiPrediction& b) { return a.score > b.score; });
  return out;
}

}  // namespace mgnm::decoder
