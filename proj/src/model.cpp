#include "mgnm/model.hpp"

#include <sstream>

#include "mgnm/errors.hpp"
#include "mgnm/rng.hpp"

namespace mgnm {

namespace {
const AdapterBlock visual_adapter(const ModelConfig& c) { return {"adapter.visual", c.dims.visual_dim}; }
const AdapterBlock text_adapter(const ModelConfig& c) { return {"adapter.text", c.dims.text_dim}; }
const AdapterBlock interaction_adapter(const ModelConfig& c) { return {"adapter.interaction", c.dims.text_dim}; }
}  // namespace

void ModelConfig::validate() const {
  if (dims.node_dim < 1 || dims.visual_dim < 1 || dims.text_dim < 1 || backbone_dim < 1) {
    throw ConfigError("model dims must be positive");
  }
  if (steps < 0) throw ConfigError("steps must be non-negative");
  if (num_actions < 1) throw ConfigError("num_actions must be at least 1");
  if (!(adapter_mix >= 0.0 && adapter_mix <= 1.0)) throw ConfigError("adapter_mix must lie in [0, 1]");
  if (score_lambda < 0.0) throw ConfigError("score_lambda must be non-negative");
  dims.adjacency_fusion().validate();
  dims.visual_fusion().validate();
  dims.textual_fusion().validate();
  decoder().validate();
  detection.validate();
}

std::uint64_t ModelConfig::hash() const {
  std::ostringstream s;
  s << dims.node_dim << ',' << dims.visual_dim << ',' << dims.text_dim << ',' << dims.branches << ','
    << backbone_dim << ',' << decoder_layers << ',' << decoder_heads << ',' << decoder().feedforward() << ','
    << num_actions << ',' << adapter << ',' << adapter_trainable_mix;
  return rng::hash(s.str());
}

bool operator==(const ModelConfig& a, const ModelConfig& b) {
  return a.dims.node_dim == b.dims.node_dim && a.dims.visual_dim == b.dims.visual_dim &&
         a.dims.text_dim == b.dims.text_dim && a.dims.branches == b.dims.branches &&
         a.backbone_dim == b.backbone_dim && a.steps == b.steps && a.stages == b.stages &&
         a.decoder_layers == b.decoder_layers && a.decoder_heads == b.decoder_heads &&
         a.decoder_ff == b.decoder_ff && a.num_actions == b.num_actions && a.adapter == b.adapter &&
         a.adapter_mix == b.adapter_mix && a.adapter_trainable_mix == b.adapter_trainable_mix &&
         a.score_lambda == b.score_lambda && a.pairs.persons_as_objects == b.pairs.persons_as_objects &&
         a.detection.score_threshold == b.detection.score_threshold &&
         a.detection.max_persons == b.detection.max_persons && a.detection.max_objects == b.detection.max_objects;
}

std::optional<SceneFeatures> extract_features(const SceneRecord& scene, const ProviderSet& providers,
                                              const NameRegistry& categories, const ModelConfig& config) {
  return extract_features(scene.image_key, scene.width, scene.height,
                          filter_detections(scene.detections, config.detection), providers, categories, config,
                          static_cast<int>(scene.detections.size()), scene.appearance_keys,
                          scene.embedding_key);
}

std::optional<SceneFeatures> extract_features(const std::string& image_key, double width, double height,
                                              const DetectionSet& detections, const ProviderSet& providers,
                                              const NameRegistry& categories, const ModelConfig& config,
                                              int raw_count, std::span<const std::string> appearance_keys,
                                              const std::string& embedding_key) {
  SceneFeatures f;
  try {
    f.pairs = enumerate_pairs(detections, config.pairs, width, height);
  } catch (const EmptyPairSet&) {
    return std::nullopt;
  }
  f.image_key = image_key;
  f.width = width;
  f.height = height;
  f.detections = detections;

  const auto nodes = static_cast<Eigen::Index>(detections.size());
  f.appearance.resize(nodes, config.dims.node_dim);
  f.text_per_node.resize(nodes, config.dims.text_dim);
  if (raw_count < 0) {
    raw_count = 0;
    for (const Detection& d : detections) raw_count = std::max(raw_count, d.source_index + 1);
  }
  for (Eigen::Index i = 0; i < nodes; ++i) {
    const Detection& d = detections[static_cast<std::size_t>(i)];
    if (appearance_keys.empty()) {
      f.appearance.row(i) = node_appearance(*providers.appearance, image_key, d.source_index, raw_count);
    } else {
      if (d.source_index < 0 || static_cast<std::size_t>(d.source_index) >= appearance_keys.size()) {
        throw MissingEmbedding("no appearance key for detection " + std::to_string(d.source_index) + " of '" +
                               image_key + "'");
      }
      f.appearance.row(i) =
          node_appearance(*providers.appearance, appearance_keys[static_cast<std::size_t>(d.source_index)]);
    }
    f.text_per_node.row(i) = providers.category_text(categories, d.category);
  }
  f.interaction_text.resize(static_cast<Eigen::Index>(f.pairs.size()), config.dims.text_dim);
  for (std::size_t p = 0; p < f.pairs.size(); ++p) {
    const CategoryId object = detections[static_cast<std::size_t>(f.pairs.pairs[p].object)].category;
    f.interaction_text.row(static_cast<Eigen::Index>(p)) = providers.interaction_text(categories, object);
  }
  const std::string& image_level = embedding_key.empty() ? image_key : embedding_key;
  f.visual = visual_embedding(*providers.visual, image_level);
  f.backbone = backbone_map(*providers.backbone, image_level);
  return f;
}

Model::Model(ModelConfig config) : config_(std::move(config)) { config_.validate(); }

void Model::register_parameters(ParameterStore& store) const {
  if (config_.adapter) {
    visual_adapter(config_).register_parameters(store, config_.adapter_trainable_mix, config_.adapter_mix);
    text_adapter(config_).register_parameters(store, config_.adapter_trainable_mix, config_.adapter_mix);
    interaction_adapter(config_).register_parameters(store, config_.adapter_trainable_mix, config_.adapter_mix);
  }
  graph::register_parameters(store, config_.dims);
  decoder::register_parameters(store, config_.decoder(), config_.num_actions);
}

ForwardResult Model::forward(ad::Tape& tape, ParameterStore& store, const SceneFeatures& scene,
                             bool keep_snapshots) const {
  graph::GraphContext ctx{tape, store, config_.dims};
  ad::Var visual = tape.constant(scene.visual);
  ad::Var text = tape.constant(scene.text_per_node);
  ad::Var interaction = tape.constant(scene.interaction_text);
  if (config_.adapter) {
    visual = visual_adapter(config_).apply(tape, store, visual);
    text = text_adapter(config_).apply(tape, store, text);
    interaction = interaction_adapter(config_).apply(tape, store, interaction);
  }

  graph::GraphState state(tape.constant(scene.appearance), scene.pairs);
  graph::MfiInputs inputs{tape.constant(scene.pairs.spatial), visual, text,
                          graph::project_interaction(ctx, interaction)};
  ForwardResult result;
  result.refined_pairs = graph::run_mfi(ctx, state, inputs, config_.steps, config_.stages,
                                        keep_snapshots ? &result.snapshots : nullptr);
  decoder::DecodeResult decoded =
      decoder::decode(tape, store, config_.decoder(), result.refined_pairs, tape.constant(scene.backbone));
  result.decoded = decoded.out;
  result.attention = std::move(decoded.attention);
  result.logits = decoder::action_logits(tape, store, result.decoded);
  return result;
}

}  // namespace mgnm
