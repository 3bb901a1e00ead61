#include "mgnm/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mgnm/errors.hpp"
#include "mgnm/rng.hpp"

namespace mgnm {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const char* section, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(std::string("config section '") + section + "' must be an object");
  const std::set<std::string> known(keys.begin(), keys.end());
  for (const auto& [k, _] : j.items()) {
    if (!known.contains(k)) throw ConfigError(std::string("unknown key '") + k + "' in section '" + section + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json model_json(const ModelConfig& m) {
  return {{"node_dim", m.dims.node_dim},
          {"visual_dim", m.dims.visual_dim},
          {"text_dim", m.dims.text_dim},
          {"backbone_dim", m.backbone_dim},
          {"branches", m.dims.branches},
          {"steps", m.steps},
          {"stages",
           {{"spatial", m.stages.spatial},
            {"visual", m.stages.visual},
            {"textual", m.stages.textual},
            {"interaction", m.stages.interaction}}},
          {"decoder_layers", m.decoder_layers},
          {"decoder_heads", m.decoder_heads},
          {"decoder_ff", m.decoder_ff},
          {"adapter", m.adapter},
          {"adapter_mix", m.adapter_mix},
          {"adapter_trainable_mix", m.adapter_trainable_mix},
          {"score_lambda", m.score_lambda},
          {"persons_as_objects", m.pairs.persons_as_objects},
          {"detection",
           {{"score_threshold", m.detection.score_threshold},
            {"max_persons", m.detection.max_persons},
            {"max_objects", m.detection.max_objects}}}};
}

void model_from(const json& j, ModelConfig& m) {
  reject_unknown(j, "model",
                 {"node_dim", "visual_dim", "text_dim", "backbone_dim", "branches", "steps", "stages", "decoder_layers",
                  "decoder_heads", "decoder_ff", "adapter", "adapter_mix", "adapter_trainable_mix", "score_lambda",
                  "persons_as_objects", "detection"});
  read(j, "node_dim", m.dims.node_dim);
  read(j, "visual_dim", m.dims.visual_dim);
  read(j, "text_dim", m.dims.text_dim);
  read(j, "backbone_dim", m.backbone_dim);
  read(j, "branches", m.dims.branches);
  read(j, "steps", m.steps);
  if (j.contains("stages")) {
    const json& s = j["stages"];
    reject_unknown(s, "model.stages", {"spatial", "visual", "textual", "interaction"});
    read(s, "spatial", m.stages.spatial);
    read(s, "visual", m.stages.visual);
    read(s, "textual", m.stages.textual);
    read(s, "interaction", m.stages.interaction);
  }
  read(j, "decoder_layers", m.decoder_layers);
  read(j, "decoder_heads", m.decoder_heads);
  read(j, "decoder_ff", m.decoder_ff);
  read(j, "adapter", m.adapter);
  read(j, "adapter_mix", m.adapter_mix);
  read(j, "adapter_trainable_mix", m.adapter_trainable_mix);
  read(j, "score_lambda", m.score_lambda);
  read(j, "persons_as_objects", m.pairs.persons_as_objects);
  if (j.contains("detection")) {
    const json& d = j["detection"];
    reject_unknown(d, "model.detection", {"score_threshold", "max_persons", "max_objects"});
    read(d, "score_threshold", m.detection.score_threshold);
    read(d, "max_persons", m.detection.max_persons);
    read(d, "max_objects", m.detection.max_objects);
  }
}

json providers_json(const RunConfig& c) {
  return {{"source", c.providers.source == ProviderSource::Stub ? "stub" : "file"},
          {"seed", c.provider_seed ? json(*c.provider_seed) : json(nullptr)},
          {"backbone_grid", c.providers.backbone_grid},
          {"files", c.providers.files},
          {"text_keys", c.providers.text_keys},
          {"interaction_keys", c.providers.interaction_keys}};
}

void providers_from(const json& j, RunConfig& c) {
  reject_unknown(j, "providers", {"source", "seed", "backbone_grid", "files", "text_keys", "interaction_keys"});
  if (j.contains("source")) {
    const auto s = j["source"].get<std::string>();
    if (s == "stub") {
      c.providers.source = ProviderSource::Stub;
    } else if (s == "file") {
      c.providers.source = ProviderSource::File;
    } else {
      throw ConfigError("providers.source must be \"stub\" or \"file\"");
    }
  }
  if (j.contains("seed") && !j["seed"].is_null()) c.provider_seed = j["seed"].get<std::uint64_t>();
  read(j, "backbone_grid", c.providers.backbone_grid);
  read(j, "files", c.providers.files);
  read(j, "text_keys", c.providers.text_keys);
  read(j, "interaction_keys", c.providers.interaction_keys);
}

json train_json(const training::TrainConfig& t) {
  return {{"lr", t.lr},
          {"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"focal_alpha", t.focal_alpha},
          {"focal_gamma", t.focal_gamma},
          {"weight_decay", t.weight_decay},
          {"seed", t.seed},
          {"clip_norm", t.clip_norm},
          {"beta1", t.beta1},
          {"beta2", t.beta2},
          {"adam_eps", t.adam_eps},
          {"eval_every", t.eval_every},
          {"lr_drop_epochs", t.lr_drop_epochs},
          {"lr_drop_factor", t.lr_drop_factor}};
}

void train_from(const json& j, training::TrainConfig& t) {
  reject_unknown(j, "train",
                 {"lr", "epochs", "batch_size", "focal_alpha", "focal_gamma", "weight_decay", "seed", "clip_norm",
                  "beta1", "beta2", "adam_eps", "eval_every", "lr_drop_epochs", "lr_drop_factor"});
  read(j, "lr", t.lr);
  read(j, "epochs", t.epochs);
  read(j, "batch_size", t.batch_size);
  read(j, "focal_alpha", t.focal_alpha);
  read(j, "focal_gamma", t.focal_gamma);
  read(j, "weight_decay", t.weight_decay);
  read(j, "seed", t.seed);
  read(j, "clip_norm", t.clip_norm);
  read(j, "beta1", t.beta1);
  read(j, "beta2", t.beta2);
  read(j, "adam_eps", t.adam_eps);
  read(j, "eval_every", t.eval_every);
  read(j, "lr_drop_epochs", t.lr_drop_epochs);
  read(j, "lr_drop_factor", t.lr_drop_factor);
}

json synth_json(const synth::SynthTaskSpec& s) {
  return {{"task", std::string(synth::to_string(s.kind))},
          {"num_categories", s.num_categories},
          {"num_actions", s.num_actions},
          {"train_scenes", s.train_scenes},
          {"test_scenes", s.test_scenes},
          {"long_tail", s.long_tail},
          {"seed", s.seed},
          {"provider_seed", s.provider_seed ? json(*s.provider_seed) : json(nullptr)},
          {"visual_dim", s.visual_dim},
          {"image_width", s.image_width},
          {"image_height", s.image_height}};
}

void synth_from(const json& j, synth::SynthTaskSpec& s) {
  reject_unknown(j, "synth",
                 {"task", "num_categories", "num_actions", "train_scenes", "test_scenes", "long_tail", "seed",
                  "provider_seed", "visual_dim", "image_width", "image_height"});
  if (j.contains("task")) s.kind = synth::parse_task_kind(j["task"].get<std::string>());
  read(j, "num_categories", s.num_categories);
  read(j, "num_actions", s.num_actions);
  read(j, "train_scenes", s.train_scenes);
  read(j, "test_scenes", s.test_scenes);
  read(j, "long_tail", s.long_tail);
  read(j, "seed", s.seed);
  if (j.contains("provider_seed") && !j["provider_seed"].is_null()) s.provider_seed = j["provider_seed"].get<std::uint64_t>();
  read(j, "visual_dim", s.visual_dim);
  read(j, "image_width", s.image_width);
  read(j, "image_height", s.image_height);
}

json to_json(const RunConfig& c) {
  return {{"model", model_json(c.model)},
          {"providers", providers_json(c)},
          {"train", train_json(c.train)},
          {"eval", {{"iou_threshold", c.eval.iou_threshold}}},
          {"synth", synth_json(c.synth)},
          {"output_dir", c.output_dir}};
}

}  // namespace

void RunConfig::validate() const {
  ModelConfig m = model;
  m.num_actions = std::max(m.num_actions, 1);
  m.validate();
  train.validate();
  synth.validate();
  if (!(eval.iou_threshold > 0.0 && eval.iou_threshold < 1.0)) throw ConfigError("eval.iou_threshold must lie in (0, 1)");
  if (providers.backbone_grid < 1) throw ConfigError("providers.backbone_grid must be positive");
}

ProviderConfig RunConfig::resolved_providers(const Dataset& dataset) const {
  ProviderConfig p = providers;
  p.seed = provider_seed.value_or(dataset.provider_seed);
  p.node_dim = model.dims.node_dim;
  p.visual_dim = model.dims.visual_dim;
  p.text_dim = model.dims.text_dim;
  p.backbone_dim = model.backbone_dim;
  return p;
}

ModelConfig RunConfig::resolved_model(const Dataset& dataset) const {
  ModelConfig m = model;
  m.num_actions = static_cast<int>(dataset.actions.size());
  return m;
}

std::uint64_t RunConfig::hash() const {
  json j = to_json(*this);
  j.erase("output_dir");
  return rng::hash(j.dump());
}

RunConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  try {
    reject_unknown(j, "root", {"model", "providers", "train", "eval", "synth", "output_dir"});
    if (j.contains("model")) model_from(j["model"], c.model);
    if (j.contains("providers")) providers_from(j["providers"], c);
    if (j.contains("train")) train_from(j["train"], c.train);
    if (j.contains("eval")) {
      reject_unknown(j["eval"], "eval", {"iou_threshold"});
      read(j["eval"], "iou_threshold", c.eval.iou_threshold);
    }
    if (j.contains("synth")) synth_from(j["synth"], c.synth);
    read(j, "output_dir", c.output_dir);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("ill-typed config value: ") + e.what());
  }
  c.validate();
  return c;
}

std::string config_to_json(const RunConfig& config) { return to_json(config).dump(2) + "\n"; }

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return config_from_json(s.str());
}

void apply_environment(RunConfig& config) {
  if (const char* seed = std::getenv("MGNM_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(seed, &end, 10);
    if (end == seed || *end != '\0') throw ConfigError("MGNM_SEED must be a non-negative integer");
    config.train.seed = v;
  }
  if (const char* dir = std::getenv("MGNM_OUT_DIR")) {
    if (*dir == '\0') throw ConfigError("MGNM_OUT_DIR is empty");
    config.output_dir = dir;
  }
}

}  // namespace mgnm
