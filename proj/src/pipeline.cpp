#include "mgnm/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mgnm/errors.hpp"

namespace mgnm {

using nlohmann::json;

std::vector<SceneFeatures> extract_all(std::span<const SceneRecord> scenes, const ProviderSet& providers,
                                       const NameRegistry& categories, const ModelConfig& model) {
  std::vector<SceneFeatures> out;
  out.reserve(scenes.size());
  for (const SceneRecord& s : scenes) {
    if (auto f = extract_features(s, providers, categories, model)) out.push_back(std::move(*f));
  }
  return out;
}

std::vector<HoiPrediction> predict_scene(const Model& model, ParameterStore& store, const SceneFeatures& scene,
                                         const HoiRegistry& registry, std::vector<AttentionMap>* attention) {
  ad::Tape tape(false);
  const ForwardResult r = model.forward(tape, store, scene);
  if (attention) {
    for (std::size_t l = 0; l < r.attention.size(); ++l) {
      for (std::size_t h = 0; h < r.attention[l].size(); ++h) {
        attention->push_back({scene.image_key, static_cast<int>(l), static_cast<int>(h), r.attention[l][h]});
      }
    }
  }
  return decoder::compose_scores(r.logits.value(), scene.pairs, scene.detections, registry,
                                 model.config().score_lambda, scene.image_key);
}

std::vector<HoiPrediction> predict(const Model& model, ParameterStore& store, std::span<const SceneFeatures> scenes,
                                   const HoiRegistry& registry) {
  std::vector<HoiPrediction> out;
  for (const SceneFeatures& s : scenes) {
    std::vector<HoiPrediction> p = predict_scene(model, store, s, registry);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

EvalReport evaluate_all(std::span<const HoiPrediction> predictions, const Dataset& dataset) {
  const std::vector<HoiGroundTruth> test = dataset.test_ground_truth();
  const auto splits = evaluation::SplitRegistry::from_training(dataset.hoi, dataset.train_ground_truth());
  EvalReport r;
  r.hico_default = evaluation::evaluate_hico(predictions, test, splits, evaluation::HicoSetting::Default);
  r.hico_known_object = evaluation::evaluate_hico(predictions, test, splits, evaluation::HicoSetting::KnownObject);
  const int actions = static_cast<int>(dataset.actions.size());
  r.vcoco_scenario1 = evaluation::evaluate_vcoco(predictions, test, actions, evaluation::VcocoScenario::One);
  r.vcoco_scenario2 = evaluation::evaluate_vcoco(predictions, test, actions, evaluation::VcocoScenario::Two);
  return r;
}

namespace {

json hico_json(const evaluation::HicoMetrics& m) {
  return {{"full", m.full},
          {"rare", m.rare},
          {"non_rare", m.non_rare},
          {"classes", {{"full", m.full_classes}, {"rare", m.rare_classes}, {"non_rare", m.non_rare_classes}}}};
}

}  // namespace

std::string report_to_json(const EvalReport& r) {
  json j{{"default", hico_json(r.hico_default)},
         {"known_object", hico_json(r.hico_known_object)},
         {"vcoco",
          {{"scenario1", r.vcoco_scenario1.role_ap},
           {"scenario2", r.vcoco_scenario2.role_ap},
           {"actions", r.vcoco_scenario1.actions}}}};
  return j.dump(2) + "\n";
}

std::string report_to_text(const EvalReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "setting        full    rare    non-rare\n"
                "default        %.4f  %.4f  %.4f\n"
                "known-object   %.4f  %.4f  %.4f\n"
                "classes        %d       %d       %d\n"
                "role AP        scenario1 %.4f  scenario2 %.4f\n",
                r.hico_default.full, r.hico_default.rare, r.hico_default.non_rare, r.hico_known_object.full,
                r.hico_known_object.rare, r.hico_known_object.non_rare, r.hico_default.full_classes,
                r.hico_default.rare_classes, r.hico_default.non_rare_classes, r.vcoco_scenario1.role_ap,
                r.vcoco_scenario2.role_ap);
  return buf;
}

RunOutcome run_experiment(const RunConfig& config, const Dataset& dataset,
                          const std::optional<std::filesystem::path>& out_dir) {
  const ModelConfig model_cfg = config.resolved_model(dataset);
  const Model model(model_cfg);
  const ProviderSet providers = ProviderSet::from_config(config.resolved_providers(dataset));
  const std::vector<SceneFeatures> test = extract_all(dataset.test, providers, dataset.categories, model_cfg);

  training::Trainer trainer(model, config.train,
                            training::prepare_scenes(dataset.train, providers, dataset.categories, model_cfg));
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    std::filesystem::remove(*out_dir / "metrics.jsonl");
    trainer.set_metrics_log(*out_dir / "metrics.jsonl");
    trainer.set_checkpoint_dir(*out_dir);
  }
  const auto splits = evaluation::SplitRegistry::from_training(dataset.hoi, dataset.train_ground_truth());
  const std::vector<HoiGroundTruth> test_gt = dataset.test_ground_truth();
  trainer.set_eval_hook([&](const Model& m, ParameterStore& store) {
    const auto preds = predict(m, store, test, dataset.hoi);
    return evaluation::evaluate_hico(preds, test_gt, splits, evaluation::HicoSetting::Default).full;
  });

  RunOutcome out;
  out.initial_loss = trainer.dataset_loss();
  out.history = trainer.train();
  out.final_loss = trainer.dataset_loss();
  out.predictions = predict(model, trainer.store(), test, dataset.hoi);
  out.report = evaluate_all(out.predictions, dataset);
  out.store = trainer.store();
  out.model = model_cfg;
  if (out_dir) {
    save_predictions(*out_dir / "predictions.json", out.predictions);
    std::ofstream(*out_dir / "report.json") << report_to_json(out.report);
  }
  return out;
}

}  // namespace mgnm
