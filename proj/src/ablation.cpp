#include "mgnm/ablation.hpp"

#include <chrono>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "mgnm/errors.hpp"

namespace mgnm::evaluation {

graph::StageFlags without_stage(graph::StageFlags flags, const std::string& stage) {
  if (stage == "spatial") {
    flags.spatial = false;
  } else if (stage == "visual") {
    flags.visual = false;
  } else if (stage == "textual") {
    flags.textual = false;
  } else if (stage == "interaction") {
    flags.interaction = false;
  } else {
    throw ConfigError("unknown stage '" + stage + "' (expected spatial, visual, textual or interaction)");
  }
  return flags;
}

AblationReport ablation_run(const RunConfig& base, const Dataset& dataset, std::span<const std::string> stages,
                            const std::optional<std::filesystem::path>& out_dir) {
  std::vector<std::pair<std::string, graph::StageFlags>> plan{{"vanilla", base.model.stages}};
  for (const std::string& s : stages) plan.emplace_back("w/o " + s, without_stage(base.model.stages, s));

  AblationReport report;
  for (const auto& [label, flags] : plan) {
    RunConfig cfg = base;
    cfg.model.stages = flags;
    std::optional<std::filesystem::path> dir;
    if (out_dir) dir = *out_dir / (label == "vanilla" ? std::string("vanilla") : "without-" + label.substr(4));
    const auto start = std::chrono::steady_clock::now();
    RunOutcome run = run_experiment(cfg, dataset, dir);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.rows.push_back({label, flags, std::move(run.report), seconds});
  }
  return report;
}

std::string AblationReport::to_markdown() const {
  std::string out =
      "| Method | Default Full | Default Rare | Default Non-Rare | KO Full | KO Rare | KO Non-Rare |\n"
      "|---|---|---|---|---|---|---|\n";
  char buf[256];
  for (const AblationRow& r : rows) {
    const auto& d = r.report.hico_default;
    const auto& k = r.report.hico_known_object;
    std::snprintf(buf, sizeof buf, "| %s | %.4f | %.4f | %.4f | %.4f | %.4f | %.4f |\n", r.label.c_str(), d.full,
                  d.rare, d.non_rare, k.full, k.rare, k.non_rare);
    out += buf;
  }
  return out;
}

std::string AblationReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const AblationRow& r : rows) {
    rows_json.push_back({{"method", r.label},
                         {"stages",
                          {{"spatial", r.stages.spatial},
                           {"visual", r.stages.visual},
                           {"textual", r.stages.textual},
                           {"interaction", r.stages.interaction}}},
                         {"default", {{"full", r.report.hico_default.full},
                                      {"rare", r.report.hico_default.rare},
                                      {"non_rare", r.report.hico_default.non_rare}}},
                         {"known_object", {{"full", r.report.hico_known_object.full},
                                           {"rare", r.report.hico_known_object.rare},
                                           {"non_rare", r.report.hico_known_object.non_rare}}},
                         {"seconds", r.seconds}});
  }
  return nlohmann::json{{"rows", rows_json}}.dump(2) + "\n";
}

}  // namespace mgnm::evaluation
