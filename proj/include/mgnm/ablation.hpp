#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mgnm/pipeline.hpp"

namespace mgnm::evaluation {

struct AblationRow {
  /// "vanilla" or "w/o <stage>".
  std::string label;
  graph::StageFlags stages;
  EvalReport report;
  double seconds = 0.0;
};

struct AblationReport {
  std::vector<AblationRow> rows;

  std::string to_markdown() const;
  std::string to_json() const;
};

/// Parses "spatial", "visual", "textual" and "interaction". Throws ConfigError.
graph::StageFlags without_stage(graph::StageFlags flags, const std::string& stage);

/// Trains and evaluates the vanilla model plus one model per listed stage with
/// that stage disabled. Every row shares the seed and the data.
AblationReport ablation_run(const RunConfig& base, const Dataset& dataset, std::span<const std::string> stages,
                            const std::optional<std::filesystem::path>& out_dir = std::nullopt);

}  // namespace mgnm::evaluation
