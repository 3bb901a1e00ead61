#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "mgnm/dataset.hpp"
#include "mgnm/model.hpp"
#include "mgnm/providers.hpp"
#include "mgnm/synthetic.hpp"
#include "mgnm/training.hpp"

namespace mgnm {

struct EvalConfig {
  double iou_threshold = 0.5;

  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

/// Everything a run depends on, read from a JSON file with the sections
/// model, providers, train, eval and synth.
struct RunConfig {
  ModelConfig model;
  /// Provider source, files and key overrides; dims come from `model`.
  ProviderConfig providers;
  /// Stub base seed; unset means the dataset's recorded provider seed.
  std::optional<std::uint64_t> provider_seed;
  training::TrainConfig train;
  EvalConfig eval;
  synth::SynthTaskSpec synth;
  std::string output_dir = "runs";

  void validate() const;
  /// Provider settings for `dataset` with dims taken from the model section.
  ProviderConfig resolved_providers(const Dataset& dataset) const;
  /// Model settings with the action count taken from `dataset`.
  ModelConfig resolved_model(const Dataset& dataset) const;
  std::uint64_t hash() const;
};

/// Parses a config document. Missing keys keep their defaults; unknown keys
/// and ill-typed values raise ConfigError.
RunConfig config_from_json(const std::string& text);
std::string config_to_json(const RunConfig& config);
RunConfig load_config(const std::filesystem::path& path);

/// MGNM_SEED overrides train.seed; MGNM_OUT_DIR overrides output_dir.
void apply_environment(RunConfig& config);

}  // namespace mgnm
