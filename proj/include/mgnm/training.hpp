#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mgnm/autodiff.hpp"
#include "mgnm/dataset.hpp"
#include "mgnm/model.hpp"
#include "mgnm/parameter_store.hpp"

namespace mgnm::training {

struct TrainConfig {
  double lr = 1e-4;
  int epochs = 200;
  int batch_size = 8;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
  double clip_norm = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Run the evaluation hook every this many epochs (0 disables it).
  int eval_every = 0;
  /// Multiply lr by `lr_drop_factor` at each listed epoch; empty keeps lr constant.
  std::vector<int> lr_drop_epochs;
  double lr_drop_factor = 0.1;

  void validate() const;
  double lr_at(int epoch) const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// target[p, a] = 1 iff some ground truth with action a has both boxes above
/// `iou_threshold` against pair p and the pair's object category. Ground truth
/// without an object box never supervises a pair.
Matrix build_targets(const PairTable& pairs, const DetectionSet& detections,
                     std::span<const HoiGroundTruth> ground_truth, int num_actions, double iou_threshold = 0.5);

/// Mean over entries of -alpha_t (1 - p_t)^gamma log p_t, computed in the
/// softplus form so |logit| up to 100 stays finite.
double focal_loss_value(const Matrix& logits, const Matrix& targets, double alpha, double gamma);
ad::Var focal_loss(const ad::Var& logits, const Matrix& targets, double alpha, double gamma);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// First and second moments per parameter plus the step counter.
struct AdamState {
  std::map<std::string, Matrix> m;
  std::map<std::string, Matrix> v;
  std::int64_t step = 0;
};

/// Decoupled-weight-decay Adam over every trainable parameter. Trainable tensors
/// the backward pass did not reach are skipped; `strict` makes them an error.
/// Throws MissingGradient when no gradient is populated at all.
void adamw_step(ParameterStore& store, AdamState& state, const AdamConfig& cfg, bool strict = false);

/// Optimizer sidecar: magic "MGNMOPTM", u32 version, i64 step, i32 epoch,
/// u32 count, then {name, u32 rows, u32 cols, float64 m values, float64 v values}.
void save_optimizer(const std::filesystem::path& path, const AdamState& state, int epoch);
/// Returns the completed-epoch counter stored alongside the moments.
int load_optimizer(const std::filesystem::path& path, AdamState& state);

/// A training image with its frozen inputs and targets.
struct PreparedScene {
  SceneFeatures features;
  Matrix targets;
};

std::vector<PreparedScene> prepare_scenes(std::span<const SceneRecord> scenes, const ProviderSet& providers,
                                          const NameRegistry& categories, const ModelConfig& model);

struct EpochRecord {
  int epoch = 0;
  std::int64_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
  double seconds = 0.0;
  std::optional<double> eval_map;
};

class Trainer {
 public:
  using EvalHook = std::function<double(const Model&, ParameterStore&)>;

  Trainer(const Model& model, TrainConfig config, std::vector<PreparedScene> scenes);

  ParameterStore& store() noexcept { return store_; }
  const ParameterStore& store() const noexcept { return store_; }
  const Model& model() const noexcept { return model_; }
  const TrainConfig& config() const noexcept { return config_; }
  const std::vector<PreparedScene>& scenes() const noexcept { return scenes_; }
  const AdamState& optimizer() const noexcept { return adam_; }
  int epoch() const noexcept { return epoch_; }
  const std::vector<EpochRecord>& history() const noexcept { return history_; }

  void set_eval_hook(EvalHook hook) { eval_ = std::move(hook); }
  /// Per-epoch JSON lines are appended here when set.
  void set_metrics_log(std::filesystem::path path) { metrics_log_ = std::move(path); }
  /// Checkpoint, optimizer sidecar and diagnostics land here when set.
  void set_checkpoint_dir(std::filesystem::path dir) { checkpoint_dir_ = std::move(dir); }

  /// Mean focal loss over every scene without updating anything.
  double dataset_loss();

  /// One pass over the scenes in a seeded order. Throws NonFiniteLoss after
  /// writing a diagnostics file when a loss is NaN or infinite.
  EpochRecord run_epoch();
  /// Runs epochs until `config.epochs` have completed.
  const std::vector<EpochRecord>& train();

  /// Writes checkpoint.bin and optimizer.bin into `dir`.
  void save(const std::filesystem::path& dir) const;
  /// Restores parameters, moments and the epoch counter.
  void resume(const std::filesystem::path& dir);

 private:
  double scene_step(const PreparedScene& scene);
  void dump_diagnostics(const PreparedScene& scene, double loss) const;

  Model model_;
  TrainConfig config_;
  std::vector<PreparedScene> scenes_;
  ParameterStore store_;
  AdamState adam_;
  int epoch_ = 0;
  std::vector<EpochRecord> history_;
  EvalHook eval_;
  std::optional<std::filesystem::path> metrics_log_;
  std::optional<std::filesystem::path> checkpoint_dir_;
};

}  // namespace mgnm::training
