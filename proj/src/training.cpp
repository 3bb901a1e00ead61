#include "mgnm/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "mgnm/errors.hpp"
#include "mgnm/rng.hpp"

namespace mgnm::training {

namespace {

constexpr char kOptimizerMagic[9] = "MGNMOPTM";
constexpr std::uint32_t kOptimizerVersion = 1;

double softplus(double x) noexcept { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double stable_sigmoid(double x) noexcept {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Signed margin z = x for positives, -x for negatives; p_t = sigmoid(z).
struct FocalTerm {
  double loss;
  double dz;
};

FocalTerm focal_term(double z, double alpha_t, double gamma) {
  const double q = stable_sigmoid(-z);  // 1 - p_t
  const double nll = softplus(-z);      // -log p_t
  const double w = gamma == 0.0 ? 1.0 : std::pow(q, gamma);
  return {alpha_t * w * nll, -alpha_t * w * (gamma * (1.0 - q) * nll + q)};
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (epochs < 0) throw ConfigError("train.epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
  if (!(focal_alpha > 0.0 && focal_alpha < 1.0)) throw ConfigError("train.focal_alpha must lie in (0, 1)");
  if (!(focal_gamma >= 0.0)) throw ConfigError("train.focal_gamma must be non-negative");
  if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be non-negative");
  if (!(clip_norm > 0.0)) throw ConfigError("train.clip_norm must be positive");
  if (eval_every < 0) throw ConfigError("train.eval_every must be non-negative");
}

double TrainConfig::lr_at(int epoch) const {
  double rate = lr;
  for (int e : lr_drop_epochs) {
    if (epoch >= e) rate *= lr_drop_factor;
  }
  return rate;
}

Matrix build_targets(const PairTable& pairs, const DetectionSet& detections,
                     std::span<const HoiGroundTruth> ground_truth, int num_actions, double iou_threshold) {
  Matrix targets = Matrix::Zero(static_cast<Eigen::Index>(pairs.size()), num_actions);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const Detection& h = detections[static_cast<std::size_t>(pairs.pairs[p].human)];
    const Detection& o = detections[static_cast<std::size_t>(pairs.pairs[p].object)];
    for (const HoiGroundTruth& gt : ground_truth) {
      if (!gt.object || gt.object_category != o.category) continue;
      if (gt.action < 0 || gt.action >= num_actions) {
        throw ConfigError("ground-truth action " + std::to_string(gt.action) + " outside the action registry");
      }
      if (iou(h.box, gt.human) > iou_threshold && iou(o.box, *gt.object) > iou_threshold) {
        targets(static_cast<Eigen::Index>(p), gt.action) = 1.0;
      }
    }
  }
  return targets;
}

double focal_loss_value(const Matrix& logits, const Matrix& targets, double alpha, double gamma) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols()) {
    throw ShapeError("focal loss: logits and targets differ in shape");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const bool positive = targets.data()[i] > 0.5;
    const double z = positive ? logits.data()[i] : -logits.data()[i];
    total += focal_term(z, positive ? alpha : 1.0 - alpha, gamma).loss;
  }
  return logits.size() > 0 ? total / static_cast<double>(logits.size()) : 0.0;
}

ad::Var focal_loss(const ad::Var& logits, const Matrix& targets, double alpha, double gamma) {
  const Matrix& x = logits.value();
  if (x.rows() != targets.rows() || x.cols() != targets.cols()) {
    throw ShapeError("focal loss: logits and targets differ in shape");
  }
  const double n = static_cast<double>(std::max<Eigen::Index>(x.size(), 1));
  Matrix dx(x.rows(), x.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const bool positive = targets.data()[i] > 0.5;
    const double sign = positive ? 1.0 : -1.0;
    const FocalTerm t = focal_term(sign * x.data()[i], positive ? alpha : 1.0 - alpha, gamma);
    total += t.loss;
    dx.data()[i] = sign * t.dz / n;
  }
  Matrix out(1, 1);
  out(0, 0) = total / n;
  ad::Tape& tape = logits.tape();
  return tape.record(std::move(out), {logits}, [&tape, logits, dx = std::move(dx)](const Matrix& g) {
    tape.accumulate(logits, dx * g(0, 0));
  });
}

void adamw_step(ParameterStore& store, AdamState& state, const AdamConfig& cfg, bool strict) {
  bool any = false;
  for (auto& [name, p] : store) {
    if (!p.trainable) continue;
    if (!p.grad_populated) {
      if (strict) throw MissingGradient("no gradient for trainable parameter " + name);
      continue;
    }
    any = true;
  }
  if (!any) throw MissingGradient("optimizer step without any populated gradient");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, p] : store) {
    if (!p.trainable || !p.grad_populated) continue;
    Matrix& m = state.m[name];
    Matrix& v = state.v[name];
    if (m.size() == 0) {
      m = Matrix::Zero(p.value.rows(), p.value.cols());
      v = Matrix::Zero(p.value.rows(), p.value.cols());
    }
    p.value *= 1.0 - cfg.lr * cfg.weight_decay;
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * p.grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= cfg.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
  }
}

void save_optimizer(const std::filesystem::path& path, const AdamState& state, int epoch) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open optimizer state for writing: " + path.string());
  binary::put_magic(out, kOptimizerMagic);
  binary::put_uint<std::uint32_t>(out, kOptimizerVersion);
  binary::put_uint<std::uint64_t>(out, static_cast<std::uint64_t>(state.step));
  binary::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(epoch));
  binary::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(state.m.size()));
  for (const auto& [name, m] : state.m) {
    const Matrix& v = state.v.at(name);
    binary::put_string(out, name);
    binary::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
    binary::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) binary::put_f64(out, m.data()[i]);
    for (Eigen::Index i = 0; i < v.size(); ++i) binary::put_f64(out, v.data()[i]);
  }
  if (!out) throw Error("failed writing optimizer state: " + path.string());
}

int load_optimizer(const std::filesystem::path& path, AdamState& state) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open optimizer state: " + path.string());
  binary::expect_magic(in, kOptimizerMagic, "optimizer state");
  const auto version = binary::get_uint<std::uint32_t>(in, "optimizer version");
  if (version != kOptimizerVersion) {
    throw VersionError("unsupported optimizer state version " + std::to_string(version));
  }
  AdamState loaded;
  loaded.step = static_cast<std::int64_t>(binary::get_uint<std::uint64_t>(in, "step"));
  const auto epoch = static_cast<int>(binary::get_uint<std::uint32_t>(in, "epoch"));
  const auto count = binary::get_uint<std::uint32_t>(in, "record count");
  for (std::uint32_t r = 0; r < count; ++r) {
    try {
      const std::string name = binary::get_string(in, "name");
      const auto rows = binary::get_uint<std::uint32_t>(in, "rows");
      const auto cols = binary::get_uint<std::uint32_t>(in, "cols");
      Matrix m(rows, cols);
      Matrix v(rows, cols);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = binary::get_f64(in, "first moment");
      for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = binary::get_f64(in, "second moment");
      loaded.m[name] = std::move(m);
      loaded.v[name] = std::move(v);
    } catch (const ParseError&) {
      throw ParseError("truncated optimizer state", r);
    }
  }
  state = std::move(loaded);
  return epoch;
}

std::vector<PreparedScene> prepare_scenes(std::span<const SceneRecord> scenes, const ProviderSet& providers,
                                          const NameRegistry& categories, const ModelConfig& model) {
  std::vector<PreparedScene> out;
  out.reserve(scenes.size());
  for (const SceneRecord& scene : scenes) {
    auto features = extract_features(scene, providers, categories, model);
    if (!features) continue;
    Matrix targets = build_targets(features->pairs, features->detections, scene.ground_truth, model.num_actions);
    out.push_back({std::move(*features), std::move(targets)});
  }
  return out;
}

Trainer::Trainer(const Model& model, TrainConfig config, std::vector<PreparedScene> scenes)
    : model_(model), config_(std::move(config)), scenes_(std::move(scenes)), store_(config_.seed) {
  config_.validate();
  if (scenes_.empty()) throw ConfigError("training set has no image with a human-object pair");
  model_.register_parameters(store_);
  store_.quantize_to_float();
}

double Trainer::dataset_loss() {
  double total = 0.0;
  for (const PreparedScene& scene : scenes_) {
    ad::Tape tape(false);
    const ForwardResult r = model_.forward(tape, store_, scene.features);
    total += focal_loss_value(r.logits.value(), scene.targets, config_.focal_alpha, config_.focal_gamma);
  }
  return total / static_cast<double>(scenes_.size());
}

double Trainer::scene_step(const PreparedScene& scene) {
  ad::Tape tape;
  const ForwardResult r = model_.forward(tape, store_, scene.features);
  const ad::Var loss = focal_loss(r.logits, scene.targets, config_.focal_alpha, config_.focal_gamma);
  const double value = loss.value()(0, 0);
  if (!std::isfinite(value)) {
    dump_diagnostics(scene, value);
    throw NonFiniteLoss("non-finite loss on image " + scene.features.image_key + " at epoch " +
                        std::to_string(epoch_ + 1));
  }
  tape.backward(loss);
  return value;
}

void Trainer::dump_diagnostics(const PreparedScene& scene, double loss) const {
  if (!checkpoint_dir_) return;
  std::filesystem::create_directories(*checkpoint_dir_);
  nlohmann::json d;
  d["image"] = scene.features.image_key;
  d["epoch"] = epoch_ + 1;
  d["step"] = adam_.step;
  d["loss"] = std::isnan(loss) ? "nan" : (loss > 0 ? "inf" : "-inf");
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, p] : store_) {
    params[name] = {{"finite", p.value.allFinite()}, {"max_abs", p.value.cwiseAbs().maxCoeff()}};
  }
  d["parameters"] = params;
  std::ofstream(*checkpoint_dir_ / "diagnostics.json") << d.dump(2) << '\n';
}

EpochRecord Trainer::run_epoch() {
  const auto start = std::chrono::steady_clock::now();
  const double lr = config_.lr_at(epoch_);
  const AdamConfig adam{lr, config_.beta1, config_.beta2, config_.adam_eps, config_.weight_decay};
  const std::uint64_t key = rng::hash("epoch-order", config_.seed) ^ rng::splitmix64(static_cast<std::uint64_t>(epoch_));
  const std::vector<std::size_t> order = rng::permutation(scenes_.size(), key);

  double loss_sum = 0.0;
  double norm_sum = 0.0;
  int batches = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config_.batch_size)) {
    const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config_.batch_size));
    store_.zero_grad();
    for (std::size_t i = begin; i < end; ++i) loss_sum += scene_step(scenes_[order[i]]);
    store_.scale_grads(1.0 / static_cast<double>(end - begin));
    norm_sum += store_.clip_grad_norm(config_.clip_norm);
    adamw_step(store_, adam_, adam);
    ++batches;
  }
  store_.quantize_to_float();
  ++epoch_;

  EpochRecord rec;
  rec.epoch = epoch_;
  rec.step = adam_.step;
  rec.loss = loss_sum / static_cast<double>(scenes_.size());
  rec.lr = lr;
  rec.grad_norm = batches > 0 ? norm_sum / batches : 0.0;
  if (eval_ && config_.eval_every > 0 && (epoch_ % config_.eval_every == 0 || epoch_ == config_.epochs)) {
    rec.eval_map = eval_(model_, store_);
  }
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  history_.push_back(rec);

  if (metrics_log_) {
    nlohmann::json line{{"epoch", rec.epoch}, {"step", rec.step}, {"loss", rec.loss}, {"lr", rec.lr},
                        {"grad_norm", rec.grad_norm}, {"seconds", rec.seconds}};
    line["eval"] = rec.eval_map ? nlohmann::json(*rec.eval_map) : nlohmann::json(nullptr);
    std::ofstream(*metrics_log_, std::ios::app) << line.dump() << '\n';
  }
  if (checkpoint_dir_) save(*checkpoint_dir_);
  return rec;
}

const std::vector<EpochRecord>& Trainer::train() {
  while (epoch_ < config_.epochs) run_epoch();
  return history_;
}

void Trainer::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "checkpoint.bin", store_, model_.config().hash());
  save_optimizer(dir / "optimizer.bin", adam_, epoch_);
}

void Trainer::resume(const std::filesystem::path& dir) {
  load_checkpoint(dir / "checkpoint.bin", store_, model_.config().hash());
  epoch_ = load_optimizer(dir / "optimizer.bin", adam_);
  history_.clear();
}

}  // namespace mgnm::training
