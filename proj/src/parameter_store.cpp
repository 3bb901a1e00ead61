#include "mgnm/parameter_store.hpp"

#include <cmath>
#include <fstream>
#include <utility>
#include <vector>

#include "binary_io.hpp"
#include "mgnm/errors.hpp"
#include "mgnm/rng.hpp"

namespace mgnm {

namespace {
constexpr char kCheckpointMagic[9] = "MGNMCKPT";
constexpr std::uint32_t kCheckpointVersion = 1;

std::string shape_key(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  return name + "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}
}  // namespace

Parameter& ParameterStore::insert(const std::string& name, Parameter p) {
  if (params_.contains(name)) throw ConfigError("duplicate parameter name: " + name);
  p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
  return params_.emplace(name, std::move(p)).first->second;
}

Parameter& ParameterStore::add_uniform(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                                       Eigen::Index fan_in, bool trainable) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(fan_in, 1)));
  const std::uint64_t key = rng::hash(shape_key(name, rows, cols), seed_);
  Matrix v(rows, cols);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    v.data()[i] = bound * (2.0 * rng::uniform01(key, static_cast<std::uint64_t>(i)) - 1.0);
  }
  return insert(name, Parameter{std::move(v), {}, trainable, false});
}

Parameter& ParameterStore::add_constant(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                                        double value, bool trainable) {
  return insert(name, Parameter{Matrix::Constant(rows, cols, value), {}, trainable, false});
}

Parameter& ParameterStore::add(const std::string& name, Matrix value, bool trainable) {
  return insert(name, Parameter{std::move(value), {}, trainable, false});
}

Parameter& ParameterStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

const Parameter& ParameterStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& [_, p] : params_) {
    if (p.grad_populated) p.grad.setZero();
    p.grad_populated = false;
  }
}

double ParameterStore::grad_norm() const {
  double sq = 0.0;
  for (const auto& [_, p] : params_) {
    if (p.trainable && p.grad_populated) sq += p.grad.squaredNorm();
  }
  return std::sqrt(sq);
}

double ParameterStore::clip_grad_norm(double max_norm) {
  const double norm = grad_norm();
  if (norm > max_norm) scale_grads(max_norm / (norm + 1e-6));
  return norm;
}

void ParameterStore::scale_grads(double factor) {
  for (auto& [_, p] : params_) {
    if (p.trainable && p.grad_populated) p.grad *= factor;
  }
}

void ParameterStore::quantize_to_float() {
  for (auto& [_, p] : params_) {
    p.value = p.value.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
  }
}

std::uint64_t ParameterStore::layout_hash() const {
  std::string layout;
  for (const auto& [name, p] : params_) {
    layout += shape_key(name, p.value.rows(), p.value.cols());
    layout += p.trainable ? "T;" : "F;";
  }
  return rng::hash(layout);
}

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store,
                     std::uint64_t config_hash) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open checkpoint for writing: " + path.string());
  binary::put_magic(out, kCheckpointMagic);
  binary::put_uint<std::uint32_t>(out, kCheckpointVersion);
  binary::put_uint<std::uint64_t>(out, config_hash);
  binary::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, p] : store) {
    binary::put_string(out, name);
    binary::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rows()));
    binary::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.cols()));
    out.put(p.trainable ? 1 : 0);
    for (Eigen::Index i = 0; i < p.value.size(); ++i) binary::put_f32(out, p.value.data()[i]);
  }
  if (!out) throw Error("failed writing checkpoint: " + path.string());
}

void load_checkpoint(const std::filesystem::path& path, ParameterStore& store,
                     std::uint64_t config_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path.string());
  binary::expect_magic(in, kCheckpointMagic, "checkpoint");
  const auto version = binary::get_uint<std::uint32_t>(in, "checkpoint version");
  if (version != kCheckpointVersion) {
    throw VersionError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto hash = binary::get_uint<std::uint64_t>(in, "config hash");
  if (hash != config_hash) throw ConfigError("checkpoint was written for a different model configuration");
  const auto count = binary::get_uint<std::uint32_t>(in, "record count");
  if (count != store.size()) {
    throw ConfigError("checkpoint holds " + std::to_string(count) + " tensors, model has " +
                      std::to_string(store.size()));
  }
  std::vector<std::pair<Parameter*, Matrix>> loaded;
  for (std::uint32_t r = 0; r < count; ++r) {
    const std::string name = binary::get_string(in, "tensor name");
    if (!store.contains(name)) throw ConfigError("checkpoint tensor not in model: " + name);
    Parameter& p = store.at(name);
    const auto rows = binary::get_uint<std::uint32_t>(in, "rows");
    const auto cols = binary::get_uint<std::uint32_t>(in, "cols");
    if (rows != p.value.rows() || cols != p.value.cols()) {
      throw ConfigError("shape mismatch for " + name);
    }
    char trainable = 0;
    if (!in.get(trainable)) throw ParseError("truncated checkpoint", r);
    Matrix values(p.value.rows(), p.value.cols());
    try {
      for (Eigen::Index i = 0; i < values.size(); ++i) values.data()[i] = binary::get_f32(in, "values");
    } catch (const ParseError&) {
      throw ParseError("truncated checkpoint values for " + name, r);
    }
    loaded.emplace_back(&p, std::move(values));
  }
  for (auto& [param, values] : loaded) param->value = std::move(values);
}

}  // namespace mgnm
