#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mgnm/geometry.hpp"

namespace mgnm {

struct Parameter {
  Matrix value;
  /// Same shape as value; meaningful only when trainable.
  Matrix grad;
  bool trainable = true;
  /// Set by the first gradient accumulation since the last zero_grad().
  bool grad_populated = false;
};

/// Named tensors of the interaction predictor. Iteration is ordered by name.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) drawn as a pure function of
  /// (seed, name, shape).
  Parameter& add_uniform(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                         Eigen::Index fan_in, bool trainable = true);
  Parameter& add_constant(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                          double value, bool trainable = true);
  /// Takes an explicit initial value.
  Parameter& add(const std::string& name, Matrix value, bool trainable = true);

  bool contains(const std::string& name) const { return params_.contains(name); }
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  Matrix& value(const std::string& name) { return at(name).value; }

  std::size_t size() const noexcept { return params_.size(); }
  std::vector<std::string> names() const;
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  /// Global L2 norm over populated trainable gradients.
  double grad_norm() const;
  /// Scales gradients so their global norm is at most max_norm. Returns the pre-clip norm.
  double clip_grad_norm(double max_norm);
  /// Multiplies every populated gradient by `factor`.
  void scale_grads(double factor);

  /// Rounds every value to 32-bit precision (the checkpoint resolution).
  void quantize_to_float();

  /// Hash over (name, shape, trainable) of every entry: identifies a configuration.
  std::uint64_t layout_hash() const;

 private:
  Parameter& insert(const std::string& name, Parameter p);

  std::uint64_t seed_;
  std::map<std::string, Parameter> params_;
};

/// Checkpoint container: magic "MGNMCKPT", u32 version, u64 config hash, u32 count,
/// then per record {u32 name length, name bytes, u32 rows, u32 cols, u8 trainable,
/// rows*cols little-endian float32}.
void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store,
                     std::uint64_t config_hash);
/// Loads values into an already-initialized store. Throws VersionError on a
/// foreign version and ConfigError on hash, name, or shape mismatch.
void load_checkpoint(const std::filesystem::path& path, ParameterStore& store,
                     std::uint64_t config_hash);

}  // namespace mgnm
