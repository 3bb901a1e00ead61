#pragma once

#include <string>
#include <vector>

#include "mgnm/autodiff.hpp"
#include "mgnm/parameter_store.hpp"

/// Learned building blocks. Each block registers its tensors under a name
/// prefix and reads them back from the store on every forward pass.
namespace mgnm::nn {

inline constexpr double kLayerNormEps = 1e-5;

/// x * W + b with W stored as `<name>.w` (in x out) and b as `<name>.b` (1 x out).
void register_linear(ParameterStore& store, const std::string& name, int in_dim, int out_dim);
ad::Var linear(ad::Tape& tape, ParameterStore& store, const std::string& name, const ad::Var& x);

/// `<name>.gain` initialized to one, `<name>.bias` to zero.
void register_layer_norm(ParameterStore& store, const std::string& name, int dim);
ad::Var layer_norm(ad::Tape& tape, ParameterStore& store, const std::string& name, const ad::Var& x);

struct FusionConfig {
  int branches = 4;
  int in_a = 0;
  int in_b = 0;
  int out_dim = 0;

  void validate() const;
};

// Multi-branch fusion. Branch k computes relu(a U_k) * relu(b Vm_k + c_k) at
// width out_dim / branches; the branches are concatenated and mixed by W_out.
// U, Vm and c hold all branches side by side (column block k is branch k).
// `a` may be a single row, broadcast over the rows of `b`.
void register_mbf(ParameterStore& store, const std::string& name, const FusionConfig& cfg);
ad::Var mbf(ad::Tape& tape, ParameterStore& store, const std::string& name, const FusionConfig& cfg,
            const ad::Var& a, const ad::Var& b);

// Multimodality fusion: layer_norm(mlp_x(x) * sigmoid(mlp_s(s)) + x), both MLPs
// with one hidden layer of width d_x.
void register_mmf(ParameterStore& store, const std::string& name, int d_x, int d_s);
ad::Var mmf(ad::Tape& tape, ParameterStore& store, const std::string& name, const ad::Var& x,
            const ad::Var& s);

struct AttentionConfig {
  int dim_q = 0;
  int dim_kv = 0;
  int heads = 1;

  void validate() const;
};

struct AttentionResult {
  ad::Var out;
  /// One Q x K softmax matrix per head.
  std::vector<Matrix> weights;
};

/// Multi-head scaled dot-product attention of queries over a key/value set,
/// with learned query, key, value and output projections.
void register_cross_attention(ParameterStore& store, const std::string& name, const AttentionConfig& cfg);
AttentionResult cross_attention(ad::Tape& tape, ParameterStore& store, const std::string& name,
                                const AttentionConfig& cfg, const ad::Var& q, const ad::Var& kv);

}  // namespace mgnm::nn
