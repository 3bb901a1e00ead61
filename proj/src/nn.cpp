#include "mgnm/nn.hpp"

#include <cmath>

#include "mgnm/errors.hpp"

namespace mgnm::nn {

void register_linear(ParameterStore& store, const std::string& name, int in_dim, int out_dim) {
  store.add_uniform(name + ".w", in_dim, out_dim, in_dim);
  store.add_constant(name + ".b", 1, out_dim, 0.0);
}

ad::Var linear(ad::Tape& tape, ParameterStore& store, const std::string& name, const ad::Var& x) {
  const ad::Var w = tape.param(store, name + ".w");
  if (x.cols() != w.rows()) {
    throw ShapeError(name + ": input width " + std::to_string(x.cols()) + ", expected " +
                     std::to_string(w.rows()));
  }
  return ad::add_row(ad::matmul(x, w), tape.param(store, name + ".b"));
}

void register_layer_norm(ParameterStore& store, const std::string& name, int dim) {
  store.add_constant(name + ".gain", 1, dim, 1.0);
  store.add_constant(name + ".bias", 1, dim, 0.0);
}

ad::Var layer_norm(ad::Tape& tape, ParameterStore& store, const std::string& name, const ad::Var& x) {
  return ad::layer_norm(x, tape.param(store, name + ".gain"), tape.param(store, name + ".bias"),
                        kLayerNormEps);
}

void FusionConfig::validate() const {
  if (branches < 1 || in_a < 1 || in_b < 1 || out_dim < 1) throw ConfigError("fusion dims must be positive");
  if (out_dim % branches != 0) {
    throw ConfigError("fusion out_dim " + std::to_string(out_dim) + " not divisible by " +
                      std::to_string(branches) + " branches");
  }
}

void register_mbf(ParameterStore& store, const std::string& name, const FusionConfig& cfg) {
  cfg.validate();
  store.add_uniform(name + ".u", cfg.in_a, cfg.out_dim, cfg.in_a);
  store.add_uniform(name + ".vm", cfg.in_b, cfg.out_dim, cfg.in_b);
  store.add_constant(name + ".vm_b", 1, cfg.out_dim, 0.0);
  store.add_uniform(name + ".w_out", cfg.out_dim, cfg.out_dim, cfg.out_dim);
  store.add_constant(name + ".b_out", 1, cfg.out_dim, 0.0);
}

ad::Var mbf(ad::Tape& tape, ParameterStore& store, const std::string& name, const FusionConfig& cfg,
            const ad::Var& a, const ad::Var& b) {
  if (a.cols() != cfg.in_a || b.cols() != cfg.in_b) throw ShapeError(name + ": input width mismatch");
  if (a.rows() != b.rows() && a.rows() != 1) throw ShapeError(name + ": row count mismatch");
  ad::Var left = ad::relu(ad::matmul(a, tape.param(store, name + ".u")));
  if (a.rows() != b.rows()) left = ad::repeat_rows(left, b.rows());
  const ad::Var right = ad::relu(
      ad::add_row(ad::matmul(b, tape.param(store, name + ".vm")), tape.param(store, name + ".vm_b")));
  const ad::Var fused = ad::mul(left, right);
  return ad::add_row(ad::matmul(fused, tape.param(store, name + ".w_out")),
                     tape.param(store, name + ".b_out"));
}

void register_mmf(ParameterStore& store, const std::string& name, int d_x, int d_s) {
  register_linear(store, name + ".x1", d_x, d_x);
  register_linear(store, name + ".x2", d_x, d_x);
  register_linear(store, name + ".s1", d_s, d_x);
  register_linear(store, name + ".s2", d_x, d_x);
  register_layer_norm(store, name + ".ln", d_x);
}

ad::Var mmf(ad::Tape& tape, ParameterStore& store, const std::string& name, const ad::Var& x,
            const ad::Var& s) {
  if (x.rows() != s.rows()) throw ShapeError(name + ": row count mismatch");
  const ad::Var content = linear(tape, store, name + ".x2", ad::relu(linear(tape, store, name + ".x1", x)));
  const ad::Var gate =
      ad::sigmoid(linear(tape, store, name + ".s2", ad::relu(linear(tape, store, name + ".s1", s))));
  return layer_norm(tape, store, name + ".ln", ad::add(ad::mul(content, gate), x));
}

void AttentionConfig::validate() const {
  if (dim_q < 1 || dim_kv < 1 || heads < 1) throw ConfigError("attention dims must be positive");
  if (dim_q % heads != 0) {
    throw ConfigError("attention heads " + std::to_string(heads) + " do not divide width " +
                      std::to_string(dim_q));
  }
}

void register_cross_attention(ParameterStore& store, const std::string& name, const AttentionConfig& cfg) {
  cfg.validate();
  register_linear(store, name + ".q", cfg.dim_q, cfg.dim_q);
  // A key bias shifts every score of a query equally and cancels in the softmax.
  store.add_uniform(name + ".k.w", cfg.dim_kv, cfg.dim_q, cfg.dim_kv);
  register_linear(store, name + ".v", cfg.dim_kv, cfg.dim_q);
  register_linear(store, name + ".o", cfg.dim_q, cfg.dim_q);
}

AttentionResult cross_attention(ad::Tape& tape, ParameterStore& store, const std::string& name,
                                const AttentionConfig& cfg, const ad::Var& q, const ad::Var& kv) {
  if (q.cols() != cfg.dim_q || kv.cols() != cfg.dim_kv) throw ShapeError(name + ": input width mismatch");
  if (kv.rows() < 1) throw ShapeError(name + ": empty key set");
  const int head_dim = cfg.dim_q / cfg.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

  const ad::Var queries = linear(tape, store, name + ".q", q);
  const ad::Var wk = tape.param(store, name + ".k.w");
  const ad::Var wv = tape.param(store, name + ".v.w");
  const ad::Var bv = tape.param(store, name + ".v.b");

  AttentionResult result;
  std::vector<ad::Var> heads;
  heads.reserve(static_cast<std::size_t>(cfg.heads));
  for (int h = 0; h < cfg.heads; ++h) {
    const Eigen::Index at = static_cast<Eigen::Index>(h) * head_dim;
    const ad::Var qh = ad::slice_cols(queries, at, head_dim);
    // Scores are evaluated as (q_h Wk_h^T) kv^T and values as (A kv) Wv_h, which
    // costs O(Q) instead of O(K) projections per head.
    const ad::Var scores = ad::scale(ad::matmul_nt(ad::matmul_nt(qh, ad::slice_cols(wk, at, head_dim)), kv), inv_sqrt);
    const ad::Var attn = ad::softmax_rows(scores);
    result.weights.push_back(attn.value());
    const ad::Var context = ad::add_row(ad::matmul(ad::matmul(attn, kv), ad::slice_cols(wv, at, head_dim)),
                                        ad::slice_cols(bv, at, head_dim));
    heads.push_back(context);
  }
  result.out = linear(tape, store, name + ".o", ad::concat_cols(heads));
  return result;
}

}  // namespace mgnm::nn
