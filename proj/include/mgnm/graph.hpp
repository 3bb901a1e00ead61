#pragma once

#include <vector>

#include "mgnm/autodiff.hpp"
#include "mgnm/geometry.hpp"
#include "mgnm/nn.hpp"
#include "mgnm/parameter_store.hpp"

/// The four-stage multi-level feature interaction over a human-object pair graph.
namespace mgnm::graph {

/// Which stages of the refinement loop run. Disabling `spatial` replaces the
/// fused pair initialization by the plain H (+) O concatenation and the learned
/// adjacency by all-ones weights.
struct StageFlags {
  bool spatial = true;
  bool visual = true;
  bool textual = true;
  bool interaction = true;

  friend bool operator==(const StageFlags&, const StageFlags&) = default;
};

struct GraphDims {
  int node_dim = 64;
  int visual_dim = 64;
  int text_dim = 64;
  int branches = 4;

  nn::FusionConfig adjacency_fusion() const { return {branches, 2 * node_dim, kSpatialDim, node_dim}; }
  nn::FusionConfig visual_fusion() const { return {branches, visual_dim, node_dim, node_dim}; }
  nn::FusionConfig textual_fusion() const { return {branches, text_dim, node_dim, node_dim}; }
};

/// Registers mmf.spatial, mbf.wg, wg.linear, mbf.v, mbf.t, the stage layer norms and proj.i.
void register_parameters(ParameterStore& store, const GraphDims& dims);

struct GraphContext {
  ad::Tape& tape;
  ParameterStore& store;
  GraphDims dims;
};

/// Mutable state of one image. Row p of `pairs` and `adjacency` belongs to pair p
/// of the table; node rows follow the detection order (persons first).
struct GraphState {
  ad::Var nodes;      // (m + n) x d
  ad::Var pairs;      // P x 2d, unset until spatial_stage_init
  ad::Var adjacency;  // P x d, recomputed every iteration
  const PairTable* table = nullptr;
  int step = 0;

  GraphState(const ad::Var& node_features, const PairTable& pair_table);

  /// Rows of the stacked (human-role, object-role) message matrix incident to each node.
  const std::vector<std::vector<int>>& message_groups() const { return groups_; }
  const std::vector<int>& human_index() const { return human_; }
  const std::vector<int>& object_index() const { return object_; }

 private:
  std::vector<std::vector<int>> groups_;
  std::vector<int> human_;
  std::vector<int> object_;
};

struct PairGather {
  ad::Var human;   // P x d
  ad::Var object;  // P x d
};

/// H[p] = N[human(p)], O[p] = N[object(p)] against the current node features.
PairGather gather_pairs(const GraphState& state);

/// E = MMF(H (+) O, S). Must run once, before the loop.
void spatial_stage_init(GraphContext& ctx, GraphState& state, const ad::Var& spatial);
/// E = H (+) O, the initialization used when the spatial stage is ablated.
void plain_pair_init(GraphState& state);

/// W_G = Linear(MBF(H (+) O, S)), P x d.
ad::Var compute_adjacency(GraphContext& ctx, const GraphState& state, const ad::Var& spatial);

/// N = LN(N + mean over incident pairs of relu(W_G[p] * MBF_v(V, N_endpoint))).
void visual_stage(GraphContext& ctx, GraphState& state, const ad::Var& visual);
/// Same propagation with per-node category text embeddings.
void textual_stage(GraphContext& ctx, GraphState& state, const ad::Var& text_per_node);

/// Projects per-pair interaction prompt embeddings (P x d_t) to pair width (P x 2d).
ad::Var project_interaction(GraphContext& ctx, const ad::Var& interaction_text);
/// E = LN(LN(E + H (+) O) + I).
void interaction_stage(GraphContext& ctx, GraphState& state, const ad::Var& interaction);

struct MfiInputs {
  ad::Var spatial;               // P x 36
  ad::Var visual;                // 1 x d_v
  ad::Var text_per_node;         // (m + n) x d_t
  ad::Var interaction_per_pair;  // P x 2d, already projected
};

struct IterationSnapshot {
  int step = 0;
  Matrix nodes;
  Matrix pairs;
  Matrix adjacency;
};

/// Spatial initialization followed by `steps` iterations of adjacency, visual,
/// textual and interaction stages. Returns the refined pair features.
ad::Var run_mfi(GraphContext& ctx, GraphState& state, const MfiInputs& inputs, int steps,
                const StageFlags& flags, std::vector<IterationSnapshot>* dump = nullptr);

}  // namespace mgnm::graph
