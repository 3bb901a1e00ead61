#include "mgnm/graph.hpp"

#include "mgnm/errors.hpp"

namespace mgnm::graph {

void register_parameters(ParameterStore& store, const GraphDims& dims) {
  const int d = dims.node_dim;
  nn::register_mmf(store, "mmf.spatial", 2 * d, kSpatialDim);
  nn::register_mbf(store, "mbf.wg", dims.adjacency_fusion());
  nn::register_linear(store, "wg.linear", d, d);
  nn::register_mbf(store, "mbf.v", dims.visual_fusion());
  nn::register_mbf(store, "mbf.t", dims.textual_fusion());
  nn::register_layer_norm(store, "ln.visual", d);
  nn::register_layer_norm(store, "ln.textual", d);
  nn::register_layer_norm(store, "ln.interaction.pair", 2 * d);
  nn::register_layer_norm(store, "ln.interaction.final", 2 * d);
  nn::register_linear(store, "proj.i", dims.text_dim, 2 * d);
}

GraphState::GraphState(const ad::Var& node_features, const PairTable& pair_table)
    : nodes(node_features), table(&pair_table) {
  if (static_cast<std::size_t>(node_features.rows()) != pair_table.node_count()) {
    throw ShapeError("node feature rows do not match the pair table's node count");
  }
  const int P = static_cast<int>(pair_table.size());
  human_.reserve(pair_table.size());
  object_.reserve(pair_table.size());
  for (const PairIndex& p : pair_table.pairs) {
    human_.push_back(p.human);
    object_.push_back(p.object);
  }
  // Human-role messages occupy rows [0, P), object-role messages rows [P, 2P).
  groups_.resize(pair_table.node_count());
  for (std::size_t node = 0; node < pair_table.node_count(); ++node) {
    for (const Incidence& inc : pair_table.incident[node]) {
      groups_[node].push_back(inc.role == Role::Human ? inc.pair : P + inc.pair);
    }
  }
}

PairGather gather_pairs(const GraphState& state) {
  return {ad::gather_rows(state.nodes, state.human_index()), ad::gather_rows(state.nodes, state.object_index())};
}

namespace {

ad::Var concat_pair(const GraphState& state) {
  const PairGather g = gather_pairs(state);
  return ad::concat_cols(g.human, g.object);
}

void propagate(GraphContext& ctx, GraphState& state, const char* fusion, const nn::FusionConfig& cfg,
               const char* norm, const ad::Var& modality) {
  if (!state.adjacency.valid()) throw Error("adjacency must be computed before message passing");
  const ad::Var fused = nn::mbf(ctx.tape, ctx.store, fusion, cfg, modality, state.nodes);
  const ad::Var to_human = ad::relu(ad::mul(state.adjacency, ad::gather_rows(fused, state.human_index())));
  const ad::Var to_object = ad::relu(ad::mul(state.adjacency, ad::gather_rows(fused, state.object_index())));
  const ad::Var message = ad::segment_mean(ad::concat_rows(to_human, to_object), state.message_groups());
  state.nodes = nn::layer_norm(ctx.tape, ctx.store, norm, ad::add(state.nodes, message));
}

}  // namespace

void spatial_stage_init(GraphContext& ctx, GraphState& state, const ad::Var& spatial) {
  if (state.step != 0 || state.pairs.valid()) throw Error("spatial initialization runs once, before the loop");
  if (static_cast<std::size_t>(spatial.rows()) != state.table->size()) {
    throw ShapeError("spatial features must have one row per pair");
  }
  state.pairs = nn::mmf(ctx.tape, ctx.store, "mmf.spatial", concat_pair(state), spatial);
}

void plain_pair_init(GraphState& state) {
  if (state.step != 0 || state.pairs.valid()) throw Error("pair initialization runs once, before the loop");
  state.pairs = concat_pair(state);
}

ad::Var compute_adjacency(GraphContext& ctx, const GraphState& state, const ad::Var& spatial) {
  const ad::Var fused =
      nn::mbf(ctx.tape, ctx.store, "mbf.wg", ctx.dims.adjacency_fusion(), concat_pair(state), spatial);
  return nn::linear(ctx.tape, ctx.store, "wg.linear", fused);
}

void visual_stage(GraphContext& ctx, GraphState& state, const ad::Var& visual) {
  if (visual.rows() != 1) throw ShapeError("visual stage expects a single image embedding");
  propagate(ctx, state, "mbf.v", ctx.dims.visual_fusion(), "ln.visual", visual);
}

void textual_stage(GraphContext& ctx, GraphState& state, const ad::Var& text_per_node) {
  if (text_per_node.rows() != state.nodes.rows()) throw ShapeError("textual stage expects one embedding per node");
  propagate(ctx, state, "mbf.t", ctx.dims.textual_fusion(), "ln.textual", text_per_node);
}

ad::Var project_interaction(GraphContext& ctx, const ad::Var& interaction_text) {
  return nn::linear(ctx.tape, ctx.store, "proj.i", interaction_text);
}

void interaction_stage(GraphContext& ctx, GraphState& state, const ad::Var& interaction) {
  if (interaction.rows() != state.pairs.rows() || interaction.cols() != state.pairs.cols()) {
    throw ShapeError("interaction features must match the pair features");
  }
  const ad::Var enriched =
      nn::layer_norm(ctx.tape, ctx.store, "ln.interaction.pair", ad::add(state.pairs, concat_pair(state)));
  state.pairs = nn::layer_norm(ctx.tape, ctx.store, "ln.interaction.final", ad::add(enriched, interaction));
}

ad::Var run_mfi(GraphContext& ctx, GraphState& state, const MfiInputs& inputs, int steps,
                const StageFlags& flags, std::vector<IterationSnapshot>* dump) {
  if (steps < 0) throw ConfigError("iteration count must be non-negative");
  if (flags.spatial) {
    spatial_stage_init(ctx, state, inputs.spatial);
  } else {
    plain_pair_init(state);
  }
  const auto P = static_cast<Eigen::Index>(state.table->size());
  for (int i = 0; i < steps; ++i) {
    state.adjacency = flags.spatial ? compute_adjacency(ctx, state, inputs.spatial)
                                    : ctx.tape.constant(Matrix::Ones(P, ctx.dims.node_dim));
    if (flags.visual) visual_stage(ctx, state, inputs.visual);
    if (flags.textual) textual_stage(ctx, state, inputs.text_per_node);
    if (flags.interaction) interaction_stage(ctx, state, inputs.interaction_per_pair);
    ++state.step;
    if (dump) dump->push_back({state.step, state.nodes.value(), state.pairs.value(), state.adjacency.value()});
  }
  return state.pairs;
}

}  // namespace mgnm::graph
