// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 on any failure.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mgnm/ablation.hpp"
#include "mgnm/dataset.hpp"
#include "mgnm/graph.hpp"
#include "mgnm/nn.hpp"
#include "mgnm/pipeline.hpp"
#include "mgnm/synthetic.hpp"
#include "mgnm/training.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace mgnm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mgnm_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

bool same_values(const ParameterStore& a, const ParameterStore& b) {
  for (const auto& [name, p] : a) {
    if (!b.contains(name) || !(p.value == b.at(name).value)) return false;
  }
  return a.size() == b.size();
}

// ---- 1 ---------------------------------------------------------------------

Outcome ap_and_matcher() {
  Outcome o;
  double worst = 0.0;
  int classes = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto f = test::random_eval_fixture(seed, 50);
    const evaluation::SplitRegistry splits{f.registry, std::vector<int>(f.registry.size(), 20)};
    const auto m = evaluation::evaluate_hico(f.preds, f.gts, splits, evaluation::HicoSetting::Default);
    for (int c = 0; c < static_cast<int>(f.registry.size()); ++c) {
      const auto want = test::oracle_class_ap(f.preds, f.gts, f.registry.at(c));
      const auto& got = m.class_ap[static_cast<std::size_t>(c)];
      if (got.has_value() != want.has_value()) {
        o.require(false, "class presence differs at seed " + std::to_string(seed));
        continue;
      }
      if (want) {
        worst = std::max(worst, std::abs(*got - *want));
        ++classes;
      }
    }
  }
  o.require(worst < 1e-9, "AP deviation " + fmt("%.3g", worst));

  const HoiRegistry registry({{0, 1}});
  rng::Stream s(rng::hash("acceptance-matcher"));
  int mismatches = 0;
  const Box H{0, 0, 100, 100}, O{200, 200, 300, 300};
  auto shift = [](const Box& b, double dx, double dy) { return Box{b.x1 + dx, b.y1 + dy, b.x2 + dx, b.y2 + dy}; };
  for (int t = 0; t < 500; ++t) {
    std::vector<HoiGroundTruth> gts;
    for (int g = 0; g < 2; ++g) {
      gts.push_back({"a", shift(H, s.uniform(0, 40), s.uniform(0, 20)), shift(O, s.uniform(0, 40), s.uniform(0, 20)), 1, 0});
    }
    std::vector<HoiPrediction> preds;
    for (int k = 0; k < 3; ++k) {
      HoiPrediction p;
      p.image_key = "a";
      p.human = shift(H, s.uniform(0, 50), s.uniform(0, 25));
      p.object = shift(O, s.uniform(0, 50), s.uniform(0, 25));
      p.object_category = 1;
      p.score = 1.0 - 0.1 * k;
      preds.push_back(p);
    }
    if (evaluation::match_predictions(preds, gts, registry) != test::exhaustive_match(preds, gts)) ++mismatches;
  }
  o.require(mismatches == 0, std::to_string(mismatches) + " matcher disagreements");
  o.detail = "max AP dev " + fmt("%.2g", worst) + " over " + std::to_string(classes) + " classes, 500 matcher fixtures" +
             (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

// ---- 2 ---------------------------------------------------------------------

Outcome gradients() {
  Outcome o;
  const ModelConfig c = test::tiny_model_config();
  const ProviderSet providers = test::tiny_providers(c);
  const SceneFeatures scene = test::tiny_scene(c, providers);
  const int d = c.dims.node_dim;
  double worst = 0.0;
  std::size_t checked = 0;
  auto record = [&](const std::string& path, const test::GradReport& r) {
    worst = std::max(worst, r.max_rel);
    checked += r.checked;
    o.require(r.checked > 0, path + " checked nothing");
    o.require(r.max_rel < 1e-4, path + " " + r.worst + " rel " + fmt("%.3g", r.max_rel));
  };
  auto both = [&](const std::string& path, ParameterStore& store, const test::ForwardX& f, const Matrix& x) {
    record(path + " params", test::check_param_grads([&](ad::Tape& t, ParameterStore& s) {
                                                        return f(t, s, t.constant(x));
                                                      }, store, store.names()));
    record(path + " input", test::check_input_grad(f, store, x));
  };

  {
    ParameterStore s(31);
    nn::register_linear(s, "l", d, 5);
    test::jitter_parameters(s, 1);
    both("linear", s, [](ad::Tape& t, ParameterStore& st, const ad::Var& x) { return nn::linear(t, st, "l", x); },
         scene.appearance);
  }
  {
    ParameterStore s(32);
    nn::register_layer_norm(s, "n", d);
    test::jitter_parameters(s, 2);
    both("layer_norm", s, [](ad::Tape& t, ParameterStore& st, const ad::Var& x) { return nn::layer_norm(t, st, "n", x); },
         scene.appearance);
  }
  {
    ParameterStore s(33);
    const nn::FusionConfig cfg{2, c.dims.visual_dim, d, d};
    nn::register_mbf(s, "f", cfg);
    test::jitter_parameters(s, 3);
    const Matrix visual = scene.visual;
    both("mbf", s, [&](ad::Tape& t, ParameterStore& st, const ad::Var& x) {
      return nn::mbf(t, st, "f", cfg, t.constant(visual), x);
    }, scene.appearance);
  }
  {
    ParameterStore s(34);
    nn::register_mmf(s, "m", 2 * d, kSpatialDim);
    test::jitter_parameters(s, 4);
    const Matrix spatial = scene.pairs.spatial;
    Matrix pairs(static_cast<Eigen::Index>(scene.pairs.size()), 2 * d);
    for (std::size_t p = 0; p < scene.pairs.size(); ++p) {
      pairs.row(static_cast<Eigen::Index>(p)) << scene.appearance.row(scene.pairs.pairs[p].human),
          scene.appearance.row(scene.pairs.pairs[p].object);
    }
    both("mmf", s, [&](ad::Tape& t, ParameterStore& st, const ad::Var& x) {
      return nn::mmf(t, st, "m", x, t.constant(spatial));
    }, pairs);
  }
  {
    ParameterStore s(35);
    const nn::AttentionConfig cfg{2 * d, c.backbone_dim, 2};
    nn::register_cross_attention(s, "a", cfg);
    test::jitter_parameters(s, 5);
    const Matrix kv = scene.backbone;
    const Matrix q = test::random_matrix(static_cast<Eigen::Index>(scene.pairs.size()), 2 * d, 7);
    both("cross_attention", s, [&](ad::Tape& t, ParameterStore& st, const ad::Var& x) {
      return nn::cross_attention(t, st, "a", cfg, x, t.constant(kv)).out;
    }, q);
  }
  {
    ParameterStore s(36);
    const AdapterBlock block{"ad", d};
    block.register_parameters(s);
    test::jitter_parameters(s, 6);
    both("adapter", s, [&](ad::Tape& t, ParameterStore& st, const ad::Var& x) { return block.apply(t, st, x); },
         scene.appearance);
  }
  {
    ModelConfig full = c;
    full.adapter = true;
    const Model model(full);
    ParameterStore s(37);
    model.register_parameters(s);
    test::jitter_parameters(s, 7);
    record("model end-to-end", test::check_param_grads([&](ad::Tape& t, ParameterStore& st) {
      return model.forward(t, st, scene).logits;
    }, s, s.names()));
  }
  {
    ParameterStore s;
    Matrix y = Matrix::Zero(4, 3);
    y(0, 0) = y(1, 2) = y(3, 1) = 1.0;
    for (double gamma : {0.0, 2.0}) {
      record("focal loss", test::check_input_grad([&](ad::Tape&, ParameterStore&, const ad::Var& x) {
        return training::focal_loss(x, y, 0.25, gamma);
      }, s, test::random_matrix(4, 3, 8, 3.0), 992, 1e-6));
    }
  }
  o.detail = std::to_string(checked) + " entries, worst rel " + fmt("%.2g", worst) + (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

// ---- 3 ---------------------------------------------------------------------

DetectionSet random_detections(rng::Stream& s) {
  DetectionSet dets;
  const int persons = s.range(1, 3), objects = s.range(1, 4);
  auto box = [&] {
    const double x = s.uniform(0, 480), y = s.uniform(0, 340);
    return Box{x, y, x + s.uniform(30, 160), y + s.uniform(30, 140)};
  };
  for (int i = 0; i < persons + objects; ++i) {
    dets.push_back({box(), i < persons ? kPersonCategory : s.range(1, 3), 0.99 - 0.01 * i, i});
  }
  return dets;
}

Outcome equivariance() {
  Outcome o;
  const ModelConfig c = test::tiny_model_config();
  const ProviderSet providers = test::tiny_providers(c);
  ParameterStore store(41);
  const Model model(c);
  model.register_parameters(store);
  test::jitter_parameters(store, 9);
  double worst = 0.0;
  rng::Stream s(rng::hash("acceptance-permutation"));
  for (int fixture = 0; fixture < 20; ++fixture) {
    const DetectionSet dets = random_detections(s);
    // Persons stay ahead of objects; the order inside each group is shuffled.
    const auto persons = static_cast<std::size_t>(std::count_if(dets.begin(), dets.end(),
                                                                [](const Detection& d) { return d.is_person(); }));
    std::vector<std::size_t> perm(dets.size());
    std::iota(perm.begin(), perm.end(), 0);
    for (auto [lo, hi] : {std::pair{std::size_t{0}, persons}, std::pair{persons, dets.size()}}) {
      for (std::size_t i = hi; i > lo + 1; --i) std::swap(perm[i - 1], perm[lo + s.below(i - lo)]);
    }
    DetectionSet shuffled;
    for (std::size_t i : perm) shuffled.push_back(dets[i]);

    const SceneFeatures a = test::tiny_scene(c, providers, dets);
    const SceneFeatures b = test::tiny_scene(c, providers, shuffled);
    ad::Tape ta(false), tb(false);
    const ForwardResult ra = model.forward(ta, store, a);
    const ForwardResult rb = model.forward(tb, store, b);
    std::map<std::pair<int, int>, Eigen::Index> rows;
    for (std::size_t p = 0; p < a.pairs.size(); ++p) {
      rows[{a.detections[static_cast<std::size_t>(a.pairs.pairs[p].human)].source_index,
            a.detections[static_cast<std::size_t>(a.pairs.pairs[p].object)].source_index}] = static_cast<Eigen::Index>(p);
    }
    if (a.pairs.size() != b.pairs.size()) {
      o.require(false, "pair count changed");
      continue;
    }
    for (std::size_t p = 0; p < b.pairs.size(); ++p) {
      const std::pair<int, int> key{b.detections[static_cast<std::size_t>(b.pairs.pairs[p].human)].source_index,
                                    b.detections[static_cast<std::size_t>(b.pairs.pairs[p].object)].source_index};
      const auto it = rows.find(key);
      if (it == rows.end()) {
        o.require(false, "unmatched pair");
        continue;
      }
      const auto q = static_cast<Eigen::Index>(p);
      worst = std::max(worst, (rb.refined_pairs.value().row(q) - ra.refined_pairs.value().row(it->second)).cwiseAbs().maxCoeff());
      worst = std::max(worst, (rb.logits.value().row(q) - ra.logits.value().row(it->second)).cwiseAbs().maxCoeff());
    }
  }
  o.require(worst < 1e-5, "deviation " + fmt("%.3g", worst));
  o.detail = "20 fixtures, max dev " + fmt("%.2g", worst) + (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

// ---- 4 ---------------------------------------------------------------------

Outcome loop_structure() {
  Outcome o;
  o.require(ModelConfig{}.steps == 2, "default step count is not 2");
  ModelConfig c = test::tiny_model_config();
  c.adapter = false;
  const ProviderSet providers = test::tiny_providers(c);
  const SceneFeatures scene = test::tiny_scene(c, providers);
  ParameterStore store(43);
  Model(c).register_parameters(store);
  test::jitter_parameters(store, 10);

  {
    ModelConfig zero = c;
    zero.steps = 0;
    ad::Tape t1(false);
    const ForwardResult r = Model(zero).forward(t1, store, scene);
    ad::Tape t2(false);
    graph::GraphContext ctx{t2, store, c.dims};
    graph::GraphState state(t2.constant(scene.appearance), scene.pairs);
    graph::spatial_stage_init(ctx, state, t2.constant(scene.pairs.spatial));
    const auto decoded = decoder::decode(t2, store, c.decoder(), state.pairs, t2.constant(scene.backbone));
    const Matrix logits = decoder::action_logits(t2, store, decoded.out).value();
    o.require(r.refined_pairs.value() == state.pairs.value(), "T=0 pairs differ from spatial init");
    o.require(r.logits.value() == logits, "T=0 logits differ from spatial init + decoder");
  }

  auto run = [&](const std::vector<std::string>& order) {
    ad::Tape t(false);
    graph::GraphContext ctx{t, store, c.dims};
    graph::GraphState state(t.constant(scene.appearance), scene.pairs);
    const ad::Var spatial = t.constant(scene.pairs.spatial);
    const ad::Var interaction = graph::project_interaction(ctx, t.constant(scene.interaction_text));
    graph::spatial_stage_init(ctx, state, spatial);
    for (const std::string& stage : order) {
      if (stage == "adjacency") state.adjacency = graph::compute_adjacency(ctx, state, spatial);
      if (stage == "visual") graph::visual_stage(ctx, state, t.constant(scene.visual));
      if (stage == "textual") graph::textual_stage(ctx, state, t.constant(scene.text_per_node));
      if (stage == "interaction") graph::interaction_stage(ctx, state, interaction);
    }
    return Matrix(state.pairs.value());
  };
  Matrix looped;
  {
    ad::Tape t(false);
    graph::GraphContext ctx{t, store, c.dims};
    graph::GraphState state(t.constant(scene.appearance), scene.pairs);
    const graph::MfiInputs in{t.constant(scene.pairs.spatial), t.constant(scene.visual), t.constant(scene.text_per_node),
                              graph::project_interaction(ctx, t.constant(scene.interaction_text))};
    looped = graph::run_mfi(ctx, state, in, 1, {}).value();
  }
  const Matrix in_order = run({"adjacency", "visual", "textual", "interaction"});
  const Matrix interaction_first = run({"adjacency", "interaction", "visual", "textual"});
  o.require(looped == in_order, "loop order differs from adjacency, visual, textual, interaction");
  o.require((looped - interaction_first).cwiseAbs().maxCoeff() > 1e-6, "ordering fixture is insensitive");
  o.detail = "T=0 exact, default T=2, order adjacency>visual>textual>interaction" + (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

// ---- 5 and 6 -----------------------------------------------------------------

struct TaskRun {
  double map = 0.0;
  double seconds = 0.0;
  RunOutcome outcome;
};

TaskRun train_task(synth::TaskKind kind, const std::string& without) {
  synth::SynthTaskSpec spec;
  spec.kind = kind;
  spec.seed = 7;
  const Dataset data = synth::generate_synthetic(spec);
  RunConfig cfg;
  if (!without.empty()) cfg.model.stages = evaluation::without_stage(cfg.model.stages, without);
  const auto t0 = std::chrono::steady_clock::now();
  TaskRun r;
  r.outcome = run_experiment(cfg, data);
  r.seconds = seconds_since(t0);
  r.map = r.outcome.report.hico_default.full;
  std::printf("  %-14s w/o %-8s mAP %.4f  %.1f s\n", std::string(synth::to_string(kind)).c_str(),
              without.empty() ? "-" : without.c_str(), r.map, r.seconds);
  std::fflush(stdout);
  return r;
}

bool same_run(const RunOutcome& a, const RunOutcome& b) {
  if (a.history.size() != b.history.size() || a.predictions.size() != b.predictions.size()) return false;
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    if (a.history[i].loss != b.history[i].loss) return false;
  }
  for (std::size_t i = 0; i < a.predictions.size(); ++i) {
    if (a.predictions[i].score != b.predictions[i].score) return false;
  }
  return same_values(a.store, b.store) && report_to_json(a.report) == report_to_json(b.report);
}

std::optional<TaskRun> spatial_vanilla;

Outcome learnability() {
  Outcome o;
  TaskRun first = train_task(synth::TaskKind::SpatialRule, "");
  const TaskRun second = train_task(synth::TaskKind::SpatialRule, "");
  o.require(first.outcome.history.size() == 200, "epoch count is not 200");
  o.require(first.map >= 0.90, "mAP " + fmt("%.4f", first.map) + " below 0.90");
  o.require(first.seconds < 300.0, "run took " + fmt("%.1f", first.seconds) + " s");
  o.require(same_run(first.outcome, second.outcome), "identically seeded runs differ");
  o.detail = "mAP " + fmt("%.4f", first.map) + " in " + fmt("%.1f", first.seconds) + " s, repeat identical" +
             (o.detail.empty() ? "" : " | " + o.detail);
  spatial_vanilla = std::move(first);
  return o;
}

Outcome ablations() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  struct Pair {
    synth::TaskKind kind;
    const char* stage;
  };
  std::string summary;
  for (const Pair& p : {Pair{synth::TaskKind::VisualRule, "visual"}, Pair{synth::TaskKind::CategoryRule, "textual"},
                        Pair{synth::TaskKind::SpatialRule, "spatial"}}) {
    const double vanilla = p.kind == synth::TaskKind::SpatialRule && spatial_vanilla
                               ? spatial_vanilla->map
                               : train_task(p.kind, "").map;
    const double ablated = train_task(p.kind, p.stage).map;
    const double drop = vanilla - ablated;
    o.require(drop >= 0.15, std::string("w/o ") + p.stage + " drop " + fmt("%.4f", drop));
    o.require(vanilla >= ablated, std::string("w/o ") + p.stage + " beats vanilla");
    summary += std::string(summary.empty() ? "" : ", ") + "w/o " + p.stage + " -" + fmt("%.3f", drop);
  }
  double secs = seconds_since(t0);
  if (spatial_vanilla) secs += spatial_vanilla->seconds;
  o.require(secs < 1800.0, "combined runtime " + fmt("%.0f", secs) + " s");
  o.detail = summary + ", " + fmt("%.0f", secs) + " s" + (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

// ---- 7 ---------------------------------------------------------------------

Outcome focal() {
  Outcome o;
  rng::Stream s(rng::hash("acceptance-focal"));
  Matrix x(6, 5), y(6, 5);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    x.data()[i] = s.uniform(-8, 8);
    y.data()[i] = s.uniform() < 0.3 ? 1.0 : 0.0;
  }
  double bce = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-x.data()[i]));
    bce -= y.data()[i] * std::log(p) + (1.0 - y.data()[i]) * std::log1p(-p);
  }
  bce /= static_cast<double>(x.size());
  const double dev = std::abs(training::focal_loss_value(x, y, 0.5, 0.0) - 0.5 * bce);
  o.require(dev < 1e-10, "0.5 BCE deviation " + fmt("%.3g", dev));

  Matrix one(1, 1), pos(1, 1), neg(1, 1);
  pos << 1.0;
  neg << 0.0;
  one << 100.0;
  o.require(training::focal_loss_value(one, pos, 0.25, 2.0) < 1e-8, "saturated correct positive is not ~0");
  one << -100.0;
  o.require(training::focal_loss_value(one, neg, 0.25, 2.0) < 1e-8, "saturated correct negative is not ~0");
  for (double v : {-100.0, 100.0}) {
    for (const Matrix* t : {&pos, &neg}) {
      ad::Tape tape;
      Matrix m(1, 1);
      m << v;
      const ad::Var leaf = tape.leaf(m);
      const ad::Var loss = training::focal_loss(leaf, *t, 0.25, 2.0);
      tape.backward(loss);
      o.require(std::isfinite(loss.value()(0, 0)) && leaf.grad().allFinite(), "non-finite at logit " + fmt("%g", v));
    }
  }
  o.detail = "BCE dev " + fmt("%.2g", dev) + ", |logit| 100 finite" + (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

// ---- 8 ---------------------------------------------------------------------

Outcome protocol() {
  Outcome o;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto f = test::random_eval_fixture(seed);
    const evaluation::SplitRegistry splits{f.registry, std::vector<int>(f.registry.size(), 20)};
    const auto d = evaluation::evaluate_hico(f.preds, f.gts, splits, evaluation::HicoSetting::Default);
    const auto k = evaluation::evaluate_hico(f.preds, f.gts, splits, evaluation::HicoSetting::KnownObject);
    if (k.full < d.full) o.require(false, "known-object below default at seed " + std::to_string(seed));
    const auto s1 = evaluation::evaluate_vcoco(f.preds, f.gts, 3, evaluation::VcocoScenario::One);
    const auto s2 = evaluation::evaluate_vcoco(f.preds, f.gts, 3, evaluation::VcocoScenario::Two);
    if (s1.role_ap != s2.role_ap) o.require(false, "scenarios differ at seed " + std::to_string(seed));
  }

  synth::SynthTaskSpec spec;
  spec.num_categories = 12;
  spec.long_tail = 1.5;
  spec.seed = 11;
  const Dataset data = synth::generate_synthetic(spec);
  std::map<std::pair<ActionId, CategoryId>, int> counts;
  for (const SceneRecord& scene : data.train) {
    for (const HoiGroundTruth& g : scene.ground_truth) ++counts[{g.action, g.object_category}];
  }
  std::vector<int> expected;
  for (int c = 0; c < static_cast<int>(data.hoi.size()); ++c) {
    const HoiClass& cls = data.hoi.at(c);
    const auto it = counts.find({cls.action, cls.object});
    if (it == counts.end() || it->second < 10) expected.push_back(c);
  }
  const auto splits = evaluation::SplitRegistry::from_training(data.hoi, data.train_ground_truth());
  o.require(splits.rare_classes() == expected, "rare split differs from the under-ten count");
  o.require(!expected.empty() && expected.size() < data.hoi.size(), "long-tail fixture has no rare/non-rare mix");
  o.detail = "200 fixtures, rare " + std::to_string(expected.size()) + "/" + std::to_string(data.hoi.size()) +
             " classes" + (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

// ---- 9 ---------------------------------------------------------------------

Outcome frozen() {
  Outcome o;
  synth::SynthTaskSpec spec;
  spec.train_scenes = 32;
  spec.test_scenes = 8;
  spec.seed = 13;
  const Dataset data = synth::generate_synthetic(spec);
  RunConfig cfg;
  const ModelConfig model_cfg = cfg.resolved_model(data);
  ProviderSet providers = ProviderSet::from_config(cfg.resolved_providers(data));

  // Route the visual source through an embeddings file so loaded tensors are covered too.
  std::map<std::string, Matrix, std::less<>> records;
  for (const SceneRecord& scene : data.train) {
    const std::string& key = scene.embedding_key.empty() ? scene.image_key : scene.embedding_key;
    records[key] = providers.visual->lookup(key);
  }
  const fs::path dir = scratch_dir("frozen");
  save_embeddings(dir / "visual.bin", EmbeddingKind::VisualImage, model_cfg.dims.visual_dim, records);
  const auto file = FileProvider::load(dir / "visual.bin", EmbeddingKind::VisualImage, model_cfg.dims.visual_dim);
  providers.visual = file;
  const auto file_before = file->records();

  auto scenes = training::prepare_scenes(data.train, providers, data.categories, model_cfg);
  const auto scenes_before = scenes;
  const std::string records_before = dataset_to_json(data);

  training::TrainConfig tc;
  tc.seed = 3;
  training::Trainer trainer(Model(model_cfg), tc, std::move(scenes));
  std::map<std::string, bool> trainable;
  for (const auto& [name, p] : trainer.store()) trainable[name] = p.trainable;
  trainer.train();
  o.require(trainer.epoch() == tc.epochs, "training stopped early");

  bool features_same = scenes_before.size() == trainer.scenes().size();
  for (std::size_t i = 0; features_same && i < scenes_before.size(); ++i) {
    const SceneFeatures& a = scenes_before[i].features;
    const SceneFeatures& b = trainer.scenes()[i].features;
    features_same = a.appearance == b.appearance && a.visual == b.visual && a.text_per_node == b.text_per_node &&
                    a.interaction_text == b.interaction_text && a.backbone == b.backbone &&
                    a.pairs.spatial == b.pairs.spatial && a.detections.size() == b.detections.size();
    for (std::size_t k = 0; features_same && k < a.detections.size(); ++k) {
      features_same = a.detections[k].box == b.detections[k].box && a.detections[k].score == b.detections[k].score &&
                      a.detections[k].category == b.detections[k].category;
    }
  }
  o.require(features_same, "scene features changed during training");

  bool file_same = file->records().size() == file_before.size();
  for (const auto& [key, m] : file_before) file_same = file_same && file->lookup(key) == m;
  o.require(file_same, "file embeddings changed");
  const auto again = training::prepare_scenes(data.train, providers, data.categories, model_cfg);
  bool reextract_same = again.size() == scenes_before.size();
  for (std::size_t i = 0; reextract_same && i < again.size(); ++i) {
    reextract_same = again[i].features.appearance == scenes_before[i].features.appearance &&
                     again[i].features.backbone == scenes_before[i].features.backbone &&
                     again[i].features.text_per_node == scenes_before[i].features.text_per_node;
  }
  o.require(reextract_same, "providers return different tensors after training");
  o.require(dataset_to_json(data) == records_before, "detector outputs changed");

  std::size_t frozen_params = 0;
  for (const auto& [name, p] : trainer.store()) {
    if (!p.trainable) ++frozen_params;
    o.require(trainable[name] == p.trainable, name + " changed trainability");
  }
  o.detail = std::to_string(tc.epochs) + " epochs on " + std::to_string(data.train.size()) +
             " scenes; features, file embeddings and detections bit-identical" + (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

// ---- 10 --------------------------------------------------------------------

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(MGNM_CLI_PATH) + " " + args + " > \"" + log.string() + "\" 2>&1";
  return std::system(cmd.c_str());
}

Outcome reproducibility() {
  Outcome o;
  const fs::path dir = scratch_dir("repro");

  synth::SynthTaskSpec spec;
  spec.train_scenes = 8;
  spec.test_scenes = 4;
  spec.seed = 21;
  const Dataset data = synth::generate_synthetic(spec);
  RunConfig cfg;
  cfg.train.seed = 5;
  cfg.train.batch_size = 4;
  const ModelConfig model_cfg = cfg.resolved_model(data);
  const ProviderSet providers = ProviderSet::from_config(cfg.resolved_providers(data));
  const auto scenes = training::prepare_scenes(data.train, providers, data.categories, model_cfg);
  auto trainer = [&](int epochs) {
    training::TrainConfig tc = cfg.train;
    tc.epochs = epochs;
    return training::Trainer(Model(model_cfg), tc, scenes);
  };
  training::Trainer straight = trainer(6);
  straight.train();
  training::Trainer first = trainer(3);
  first.train();
  first.save(dir / "half");
  training::Trainer resumed = trainer(6);
  resumed.resume(dir / "half");
  resumed.train();
  o.require(same_values(straight.store(), resumed.store()), "resumed parameters differ");
  o.require(straight.optimizer().step == resumed.optimizer().step, "resumed step counter differs");
  const auto& full = straight.history();
  const auto& tail = resumed.history();
  bool losses_same = full.size() == 6 && tail.size() >= 3;
  for (std::size_t i = 1; losses_same && i <= 3; ++i) {
    losses_same = full[full.size() - i].loss == tail[tail.size() - i].loss;
  }
  o.require(losses_same, "resumed epoch losses differ");

  for (const char* task : {"spatial-rule", "visual-rule", "category-rule", "mixed"}) {
    synth::SynthTaskSpec t;
    t.kind = synth::parse_task_kind(task);
    t.seed = 99;
    t.train_scenes = 32;
    save_dataset(dir / "a.json", synth::generate_synthetic(t));
    save_dataset(dir / "b.json", synth::generate_synthetic(t));
    o.require(read_all(dir / "a.json") == read_all(dir / "b.json"), std::string(task) + " datasets differ");
  }

  const fs::path data_path = dir / "data.json";
  const fs::path run = dir / "run", rerun = dir / "rerun";
  int rc = run_cli("synth --task spatial-rule --scenes 12 --test-scenes 6 --seed 4 -o \"" + data_path.string() + "\"",
                   dir / "synth.log");
  rc = rc == 0 ? run_cli("train -d \"" + data_path.string() + "\" -o \"" + run.string() + "\" --epochs 3 --seed 8",
                         dir / "train.log")
               : rc;
  rc = rc == 0 ? run_cli("rerun -m \"" + (run / "manifest.json").string() + "\" -o \"" + rerun.string() + "\"",
                         dir / "rerun.log")
               : rc;
  o.require(rc == 0, "CLI exited with status " + std::to_string(rc));
  if (rc == 0) {
    const auto m1 = nlohmann::json::parse(read_all(run / "manifest.json"));
    const auto m2 = nlohmann::json::parse(read_all(rerun / "manifest.json"));
    o.require(m1.at("metrics") == m2.at("metrics"), "manifest metrics differ");
    o.require(read_all(run / "report.json") == read_all(rerun / "report.json"), "report.json differs");
    o.require(read_all(run / "predictions.json") == read_all(rerun / "predictions.json"), "predictions differ");
    o.require(read_all(run / "checkpoint.bin") == read_all(rerun / "checkpoint.bin"), "checkpoints differ");
  }
  o.detail = "resume 3+3 == 6 epochs, 4 task kinds byte-identical, CLI rerun identical" +
             (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "AP engine and matcher vs brute-force oracles", ap_and_matcher},
      {2, "finite-difference gradient integrity", gradients},
      {3, "permutation equivariance", equivariance},
      {4, "refinement loop structure", loop_structure},
      {5, "spatial-rule learnability", learnability},
      {6, "stage ablations on matched tasks", ablations},
      {7, "focal-loss reductions", focal},
      {8, "evaluation protocol semantics", protocol},
      {9, "frozen detector and providers", frozen},
      {10, "reproducibility", reproducibility},
  };
  const std::map<int, double> budget{{1, 10.0}, {2, 60.0}};
  int failures = 0;
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  for (const Criterion& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.ok = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = seconds_since(t0);
    if (const auto it = budget.find(c.id); it != budget.end() && secs >= it->second) {
      o.ok = false;
      o.detail += " | over the " + fmt("%.0f", it->second) + " s budget";
    }
    failures += o.ok ? 0 : 1;
    std::printf("[%s] criterion %2d: %s (%s) %.1f s\n", o.ok ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
