#pragma once

// Shared fixtures and oracles for the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mgnm/autodiff.hpp"
#include "mgnm/model.hpp"
#include "mgnm/parameter_store.hpp"
#include "mgnm/providers.hpp"
#include "mgnm/rng.hpp"

namespace mgnm::test {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t key, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng::normal(key, 2 * static_cast<std::uint64_t>(i));
  return m;
}

using Forward = std::function<ad::Var(ad::Tape&, ParameterStore&)>;

// Scalar probe: sum(out .* R) for a fixed random R, optionally back-propagated.
inline double probe(const Forward& f, ParameterStore& store, std::uint64_t key, bool backward) {
  ad::Tape tape(backward);
  const ad::Var out = f(tape, store);
  const ad::Var loss = out.rows() == 1 && out.cols() == 1
                           ? out
                           : ad::sum(ad::mul(out, tape.constant(random_matrix(out.rows(), out.cols(), key))));
  if (backward) tape.backward(loss);
  return loss.value()(0, 0);
}

struct GradReport {
  double max_rel = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-3});
}

// Central differences over the named parameters against the store's gradient
// slots. A non-zero `max_entries` samples tensors larger than that evenly.
inline GradReport check_param_grads(const Forward& f, ParameterStore& store, const std::vector<std::string>& names,
                                    std::uint64_t key = 991, double h = 1e-5, std::size_t max_entries = 0) {
  store.zero_grad();
  probe(f, store, key, true);
  GradReport report;
  for (const std::string& name : names) {
    Parameter& p = store.at(name);
    const Matrix analytic = p.grad_populated ? p.grad : Matrix::Zero(p.value.rows(), p.value.cols());
    const auto n = static_cast<std::size_t>(p.value.size());
    const std::size_t step = max_entries > 0 && n > max_entries ? (n + max_entries - 1) / max_entries : 1;
    for (std::size_t i = 0; i < n; i += step) {
      double& v = p.value.data()[i];
      const double orig = v;
      v = orig + h;
      const double up = probe(f, store, key, false);
      v = orig - h;
      const double down = probe(f, store, key, false);
      v = orig;
      const double rel = relative_error(analytic.data()[i], (up - down) / (2.0 * h));
      ++report.checked;
      if (rel > report.max_rel) {
        report.max_rel = rel;
        report.worst = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

using ForwardX = std::function<ad::Var(ad::Tape&, ParameterStore&, const ad::Var&)>;

// Central differences with respect to an input tensor fed as a tape leaf.
inline GradReport check_input_grad(const ForwardX& f, ParameterStore& store, Matrix x, std::uint64_t key = 992,
                                   double h = 1e-5) {
  auto eval = [&](const Matrix& in, Matrix* grad) {
    ad::Tape tape(grad != nullptr);
    const ad::Var leaf = grad ? tape.leaf(in) : tape.constant(in);
    const ad::Var out = f(tape, store, leaf);
    const ad::Var loss = ad::sum(ad::mul(out, tape.constant(random_matrix(out.rows(), out.cols(), key))));
    if (grad) {
      tape.backward(loss);
      *grad = leaf.grad();
    }
    return loss.value()(0, 0);
  };
  Matrix analytic;
  eval(x, &analytic);
  GradReport report;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = x.data()[i];
    x.data()[i] = orig + h;
    const double up = eval(x, nullptr);
    x.data()[i] = orig - h;
    const double down = eval(x, nullptr);
    x.data()[i] = orig;
    const double rel = relative_error(analytic.data()[i], (up - down) / (2.0 * h));
    ++report.checked;
    if (rel > report.max_rel) {
      report.max_rel = rel;
      report.worst = "input[" + std::to_string(i) + "]";
    }
  }
  return report;
}

// Moves every parameter off its initial value. Zero-initialised biases can
// leave activations exactly on a ReLU kink, where central differences disagree
// with any one-sided derivative.
inline void jitter_parameters(ParameterStore& store, std::uint64_t seed, double amount = 0.05) {
  rng::Stream s(seed);
  for (const std::string& name : store.names()) {
    Matrix& v = store.at(name).value;
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] += s.uniform(-amount, amount);
  }
}

inline std::vector<std::string> names_with_prefix(const ParameterStore& store, const std::string& prefix) {
  std::vector<std::string> out;
  for (const std::string& n : store.names()) {
    if (n.rfind(prefix, 0) == 0) out.push_back(n);
  }
  return out;
}

// 2 persons + 2 objects on a 640x480 image; boxes overlap so every pair has
// non-trivial spatial features.
inline DetectionSet two_by_two_detections() {
  return {{Box{100, 80, 220, 400}, kPersonCategory, 0.95, 0},
          {Box{300, 60, 420, 420}, kPersonCategory, 0.90, 1},
          {Box{150, 200, 330, 330}, 1, 0.85, 2},
          {Box{380, 90, 600, 300}, 2, 0.70, 3}};
}

inline NameRegistry small_categories() { return NameRegistry({"person", "cup", "kite", "bench"}); }

// Desk-scale model shrunk so finite differences over every entry stay fast.
inline ModelConfig tiny_model_config(int num_actions = 3) {
  ModelConfig c;
  c.dims.node_dim = 8;
  c.dims.visual_dim = 6;
  c.dims.text_dim = 6;
  c.dims.branches = 2;
  c.backbone_dim = 5;
  c.decoder_layers = 1;
  c.decoder_heads = 2;
  c.decoder_ff = 12;
  c.num_actions = num_actions;
  return c;
}

inline ProviderSet tiny_providers(const ModelConfig& c, std::uint64_t seed = 5, int grid = 3) {
  ProviderConfig pc;
  pc.seed = seed;
  pc.node_dim = c.dims.node_dim;
  pc.visual_dim = c.dims.visual_dim;
  pc.text_dim = c.dims.text_dim;
  pc.backbone_dim = c.backbone_dim;
  pc.backbone_grid = grid;
  return ProviderSet::from_config(pc);
}

inline SceneFeatures tiny_scene(const ModelConfig& c, const ProviderSet& providers,
                                const DetectionSet& dets = two_by_two_detections()) {
  auto f = extract_features("fixture", 640, 480, dets, providers, small_categories(), c);
  return std::move(*f);
}

}  // namespace mgnm::test
