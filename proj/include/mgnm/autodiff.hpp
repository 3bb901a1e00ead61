#pragma once

// Reverse-mode differentiation over dense row-major matrices.
//
// A Tape records every operation of one forward pass. Values are owned by the
// tape except for parameters bound from a ParameterStore, which are referenced
// in place and receive their gradients directly in the store's gradient slots.

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "mgnm/geometry.hpp"

namespace mgnm {

class ParameterStore;

namespace ad {

class Tape;

/// Handle to a value recorded on a tape. Cheap to copy.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool valid() const noexcept { return tape_ != nullptr; }
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }

  /// Gradient accumulated by the last backward pass (zero when unreached).
  Matrix grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// With `record = false` no backward closures are kept (inference).
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// A free input that requires a gradient.
  Var leaf(Matrix value);
  /// Binds a stored parameter. Gradients land in the store's gradient slot when
  /// the parameter is trainable.
  Var param(ParameterStore& store, const std::string& name);

  using Backward = std::function<void(const Matrix& grad_out)>;

  /// Records a derived value. `backward` receives the output gradient and must
  /// route it to the inputs through accumulate().
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Matrix value, std::span<const Var> inputs, Backward backward);

  /// Adds `g` into the gradient of `v` (no-op when v needs no gradient).
  void accumulate(const Var& v, const Matrix& g);
  template <typename Expr>
  void accumulate(const Var& v, const Eigen::MatrixBase<Expr>& g) {
    if (!needs(v)) return;
    Matrix& slot = grad_slot(v);
    slot += g;
  }

  /// Seeds d(out)/d(out) = 1 for a 1x1 output and runs the recorded closures in reverse.
  void backward(const Var& out);

  bool recording() const noexcept { return record_; }
  bool needs(const Var& v) const { return nodes_[v.id_].needs_grad; }
  const Matrix& value(const Var& v) const {
    const Node& n = nodes_[v.id_];
    return n.external ? *n.external : n.value;
  }
  Matrix grad(const Var& v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Matrix grad;
    Matrix* external_grad = nullptr;
    bool* grad_flag = nullptr;
    bool needs_grad = false;
    bool has_grad = false;
    Backward backward;
  };

  Matrix& grad_slot(const Var& v);

  std::deque<Node> nodes_;
  bool record_;
};

// ---- operations -----------------------------------------------------------

Var matmul(const Var& a, const Var& b);
/// a * b^T without materializing the transpose.
Var matmul_nt(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// Element-wise product.
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// Multiplies every element by the single element of the 1x1 `s`.
Var scale_by(const Var& a, const Var& s);
/// x + row, broadcasting a 1 x cols row over every row of x.
Var add_row(const Var& x, const Var& row);
/// Repeats a single row `rows` times.
Var repeat_rows(const Var& row, Eigen::Index rows);
Var relu(const Var& x);
Var sigmoid(const Var& x);
/// Clamps to [lo, hi]; the gradient is zero where clamping is active.
Var clamp(const Var& x, double lo, double hi);
Var concat_cols(std::span<const Var> parts);
Var concat_cols(const Var& a, const Var& b);
Var concat_rows(const Var& a, const Var& b);
Var slice_cols(const Var& x, Eigen::Index start, Eigen::Index count);
/// out[i] = x[index[i]].
Var gather_rows(const Var& x, std::span<const int> index);
/// out[g] = mean of x rows listed in groups[g]; empty groups give zero rows.
Var segment_mean(const Var& x, const std::vector<std::vector<int>>& groups);
/// Per-row (x - mean) / sqrt(var + eps) * gain + bias; gain and bias are 1 x cols.
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
/// Row-wise softmax.
Var softmax_rows(const Var& x);
Var sum(const Var& x);
Var mean(const Var& x);

}  // namespace ad
}  // namespace mgnm
