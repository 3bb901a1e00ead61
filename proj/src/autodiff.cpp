#include "mgnm/autodiff.hpp"

#include <cmath>
#include <string>

#include "mgnm/errors.hpp"
#include "mgnm/parameter_store.hpp"

namespace mgnm::ad {

namespace {

std::string shape_of(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_of(a.value()) + " vs " +
                     shape_of(b.value()));
  }
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

const Matrix& Var::value() const { return tape_->value(*this); }
bool Var::requires_grad() const { return tape_->needs(*this); }
Matrix Var::grad() const { return tape_->grad(*this); }

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = record_;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(ParameterStore& store, const std::string& name) {
  Parameter& p = store.at(name);
  Node n;
  n.external = &p.value;
  if (record_ && p.trainable) {
    n.needs_grad = true;
    n.external_grad = &p.grad;
    n.grad_flag = &p.grad_populated;
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Tape::record(Matrix value, std::span<const Var> inputs, Backward backward) {
  Node n;
  n.value = std::move(value);
  if (record_) {
    for (const Var& in : inputs) {
      if (in.tape_ != this) throw ShapeError("operand recorded on a different tape");
      n.needs_grad = n.needs_grad || nodes_[in.id_].needs_grad;
    }
    if (n.needs_grad) n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Matrix& Tape::grad_slot(const Var& v) {
  Node& n = nodes_[v.id_];
  if (n.external_grad) {
    if (n.grad_flag && !*n.grad_flag) {
      n.external_grad->setZero(n.external->rows(), n.external->cols());
      *n.grad_flag = true;
    }
    return *n.external_grad;
  }
  if (!n.has_grad) {
    const Matrix& val = n.external ? *n.external : n.value;
    n.grad.setZero(val.rows(), val.cols());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::accumulate(const Var& v, const Matrix& g) {
  if (!needs(v)) return;
  Matrix& slot = grad_slot(v);
  if (slot.rows() != g.rows() || slot.cols() != g.cols()) {
    throw ShapeError("gradient shape " + shape_of(g) + " does not match value " + shape_of(slot));
  }
  slot += g;
}

Matrix Tape::grad(const Var& v) const {
  const Node& n = nodes_[v.id_];
  if (n.external_grad && n.grad_flag && *n.grad_flag) return *n.external_grad;
  if (n.has_grad) return n.grad;
  const Matrix& val = value(v);
  return Matrix::Zero(val.rows(), val.cols());
}

void Tape::backward(const Var& out) {
  if (out.rows() != 1 || out.cols() != 1) {
    throw ShapeError("backward() needs a 1x1 output, got " + shape_of(out.value()));
  }
  if (!needs(out)) return;
  grad_slot(out)(0, 0) += 1.0;
  for (std::size_t i = out.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || !n.has_grad) continue;
    n.backward(n.grad);
  }
}

// ---- operations -----------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_of(a.value()) + " * " + shape_of(b.value()));
  }
  Tape& t = a.tape();
  return t.record(a.value() * b.value(), {a, b}, [&t, a, b](const Matrix& g) {
    if (t.needs(a)) t.accumulate(a, g * b.value().transpose());
    if (t.needs(b)) t.accumulate(b, a.value().transpose() * g);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: " + shape_of(a.value()) + " * " + shape_of(b.value()) + "^T");
  }
  Tape& t = a.tape();
  return t.record(a.value() * b.value().transpose(), {a, b}, [&t, a, b](const Matrix& g) {
    if (t.needs(a)) t.accumulate(a, g * b.value());
    if (t.needs(b)) t.accumulate(b, g.transpose() * a.value());
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tape& t = a.tape();
  return t.record(a.value() + b.value(), {a, b}, [&t, a, b](const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tape& t = a.tape();
  return t.record(a.value() - b.value(), {a, b}, [&t, a, b](const Matrix& g) {
    t.accumulate(a, g);
    if (t.needs(b)) t.accumulate(b, -g);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tape& t = a.tape();
  return t.record(a.value().cwiseProduct(b.value()), {a, b}, [&t, a, b](const Matrix& g) {
    if (t.needs(a)) t.accumulate(a, g.cwiseProduct(b.value()));
    if (t.needs(b)) t.accumulate(b, g.cwiseProduct(a.value()));
  });
}

Var scale(const Var& a, double s) {
  Tape& t = a.tape();
  return t.record(a.value() * s, {a}, [&t, a, s](const Matrix& g) { t.accumulate(a, g * s); });
}

Var scale_by(const Var& a, const Var& s) {
  if (s.rows() != 1 || s.cols() != 1) throw ShapeError("scale_by: scalar must be 1x1");
  Tape& t = a.tape();
  return t.record(a.value() * s.value()(0, 0), {a, s}, [&t, a, s](const Matrix& g) {
    if (t.needs(a)) t.accumulate(a, g * s.value()(0, 0));
    if (t.needs(s)) {
      Matrix gs(1, 1);
      gs(0, 0) = g.cwiseProduct(a.value()).sum();
      t.accumulate(s, gs);
    }
  });
}

Var add_row(const Var& x, const Var& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw ShapeError("add_row: " + shape_of(x.value()) + " + " + shape_of(row.value()));
  }
  Tape& t = x.tape();
  Matrix out = x.value();
  out.rowwise() += row.value().row(0);
  return t.record(std::move(out), {x, row}, [&t, x, row](const Matrix& g) {
    t.accumulate(x, g);
    if (t.needs(row)) t.accumulate(row, g.colwise().sum());
  });
}

Var repeat_rows(const Var& row, Eigen::Index rows) {
  if (row.rows() != 1) throw ShapeError("repeat_rows: expected a single row");
  Tape& t = row.tape();
  Matrix out = row.value().replicate(rows, 1);
  return t.record(std::move(out), {row}, [&t, row](const Matrix& g) {
    t.accumulate(row, g.colwise().sum());
  });
}

Var relu(const Var& x) {
  Tape& t = x.tape();
  return t.record(x.value().cwiseMax(0.0), {x}, [&t, x](const Matrix& g) {
    t.accumulate(x, (x.value().array() > 0.0).select(g, 0.0));
  });
}

Var sigmoid(const Var& x) {
  Tape& t = x.tape();
  Matrix y = x.value().unaryExpr([](double v) { return stable_sigmoid(v); });
  Matrix local = y;
  return t.record(std::move(y), {x}, [&t, x, s = std::move(local)](const Matrix& g) {
    t.accumulate(x, g.cwiseProduct(s).cwiseProduct((1.0 - s.array()).matrix()));
  });
}

Var clamp(const Var& x, double lo, double hi) {
  Tape& t = x.tape();
  return t.record(x.value().cwiseMax(lo).cwiseMin(hi), {x}, [&t, x, lo, hi](const Matrix& g) {
    const auto inside = (x.value().array() >= lo) && (x.value().array() <= hi);
    t.accumulate(x, inside.select(g, 0.0));
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: nothing to concatenate");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  Tape& t = parts.front().tape();
  std::vector<Var> keep(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [&t, keep](const Matrix& g) {
    Eigen::Index offset = 0;
    for (const Var& p : keep) {
      if (t.needs(p)) t.accumulate(p, g.middleCols(offset, p.cols()));
      offset += p.cols();
    }
  });
}

Var concat_cols(const Var& a, const Var& b) {
  const Var parts[] = {a, b};
  return concat_cols(std::span<const Var>(parts));
}

Var concat_rows(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw ShapeError("concat_rows: column count mismatch");
  Matrix out(a.rows() + b.rows(), a.cols());
  out.topRows(a.rows()) = a.value();
  out.bottomRows(b.rows()) = b.value();
  Tape& t = a.tape();
  return t.record(std::move(out), {a, b}, [&t, a, b](const Matrix& g) {
    if (t.needs(a)) t.accumulate(a, g.topRows(a.rows()));
    if (t.needs(b)) t.accumulate(b, g.bottomRows(b.rows()));
  });
}

Var slice_cols(const Var& x, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > x.cols()) throw ShapeError("slice_cols: out of range");
  Tape& t = x.tape();
  return t.record(x.value().middleCols(start, count), {x}, [&t, x, start, count](const Matrix& g) {
    if (!t.needs(x)) return;
    Matrix full = Matrix::Zero(x.rows(), x.cols());
    full.middleCols(start, count) = g;
    t.accumulate(x, full);
  });
}

Var gather_rows(const Var& x, std::span<const int> index) {
  Matrix out(static_cast<Eigen::Index>(index.size()), x.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= x.rows()) throw ShapeError("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = x.value().row(index[i]);
  }
  Tape& t = x.tape();
  std::vector<int> idx(index.begin(), index.end());
  return t.record(std::move(out), {x}, [&t, x, idx](const Matrix& g) {
    if (!t.needs(x)) return;
    Matrix full = Matrix::Zero(x.rows(), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) full.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(x, full);
  });
}

Var segment_mean(const Var& x, const std::vector<std::vector<int>>& groups) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(groups.size()), x.cols());
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    if (groups[gi].empty()) continue;
    auto row = out.row(static_cast<Eigen::Index>(gi));
    for (int r : groups[gi]) {
      if (r < 0 || r >= x.rows()) throw ShapeError("segment_mean: index out of range");
      row += x.value().row(r);
    }
    row /= static_cast<double>(groups[gi].size());
  }
  Tape& t = x.tape();
  return t.record(std::move(out), {x}, [&t, x, groups](const Matrix& g) {
    if (!t.needs(x)) return;
    Matrix full = Matrix::Zero(x.rows(), x.cols());
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      if (groups[gi].empty()) continue;
      const double w = 1.0 / static_cast<double>(groups[gi].size());
      for (int r : groups[gi]) full.row(r) += w * g.row(static_cast<Eigen::Index>(gi));
    }
    t.accumulate(x, full);
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Eigen::Index n = x.cols();
  if (n < 2) throw ShapeError("layer_norm: need at least two columns");
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n) {
    throw ShapeError("layer_norm: gain/bias must be 1x" + std::to_string(n));
  }
  const Matrix& xv = x.value();
  Matrix xhat(xv.rows(), n);
  Eigen::VectorXd inv_std(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mu = xv.row(r).mean();
    const auto centered = (xv.row(r).array() - mu).matrix();
    const double var = centered.squaredNorm() / static_cast<double>(n);
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = centered * inv_std(r);
  }
  Matrix out = xhat;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    out.row(r) = out.row(r).cwiseProduct(gain.value().row(0)) + bias.value().row(0);
  }
  Tape& t = x.tape();
  return t.record(std::move(out), {x, gain, bias},
                  [&t, x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](const Matrix& g) {
    if (t.needs(gain)) t.accumulate(gain, g.cwiseProduct(xhat).colwise().sum());
    if (t.needs(bias)) t.accumulate(bias, g.colwise().sum());
    if (!t.needs(x)) return;
    const double nd = static_cast<double>(xhat.cols());
    Matrix dx(xhat.rows(), xhat.cols());
    for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
      const Eigen::RowVectorXd dxhat = g.row(r).cwiseProduct(gain.value().row(0));
      const double s1 = dxhat.sum();
      const double s2 = dxhat.dot(xhat.row(r));
      dx.row(r) = (inv_std(r) / nd) * (nd * dxhat.array() - s1 - xhat.row(r).array() * s2).matrix();
    }
    t.accumulate(x, dx);
  });
}

Var softmax_rows(const Var& x) {
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mx = x.value().row(r).maxCoeff();
    y.row(r) = (x.value().row(r).array() - mx).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  Tape& t = x.tape();
  Matrix local = y;
  return t.record(std::move(y), {x}, [&t, x, s = std::move(local)](const Matrix& g) {
    Matrix dx(s.rows(), s.cols());
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
      const double dot = g.row(r).dot(s.row(r));
      dx.row(r) = s.row(r).cwiseProduct((g.row(r).array() - dot).matrix());
    }
    t.accumulate(x, dx);
  });
}

Var sum(const Var& x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  Tape& t = x.tape();
  return t.record(std::move(out), {x}, [&t, x](const Matrix& g) {
    t.accumulate(x, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
  });
}

Var mean(const Var& x) {
  const double count = static_cast<double>(x.value().size());
  return scale(sum(x), count > 0 ? 1.0 / count : 0.0);
}

}  // namespace mgnm::ad
