#include "ctxrw/tensor.hpp"

#include <cmath>
#include <sstream>

namespace ctxrw::tensor {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << "[" << m.rows() << "x" << m.cols() << "]";
  return os.str();
}

namespace {

[[noreturn]] void shape_fail(const char* op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                   shape_str(b));
}

void require_same(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail(op, a, b);
}

void require_scalar(const char* op, const Matrix& a) {
  if (a.rows() != 1 || a.cols() != 1) throw ShapeError(std::string(op) + ": expected scalar, got " + shape_str(a));
}

}  // namespace

// ---- ParameterSet ---------------------------------------------------------

Parameter& ParameterSet::add(const std::string& name, Matrix value, bool is_bias) {
  if (contains(name)) throw Error("duplicate parameter name: " + name);
  index_.emplace(name, params_.size());
  params_.push_back(std::make_unique<Parameter>(name, params_.size(), std::move(value), is_bias));
  return *params_.back();
}

Parameter& ParameterSet::add_weight(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                                    Rng& rng, double scale) {
  Matrix m(rows, cols);
  // column-major fill order is part of the seed contract
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(-scale, scale);
  return add(name, std::move(m), false);
}

Parameter& ParameterSet::add_bias(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  return add(name, Matrix::Zero(rows, cols), true);
}

Parameter& ParameterSet::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter: " + name);
  return *params_[it->second];
}

const Parameter& ParameterSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter: " + name);
  return *params_[it->second];
}

std::size_t ParameterSet::value_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->grad.setZero();
}

double ParameterSet::grad_norm() const {
  double sq = 0.0;
  for (const auto& p : params_) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

double ParameterSet::clip_grad_norm(double max_norm) {
  const double norm = grad_norm();
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& p : params_) p->grad *= s;
  }
  return norm;
}

void ParameterSet::copy_values_from(const ParameterSet& other) {
  if (other.size() != size()) throw Error("copy_values_from: parameter count mismatch");
  for (std::size_t i = 0; i < size(); ++i) {
    require_same("copy_values_from", params_[i]->value, other[i].value);
    params_[i]->value = other[i].value;
  }
}

std::vector<Matrix> ParameterSet::snapshot() const {
  std::vector<Matrix> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p->value);
  return out;
}

void ParameterSet::restore(const std::vector<Matrix>& values) {
  if (values.size() != params_.size()) throw Error("restore: parameter count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    require_same("restore", params_[i]->value, values[i]);
    params_[i]->value = values[i];
  }
}

GradBuffer::GradBuffer(const ParameterSet& params) : grads_(params.size()) {}

void GradBuffer::add_to(ParameterSet& params) const {
  for (std::size_t i = 0; i < grads_.size(); ++i)
    if (grads_[i].size() != 0) params[i].grad += grads_[i];
}

void GradBuffer::add(const GradBuffer& other) {
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    if (other.grads_[i].size() == 0) continue;
    if (grads_[i].size() == 0)
      grads_[i] = other.grads_[i];
    else
      grads_[i] += other.grads_[i];
  }
}

// ---- Graph ----------------------------------------------------------------

const Matrix& Var::value() const { return graph_->value(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  require_scalar("scalar", v);
  return v(0, 0);
}

const Matrix& Graph::value(int id) const {
  const Node& n = nodes_[id];
  return n.ref ? *n.ref : n.value;
}

Var Graph::constant(Matrix value) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

Var Graph::vector(std::span<const double> v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
  return constant(std::move(m));
}

Var Graph::param(Parameter& p) {
  auto it = bound_.find(&p);
  if (it != bound_.end()) return Var(this, it->second);
  Node& n = nodes_.emplace_back();
  n.ref = &p.value;
  n.param = &p;
  n.needs_grad = track_grad_;
  const int id = static_cast<int>(nodes_.size()) - 1;
  bound_.emplace(&p, id);
  return Var(this, id);
}

Var Graph::record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Graph::record(Matrix value, std::span<const Var> inputs, Backward backward) {
  if (check_finite_ && !value.allFinite()) throw Error("non-finite value produced by op");
  bool needs = false;
  if (track_grad_) {
    for (const Var& v : inputs) {
      if (v.graph() != this) throw Error("op mixes nodes from different graphs");
      needs = needs || nodes_[v.id()].needs_grad;
    }
  }
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.needs_grad = needs;
  if (needs) n.backward = std::move(backward);
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Graph::accumulate_at(int id, Eigen::Index r, Eigen::Index c, double g) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) {
    const Matrix& v = value(id);
    n.grad = Matrix::Zero(v.rows(), v.cols());
  }
  n.grad(r, c) += g;
}

void Graph::backward(Var root, double seed) { run_backward(root, seed, nullptr); }

void Graph::backward(Var root, GradBuffer& sink, double seed) { run_backward(root, seed, &sink); }

void Graph::run_backward(Var root, double seed, GradBuffer* sink) {
  if (root.graph() != this) throw Error("backward: root belongs to another graph");
  const Matrix& rv = value(root.id());
  if (rv.rows() != 1 || rv.cols() != 1)
    throw ShapeError("backward: root must be scalar, got " + shape_str(rv));
  for (Node& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[root.id()].needs_grad) return;
  nodes_[root.id()].grad = Matrix::Constant(1, 1, seed);
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.param) {
      if (sink) {
        Matrix& g = (*sink)[n.param->index()];
        if (g.size() == 0)
          g = n.grad;
        else
          g += n.grad;
      } else {
        n.param->grad += n.grad;
      }
    } else if (n.backward) {
      n.backward(*this, n.grad);
    }
  }
}

// ---- ops ------------------------------------------------------------------

Var matmul(Var a, Var b) {
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  if (A.cols() != B.rows()) shape_fail("matmul", A, B);
  Graph& g = *a.graph();
  const int ia = a.id(), ib = b.id();
  return g.record(A * B, {a, b}, [ia, ib](Graph& g, const Matrix& G) {
    if (g.needs_grad(ia)) g.accumulate(ia, G * g.value(ib).transpose());
    if (g.needs_grad(ib)) g.accumulate(ib, g.value(ia).transpose() * G);
  });
}

Var matmul_tn(Var a, Var b) {
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  if (A.rows() != B.rows()) shape_fail("matmul_tn", A, B);
  Graph& g = *a.graph();
  const int ia = a.id(), ib = b.id();
  return g.record(A.transpose() * B, {a, b}, [ia, ib](Graph& g, const Matrix& G) {
    if (g.needs_grad(ia)) g.accumulate(ia, g.value(ib) * G.transpose());
    if (g.needs_grad(ib)) g.accumulate(ib, g.value(ia) * G);
  });
}

Var transpose(Var a) {
  Graph& g = *a.graph();
  const int ia = a.id();
  return g.record(a.value().transpose(), {a},
                  [ia](Graph& g, const Matrix& G) { g.accumulate(ia, G.transpose()); });
}

Var add(Var a, Var b) {
  require_same("add", a.value(), b.value());
  Graph& g = *a.graph();
  const int ia = a.id(), ib = b.id();
  return g.record(a.value() + b.value(), {a, b}, [ia, ib](Graph& g, const Matrix& G) {
    g.accumulate(ia, G);
    g.accumulate(ib, G);
  });
}

Var sub(Var a, Var b) {
  require_same("sub", a.value(), b.value());
  Graph& g = *a.graph();
  const int ia = a.id(), ib = b.id();
  return g.record(a.value() - b.value(), {a, b}, [ia, ib](Graph& g, const Matrix& G) {
    g.accumulate(ia, G);
    g.accumulate(ib, -G);
  });
}

Var mul(Var a, Var b) {
  require_same("mul", a.value(), b.value());
  Graph& g = *a.graph();
  const int ia = a.id(), ib = b.id();
  return g.record(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Graph& g, const Matrix& G) {
    if (g.needs_grad(ia)) g.accumulate(ia, G.cwiseProduct(g.value(ib)));
    if (g.needs_grad(ib)) g.accumulate(ib, G.cwiseProduct(g.value(ia)));
  });
}

Var affine(Var a, double alpha, double beta) {
  Graph& g = *a.graph();
  const int ia = a.id();
  Matrix out = (alpha * a.value()).array() + beta;
  return g.record(std::move(out), {a},
                  [ia, alpha](Graph& g, const Matrix& G) { g.accumulate(ia, alpha * G); });
}

Var scale_by(Var a, Var s) {
  require_scalar("scale_by", s.value());
  Graph& g = *a.graph();
  const int ia = a.id(), is = s.id();
  return g.record(a.value() * s.value()(0, 0), {a, s}, [ia, is](Graph& g, const Matrix& G) {
    if (g.needs_grad(ia)) g.accumulate(ia, G * g.value(is)(0, 0));
    if (g.needs_grad(is)) g.accumulate_at(is, 0, 0, G.cwiseProduct(g.value(ia)).sum());
  });
}

Var sigmoid(Var a) {
  Graph& g = *a.graph();
  const int ia = a.id();
  Matrix y = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  const int iy = static_cast<int>(g.size());
  return g.record(std::move(y), {a}, [ia, iy](Graph& g, const Matrix& G) {
    const auto y = g.value(iy).array();
    g.accumulate(ia, (G.array() * y * (1.0 - y)).matrix());
  });
}

Var tanh(Var a) {
  Graph& g = *a.graph();
  const int ia = a.id();
  Matrix y = a.value().array().tanh().matrix();
  const int iy = static_cast<int>(g.size());
  return g.record(std::move(y), {a}, [ia, iy](Graph& g, const Matrix& G) {
    const auto y = g.value(iy).array();
    g.accumulate(ia, (G.array() * (1.0 - y * y)).matrix());
  });
}

Var exp(Var a) {
  Graph& g = *a.graph();
  const int ia = a.id();
  Matrix y = a.value().array().exp().matrix();
  const int iy = static_cast<int>(g.size());
  return g.record(std::move(y), {a}, [ia, iy](Graph& g, const Matrix& G) {
    g.accumulate(ia, G.cwiseProduct(g.value(iy)));
  });
}

Var log(Var a) {
  Graph& g = *a.graph();
  const int ia = a.id();
  return g.record(a.value().array().log().matrix(), {a}, [ia](Graph& g, const Matrix& G) {
    g.accumulate(ia, G.cwiseQuotient(g.value(ia)));
  });
}

Var log_sigmoid(Var a) {
  Graph& g = *a.graph();
  const int ia = a.id();
  // log σ(x) = min(x, 0) - log1p(exp(-|x|))
  Matrix y = a.value().unaryExpr([](double x) { return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x))); });
  return g.record(std::move(y), {a}, [ia](Graph& g, const Matrix& G) {
    // d/dx log σ(x) = σ(-x)
    Matrix d = g.value(ia).unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(x)); });
    g.accumulate(ia, G.cwiseProduct(d));
  });
}

Var softmax(Var a, int axis) {
  if (axis != 0 && axis != 1) throw ShapeError("softmax: axis must be 0 or 1");
  Graph& g = *a.graph();
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  if (axis == 0) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double mx = x.col(j).maxCoeff();
      y.col(j) = (x.col(j).array() - mx).exp().matrix();
      y.col(j) /= y.col(j).sum();
    }
  } else {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double mx = x.row(i).maxCoeff();
      y.row(i) = (x.row(i).array() - mx).exp().matrix();
      y.row(i) /= y.row(i).sum();
    }
  }
  const int ia = a.id();
  const int iy = static_cast<int>(g.size());
  return g.record(std::move(y), {a}, [ia, iy, axis](Graph& g, const Matrix& G) {
    const Matrix& y = g.value(iy);
    Matrix d = G.cwiseProduct(y);
    if (axis == 0) {
      const Eigen::RowVectorXd s = d.colwise().sum();
      for (Eigen::Index j = 0; j < y.cols(); ++j) d.col(j) -= y.col(j) * s(j);
    } else {
      const Eigen::VectorXd s = d.rowwise().sum();
      for (Eigen::Index i = 0; i < y.rows(); ++i) d.row(i) -= y.row(i) * s(i);
    }
    g.accumulate(ia, d);
  });
}

Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (axis != 0 && axis != 1) throw ShapeError("concat: axis must be 0 or 1");
  Graph& g = *parts[0].graph();
  Eigen::Index rows = 0, cols = 0;
  const Matrix& first = parts[0].value();
  for (const Var& p : parts) {
    const Matrix& v = p.value();
    if (axis == 0) {
      if (v.cols() != first.cols()) shape_fail("concat", first, v);
      rows += v.rows();
    } else {
      if (v.rows() != first.rows()) shape_fail("concat", first, v);
      cols += v.cols();
    }
  }
  if (axis == 0) cols = first.cols();
  else rows = first.rows();
  Matrix out(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  ids.reserve(parts.size());
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    const Matrix& v = p.value();
    if (axis == 0) {
      out.middleRows(off, v.rows()) = v;
      offsets.push_back(off);
      off += v.rows();
    } else {
      out.middleCols(off, v.cols()) = v;
      offsets.push_back(off);
      off += v.cols();
    }
    ids.push_back(p.id());
  }
  return g.record(std::move(out), parts,
                  [ids = std::move(ids), offsets = std::move(offsets), axis](Graph& g, const Matrix& G) {
                    for (std::size_t k = 0; k < ids.size(); ++k) {
                      if (!g.needs_grad(ids[k])) continue;
                      const Matrix& v = g.value(ids[k]);
                      if (axis == 0)
                        g.accumulate(ids[k], G.middleRows(offsets[k], v.rows()));
                      else
                        g.accumulate(ids[k], G.middleCols(offsets[k], v.cols()));
                    }
                  });
}

Var concat(std::initializer_list<Var> parts, int axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  const Matrix& x = a.value();
  if (start < 0 || count < 0 || start + count > x.rows())
    throw ShapeError("slice_rows: range [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") outside " + shape_str(x));
  Graph& g = *a.graph();
  const int ia = a.id();
  return g.record(x.middleRows(start, count), {a}, [ia, start, count](Graph& g, const Matrix& G) {
    const Matrix& x = g.value(ia);
    Matrix d = Matrix::Zero(x.rows(), x.cols());
    d.middleRows(start, count) = G;
    g.accumulate(ia, d);
  });
}

Var pick(Var a, Eigen::Index r, Eigen::Index c) {
  const Matrix& x = a.value();
  if (r < 0 || c < 0 || r >= x.rows() || c >= x.cols())
    throw ShapeError("pick: index (" + std::to_string(r) + "," + std::to_string(c) + ") outside " +
                     shape_str(x));
  Graph& g = *a.graph();
  const int ia = a.id();
  return g.record(Matrix::Constant(1, 1, x(r, c)), {a},
                  [ia, r, c](Graph& g, const Matrix& G) { g.accumulate_at(ia, r, c, G(0, 0)); });
}

Var sum(Var a) {
  Graph& g = *a.graph();
  const int ia = a.id();
  return g.record(Matrix::Constant(1, 1, a.value().sum()), {a}, [ia](Graph& g, const Matrix& G) {
    const Matrix& x = g.value(ia);
    g.accumulate(ia, Matrix::Constant(x.rows(), x.cols(), G(0, 0)));
  });
}

Var mean(Var a) {
  Graph& g = *a.graph();
  const int ia = a.id();
  const double n = static_cast<double>(a.value().size());
  return g.record(Matrix::Constant(1, 1, a.value().sum() / n), {a}, [ia, n](Graph& g, const Matrix& G) {
    const Matrix& x = g.value(ia);
    g.accumulate(ia, Matrix::Constant(x.rows(), x.cols(), G(0, 0) / n));
  });
}

Var embed(Var table, Eigen::Index id) {
  const Matrix& t = table.value();
  if (id < 0 || id >= t.rows())
    throw ShapeError("embed: id " + std::to_string(id) + " outside table " + shape_str(t));
  Graph& g = *table.graph();
  const int it = table.id();
  return g.record(t.row(id).transpose(), {table}, [it, id](Graph& g, const Matrix& G) {
    const Matrix& t = g.value(it);
    for (Eigen::Index j = 0; j < t.cols(); ++j) g.accumulate_at(it, id, j, G(j, 0));
  });
}

Var dropout(Var a, double p) {
  Graph& g = *a.graph();
  if (!g.training() || p <= 0.0) return a;
  if (p >= 1.0) throw Error("dropout: p must be < 1");
  const Matrix& x = a.value();
  Matrix mask(x.rows(), x.cols());
  const double keep = 1.0 / (1.0 - p);
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i) mask(i, j) = g.rng().uniform() < p ? 0.0 : keep;
  Matrix out = x.cwiseProduct(mask);
  const int ia = a.id();
  return g.record(std::move(out), {a}, [ia, mask = std::move(mask)](Graph& g, const Matrix& G) {
    g.accumulate(ia, G.cwiseProduct(mask));
  });
}

Var scatter_add(Var a, std::span<const int> index, Eigen::Index size) {
  const Matrix& x = a.value();
  if (x.cols() != 1 || x.rows() != static_cast<Eigen::Index>(index.size()))
    throw ShapeError("scatter_add: input " + shape_str(x) + " does not match index of length " +
                     std::to_string(index.size()));
  Matrix out = Matrix::Zero(size, 1);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= size)
      throw ShapeError("scatter_add: target " + std::to_string(index[i]) + " outside size " +
                       std::to_string(size));
    out(index[i], 0) += x(static_cast<Eigen::Index>(i), 0);
  }
  Graph& g = *a.graph();
  const int ia = a.id();
  std::vector<int> idx(index.begin(), index.end());
  return g.record(std::move(out), {a}, [ia, idx = std::move(idx)](Graph& g, const Matrix& G) {
    Matrix d(static_cast<Eigen::Index>(idx.size()), 1);
    for (std::size_t i = 0; i < idx.size(); ++i) d(static_cast<Eigen::Index>(i), 0) = G(idx[i], 0);
    g.accumulate(ia, d);
  });
}

Var detach(Var a) { return a.graph()->constant(a.value()); }

Var cross_entropy(Var logits, Eigen::Index target) {
  const Matrix& x = logits.value();
  if (x.cols() != 1 || target < 0 || target >= x.rows())
    throw ShapeError("cross_entropy: target " + std::to_string(target) + " invalid for " + shape_str(x));
  const double mx = x.maxCoeff();
  Matrix p = (x.array() - mx).exp().matrix();
  const double z = p.sum();
  p /= z;
  const double loss = -(x(target, 0) - mx - std::log(z));
  Graph& g = *logits.graph();
  const int ia = logits.id();
  return g.record(Matrix::Constant(1, 1, loss), {logits},
                  [ia, target, p = std::move(p)](Graph& g, const Matrix& G) {
                    Matrix d = p * G(0, 0);
                    d(target, 0) -= G(0, 0);
                    g.accumulate(ia, d);
                  });
}

Var nll(Var probs, Eigen::Index target) {
  const Matrix& p = probs.value();
  if (p.cols() != 1 || target < 0 || target >= p.rows())
    throw ShapeError("nll: target " + std::to_string(target) + " invalid for " + shape_str(p));
  Graph& g = *probs.graph();
  const int ia = probs.id();
  return g.record(Matrix::Constant(1, 1, -std::log(p(target, 0))), {probs},
                  [ia, target](Graph& g, const Matrix& G) {
                    g.accumulate_at(ia, target, 0, -G(0, 0) / g.value(ia)(target, 0));
                  });
}

// ---- Adam -----------------------------------------------------------------

void AdamState::init(const ParameterSet& params) {
  m.clear();
  v.clear();
  step = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    m.push_back(Matrix::Zero(params[i].value.rows(), params[i].value.cols()));
    v.push_back(Matrix::Zero(params[i].value.rows(), params[i].value.cols()));
  }
}

void adam_step(ParameterSet& params, AdamState& state) {
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw Error("adam_step: optimizer state not initialized for this parameter set");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    Matrix& m = state.m[i];
    Matrix& v = state.v[i];
    m = state.beta1 * m + (1.0 - state.beta1) * p.grad;
    v = state.beta2 * v + (1.0 - state.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= state.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.eps);
  }
  params.zero_grad();
}

}  // namespace ctxrw::tensor
