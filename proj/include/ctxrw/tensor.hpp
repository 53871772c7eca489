#pragma once

// Reverse-mode differentiation over dense double-precision matrices.
//
// A Graph is a tape: every op appends a node holding its forward value and a
// closure that pushes the output gradient back to its inputs. Parameters live
// outside any graph (ParameterSet) and are bound to a graph as leaves; their
// gradients are accumulated either directly into Parameter::grad or into a
// GradBuffer so that several tapes can run over shared read-only parameters.
//
// Vectors are column matrices (n x 1). Scalars are 1 x 1.

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "ctxrw/error.hpp"
#include "ctxrw/rng.hpp"

namespace ctxrw::tensor {

using Matrix = Eigen::MatrixXd;

std::string shape_str(const Matrix& m);

class Parameter {
 public:
  Parameter(std::string name, std::size_t index, Matrix value, bool is_bias)
      : value(std::move(value)),
        grad(Matrix::Zero(this->value.rows(), this->value.cols())),
        name_(std::move(name)),
        index_(index),
        is_bias_(is_bias) {}

  const std::string& name() const { return name_; }
  std::size_t index() const { return index_; }
  bool is_bias() const { return is_bias_; }

  Matrix value;
  Matrix grad;

 private:
  std::string name_;
  std::size_t index_;
  bool is_bias_;
};

/// Named trainable arrays, kept in insertion order.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;
  ParameterSet(ParameterSet&&) = default;
  ParameterSet& operator=(ParameterSet&&) = default;

  /// Weight matrix, drawn uniform(-scale, scale).
  Parameter& add_weight(const std::string& name, Eigen::Index rows, Eigen::Index cols, Rng& rng,
                        double scale = 0.08);
  /// Zero-initialized bias.
  Parameter& add_bias(const std::string& name, Eigen::Index rows, Eigen::Index cols = 1);

  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  std::size_t value_count() const;
  void zero_grad();
  double grad_norm() const;
  /// Rescales all gradients so their global L2 norm is at most max_norm.
  /// Returns the norm before clipping.
  double clip_grad_norm(double max_norm);

  /// Copies values (not gradients) from another set with identical layout.
  void copy_values_from(const ParameterSet& other);

  std::vector<Matrix> snapshot() const;
  void restore(const std::vector<Matrix>& values);

 private:
  Parameter& add(const std::string& name, Matrix value, bool is_bias);

  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Per-tape gradient accumulator, indexed like the ParameterSet.
class GradBuffer {
 public:
  explicit GradBuffer(const ParameterSet& params);

  Matrix& operator[](std::size_t i) { return grads_[i]; }
  void add_to(ParameterSet& params) const;
  void add(const GradBuffer& other);

 private:
  std::vector<Matrix> grads_;
};

class Graph;

/// Handle to a node on a Graph.
class Var {
 public:
  Var() = default;
  Var(Graph* g, int id) : graph_(g), id_(id) {}

  Graph* graph() const { return graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;

 private:
  Graph* graph_ = nullptr;
  int id_ = -1;
};

class Graph {
 public:
  using Backward = std::function<void(Graph&, const Matrix& out_grad)>;

  /// `train` enables dropout; `seed` drives dropout masks; `track_grad`
  /// false skips recording backward closures (inference).
  explicit Graph(bool train = false, std::uint64_t seed = 0, bool track_grad = true)
      : train_(train), track_grad_(track_grad), rng_(seed) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value);
  Var scalar(double v);
  Var vector(std::span<const double> v);
  /// Binds a parameter as a leaf. Repeated binds return the same node.
  Var param(Parameter& p);

  /// Records an op. Inputs determine whether the node needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Matrix value, std::span<const Var> inputs, Backward backward);

  /// Reverse pass from a scalar root. Gradients go to Parameter::grad.
  void backward(Var root, double seed = 1.0);
  /// Reverse pass accumulating parameter gradients into `sink`.
  void backward(Var root, GradBuffer& sink, double seed = 1.0);

  const Matrix& value(int id) const;
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  /// Adds `g` to the gradient of node `id` (allocating on first use).
  template <typename Derived>
  void accumulate(int id, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }
  /// Adds `g` into a single entry of node `id`.
  void accumulate_at(int id, Eigen::Index r, Eigen::Index c, double g);

  bool training() const { return train_; }
  void set_training(bool train) { train_ = train; }
  bool tracking() const { return track_grad_; }
  Rng& rng() { return rng_; }
  std::size_t size() const { return nodes_.size(); }

  /// When enabled, every recorded value is checked for NaN/Inf.
  void set_check_finite(bool on) { check_finite_ = on; }

 private:
  struct Node {
    Matrix value;
    const Matrix* ref = nullptr;  // parameter leaves alias the parameter value
    Parameter* param = nullptr;
    Matrix grad;
    bool needs_grad = false;
    Backward backward;
  };

  void run_backward(Var root, double seed, GradBuffer* sink);

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, int> bound_;
  bool train_;
  bool track_grad_;
  bool check_finite_ = false;
  Rng rng_;
};

// ---- elementary ops -------------------------------------------------------

Var matmul(Var a, Var b);
/// a^T b
Var matmul_tn(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// alpha * a + beta, elementwise
Var affine(Var a, double alpha, double beta = 0.0);
/// a scaled by the 1x1 node s
Var scale_by(Var a, Var s);
Var sigmoid(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
/// log(sigmoid(a)), stable for large |a|
Var log_sigmoid(Var a);
/// axis 0 normalizes each column; axis 1 each row.
Var softmax(Var a, int axis = 0);
Var concat(std::span<const Var> parts, int axis = 0);
Var concat(std::initializer_list<Var> parts, int axis = 0);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
/// 1x1 node holding a(r, c).
Var pick(Var a, Eigen::Index r, Eigen::Index c = 0);
Var sum(Var a);
Var mean(Var a);
/// Row `id` of an embedding table (V x d), returned as a d x 1 column.
Var embed(Var table, Eigen::Index id);
/// Inverted dropout; identity when the graph is not training or p == 0.
Var dropout(Var a, double p);
/// out[index[i]] += a[i]; out has `size` rows.
Var scatter_add(Var a, std::span<const int> index, Eigen::Index size);
/// Value copy with no gradient path.
Var detach(Var a);
/// -log softmax(logits)[target] for a column of logits.
Var cross_entropy(Var logits, Eigen::Index target);
/// -log probs[target] for a column of probabilities.
Var nll(Var probs, Eigen::Index target);

// ---- optimizer ------------------------------------------------------------

struct AdamState {
  double lr = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;

  void init(const ParameterSet& params);
  bool initialized() const { return !m.empty() || step > 0; }
};

/// One bias-corrected Adam update from the accumulated gradients, which are
/// zeroed afterwards.
void adam_step(ParameterSet& params, AdamState& state);

}  // namespace ctxrw::tensor
