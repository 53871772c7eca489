#pragma once

#include <string>
#include <vector>

#include "ctxrw/tensor.hpp"

namespace ctxrw::nn {

using tensor::Graph;
using tensor::Parameter;
using tensor::ParameterSet;
using tensor::Var;

/// y = W x + b
struct Linear {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;

  static Linear make(ParameterSet& ps, const std::string& prefix, int in, int out, Rng& rng,
                     double scale);
  Var operator()(Graph& g, Var x) const;
};

/// Two-layer perceptron with a tanh hidden layer.
struct Mlp {
  Linear hidden;
  Linear output;

  static Mlp make(ParameterSet& ps, const std::string& prefix, int in, int hidden, int out, Rng& rng,
                  double scale);
  Var operator()(Graph& g, Var x) const;
};

/// Cho-style GRU cell:
///   z = σ(W_z x + U_z h + b_z),  r = σ(W_r x + U_r h + b_r)
///   h̃ = tanh(W_h x + U_h (r ⊙ h) + b_h)
///   h' = z ⊙ h + (1 − z) ⊙ h̃
/// The three input maps are stacked in one (3H x I) matrix and the two gate
/// recurrences in one (2H x H) matrix.
struct Gru {
  Parameter* w_in = nullptr;   // 3H x I
  Parameter* b_in = nullptr;   // 3H
  Parameter* u_gate = nullptr; // 2H x H
  Parameter* u_cand = nullptr; // H x H
  int input = 0;
  int hidden = 0;

  static Gru make(ParameterSet& ps, const std::string& prefix, int in, int hidden, Rng& rng, double scale);
  Var cell(Graph& g, Var x, Var h) const;
  Var zero_state(Graph& g) const;
};

struct BiGruOutput {
  std::vector<Var> states;  // per step, [forward ; backward], 2H x 1
  Var forward_final;        // forward state after the last step
  Var backward_final;       // backward state after the first step
};

struct BiGru {
  Gru forward;
  Gru backward;

  static BiGru make(ParameterSet& ps, const std::string& prefix, int in, int hidden, Rng& rng,
                    double scale);
  BiGruOutput encode(Graph& g, const std::vector<Var>& inputs) const;
};

struct Attention {
  Var weights;  // n x 1
  Var context;  // d x 1
};

/// Bilinear attention: e_i = h_iᵀ W s, α = softmax(e), context = Σ α_i h_i.
/// `memory` is d x n (one column per step); `bilinear` is d x |s|.
Attention attend(Graph& g, Var s, Var memory, Var bilinear);

}  // namespace ctxrw::nn
