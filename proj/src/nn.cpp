#include "ctxrw/nn.hpp"

namespace ctxrw::nn {

namespace t = ctxrw::tensor;

Linear Linear::make(ParameterSet& ps, const std::string& prefix, int in, int out, Rng& rng, double scale) {
  Linear l;
  l.weight = &ps.add_weight(prefix + ".W", out, in, rng, scale);
  l.bias = &ps.add_bias(prefix + ".b", out);
  return l;
}

Var Linear::operator()(Graph& g, Var x) const {
  return t::add(t::matmul(g.param(*weight), x), g.param(*bias));
}

Mlp Mlp::make(ParameterSet& ps, const std::string& prefix, int in, int hidden_dim, int out, Rng& rng,
              double scale) {
  Mlp m;
  m.hidden = Linear::make(ps, prefix + ".hidden", in, hidden_dim, rng, scale);
  m.output = Linear::make(ps, prefix + ".out", hidden_dim, out, rng, scale);
  return m;
}

Var Mlp::operator()(Graph& g, Var x) const { return output(g, t::tanh(hidden(g, x))); }

Gru Gru::make(ParameterSet& ps, const std::string& prefix, int in, int hidden_dim, Rng& rng, double scale) {
  Gru c;
  c.input = in;
  c.hidden = hidden_dim;
  c.w_in = &ps.add_weight(prefix + ".W_in", 3 * hidden_dim, in, rng, scale);
  c.b_in = &ps.add_bias(prefix + ".b_in", 3 * hidden_dim);
  c.u_gate = &ps.add_weight(prefix + ".U_gate", 2 * hidden_dim, hidden_dim, rng, scale);
  c.u_cand = &ps.add_weight(prefix + ".U_cand", hidden_dim, hidden_dim, rng, scale);
  return c;
}

Var Gru::zero_state(Graph& g) const { return g.constant(t::Matrix::Zero(hidden, 1)); }

Var Gru::cell(Graph& g, Var x, Var h) const {
  if (x.rows() != input || h.rows() != hidden)
    throw ShapeError("gru_cell: input " + t::shape_str(x.value()) + " / state " + t::shape_str(h.value()) +
                     " do not match cell sizes " + std::to_string(input) + "/" + std::to_string(hidden));
  const Var gx = t::add(t::matmul(g.param(*w_in), x), g.param(*b_in));
  const Var gh = t::matmul(g.param(*u_gate), h);
  const Var gates = t::sigmoid(t::add(t::slice_rows(gx, 0, 2 * hidden), gh));
  const Var z = t::slice_rows(gates, 0, hidden);
  const Var r = t::slice_rows(gates, hidden, hidden);
  const Var cand = t::tanh(t::add(t::slice_rows(gx, 2 * hidden, hidden), t::matmul(g.param(*u_cand), t::mul(r, h))));
  // h' = z ⊙ h + (1 − z) ⊙ h̃
  return t::add(t::mul(z, h), t::mul(t::affine(z, -1.0, 1.0), cand));
}

BiGru BiGru::make(ParameterSet& ps, const std::string& prefix, int in, int hidden_dim, Rng& rng,
                  double scale) {
  BiGru b;
  b.forward = Gru::make(ps, prefix + ".fwd", in, hidden_dim, rng, scale);
  b.backward = Gru::make(ps, prefix + ".bwd", in, hidden_dim, rng, scale);
  return b;
}

BiGruOutput BiGru::encode(Graph& g, const std::vector<Var>& inputs) const {
  if (inputs.empty()) throw Error("bigru_encode: empty sequence");
  const std::size_t n = inputs.size();
  std::vector<Var> fwd(n), bwd(n);
  Var h = forward.zero_state(g);
  for (std::size_t i = 0; i < n; ++i) fwd[i] = h = forward.cell(g, inputs[i], h);
  h = backward.zero_state(g);
  for (std::size_t i = n; i-- > 0;) bwd[i] = h = backward.cell(g, inputs[i], h);
  BiGruOutput out;
  out.states.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.states.push_back(t::concat({fwd[i], bwd[i]}));
  out.forward_final = fwd[n - 1];
  out.backward_final = bwd[0];
  return out;
}

Attention attend(Graph& g, Var s, Var memory, Var bilinear) {
  (void)g;
  const Var u = t::matmul(bilinear, s);           // d x 1
  const Var scores = t::matmul_tn(memory, u);     // n x 1
  const Var alpha = t::softmax(scores);
  return {alpha, t::matmul(memory, alpha)};
}

}  // namespace ctxrw::nn
