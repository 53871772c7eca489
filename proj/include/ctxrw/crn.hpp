#pragma once

// Context rewriting network: a q encoder and a c encoder (both bidirectional
// GRUs), and a GRU decoder whose output mixes a vocabulary distribution with a
// copy distribution over context positions through a two-way mode gate.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctxrw/corpus.hpp"
#include "ctxrw/nn.hpp"
#include "ctxrw/tensor.hpp"

namespace ctxrw::crn {

using tensor::Graph;
using tensor::Var;

struct CrnConfig {
  int emb = 64;
  int enc_hidden = 64;
  int dec_hidden = 128;
  double dropout = 0.3;
  /// Extends the copy source to q as well as c.
  bool copy_from_q = false;
  double init_scale = 0.08;
  std::uint64_t seed = 1;
  int max_len = 40;

  nlohmann::json to_json() const;
  static CrnConfig from_json(const nlohmann::json& j);
};

/// One example resolved against the vocabulary.
struct CrnInput {
  std::vector<int> q_ids;
  /// Context utterances joined with EOS as separator.
  std::vector<int> c_ids;
  /// Output id (base or extended) for every copy-source position.
  std::vector<int> copy_map;
  /// Extended-vocabulary tokens: id vocab_size + k is oov[k].
  Tokens oov;
  int vocab_size = 0;
  /// Target ids (extended where copyable) followed by EOS; empty at inference.
  std::vector<int> target;

  int ext_size() const { return vocab_size + static_cast<int>(oov.size()); }
};

struct EncoderOutputs {
  Var hq;           // 2He x |q|
  Var hc;           // 2He x |c|
  Var copy_memory;  // columns aligned with CrnInput::copy_map
  Var s0;           // Hd x 1
};

struct DecoderState {
  Var s;
  Var z_prev;  // detached fusion vector of the previous step
};

struct StepOutput {
  Var p_predict;  // V x 1
  Var p_copy;     // copy-source positions x 1
  Var gate;       // [p(pr) ; p(co)]
  Var alpha_q;
  Var alpha_c;
  Var z;
  DecoderState next;
};

struct Hypothesis {
  std::vector<int> ids;  // extended ids, EOS included when finished
  double log_prob = 0.0;
  bool finished = false;
  Tokens tokens;         // surface form without EOS

  /// log_prob / |ids|
  double normalized() const;
};

struct SampleResult {
  std::vector<int> ids;
  std::vector<Var> step_log_probs;  // recorded on the caller's graph
  std::vector<double> log_probs;
  Tokens tokens;

  double total_log_prob() const;
};

class CrnModel {
 public:
  CrnModel(Vocab vocab, CrnConfig config);
  CrnModel(CrnModel&&) = default;

  void save(const std::filesystem::path& path, const tensor::AdamState* optimizer = nullptr) const;
  static CrnModel load(const std::filesystem::path& path, tensor::AdamState* optimizer = nullptr);

  CrnInput prepare(const std::vector<Tokens>& context, const Tokens& q, const Tokens* target = nullptr) const;

  EncoderOutputs encode(Graph& g, const CrnInput& in) const;
  DecoderState initial_state(Graph& g, const EncoderOutputs& enc) const;
  StepOutput decode_step(Graph& g, const DecoderState& state, int y_prev, const EncoderOutputs& enc,
                         const CrnInput& in) const;

  /// Full mixture p(y) over base ∪ extended ids.
  Var distribution(Graph& g, const StepOutput& step, const CrnInput& in) const;
  /// p(y) as a 1x1 node.
  Var token_prob(Graph& g, const StepOutput& step, const CrnInput& in, int y) const;

  /// Σ_t −log p(y_t) under teacher forcing on in.target.
  Var loss_sum(Graph& g, const CrnInput& in) const;

  /// Beam search ranked by length-normalized log-probability.
  std::vector<Hypothesis> beam_search(const CrnInput& in, int beam = 5, int max_len = 0) const;
  /// Ancestral sample from the temperature-scaled mixture; log-probs are
  /// under the unscaled distribution and recorded on `g`.
  SampleResult sample(Graph& g, const CrnInput& in, double temperature, Rng& rng, int max_len = 0) const;

  Tokens surface(const std::vector<int>& ids, const CrnInput& in) const;

  tensor::ParameterSet& params() { return params_; }
  const tensor::ParameterSet& params() const { return params_; }
  const Vocab& vocab() const { return vocab_; }
  const CrnConfig& config() const { return config_; }

 private:
  Var embed_token(Graph& g, int id) const;

  Vocab vocab_;
  CrnConfig config_;
  tensor::ParameterSet params_;
  tensor::Parameter* embedding_ = nullptr;
  nn::BiGru q_encoder_;
  nn::BiGru c_encoder_;
  nn::Linear init_;
  nn::Gru decoder_;
  tensor::Parameter* attn_q_ = nullptr;
  tensor::Parameter* attn_c_ = nullptr;
  nn::Linear fuse_;
  nn::Mlp predict_head_;
  nn::Mlp copy_head_;
  nn::Mlp gate_head_;
};

/// Mean per-token negative log-likelihood over a batch (teacher forcing,
/// EOS included, evaluation mode).
double mle_loss(const CrnModel& model, std::span<const CrnInput> batch);

}  // namespace ctxrw::crn
