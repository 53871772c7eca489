#pragma once

// Single-turn downstream models. The generator scores how well a source
// utterance predicts a response (mean token cross-entropy); the selector
// scores utterance/response compatibility. Both serve as rerankers for pseudo
// data and as reward oracles for fine-tuning.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ctxrw/corpus.hpp"
#include "ctxrw/nn.hpp"
#include "ctxrw/trainlog.hpp"

namespace ctxrw::singleturn {

using tensor::Graph;
using tensor::Var;

/// L(r | s): mean per-token negative log-likelihood of r given s.
class GenerationScorer {
 public:
  virtual ~GenerationScorer() = default;
  virtual double loss(const Tokens& source, const Tokens& response) const = 0;
};

/// M(utterance, response): larger means a better match.
class SelectionScorer {
 public:
  virtual ~SelectionScorer() = default;
  virtual double score(const Tokens& utterance, const Tokens& response) const = 0;

  /// M(s, po) − M(s, ne); larger means s separates the responses better.
  double margin(const Tokens& positive, const Tokens& negative, const Tokens& utterance) const {
    return score(utterance, positive) - score(utterance, negative);
  }
};

struct ModelConfig {
  int emb = 64;
  int enc_hidden = 64;
  int dec_hidden = 128;
  double dropout = 0.3;
  double init_scale = 0.08;
  std::uint64_t seed = 1;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct FitConfig {
  int epochs = 5;
  int batch = 32;
  double lr = 1e-3;
  double clip = 5.0;
  /// Trailing fraction of the data held out for validation.
  double valid_fraction = 0.1;
  std::size_t vocab_size = 20000;
  std::size_t min_count = 1;
  std::uint64_t seed = 1;
};

/// Attention encoder-decoder: biGRU encoder, GRU decoder, bilinear attention.
class S2sModel : public GenerationScorer {
 public:
  S2sModel(Vocab vocab, ModelConfig config);
  S2sModel(S2sModel&&) = default;

  /// Σ_t −log p(r_t | r_<t, s) with EOS appended to the response.
  Var loss_sum(Graph& g, const std::vector<int>& source, const std::vector<int>& response) const;
  double loss(const Tokens& source, const Tokens& response) const override;

  void save(const std::filesystem::path& path) const;
  static S2sModel load(const std::filesystem::path& path);

  tensor::ParameterSet& params() { return params_; }
  const tensor::ParameterSet& params() const { return params_; }
  const Vocab& vocab() const { return vocab_; }
  const ModelConfig& config() const { return config_; }

 private:
  Vocab vocab_;
  ModelConfig config_;
  tensor::ParameterSet params_;
  tensor::Parameter* embedding_ = nullptr;
  nn::BiGru encoder_;
  nn::Linear init_;
  nn::Gru decoder_;
  tensor::Parameter* attn_ = nullptr;
  nn::Linear combine_;
  nn::Linear output_;
};

/// Dual encoder: separate biGRUs for utterance and response, dot-product score.
class IrModel : public SelectionScorer {
 public:
  IrModel(Vocab vocab, ModelConfig config);
  IrModel(IrModel&&) = default;

  Var score_var(Graph& g, const std::vector<int>& utterance, const std::vector<int>& response) const;
  double score(const Tokens& utterance, const Tokens& response) const override;

  void save(const std::filesystem::path& path) const;
  static IrModel load(const std::filesystem::path& path);

  tensor::ParameterSet& params() { return params_; }
  const tensor::ParameterSet& params() const { return params_; }
  const Vocab& vocab() const { return vocab_; }
  const ModelConfig& config() const { return config_; }

 private:
  Var encode(Graph& g, const nn::BiGru& enc, const nn::Linear& proj, const std::vector<int>& ids) const;

  Vocab vocab_;
  ModelConfig config_;
  tensor::ParameterSet params_;
  tensor::Parameter* embedding_ = nullptr;
  nn::BiGru utterance_enc_;
  nn::BiGru response_enc_;
  nn::Linear utterance_proj_;
  nn::Linear response_proj_;
};

using Pair = std::pair<Tokens, Tokens>;
using Triple = std::tuple<Tokens, Tokens, Tokens>;  // utterance, positive, negative

/// Adjacent-utterance pairs of every session: (u_i, u_{i+1}) over
/// context ++ [q, r].
std::vector<Pair> adjacent_pairs(const std::vector<DialogueSession>& sessions);

/// Teacher-forced MLE with Adam; keeps the parameters of the epoch with the
/// lowest validation loss. Validation runs without dropout.
S2sModel train_s2s(const std::vector<Pair>& pairs, const ModelConfig& model, const FitConfig& fit,
                   std::vector<EpochMetrics>* log = nullptr);

/// Maximizes mean log σ(M(u, pos) − M(u, neg)) with Adam.
IrModel train_ir(const std::vector<Triple>& triples, const ModelConfig& model, const FitConfig& fit,
                 std::vector<EpochMetrics>* log = nullptr);

/// (utterance, response, random other response) triples, one per pair.
std::vector<Triple> sample_triples(const std::vector<Pair>& pairs, std::uint64_t seed);

}  // namespace ctxrw::singleturn
