#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctxrw/corpus.hpp"
#include "ctxrw/lm.hpp"
#include "ctxrw/singleturn.hpp"
#include "ctxrw/stats.hpp"

namespace ctxrw::pseudo {

/// Contiguous slice of one context utterance around a keyword.
struct SpanCandidate {
  Tokens tokens;
  std::size_t utterance = 0;
  std::size_t start = 0;  // inclusive
  std::size_t end = 0;    // exclusive
  std::string keyword;

  bool operator==(const SpanCandidate&) const = default;
};

struct RewriteCandidate {
  Tokens tokens;
  double lm_score = 0.0;
  double rerank_score = 0.0;
  SpanCandidate span;
  /// Index in q before which the span was inserted (0..|q|).
  std::size_t position = 0;
};

/// Spans with 0..2 tokens before and 0..2 after the keyword at
/// context[utterance][pos], clipped to the utterance; at most 9.
std::vector<SpanCandidate> expand_spans(const std::vector<Tokens>& context, std::size_t utterance, std::size_t pos);

/// q with `span` inserted before index `position`.
Tokens insert_span(const Tokens& q, const Tokens& span, std::size_t position);

/// Every (span, position) insertion, scored by the LM; |spans| · (|q| + 1)
/// entries in span-major order.
std::vector<RewriteCandidate> all_insertions(const Tokens& q, const std::vector<SpanCandidate>& spans,
                                             const lm::SentenceScorer& lm);

/// Orders candidates by (LM score desc, position asc, span length asc,
/// tokens lexicographic asc), drops repeated surface strings and keeps the
/// first `top_k`.
std::vector<RewriteCandidate> select_top(std::vector<RewriteCandidate> pool, std::size_t top_k = 3);

/// all_insertions followed by select_top.
std::vector<RewriteCandidate> enumerate_insertions(const Tokens& q, const std::vector<SpanCandidate>& spans,
                                                   const lm::SentenceScorer& lm, std::size_t top_k = 3);

/// Task-specific criterion for choosing among rewrite candidates.
class Reranker {
 public:
  virtual ~Reranker() = default;
  /// Raw criterion value for a candidate utterance.
  virtual double score(const Tokens& candidate) const = 0;
  /// How much `candidate` improves on `baseline` (positive is better).
  virtual double improvement(double candidate, double baseline) const = 0;
};

/// L(r | s*) under the generator; lower is better.
class GenerationReranker : public Reranker {
 public:
  GenerationReranker(const singleturn::GenerationScorer& model, Tokens response)
      : model_(model), response_(std::move(response)) {}
  double score(const Tokens& candidate) const override { return model_.loss(candidate, response_); }
  double improvement(double candidate, double baseline) const override { return baseline - candidate; }

 private:
  const singleturn::GenerationScorer& model_;
  Tokens response_;
};

/// Mean over negatives of M(po, s*) − M(ne, s*); higher is better.
class SelectionReranker : public Reranker {
 public:
  SelectionReranker(const singleturn::SelectionScorer& model, Tokens positive, std::vector<Tokens> negatives);
  double score(const Tokens& candidate) const override;
  double improvement(double candidate, double baseline) const override { return candidate - baseline; }

 private:
  const singleturn::SelectionScorer& model_;
  Tokens positive_;
  std::vector<Tokens> negatives_;
};

/// Best candidate under `reranker`; the earliest wins ties. Sets rerank_score.
RewriteCandidate rerank(std::vector<RewriteCandidate> cands, const Reranker& reranker);

/// argmin of L(r | s*) over candidates.
RewriteCandidate rerank_generation(std::vector<RewriteCandidate> cands, const Tokens& response,
                                   const singleturn::GenerationScorer& model);

/// argmax of the mean margin over negatives.
RewriteCandidate rerank_selection(std::vector<RewriteCandidate> cands, const Tokens& positive,
                                  const std::vector<Tokens>& negatives, const singleturn::SelectionScorer& model);

struct PseudoConfig {
  double keyword_ratio = 0.2;
  std::size_t top_k = 3;
  /// A candidate must beat q by more than this under the reranker.
  double delta = 0.0;
};

struct PseudoResult {
  PseudoQuadruplet quad;
  bool rewritten = false;
  std::optional<RewriteCandidate> chosen;
  /// Pool size before top-k selection.
  std::size_t pool_size = 0;
};

PseudoResult generate_pseudo(const DialogueSession& session, const stats::PmiScorer& pmi,
                             const lm::SentenceScorer& lm, const Reranker& reranker, const PseudoConfig& config = {});

/// Counts and mean lengths over a generated set.
struct PseudoStats {
  std::size_t rewritten = 0;
  std::size_t unrewritten = 0;
  double mean_context_len = 0.0;
  double mean_last_len = 0.0;
  double mean_rewritten_len = 0.0;
  double mean_response_len = 0.0;

  static PseudoStats of(const std::vector<PseudoResult>& results);
  nlohmann::json to_json() const;
};

}  // namespace ctxrw::pseudo
