#pragma once

// Retrieve-then-rank response selection: a TF-IDF inverted index over the
// utterance side of (utterance, response) pairs, query construction by
// rewriting or by appending context keywords, and rank metrics.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ctxrw/corpus.hpp"
#include "ctxrw/crn.hpp"
#include "ctxrw/singleturn.hpp"

namespace ctxrw::pipeline {

struct Posting {
  std::uint32_t doc = 0;
  std::uint32_t tf = 0;

  bool operator==(const Posting&) const = default;
};

struct Scored {
  std::uint32_t doc = 0;
  double score = 0.0;
};

class InvertedIndex {
 public:
  InvertedIndex() = default;

  /// Indexes the utterance side; duplicate utterances stay separate docs.
  static InvertedIndex build(const std::vector<std::pair<Tokens, Tokens>>& pairs);

  /// Σ over distinct query tokens t in d of tf(t,d) · idf(t)² / √|d|; top k
  /// by score desc, then doc id asc. Docs sharing no token are not returned.
  std::vector<Scored> retrieve(const Tokens& query, std::size_t k = 10) const;

  /// Score of a single doc under the retrieval formula.
  double score(const Tokens& query, std::uint32_t doc) const;

  std::size_t size() const { return docs_.size(); }
  const std::pair<Tokens, Tokens>& doc(std::uint32_t id) const { return docs_.at(id); }
  std::size_t df(const std::string& token) const;
  /// ln(N / df); 0 for tokens outside the index.
  double idf(const std::string& token) const;
  const std::vector<Posting>* postings(const std::string& token) const;

  void save(const std::filesystem::path& path) const;
  static InvertedIndex load(const std::filesystem::path& path);

  bool operator==(const InvertedIndex&) const = default;

 private:
  std::map<std::string, std::vector<Posting>> postings_;
  std::vector<std::pair<Tokens, Tokens>> docs_;
};

/// Document frequencies over a collection of utterances.
class IdfTable {
 public:
  static IdfTable build(const std::vector<Tokens>& documents);
  static IdfTable from_sessions(const std::vector<DialogueSession>& sessions);
  /// ln(N / df), with df floored at 1 for unseen tokens.
  double idf(const std::string& token) const;
  std::size_t documents() const { return n_; }

 private:
  std::size_t n_ = 0;
  std::map<std::string, std::size_t> df_;
};

/// q followed by the n context tokens with the highest tf·idf, where tf counts
/// occurrences in the whole context; ties go to the lexicographically smaller
/// token.
Tokens keyword_append_baseline(const DialogueSession& session, const IdfTable& idf, std::size_t n = 5);

/// Produces the query utterance for a session.
class Rewriter {
 public:
  virtual ~Rewriter() = default;
  virtual Tokens rewrite(const DialogueSession& session) const = 0;
};

/// Top beam hypothesis of a CRN.
class CrnRewriter : public Rewriter {
 public:
  CrnRewriter(const crn::CrnModel& model, int beam = 5) : model_(model), beam_(beam) {}
  Tokens rewrite(const DialogueSession& session) const override;

 private:
  const crn::CrnModel& model_;
  int beam_;
};

/// Appends TF-IDF context keywords to q.
class KeywordRewriter : public Rewriter {
 public:
  KeywordRewriter(const IdfTable& idf, std::size_t n = 5) : idf_(idf), n_(n) {}
  Tokens rewrite(const DialogueSession& session) const override {
    return keyword_append_baseline(session, idf_, n_);
  }

 private:
  const IdfTable& idf_;
  std::size_t n_;
};

struct CandidateTrace {
  std::uint32_t doc = 0;
  double retrieval_score = 0.0;
  double selection_score = 0.0;
  Tokens response;
};

struct Selection {
  Tokens query;
  Tokens response;
  std::uint32_t doc = 0;
  bool fallback = false;
  std::vector<CandidateTrace> candidates;

  nlohmann::json trace() const;
};

/// Rewrites, retrieves k candidates, and picks the highest selector score
/// (earlier-retrieved wins ties). Falls back to the raw q when the rewritten
/// query retrieves nothing.
Selection end_to_end_select(const DialogueSession& session, const Rewriter& rewriter, const InvertedIndex& index,
                            const singleturn::SelectionScorer& selector, std::size_t k = 10);

struct RankMetrics {
  double map = 0.0;
  double mrr = 0.0;
  double p_at_1 = 0.0;
  /// "R_n@m" → value
  std::map<std::string, double> recall;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
};

/// `labels[i]` holds the relevance (non-zero = relevant) of context i's
/// candidates in ranked order. Contexts without a relevant candidate are
/// skipped. R_n@m is the fraction of contexts with a relevant candidate among
/// the top m of the first n.
RankMetrics rank_metrics(const std::vector<std::vector<int>>& labels,
                         const std::vector<std::pair<int, int>>& recall_at = {{10, 1}, {10, 2}, {10, 5}});

}  // namespace ctxrw::pipeline
