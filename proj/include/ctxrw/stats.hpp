#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ctxrw/corpus.hpp"

namespace ctxrw::stats {

/// Which target utterance a co-occurrence refers to.
enum class Side { Q, R };

/// Session-level presence counts. A word repeated inside one utterance counts
/// once per session; a pair (w_c, w_t) counts once per session where w_c is in
/// the context and w_t in q (Q side) or r (R side).
class CooccurrenceTable {
 public:
  static CooccurrenceTable count(const std::vector<DialogueSession>& corpus);

  /// Adds another table's counts (tables form a commutative monoid).
  void merge(const CooccurrenceTable& other);

  /// Drops words (and their pairs) seen in fewer than min_count sessions.
  /// Scores of words that remain scorable at that threshold are unchanged.
  void prune(std::size_t min_count);

  std::size_t sessions() const { return sessions_; }
  std::size_t context_tokens() const { return context_tokens_; }
  std::size_t context_count(const std::string& w) const;
  std::size_t target_count(const std::string& w, Side side) const;
  std::size_t pair_count(const std::string& wc, const std::string& wt, Side side) const;

  /// Sorted text dump; save(load(x)) reproduces x byte for byte.
  void save(const std::filesystem::path& path) const;
  static CooccurrenceTable load(const std::filesystem::path& path);
  std::string dump() const;
  static CooccurrenceTable parse(const std::string& text);

  bool operator==(const CooccurrenceTable&) const = default;

 private:
  using Counts = std::map<std::string, std::size_t>;
  using PairCounts = std::map<std::pair<std::string, std::string>, std::size_t>;

  const Counts& targets(Side s) const { return s == Side::Q ? q_ : r_; }
  const PairCounts& pairs(Side s) const { return s == Side::Q ? pair_q_ : pair_r_; }

  std::size_t sessions_ = 0;
  std::size_t context_tokens_ = 0;
  Counts ctx_, q_, r_;
  PairCounts pair_q_, pair_r_;
};

struct StatsConfig {
  /// Words seen in fewer sessions are not scored.
  std::size_t min_count = 2;
  /// Added to the pair count so zero co-occurrence stays finite.
  double epsilon = 1e-9;
  std::set<std::string> stop_words;
};

struct SentencePmi {
  double value = 0.0;
  /// Token occurrences whose word failed the min-count gate or was unseen.
  std::size_t skipped = 0;
};

struct WordScore {
  std::string word;
  double score = 0.0;
};

struct Keyword {
  std::string word;
  double score = 0.0;
  /// (utterance index, token index) of every occurrence in the context.
  std::vector<std::pair<std::size_t, std::size_t>> positions;
};

struct KeywordSelection {
  /// Contribution score of every scorable distinct context word, in order of
  /// first occurrence.
  std::vector<WordScore> scores;
  /// Highest-scoring words, best first.
  std::vector<Keyword> selected;
};

class PmiScorer {
 public:
  explicit PmiScorer(const CooccurrenceTable& table, StatsConfig config = {});

  /// log( p(w_c | w_t) / p_c(w_c) ) with p(w_c|w_t) = (n(w_c,w_t)+ε)/n(w_t)
  /// and p_c(w_c) = n(w_c)/N. Throws UnseenWord or RareWord.
  double pmi(const std::string& wc, const std::string& wt, Side side) const;

  /// Σ pmi(w_c, w) over distinct words of `sentence`, skipping words that
  /// cannot be scored.
  SentencePmi pmi_sentence(const std::string& wc, const Tokens& sentence, Side side) const;

  /// Whether a context word passes the count gate and stop list.
  bool scorable(const std::string& wc) const;

  /// norm(PMI(w_c, q)) + norm(PMI(w_c, r)) for every scorable distinct word of
  /// c, min-max normalized per side over those words. A degenerate side (all
  /// raw values equal, or a single word) normalizes to 0.
  std::vector<WordScore> contribution_scores(const std::vector<Tokens>& context, const Tokens& q,
                                             const Tokens& r) const;

  /// Top ceil(ratio · |scorable words|) words; ties go to the earlier first
  /// occurrence, then the lexicographically smaller word.
  KeywordSelection extract_keywords(const std::vector<Tokens>& context, const Tokens& q, const Tokens& r,
                                    double ratio = 0.2) const;

  const StatsConfig& config() const { return config_; }
  const CooccurrenceTable& table() const { return table_; }

 private:
  const CooccurrenceTable& table_;
  StatsConfig config_;
};

}  // namespace ctxrw::stats
