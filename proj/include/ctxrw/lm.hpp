#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ctxrw/corpus.hpp"

namespace ctxrw::lm {

inline constexpr const char* kBos = "<s>";
inline constexpr const char* kEos = "</s>";
inline constexpr const char* kUnk = "<unk>";

/// Scores a candidate sentence; higher is better. Pseudo-data generation only
/// depends on this interface.
class SentenceScorer {
 public:
  virtual ~SentenceScorer() = default;
  virtual double normalized_score(const Tokens& sentence) const = 0;
};

/// Add-k smoothed n-gram model. Each training sentence is padded with
/// (order − 1) BOS symbols and one EOS; all k-grams with k ≤ order over the
/// padded sequence are counted.
///   P(w | h) = (count(h w) + k) / (count(h ·) + k · V'),  V' = |vocab| + 2
class NgramLM : public SentenceScorer {
 public:
  static NgramLM train(const std::vector<Tokens>& corpus, int order, double add_k);

  /// Adds another model's counts (same order and k).
  void merge(const NgramLM& other);

  /// Σ log P over every token plus the final EOS.
  double log_prob(const Tokens& sentence) const;
  /// log_prob / (|sentence| + 1)
  double normalized_score(const Tokens& sentence) const override;
  /// P(w | history); `history` holds the (order − 1) preceding symbols.
  double prob(const std::vector<std::string>& history, const std::string& w) const;

  int order() const { return order_; }
  double add_k() const { return add_k_; }
  /// |vocab| + 2 (EOS and UNK).
  std::size_t outcome_count() const { return vocab_.size() + 2; }
  const std::set<std::string>& vocab() const { return vocab_; }
  std::size_t count(const std::vector<std::string>& kgram) const;
  /// Histories (order − 1 symbols) with stored counts.
  std::vector<std::vector<std::string>> histories() const;

  /// Versioned text dump of sorted `k-gram<TAB>count` lines.
  std::string dump() const;
  static NgramLM parse(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static NgramLM load(const std::filesystem::path& path);

  bool operator==(const NgramLM& o) const { return dump() == o.dump(); }

 private:
  NgramLM(int order, double add_k) : order_(order), add_k_(add_k) {}
  void rebuild_derived();
  std::string key(const std::vector<std::string>& kgram) const;

  int order_;
  double add_k_;
  std::map<std::string, std::size_t> counts_;        // space-joined k-grams
  std::map<std::string, std::size_t> history_totals_; // Σ_w count(h w)
  std::set<std::string> vocab_;
};

}  // namespace ctxrw::lm
