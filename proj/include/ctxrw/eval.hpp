#pragma once

// Automatic metrics: corpus BLEU, distinct-n and the three embedding-based
// sentence similarities.

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "ctxrw/corpus.hpp"

namespace ctxrw::eval {

enum class Smoothing { None, Add1 };
Smoothing parse_smoothing(const std::string& s);

/// Corpus-level BLEU with brevity penalty over orders 1..max_n.
double bleu(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs, int max_n = 4,
            Smoothing smoothing = Smoothing::None);

/// Single-pair BLEU, add1-smoothed by default.
double sentence_bleu(const Tokens& hyp, const Tokens& ref, int max_n = 4, Smoothing smoothing = Smoothing::Add1);

/// Distinct n-grams over total n-grams across all hypotheses; 0 without any.
double distinct_n(const std::vector<Tokens>& hyps, int n);

/// Token → fixed-dimension vector. Tokens without a vector are skipped by
/// the metrics.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(int dim) : dim_(dim) {}

  void set(const std::string& token, Eigen::VectorXd v);
  const Eigen::VectorXd* find(const std::string& token) const;
  int dim() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }

  /// `token v1 ... vD` per line.
  static EmbeddingTable load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Truncated factorization of the positive PMI matrix of within-sentence
  /// co-occurrences (symmetric window). Vectors are U_k · sqrt(S_k).
  static EmbeddingTable from_ppmi(const std::vector<Tokens>& corpus, int dim = 200, int window = 2,
                                  std::size_t min_count = 1);

 private:
  int dim_ = 0;
  std::unordered_map<std::string, Eigen::VectorXd> vectors_;
  std::vector<std::string> order_;
};

struct EmbedScores {
  double average = 0.0;
  double extrema = 0.0;
  double greedy = 0.0;
};

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

EmbedScores embed_metrics(const Tokens& hyp, const Tokens& ref, const EmbeddingTable& table);

}  // namespace ctxrw::eval
