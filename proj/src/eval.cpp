#include "ctxrw/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "ctxrw/error.hpp"

namespace ctxrw::eval {

namespace {

using Gram = std::vector<std::string>;

std::map<Gram, int> ngram_counts(const Tokens& s, int n) {
  std::map<Gram, int> out;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= s.size(); ++i)
    ++out[Gram(s.begin() + static_cast<std::ptrdiff_t>(i), s.begin() + static_cast<std::ptrdiff_t>(i) + n)];
  return out;
}

}  // namespace

Smoothing parse_smoothing(const std::string& s) {
  if (s == "none") return Smoothing::None;
  if (s == "add1") return Smoothing::Add1;
  throw Error("unknown smoothing '" + s + "' (expected none or add1)");
}

double bleu(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs, int max_n, Smoothing smoothing) {
  if (hyps.size() != refs.size()) throw Error("bleu: hypothesis and reference counts differ");
  if (hyps.empty()) throw Error("bleu: empty corpus");
  if (max_n < 1 || max_n > 4) throw Error("bleu: max_n must be in 1..4");
  std::vector<double> matches(static_cast<std::size_t>(max_n), 0.0), totals(static_cast<std::size_t>(max_n), 0.0);
  double hyp_len = 0.0, ref_len = 0.0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    hyp_len += static_cast<double>(hyps[i].size());
    ref_len += static_cast<double>(refs[i].size());
    for (int n = 1; n <= max_n; ++n) {
      const auto h = ngram_counts(hyps[i], n);
      const auto r = ngram_counts(refs[i], n);
      for (const auto& [g, c] : h) {
        totals[static_cast<std::size_t>(n - 1)] += c;
        const auto it = r.find(g);
        if (it != r.end()) matches[static_cast<std::size_t>(n - 1)] += std::min(c, it->second);
      }
    }
  }
  if (hyp_len == 0.0) return 0.0;
  double log_sum = 0.0;
  for (int n = 0; n < max_n; ++n) {
    double m = matches[static_cast<std::size_t>(n)], t = totals[static_cast<std::size_t>(n)];
    if (m == 0.0) {
      if (smoothing == Smoothing::None) return 0.0;
      m += 1.0;
      t += 1.0;
    }
    log_sum += std::log(m / t);
  }
  const double bp = hyp_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len);
  return bp * std::exp(log_sum / max_n);
}

double sentence_bleu(const Tokens& hyp, const Tokens& ref, int max_n, Smoothing smoothing) {
  return bleu({hyp}, {ref}, max_n, smoothing);
}

double distinct_n(const std::vector<Tokens>& hyps, int n) {
  if (hyps.empty()) throw Error("distinct_n: no hypotheses");
  if (n < 1) throw Error("distinct_n: n must be >= 1");
  std::set<Gram> seen;
  std::size_t total = 0;
  for (const auto& h : hyps) {
    for (const auto& [g, c] : ngram_counts(h, n)) {
      seen.insert(g);
      total += static_cast<std::size_t>(c);
    }
  }
  return total ? static_cast<double>(seen.size()) / static_cast<double>(total) : 0.0;
}

void EmbeddingTable::set(const std::string& token, Eigen::VectorXd v) {
  if (dim_ == 0) dim_ = static_cast<int>(v.size());
  if (v.size() != dim_)
    throw Error("embedding for '" + token + "' has dimension " + std::to_string(v.size()) + ", expected " +
                std::to_string(dim_));
  if (!v.allFinite()) throw Error("embedding for '" + token + "' is not finite");
  if (!vectors_.count(token)) order_.push_back(token);
  vectors_[token] = std::move(v);
}

const Eigen::VectorXd* EmbeddingTable::find(const std::string& token) const {
  const auto it = vectors_.find(token);
  return it == vectors_.end() ? nullptr : &it->second;
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open vector file " + path.string());
  EmbeddingTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string token;
    if (!(ss >> token)) continue;
    std::vector<double> vals;
    std::string field;
    while (ss >> field) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw ParseError("vector file: bad number '" + field + "'", lineno);
      }
    }
    if (vals.empty()) throw ParseError("vector file: token without values", lineno);
    try {
      table.set(token, Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size())));
    } catch (const Error& e) {
      throw ParseError(std::string("vector file: ") + e.what(), lineno);
    }
  }
  return table;
}

void EmbeddingTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write vector file " + path.string());
  out.precision(17);
  for (const auto& tok : order_) {
    out << tok;
    for (double x : vectors_.at(tok)) out << ' ' << x;
    out << '\n';
  }
}

EmbeddingTable EmbeddingTable::from_ppmi(const std::vector<Tokens>& corpus, int dim, int window,
                                         std::size_t min_count) {
  if (dim < 1) throw Error("embedding dimension must be >= 1");
  std::map<std::string, std::size_t> freq;
  for (const auto& s : corpus)
    for (const auto& w : s) ++freq[w];
  std::vector<std::string> words;
  std::map<std::string, Eigen::Index> index;
  for (const auto& [w, c] : freq)
    if (c >= min_count) {
      index[w] = static_cast<Eigen::Index>(words.size());
      words.push_back(w);
    }
  if (words.empty()) throw Error("embedding corpus has no words");
  const auto v = static_cast<Eigen::Index>(words.size());
  Eigen::MatrixXd co = Eigen::MatrixXd::Zero(v, v);
  for (const auto& s : corpus) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto a = index.find(s[i]);
      if (a == index.end()) continue;
      for (std::size_t j = i + 1; j < s.size() && j <= i + static_cast<std::size_t>(window); ++j) {
        const auto b = index.find(s[j]);
        if (b == index.end()) continue;
        co(a->second, b->second) += 1.0;
        co(b->second, a->second) += 1.0;
      }
    }
  }
  const double total = co.sum();
  const Eigen::VectorXd row = co.rowwise().sum();
  Eigen::MatrixXd ppmi = Eigen::MatrixXd::Zero(v, v);
  if (total > 0.0) {
    for (Eigen::Index i = 0; i < v; ++i)
      for (Eigen::Index j = 0; j < v; ++j)
        if (co(i, j) > 0.0) ppmi(i, j) = std::max(0.0, std::log(co(i, j) * total / (row(i) * row(j))));
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(ppmi, Eigen::ComputeThinU);
  const Eigen::Index k = std::min<Eigen::Index>(dim, v);
  Eigen::MatrixXd u = svd.matrixU().leftCols(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::Index arg = 0;
    u.col(c).cwiseAbs().maxCoeff(&arg);
    if (u(arg, c) < 0.0) u.col(c) *= -1.0;
    u.col(c) *= std::sqrt(svd.singularValues()(c));
  }
  EmbeddingTable table(dim);
  for (Eigen::Index i = 0; i < v; ++i) {
    Eigen::VectorXd vec = Eigen::VectorXd::Zero(dim);
    vec.head(k) = u.row(i).transpose();
    table.set(words[static_cast<std::size_t>(i)], std::move(vec));
  }
  return table;
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

namespace {

std::vector<const Eigen::VectorXd*> lookup(const Tokens& s, const EmbeddingTable& table) {
  std::vector<const Eigen::VectorXd*> out;
  for (const auto& w : s)
    if (const auto* v = table.find(w)) out.push_back(v);
  return out;
}

Eigen::VectorXd extrema(const std::vector<const Eigen::VectorXd*>& vs) {
  Eigen::VectorXd out = *vs.front();
  for (std::size_t i = 1; i < vs.size(); ++i) {
    for (Eigen::Index d = 0; d < out.size(); ++d) {
      const double x = (*vs[i])(d);
      if (std::abs(x) > std::abs(out(d)) || (std::abs(x) == std::abs(out(d)) && x > out(d))) out(d) = x;
    }
  }
  return out;
}

double greedy_one_way(const std::vector<const Eigen::VectorXd*>& from, const std::vector<const Eigen::VectorXd*>& to) {
  double total = 0.0;
  for (const auto* a : from) {
    double best = -1.0;
    for (const auto* b : to) best = std::max(best, cosine(*a, *b));
    total += best;
  }
  return total / static_cast<double>(from.size());
}

}  // namespace

EmbedScores embed_metrics(const Tokens& hyp, const Tokens& ref, const EmbeddingTable& table) {
  const auto h = lookup(hyp, table);
  const auto r = lookup(ref, table);
  if (h.empty() || r.empty()) throw Error("embed_metrics: sentence has no token with an embedding");
  auto mean = [](const std::vector<const Eigen::VectorXd*>& vs) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(vs.front()->size());
    for (const auto* v : vs) m += *v;
    return Eigen::VectorXd(m / static_cast<double>(vs.size()));
  };
  EmbedScores s;
  s.average = cosine(mean(h), mean(r));
  s.extrema = cosine(extrema(h), extrema(r));
  s.greedy = 0.5 * (greedy_one_way(h, r) + greedy_one_way(r, h));
  return s;
}

}  // namespace ctxrw::eval
