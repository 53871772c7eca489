#include "ctxrw/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include <spdlog/spdlog.h>

#include "ctxrw/error.hpp"

namespace ctxrw::pipeline {

namespace {

constexpr char kMagic[8] = {'C', 'T', 'X', 'R', 'W', 'I', 'D', 'X'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw Error("index file: truncated");
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const auto n = get<std::uint32_t>(in);
  std::string s(n, '\0');
  if (!in.read(s.data(), n)) throw Error("index file: truncated");
  return s;
}

void put_tokens(std::ostream& out, const Tokens& t) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.size()));
  for (const auto& w : t) put_string(out, w);
}

Tokens get_tokens(std::istream& in) {
  const auto n = get<std::uint32_t>(in);
  Tokens t;
  t.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) t.push_back(get_string(in));
  return t;
}

}  // namespace

InvertedIndex InvertedIndex::build(const std::vector<std::pair<Tokens, Tokens>>& pairs) {
  if (pairs.empty()) throw Error("build_index: no pairs");
  InvertedIndex idx;
  idx.docs_ = pairs;
  for (std::size_t d = 0; d < pairs.size(); ++d) {
    std::map<std::string, std::uint32_t> tf;
    for (const auto& w : pairs[d].first) ++tf[w];
    for (const auto& [w, c] : tf) idx.postings_[w].push_back({static_cast<std::uint32_t>(d), c});
  }
  return idx;
}

std::size_t InvertedIndex::df(const std::string& token) const {
  const auto* p = postings(token);
  return p ? p->size() : 0;
}

double InvertedIndex::idf(const std::string& token) const {
  const std::size_t d = df(token);
  return d ? std::log(static_cast<double>(docs_.size()) / static_cast<double>(d)) : 0.0;
}

const std::vector<Posting>* InvertedIndex::postings(const std::string& token) const {
  const auto it = postings_.find(token);
  return it == postings_.end() ? nullptr : &it->second;
}

double InvertedIndex::score(const Tokens& query, std::uint32_t doc) const {
  const Tokens& u = docs_.at(doc).first;
  if (u.empty()) return 0.0;
  const std::set<std::string> distinct(query.begin(), query.end());
  double s = 0.0;
  for (const auto& t : distinct) {
    const auto tf = std::count(u.begin(), u.end(), t);
    if (tf == 0) continue;
    const double w = idf(t);
    s += static_cast<double>(tf) * w * w;
  }
  return s / std::sqrt(static_cast<double>(u.size()));
}

std::vector<Scored> InvertedIndex::retrieve(const Tokens& query, std::size_t k) const {
  if (k == 0) throw Error("retrieve: k must be >= 1");
  std::map<std::uint32_t, double> acc;
  const std::set<std::string> distinct(query.begin(), query.end());
  for (const auto& t : distinct) {
    const auto* p = postings(t);
    if (!p) continue;
    const double w = idf(t);
    for (const auto& post : *p) acc[post.doc] += static_cast<double>(post.tf) * w * w;
  }
  std::vector<Scored> out;
  out.reserve(acc.size());
  for (const auto& [d, s] : acc) out.push_back({d, s / std::sqrt(static_cast<double>(docs_[d].first.size()))});
  std::stable_sort(out.begin(), out.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc < b.doc;
  });
  if (out.size() > k) out.resize(k);
  return out;
}

void InvertedIndex::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write index " + path.string());
  out.write(kMagic, sizeof kMagic);
  put(out, kVersion);
  put<std::uint64_t>(out, docs_.size());
  for (const auto& [u, r] : docs_) {
    put_tokens(out, u);
    put_tokens(out, r);
  }
  put<std::uint64_t>(out, postings_.size());
  for (const auto& [t, list] : postings_) {
    put_string(out, t);
    put<std::uint64_t>(out, list.size());
    for (const auto& p : list) {
      put(out, p.doc);
      put(out, p.tf);
    }
  }
}

InvertedIndex InvertedIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open index " + path.string());
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw Error("not an index file: " + path.string());
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) throw Error("unsupported index version " + std::to_string(version));
  InvertedIndex idx;
  const auto n = get<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < n; ++i) {
    Tokens u = get_tokens(in);
    Tokens r = get_tokens(in);
    idx.docs_.emplace_back(std::move(u), std::move(r));
  }
  const auto terms = get<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < terms; ++i) {
    std::string t = get_string(in);
    auto& list = idx.postings_[t];
    const auto m = get<std::uint64_t>(in);
    for (std::uint64_t j = 0; j < m; ++j) {
      Posting p;
      p.doc = get<std::uint32_t>(in);
      p.tf = get<std::uint32_t>(in);
      if (p.doc >= n) throw Error("index file: posting refers to a missing document");
      list.push_back(p);
    }
  }
  return idx;
}

IdfTable IdfTable::build(const std::vector<Tokens>& documents) {
  IdfTable t;
  t.n_ = documents.size();
  for (const auto& d : documents)
    for (const auto& w : std::set<std::string>(d.begin(), d.end())) ++t.df_[w];
  return t;
}

IdfTable IdfTable::from_sessions(const std::vector<DialogueSession>& sessions) {
  std::vector<Tokens> docs;
  for (const auto& s : sessions) {
    docs.insert(docs.end(), s.context.begin(), s.context.end());
    docs.push_back(s.last);
    docs.push_back(s.response);
  }
  return build(docs);
}

double IdfTable::idf(const std::string& token) const {
  if (n_ == 0) return 0.0;
  const auto it = df_.find(token);
  const double df = it == df_.end() ? 1.0 : static_cast<double>(it->second);
  return std::log(static_cast<double>(n_) / df);
}

Tokens keyword_append_baseline(const DialogueSession& session, const IdfTable& idf, std::size_t n) {
  std::map<std::string, std::size_t> tf;
  for (const auto& u : session.context)
    for (const auto& w : u) ++tf[w];
  std::vector<std::pair<std::string, double>> scored;
  for (const auto& [w, c] : tf) scored.emplace_back(w, static_cast<double>(c) * idf.idf(w));
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Tokens out = session.last;
  for (std::size_t i = 0; i < scored.size() && i < n; ++i) out.push_back(scored[i].first);
  return out;
}

Tokens CrnRewriter::rewrite(const DialogueSession& session) const {
  const auto in = model_.prepare(session.context, session.last);
  const auto hyps = model_.beam_search(in, beam_);
  if (hyps.empty() || hyps.front().tokens.empty()) return session.last;
  return hyps.front().tokens;
}

nlohmann::json Selection::trace() const {
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& c : candidates)
    cands.push_back({{"doc", c.doc},
                     {"retrieval_score", c.retrieval_score},
                     {"selection_score", c.selection_score},
                     {"response", detokenize(c.response)}});
  return {{"query", detokenize(query)},
          {"fallback", fallback},
          {"doc", doc},
          {"response", detokenize(response)},
          {"candidates", std::move(cands)}};
}

Selection end_to_end_select(const DialogueSession& session, const Rewriter& rewriter, const InvertedIndex& index,
                            const singleturn::SelectionScorer& selector, std::size_t k) {
  Selection sel;
  sel.query = rewriter.rewrite(session);
  auto hits = index.retrieve(sel.query, k);
  if (hits.empty()) {
    spdlog::info("rewritten query retrieved nothing, falling back to the raw last utterance");
    sel.fallback = true;
    sel.query = session.last;
    hits = index.retrieve(sel.query, k);
    if (hits.empty()) throw Error("end_to_end_select: no candidates for either query");
  }
  std::size_t best = 0;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    CandidateTrace c;
    c.doc = hits[i].doc;
    c.retrieval_score = hits[i].score;
    c.response = index.doc(c.doc).second;
    c.selection_score = selector.score(sel.query, c.response);
    if (i > 0 && c.selection_score > sel.candidates[best].selection_score) best = i;
    sel.candidates.push_back(std::move(c));
  }
  sel.doc = sel.candidates[best].doc;
  sel.response = sel.candidates[best].response;
  return sel;
}

RankMetrics rank_metrics(const std::vector<std::vector<int>>& labels,
                         const std::vector<std::pair<int, int>>& recall_at) {
  RankMetrics m;
  std::vector<double> hits(recall_at.size(), 0.0);
  for (const auto& list : labels) {
    const auto relevant = std::count_if(list.begin(), list.end(), [](int l) { return l != 0; });
    if (relevant == 0) {
      ++m.skipped;
      continue;
    }
    ++m.evaluated;
    double found = 0.0, ap = 0.0;
    bool first = true;
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (list[i] == 0) continue;
      found += 1.0;
      ap += found / static_cast<double>(i + 1);
      if (first) {
        m.mrr += 1.0 / static_cast<double>(i + 1);
        if (i == 0) m.p_at_1 += 1.0;
        first = false;
      }
    }
    m.map += ap / static_cast<double>(relevant);
    for (std::size_t j = 0; j < recall_at.size(); ++j) {
      const auto [n, top] = recall_at[j];
      const auto limit = std::min<std::size_t>({list.size(), static_cast<std::size_t>(n), static_cast<std::size_t>(top)});
      if (std::any_of(list.begin(), list.begin() + static_cast<std::ptrdiff_t>(limit), [](int l) { return l != 0; }))
        hits[j] += 1.0;
    }
  }
  if (m.skipped) spdlog::info("rank_metrics: skipped {} contexts without a relevant candidate", m.skipped);
  const double e = static_cast<double>(m.evaluated);
  for (std::size_t j = 0; j < recall_at.size(); ++j)
    m.recall["R_" + std::to_string(recall_at[j].first) + "@" + std::to_string(recall_at[j].second)] =
        e > 0 ? hits[j] / e : 0.0;
  if (e > 0) {
    m.map /= e;
    m.mrr /= e;
    m.p_at_1 /= e;
  }
  return m;
}

}  // namespace ctxrw::pipeline
