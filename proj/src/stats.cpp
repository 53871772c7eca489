#include "ctxrw/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "ctxrw/error.hpp"

namespace ctxrw::stats {

namespace {

std::set<std::string> distinct(const Tokens& t) { return {t.begin(), t.end()}; }

std::size_t lookup(const std::map<std::string, std::size_t>& m, const std::string& k) {
  auto it = m.find(k);
  return it == m.end() ? 0 : it->second;
}

constexpr const char* kDumpMagic = "ctxrw-pmi-table 1";

}  // namespace

CooccurrenceTable CooccurrenceTable::count(const std::vector<DialogueSession>& corpus) {
  CooccurrenceTable t;
  for (const auto& s : corpus) {
    ++t.sessions_;
    std::set<std::string> ctx;
    for (const auto& u : s.context) {
      t.context_tokens_ += u.size();
      ctx.insert(u.begin(), u.end());
    }
    const auto q = distinct(s.last);
    const auto r = distinct(s.response);
    for (const auto& w : ctx) ++t.ctx_[w];
    for (const auto& w : q) ++t.q_[w];
    for (const auto& w : r) ++t.r_[w];
    for (const auto& wc : ctx) {
      for (const auto& wq : q) ++t.pair_q_[{wc, wq}];
      for (const auto& wr : r) ++t.pair_r_[{wc, wr}];
    }
  }
  return t;
}

void CooccurrenceTable::merge(const CooccurrenceTable& other) {
  sessions_ += other.sessions_;
  context_tokens_ += other.context_tokens_;
  for (const auto& [k, v] : other.ctx_) ctx_[k] += v;
  for (const auto& [k, v] : other.q_) q_[k] += v;
  for (const auto& [k, v] : other.r_) r_[k] += v;
  for (const auto& [k, v] : other.pair_q_) pair_q_[k] += v;
  for (const auto& [k, v] : other.pair_r_) pair_r_[k] += v;
}

void CooccurrenceTable::prune(std::size_t min_count) {
  auto drop = [min_count](Counts& m) { std::erase_if(m, [&](const auto& kv) { return kv.second < min_count; }); };
  auto drop_pairs = [this](PairCounts& m, const Counts& side) {
    std::erase_if(m, [&](const auto& kv) { return !ctx_.count(kv.first.first) || !side.count(kv.first.second); });
  };
  drop(ctx_);
  drop(q_);
  drop(r_);
  drop_pairs(pair_q_, q_);
  drop_pairs(pair_r_, r_);
}

std::size_t CooccurrenceTable::context_count(const std::string& w) const { return lookup(ctx_, w); }

std::size_t CooccurrenceTable::target_count(const std::string& w, Side side) const {
  return lookup(targets(side), w);
}

std::size_t CooccurrenceTable::pair_count(const std::string& wc, const std::string& wt, Side side) const {
  const auto& m = pairs(side);
  auto it = m.find({wc, wt});
  return it == m.end() ? 0 : it->second;
}

std::string CooccurrenceTable::dump() const {
  std::ostringstream os;
  os << kDumpMagic << '\n';
  os << "sessions\t" << sessions_ << '\n';
  os << "context_tokens\t" << context_tokens_ << '\n';
  for (const auto& [w, n] : ctx_) os << "C\t" << w << '\t' << n << '\n';
  for (const auto& [w, n] : q_) os << "Q\t" << w << '\t' << n << '\n';
  for (const auto& [w, n] : r_) os << "R\t" << w << '\t' << n << '\n';
  for (const auto& [k, n] : pair_q_) os << "PQ\t" << k.first << '\t' << k.second << '\t' << n << '\n';
  for (const auto& [k, n] : pair_r_) os << "PR\t" << k.first << '\t' << k.second << '\t' << n << '\n';
  return os.str();
}

CooccurrenceTable CooccurrenceTable::parse(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(is, line) || line != kDumpMagic) throw ParseError("not a PMI table dump", lineno);
  CooccurrenceTable t;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t pos; (pos = line.find('\t', start)) != std::string::npos; start = pos + 1)
      f.push_back(line.substr(start, pos - start));
    f.push_back(line.substr(start));
    auto num = [&](const std::string& s) -> std::size_t {
      try {
        return static_cast<std::size_t>(std::stoull(s));
      } catch (const std::exception&) {
        throw ParseError("bad count '" + s + "'", lineno);
      }
    };
    if (f[0] == "sessions" && f.size() == 2) {
      t.sessions_ = num(f[1]);
    } else if (f[0] == "context_tokens" && f.size() == 2) {
      t.context_tokens_ = num(f[1]);
    } else if ((f[0] == "C" || f[0] == "Q" || f[0] == "R") && f.size() == 3) {
      auto& m = f[0] == "C" ? t.ctx_ : f[0] == "Q" ? t.q_ : t.r_;
      m[f[1]] = num(f[2]);
    } else if ((f[0] == "PQ" || f[0] == "PR") && f.size() == 4) {
      auto& m = f[0] == "PQ" ? t.pair_q_ : t.pair_r_;
      m[{f[1], f[2]}] = num(f[3]);
    } else {
      throw ParseError("unrecognized table record", lineno);
    }
  }
  return t;
}

void CooccurrenceTable::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write table: " + path.string());
  os << dump();
}

CooccurrenceTable CooccurrenceTable::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open table: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

// ---- scoring --------------------------------------------------------------

PmiScorer::PmiScorer(const CooccurrenceTable& table, StatsConfig config) : table_(table), config_(std::move(config)) {}

double PmiScorer::pmi(const std::string& wc, const std::string& wt, Side side) const {
  const std::size_t nc = table_.context_count(wc);
  const std::size_t nt = table_.target_count(wt, side);
  if (nc == 0) throw UnseenWord("context word not in table: " + wc);
  if (nt == 0) throw UnseenWord("target word not in table: " + wt);
  if (nc < config_.min_count) throw RareWord("context word below min_count: " + wc);
  if (nt < config_.min_count) throw RareWord("target word below min_count: " + wt);
  const double joint = static_cast<double>(table_.pair_count(wc, wt, side)) + config_.epsilon;
  const double conditional = joint / static_cast<double>(nt);
  const double prior = static_cast<double>(nc) / static_cast<double>(table_.sessions());
  return std::log(conditional / prior);
}

SentencePmi PmiScorer::pmi_sentence(const std::string& wc, const Tokens& sentence, Side side) const {
  SentencePmi out;
  const std::size_t nc = table_.context_count(wc);
  if (nc == 0 || nc < config_.min_count) {
    out.skipped = sentence.size();
    return out;
  }
  std::unordered_set<std::string> seen;
  for (const auto& w : sentence) {
    const std::size_t nt = table_.target_count(w, side);
    if (nt == 0 || nt < config_.min_count) {
      ++out.skipped;
      continue;
    }
    if (!seen.insert(w).second) continue;
    out.value += pmi(wc, w, side);
  }
  return out;
}

bool PmiScorer::scorable(const std::string& wc) const {
  const std::size_t n = table_.context_count(wc);
  return n > 0 && n >= config_.min_count && config_.stop_words.count(wc) == 0;
}

namespace {

std::vector<double> min_max(const std::vector<double>& raw) {
  std::vector<double> out(raw.size(), 0.0);
  if (raw.size() < 2) return out;
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  const double span = *hi - *lo;
  if (!(span > 0.0)) return out;
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - *lo) / span;
  return out;
}

}  // namespace

std::vector<WordScore> PmiScorer::contribution_scores(const std::vector<Tokens>& context, const Tokens& q,
                                                      const Tokens& r) const {
  std::vector<std::string> words;
  std::unordered_set<std::string> seen;
  for (const auto& u : context)
    for (const auto& w : u)
      if (seen.insert(w).second && scorable(w)) words.push_back(w);
  std::vector<double> raw_q, raw_r;
  for (const auto& w : words) {
    raw_q.push_back(pmi_sentence(w, q, Side::Q).value);
    raw_r.push_back(pmi_sentence(w, r, Side::R).value);
  }
  const auto nq = min_max(raw_q);
  const auto nr = min_max(raw_r);
  std::vector<WordScore> out;
  out.reserve(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) out.push_back({words[i], nq[i] + nr[i]});
  return out;
}

KeywordSelection PmiScorer::extract_keywords(const std::vector<Tokens>& context, const Tokens& q, const Tokens& r,
                                             double ratio) const {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw Error("extract_keywords: ratio must be in (0, 1]");
  KeywordSelection sel;
  sel.scores = contribution_scores(context, q, r);
  if (sel.scores.empty()) return sel;
  // the small slack keeps e.g. 0.2 * 15 from rounding up to 4
  const auto k = static_cast<std::size_t>(
      std::ceil(ratio * static_cast<double>(sel.scores.size()) - 1e-9));
  std::vector<std::size_t> order(sel.scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  // scores are in first-occurrence order, so index order is the first tie-break
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (sel.scores[a].score != sel.scores[b].score) return sel.scores[a].score > sel.scores[b].score;
    if (a != b) return a < b;
    return sel.scores[a].word < sel.scores[b].word;
  });
  for (std::size_t i = 0; i < std::max<std::size_t>(1, k) && i < order.size(); ++i) {
    Keyword kw{sel.scores[order[i]].word, sel.scores[order[i]].score, {}};
    for (std::size_t u = 0; u < context.size(); ++u)
      for (std::size_t j = 0; j < context[u].size(); ++j)
        if (context[u][j] == kw.word) kw.positions.emplace_back(u, j);
    sel.selected.push_back(std::move(kw));
  }
  return sel;
}

}  // namespace ctxrw::stats
