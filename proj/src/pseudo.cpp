#include "ctxrw/pseudo.hpp"

#include <algorithm>
#include <set>

#include "ctxrw/error.hpp"

namespace ctxrw::pseudo {

std::vector<SpanCandidate> expand_spans(const std::vector<Tokens>& context, std::size_t utterance, std::size_t pos) {
  if (utterance >= context.size() || pos >= context[utterance].size())
    throw Error("expand_spans: keyword position outside the context");
  const Tokens& u = context[utterance];
  std::vector<SpanCandidate> out;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (std::size_t before = 0; before <= 2; ++before) {
    for (std::size_t after = 0; after <= 2; ++after) {
      const std::size_t start = pos >= before ? pos - before : 0;
      const std::size_t end = std::min(u.size(), pos + after + 1);
      if (!seen.insert({start, end}).second) continue;
      SpanCandidate s;
      s.tokens.assign(u.begin() + static_cast<std::ptrdiff_t>(start), u.begin() + static_cast<std::ptrdiff_t>(end));
      s.utterance = utterance;
      s.start = start;
      s.end = end;
      s.keyword = u[pos];
      out.push_back(std::move(s));
    }
  }
  return out;
}

Tokens insert_span(const Tokens& q, const Tokens& span, std::size_t position) {
  if (position > q.size()) throw Error("insert_span: position past the end of q");
  Tokens out(q.begin(), q.begin() + static_cast<std::ptrdiff_t>(position));
  out.insert(out.end(), span.begin(), span.end());
  out.insert(out.end(), q.begin() + static_cast<std::ptrdiff_t>(position), q.end());
  return out;
}

std::vector<RewriteCandidate> all_insertions(const Tokens& q, const std::vector<SpanCandidate>& spans,
                                             const lm::SentenceScorer& lm) {
  if (q.empty()) throw Error("enumerate_insertions: empty last utterance");
  std::vector<RewriteCandidate> out;
  out.reserve(spans.size() * (q.size() + 1));
  for (const auto& span : spans) {
    for (std::size_t p = 0; p <= q.size(); ++p) {
      RewriteCandidate c;
      c.tokens = insert_span(q, span.tokens, p);
      c.lm_score = lm.normalized_score(c.tokens);
      c.span = span;
      c.position = p;
      out.push_back(std::move(c));
    }
  }
  return out;
}

std::vector<RewriteCandidate> select_top(std::vector<RewriteCandidate> pool, std::size_t top_k) {
  std::stable_sort(pool.begin(), pool.end(), [](const RewriteCandidate& a, const RewriteCandidate& b) {
    if (a.lm_score != b.lm_score) return a.lm_score > b.lm_score;
    if (a.position != b.position) return a.position < b.position;
    if (a.span.tokens.size() != b.span.tokens.size()) return a.span.tokens.size() < b.span.tokens.size();
    return a.tokens < b.tokens;
  });
  std::vector<RewriteCandidate> out;
  std::set<Tokens> seen;
  for (auto& c : pool) {
    if (out.size() >= top_k) break;
    if (!seen.insert(c.tokens).second) continue;
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<RewriteCandidate> enumerate_insertions(const Tokens& q, const std::vector<SpanCandidate>& spans,
                                                   const lm::SentenceScorer& lm, std::size_t top_k) {
  return select_top(all_insertions(q, spans, lm), top_k);
}

SelectionReranker::SelectionReranker(const singleturn::SelectionScorer& model, Tokens positive,
                                     std::vector<Tokens> negatives)
    : model_(model), positive_(std::move(positive)), negatives_(std::move(negatives)) {
  if (negatives_.empty()) throw Error("selection reranker: empty negative set");
}

double SelectionReranker::score(const Tokens& candidate) const {
  double total = 0.0;
  for (const auto& ne : negatives_) total += model_.margin(positive_, ne, candidate);
  return total / static_cast<double>(negatives_.size());
}

RewriteCandidate rerank(std::vector<RewriteCandidate> cands, const Reranker& reranker) {
  if (cands.empty()) throw Error("rerank: no candidates");
  std::size_t best = 0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    cands[i].rerank_score = reranker.score(cands[i].tokens);
    if (i > 0 && reranker.improvement(cands[i].rerank_score, cands[best].rerank_score) > 0.0) best = i;
  }
  return cands[best];
}

RewriteCandidate rerank_generation(std::vector<RewriteCandidate> cands, const Tokens& response,
                                   const singleturn::GenerationScorer& model) {
  return rerank(std::move(cands), GenerationReranker(model, response));
}

RewriteCandidate rerank_selection(std::vector<RewriteCandidate> cands, const Tokens& positive,
                                  const std::vector<Tokens>& negatives, const singleturn::SelectionScorer& model) {
  if (cands.empty()) throw Error("rerank: no candidates");
  return rerank(std::move(cands), SelectionReranker(model, positive, negatives));
}

PseudoResult generate_pseudo(const DialogueSession& session, const stats::PmiScorer& pmi,
                             const lm::SentenceScorer& lm, const Reranker& reranker, const PseudoConfig& config) {
  PseudoResult res;
  res.quad.session = session;
  res.quad.rewritten = session.last;
  const auto kw = pmi.extract_keywords(session.context, session.last, session.response, config.keyword_ratio);
  std::vector<SpanCandidate> spans;
  for (const auto& k : kw.selected)
    for (const auto& [u, p] : k.positions)
      for (auto& s : expand_spans(session.context, u, p)) spans.push_back(std::move(s));
  if (spans.empty()) return res;
  auto pool = all_insertions(session.last, spans, lm);
  res.pool_size = pool.size();
  auto top = select_top(std::move(pool), config.top_k);
  if (top.empty()) return res;
  RewriteCandidate best = rerank(std::move(top), reranker);
  const double base = reranker.score(session.last);
  if (reranker.improvement(best.rerank_score, base) > config.delta) {
    res.quad.rewritten = best.tokens;
    res.rewritten = true;
    res.chosen = std::move(best);
  }
  return res;
}

PseudoStats PseudoStats::of(const std::vector<PseudoResult>& results) {
  PseudoStats st;
  if (results.empty()) return st;
  for (const auto& r : results) {
    (r.rewritten ? st.rewritten : st.unrewritten)++;
    st.mean_context_len += static_cast<double>(r.quad.session.flat_context().size());
    st.mean_last_len += static_cast<double>(r.quad.session.last.size());
    st.mean_rewritten_len += static_cast<double>(r.quad.rewritten.size());
    st.mean_response_len += static_cast<double>(r.quad.session.response.size());
  }
  const auto n = static_cast<double>(results.size());
  st.mean_context_len /= n;
  st.mean_last_len /= n;
  st.mean_rewritten_len /= n;
  st.mean_response_len /= n;
  return st;
}

nlohmann::json PseudoStats::to_json() const {
  // rewritten : un-rewritten; undefined when nothing was left un-rewritten
  nlohmann::json ratio = nullptr;
  if (unrewritten) ratio = static_cast<double>(rewritten) / static_cast<double>(unrewritten);
  return {{"rewritten", rewritten},
          {"unrewritten", unrewritten},
          {"rewritten_ratio", ratio},
          {"mean_context_len", mean_context_len},
          {"mean_last_len", mean_last_len},
          {"mean_rewritten_len", mean_rewritten_len},
          {"mean_response_len", mean_response_len}};
}

}  // namespace ctxrw::pseudo
