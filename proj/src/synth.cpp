#include "ctxrw/synth.hpp"

#include <string>

#include "ctxrw/error.hpp"
#include "ctxrw/rng.hpp"

namespace ctxrw::synth {

namespace {

Tokens words(const std::string& prefix, std::size_t n) {
  Tokens out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

const std::string& pick(const Tokens& pool, Rng& rng) { return pool[rng.below(pool.size())]; }

}  // namespace

std::vector<DialogueSession> dialogues(const DialogueConfig& c) {
  if (c.sessions == 0 || c.topics == 0 || c.words_per_topic == 0 || c.filler_words == 0 || c.context_turns == 0)
    throw Error("synth: counts must be positive");
  if (c.min_len < 2 || c.max_len < c.min_len) throw Error("synth: need 2 <= min_len <= max_len");
  Rng rng(c.seed);
  const Tokens filler = words("f", c.filler_words);
  std::vector<Tokens> topics;
  for (std::size_t t = 0; t < c.topics; ++t) topics.push_back(words("t" + std::to_string(t) + "w", c.words_per_topic));
  const Tokens pronouns = {"it", "that", "this"};
  auto length = [&] { return c.min_len + rng.below(c.max_len - c.min_len + 1); };
  std::vector<DialogueSession> out;
  out.reserve(c.sessions);
  for (std::size_t s = 0; s < c.sessions; ++s) {
    const Tokens& topic = topics[rng.below(topics.size())];
    DialogueSession d;
    for (std::size_t u = 0; u < c.context_turns; ++u) {
      Tokens utt;
      const std::size_t n = length();
      for (std::size_t i = 0; i < n; ++i) utt.push_back(rng.uniform() < 0.4 ? pick(topic, rng) : pick(filler, rng));
      d.context.push_back(std::move(utt));
    }
    const std::size_t nq = length();
    for (std::size_t i = 0; i + 1 < nq; ++i) d.last.push_back(pick(filler, rng));
    d.last.insert(d.last.begin() + static_cast<std::ptrdiff_t>(rng.below(d.last.size() + 1)), pick(pronouns, rng));
    const std::size_t nr = length();
    for (std::size_t i = 0; i < nr; ++i) d.response.push_back(rng.uniform() < 0.6 ? pick(topic, rng) : pick(filler, rng));
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<PseudoQuadruplet> identity_task(std::size_t n, std::size_t vocab, std::uint64_t seed) {
  if (vocab < 2) throw Error("synth: identity task needs at least 2 words");
  Rng rng(seed);
  const Tokens pool = words("w", vocab);
  std::vector<PseudoQuadruplet> out;
  for (std::size_t i = 0; i < n; ++i) {
    PseudoQuadruplet p;
    Tokens ctx;
    for (std::size_t k = 0, m = 3 + rng.below(4); k < m; ++k) ctx.push_back(pick(pool, rng));
    p.session.context = {ctx};
    for (std::size_t k = 0, m = 3 + rng.below(4); k < m; ++k) p.session.last.push_back(pick(pool, rng));
    p.session.response = {pick(pool, rng), pick(pool, rng)};
    p.rewritten = p.session.last;
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<PseudoQuadruplet> insertion_task(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  const Tokens keywords = words("k", 30);
  const Tokens filler = words("f", 15);
  const Tokens heads = {"what", "how", "where", "why"};
  std::vector<PseudoQuadruplet> out;
  for (std::size_t i = 0; i < n; ++i) {
    PseudoQuadruplet p;
    const std::string& kw = pick(keywords, rng);
    Tokens ctx;
    const std::size_t len = 4 + rng.below(3);
    const std::size_t at = rng.below(len);
    for (std::size_t k = 0; k < len; ++k) ctx.push_back(k == at ? kw : pick(filler, rng));
    p.session.context = {ctx};
    p.session.last.push_back(pick(heads, rng));
    for (std::size_t k = 0, m = 2 + rng.below(2); k < m; ++k) p.session.last.push_back(pick(filler, rng));
    p.session.response = {pick(filler, rng), kw};
    p.rewritten = p.session.last;
    p.rewritten.insert(p.rewritten.begin() + 1, kw);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace ctxrw::synth
