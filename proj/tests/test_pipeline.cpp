#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "ctxrw/error.hpp"
#include "ctxrw/pipeline.hpp"
#include "ctxrw/rng.hpp"
#include "tempdir.hpp"

using namespace ctxrw;
using namespace ctxrw::pipeline;

namespace {

Tokens words(std::initializer_list<const char*> w) { return Tokens(w.begin(), w.end()); }

std::vector<std::pair<Tokens, Tokens>> random_pairs(Rng& rng, std::size_t n, std::size_t vocab) {
  std::vector<std::pair<Tokens, Tokens>> out;
  for (std::size_t i = 0; i < n; ++i) {
    Tokens u, r;
    for (std::size_t j = 0, len = 1 + rng.below(8); j < len; ++j) u.push_back("t" + std::to_string(rng.below(vocab)));
    r.push_back("resp" + std::to_string(i));
    out.emplace_back(u, r);
  }
  return out;
}

// Exhaustive scoring straight from the formula.
std::vector<std::pair<std::uint32_t, double>> oracle_retrieve(const std::vector<std::pair<Tokens, Tokens>>& docs,
                                                              const Tokens& query, std::size_t k) {
  std::set<std::string> q(query.begin(), query.end());
  const double n = static_cast<double>(docs.size());
  std::vector<std::pair<std::uint32_t, double>> scored;
  for (std::uint32_t d = 0; d < docs.size(); ++d) {
    const auto& u = docs[d].first;
    double s = 0.0;
    bool shared = false;
    for (const auto& t : q) {
      const auto tf = std::count(u.begin(), u.end(), t);
      if (tf == 0) continue;
      shared = true;
      double df = 0.0;
      for (const auto& other : docs) df += std::count(other.first.begin(), other.first.end(), t) > 0;
      const double idf = std::log(n / df);
      s += static_cast<double>(tf) * idf * idf / std::sqrt(static_cast<double>(u.size()));
    }
    if (shared) scored.emplace_back(d, s);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (std::abs(a.second - b.second) > 1e-12) return a.second > b.second;
    return a.first < b.first;
  });
  if (scored.size() > k) scored.resize(k);
  return scored;
}

class TableSelector : public singleturn::SelectionScorer {
 public:
  std::map<std::string, double> by_first_token;
  double score(const Tokens&, const Tokens& r) const override {
    auto it = by_first_token.find(r.at(0));
    return it == by_first_token.end() ? 0.0 : it->second;
  }
};

class FixedRewriter : public Rewriter {
 public:
  explicit FixedRewriter(Tokens out) : out_(std::move(out)) {}
  Tokens rewrite(const DialogueSession&) const override { return out_; }

 private:
  Tokens out_;
};

}  // namespace

TEST(Index, BuildBasics) {
  auto one = InvertedIndex::build({{words({"a", "b", "a"}), words({"r"})}});
  EXPECT_EQ(one.df("a"), 1u);
  EXPECT_EQ(one.idf("a"), 0.0);
  EXPECT_EQ(one.idf("zz"), 0.0);
  ASSERT_NE(one.postings("a"), nullptr);
  EXPECT_EQ(one.postings("a")->at(0), (Posting{0, 2}));
  auto dup = InvertedIndex::build({{words({"a"}), words({"r1"})}, {words({"a"}), words({"r2"})}});
  EXPECT_EQ(dup.size(), 2u);
  EXPECT_EQ(dup.df("a"), 2u);
  EXPECT_THROW(InvertedIndex::build({}), Error);
  Rng rng(1);
  auto pairs = random_pairs(rng, 30, 10);
  EXPECT_EQ(InvertedIndex::build(pairs), InvertedIndex::build(pairs));
}

TEST(Index, RetrieveMatchesExhaustiveOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    auto pairs = random_pairs(rng, 20 + rng.below(300), 4 + rng.below(30));
    auto index = InvertedIndex::build(pairs);
    for (int qn = 0; qn < 10; ++qn) {
      Tokens q;
      for (std::size_t j = 0, len = 1 + rng.below(5); j < len; ++j) q.push_back("t" + std::to_string(rng.below(40)));
      const std::size_t k = 1 + rng.below(12);
      auto got = index.retrieve(q, k);
      auto want = oracle_retrieve(pairs, q, k);
      ASSERT_EQ(got.size(), want.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        EXPECT_EQ(got[i].doc, want[i].first);
        EXPECT_NEAR(got[i].score, want[i].second, 1e-12);
        EXPECT_NEAR(index.score(q, got[i].doc), got[i].score, 1e-12);
      }
    }
  }
}

TEST(Index, RetrieveEdgeCases) {
  auto index = InvertedIndex::build({{words({"tea", "green"}), words({"r0"})},
                                     {words({"tea", "black"}), words({"r1"})},
                                     {words({"car"}), words({"r2"})}});
  EXPECT_TRUE(index.retrieve({}).empty());
  EXPECT_TRUE(index.retrieve(words({"nothing"})).empty());
  EXPECT_THROW(index.retrieve(words({"tea"}), 0), Error);
  auto tied = index.retrieve(words({"tea"}));
  ASSERT_EQ(tied.size(), 2u);
  EXPECT_EQ(tied[0].doc, 0u);
  EXPECT_EQ(tied[1].doc, 1u);
  EXPECT_EQ(tied[0].score, tied[1].score);
  // repeated query tokens count once
  EXPECT_EQ(index.retrieve(words({"green", "green"}))[0].score, index.retrieve(words({"green"}))[0].score);
  EXPECT_NEAR(index.retrieve(words({"green"}))[0].score, std::pow(std::log(3.0), 2) / std::sqrt(2.0), 1e-12);
}

TEST(Index, SaveLoadRoundTrip) {
  Rng rng(5);
  auto index = InvertedIndex::build(random_pairs(rng, 50, 12));
  testing_support::TempDir dir("index");
  index.save(dir / "i.bin");
  auto back = InvertedIndex::load(dir / "i.bin");
  EXPECT_EQ(back, index);
  back.save(dir / "j.bin");
  EXPECT_EQ(testing_support::read_file(dir / "i.bin"), testing_support::read_file(dir / "j.bin"));
  dir.write("bad.bin", "NOTANIDX");
  EXPECT_THROW(InvertedIndex::load(dir / "bad.bin"), Error);
  const auto bytes = testing_support::read_file(dir / "i.bin");
  dir.write("short.bin", bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(InvertedIndex::load(dir / "short.bin"), Error);
}

TEST(IdfTable, CountsUtterancesAsDocuments) {
  std::vector<DialogueSession> s = {{{words({"a", "b"}), words({"a"})}, words({"c"}), words({"a", "d"})}};
  auto t = IdfTable::from_sessions(s);
  EXPECT_EQ(t.documents(), 4u);
  EXPECT_NEAR(t.idf("a"), std::log(4.0 / 3.0), 1e-12);
  EXPECT_NEAR(t.idf("c"), std::log(4.0), 1e-12);
  EXPECT_NEAR(t.idf("unseen"), std::log(4.0), 1e-12);
}

TEST(KeywordBaseline, MatchesBruteForceSort) {
  Rng rng(9);
  std::vector<Tokens> docs;
  for (int i = 0; i < 80; ++i) {
    Tokens d;
    for (std::size_t j = 0, len = 1 + rng.below(6); j < len; ++j) d.push_back("k" + std::to_string(rng.below(25)));
    docs.push_back(d);
  }
  auto idf = IdfTable::build(docs);
  for (int trial = 0; trial < 50; ++trial) {
    DialogueSession s;
    for (int u = 0; u < 2; ++u) s.context.push_back(docs[rng.below(docs.size())]);
    s.last = docs[rng.below(docs.size())];
    s.response = words({"r"});
    // brute force: score every distinct context token, sort, take 5
    std::map<std::string, int> tf;
    for (const auto& u : s.context)
      for (const auto& w : u) ++tf[w];
    std::vector<std::pair<double, std::string>> scored;
    for (const auto& [w, c] : tf) {
      double df = 0.0;
      for (const auto& d : docs) df += std::find(d.begin(), d.end(), w) != d.end();
      scored.emplace_back(c * std::log(static_cast<double>(docs.size()) / std::max(df, 1.0)), w);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (std::abs(a.first - b.first) > 1e-12) return a.first > b.first;
      return a.second < b.second;
    });
    Tokens want = s.last;
    for (std::size_t i = 0; i < std::min<std::size_t>(5, scored.size()); ++i) want.push_back(scored[i].second);
    EXPECT_EQ(keyword_append_baseline(s, idf, 5), want);
  }
  // fewer distinct context tokens than n: all appended
  DialogueSession small{{words({"x", "y", "x"})}, words({"q"}), words({"r"})};
  auto out = keyword_append_baseline(small, idf, 5);
  EXPECT_EQ(out.size(), 3u);
  EXPECT_EQ(KeywordRewriter(idf, 5).rewrite(small), out);
}

TEST(EndToEnd, PicksBestSelectorScoreAndTraces) {
  auto index = InvertedIndex::build({{words({"tea", "green"}), words({"r0"})},
                                     {words({"tea", "black"}), words({"r1"})},
                                     {words({"tea"}), words({"r2"})},
                                     {words({"car"}), words({"r3"})}});
  TableSelector sel;
  sel.by_first_token = {{"r0", 0.2}, {"r1", 0.9}, {"r2", 0.1}};
  DialogueSession s{{words({"i", "like", "tea"})}, words({"it", "is", "nice"}), words({"x"})};
  auto out = end_to_end_select(s, FixedRewriter(words({"black", "tea"})), index, sel, 3);
  EXPECT_EQ(out.query, words({"black", "tea"}));
  EXPECT_EQ(out.response, words({"r1"}));
  EXPECT_EQ(out.doc, 1u);
  EXPECT_FALSE(out.fallback);
  ASSERT_EQ(out.candidates.size(), 3u);
  EXPECT_EQ(out.trace()["candidates"].size(), 3u);
  EXPECT_EQ(out.trace()["response"], "r1");
  // equal selector scores: the earlier-retrieved candidate wins
  TableSelector flat;
  auto tie = end_to_end_select(s, FixedRewriter(words({"black", "tea"})), index, flat, 3);
  EXPECT_EQ(tie.doc, out.candidates[0].doc);
  // same inputs, same answer
  EXPECT_EQ(end_to_end_select(s, FixedRewriter(words({"black", "tea"})), index, sel, 3).trace().dump(),
            out.trace().dump());
}

TEST(EndToEnd, FallsBackToRawQ) {
  auto index = InvertedIndex::build({{words({"car"}), words({"r0"})}, {words({"tea"}), words({"r1"})}});
  TableSelector sel;
  DialogueSession s{{words({"hello"})}, words({"tea", "time"}), words({"x"})};
  auto out = end_to_end_select(s, FixedRewriter(words({"nothing", "here"})), index, sel, 10);
  EXPECT_TRUE(out.fallback);
  EXPECT_EQ(out.response, words({"r1"}));
  DialogueSession none{{words({"hello"})}, words({"zzz"}), words({"x"})};
  EXPECT_THROW(end_to_end_select(none, FixedRewriter(words({"nothing"})), index, sel, 10), Error);
}

TEST(RankMetrics, HandComputed) {
  auto perfect = rank_metrics({{1, 0, 0}, {1, 0}});
  EXPECT_DOUBLE_EQ(perfect.map, 1.0);
  EXPECT_DOUBLE_EQ(perfect.mrr, 1.0);
  EXPECT_DOUBLE_EQ(perfect.p_at_1, 1.0);

  auto second = rank_metrics({{0, 1, 0, 0, 0, 0, 0, 0, 0, 0}});
  EXPECT_DOUBLE_EQ(second.mrr, 0.5);
  EXPECT_DOUBLE_EQ(second.recall.at("R_10@1"), 0.0);
  EXPECT_DOUBLE_EQ(second.recall.at("R_10@2"), 1.0);

  // AP: (1/2 + 2/4)/2, (1 + 2/3)/2, 1/3; RR: 1/2, 1, 1/3; one context skipped
  auto m = rank_metrics({{0, 1, 0, 1}, {1, 0, 1}, {0, 0, 1}, {0, 0}});
  EXPECT_EQ(m.evaluated, 3u);
  EXPECT_EQ(m.skipped, 1u);
  EXPECT_NEAR(m.map, (0.5 + 5.0 / 6.0 + 1.0 / 3.0) / 3.0, 1e-12);
  EXPECT_NEAR(m.mrr, (0.5 + 1.0 + 1.0 / 3.0) / 3.0, 1e-12);
  EXPECT_NEAR(m.p_at_1, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(m.recall.at("R_10@1"), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(m.recall.at("R_10@2"), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(m.recall.at("R_10@5"), 1.0, 1e-12);

  // only the first n candidates count toward R_n@m
  auto cut = rank_metrics({{0, 0, 1}}, {{2, 2}});
  EXPECT_EQ(cut.recall.at("R_2@2"), 0.0);
}
