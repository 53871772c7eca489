// Command-line front end: one subcommand per pipeline stage. Every stage
// reads files, writes files, and takes its randomness from --seed.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "ctxrw/corpus.hpp"
#include "ctxrw/crn.hpp"
#include "ctxrw/error.hpp"
#include "ctxrw/eval.hpp"
#include "ctxrw/lm.hpp"
#include "ctxrw/pipeline.hpp"
#include "ctxrw/pseudo.hpp"
#include "ctxrw/singleturn.hpp"
#include "ctxrw/stats.hpp"
#include "ctxrw/synth.hpp"
#include "ctxrw/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace ctxrw;

namespace {

struct Global {
  std::uint64_t seed = 1;
  int threads = 1;
  std::string log_level = "info";
  std::string tokenize = "whitespace";
  std::size_t max_len = 30;
};

std::vector<Tokens> read_lines(const fs::path& path, TokenizeMode mode, bool skip_blank) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<Tokens> out;
  std::string line;
  while (std::getline(in, line)) {
    Tokens t = tokenize(line, mode);
    if (t.empty() && skip_blank) continue;
    out.push_back(std::move(t));
  }
  return out;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

void emit(const json& j, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    open_out(out_path) << j.dump(2) << '\n';
  }
}

singleturn::ModelConfig model_flags(CLI::App* cmd, singleturn::ModelConfig& m) {
  cmd->add_option("--emb", m.emb, "Embedding size");
  cmd->add_option("--enc-hidden", m.enc_hidden, "Encoder GRU size per direction");
  cmd->add_option("--dec-hidden", m.dec_hidden, "Decoder GRU size");
  cmd->add_option("--dropout", m.dropout, "Dropout probability");
  return m;
}

void fit_flags(CLI::App* cmd, singleturn::FitConfig& f) {
  cmd->add_option("--epochs", f.epochs, "Training epochs");
  cmd->add_option("--batch", f.batch, "Batch size");
  cmd->add_option("--lr", f.lr, "Adam learning rate");
  cmd->add_option("--clip", f.clip, "Gradient norm clip");
  cmd->add_option("--valid-fraction", f.valid_fraction, "Held-out fraction");
  cmd->add_option("--vocab-size", f.vocab_size, "Vocabulary bound");
}

std::vector<Tokens> negatives_for(const std::vector<DialogueSession>& sessions, std::size_t i, std::size_t count,
                                  std::uint64_t seed) {
  std::vector<Tokens> out;
  Rng rng(Rng::mix(seed, i));
  for (std::size_t k = 0; k < count; ++k) {
    if (sessions.size() < 2) {
      out.push_back(sessions[i].response);
      continue;
    }
    std::size_t j = rng.below(sessions.size() - 1);
    if (j >= i) ++j;
    out.push_back(sessions[j].response);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised context rewriting for multi-turn dialogue"};
  app.require_subcommand(1);
  Global g;
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads (stages run serially; kept for interface stability)");
  app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off")->capture_default_str();
  app.add_option("--tokenize", g.tokenize, "whitespace|char")->capture_default_str();
  app.add_option("--max-len", g.max_len, "Skip sessions with a longer utterance")->capture_default_str();

  std::function<void()> run;

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "Generate synthetic data")->require_subcommand(1);
  synth::DialogueConfig dcfg;
  std::string synth_out;
  std::size_t task_n = 200, task_vocab = 50;
  {
    auto* c = synth->add_subcommand("dialogues", "Topic dialogues as session JSONL");
    c->add_option("--sessions", dcfg.sessions);
    c->add_option("--topics", dcfg.topics);
    c->add_option("--context-turns", dcfg.context_turns);
    c->add_option("--out", synth_out)->required();
    c->callback([&] {
      run = [&] {
        dcfg.seed = g.seed;
        write_sessions(synth_out, synth::dialogues(dcfg));
      };
    });
    auto* id = synth->add_subcommand("identity", "Quadruplets with q* = q");
    id->add_option("--n", task_n);
    id->add_option("--vocab", task_vocab);
    id->add_option("--out", synth_out)->required();
    id->callback([&] { run = [&] { write_quadruplets(synth_out, synth::identity_task(task_n, task_vocab, g.seed)); }; });
    auto* ins = synth->add_subcommand("insertion", "Quadruplets with one context keyword inserted");
    ins->add_option("--n", task_n);
    ins->add_option("--out", synth_out)->required();
    ins->callback([&] { run = [&] { write_quadruplets(synth_out, synth::insertion_task(task_n, g.seed)); }; });
  }

  // ---- corpus ----
  auto* corpus = app.add_subcommand("corpus", "Session preparation")->require_subcommand(1);
  std::string c_in, c_out;
  std::size_t max_turns = 2, vocab_size = 20000, vocab_min = 1;
  {
    auto* p = corpus->add_subcommand("prepare", "Tokenize, length-filter and truncate sessions");
    p->add_option("--in", c_in)->required();
    p->add_option("--out", c_out)->required();
    p->add_option("--max-turns", max_turns)->capture_default_str();
    p->callback([&] {
      run = [&] {
        LoadOptions o{parse_tokenize_mode(g.tokenize), g.max_len, max_turns};
        write_sessions(c_out, load_sessions(c_in, o), o.mode);
      };
    });
    auto* v = corpus->add_subcommand("vocab", "Build a vocabulary file");
    v->add_option("--in", c_in)->required();
    v->add_option("--out", c_out)->required();
    v->add_option("--size", vocab_size)->capture_default_str();
    v->add_option("--min-count", vocab_min)->capture_default_str();
    v->callback([&] {
      run = [&] {
        LoadOptions o{parse_tokenize_mode(g.tokenize), g.max_len, 0};
        Vocab::build(load_sessions(c_in, o), vocab_size, vocab_min).save(c_out);
      };
    });
  }

  // ---- stats ----
  auto* stats = app.add_subcommand("stats", "Co-occurrence statistics")->require_subcommand(1);
  std::string s_in, s_out;
  std::size_t s_min = 2;
  {
    auto* b = stats->add_subcommand("build", "Count session co-occurrences");
    b->add_option("--in", s_in)->required();
    b->add_option("--out", s_out)->required();
    b->add_option("--min-count", s_min, "Drop words seen in fewer sessions")->capture_default_str();
    b->callback([&] {
      run = [&] {
        auto table = stats::CooccurrenceTable::count(load_sessions(s_in, {parse_tokenize_mode(g.tokenize), g.max_len, 0}));
        table.prune(s_min);
        table.save(s_out);
      };
    });
  }

  // ---- lm ----
  auto* lmc = app.add_subcommand("lm", "N-gram language model")->require_subcommand(1);
  std::string lm_in, lm_out;
  int lm_order = 3;
  double lm_k = 0.1;
  {
    auto* t = lmc->add_subcommand("train", "Train from one sentence per line");
    t->add_option("--in", lm_in)->required();
    t->add_option("--out", lm_out)->required();
    t->add_option("--order", lm_order)->capture_default_str();
    t->add_option("--add-k", lm_k)->capture_default_str();
    t->callback([&] {
      run = [&] { lm::NgramLM::train(read_lines(lm_in, parse_tokenize_mode(g.tokenize), true), lm_order, lm_k).save(lm_out); };
    });
  }

  // ---- pseudo ----
  auto* pseudo = app.add_subcommand("pseudo", "Pseudo-parallel data")->require_subcommand(1);
  std::string p_task = "gen", p_stats, p_lm, p_reranker, p_in, p_out, p_side;
  pseudo::PseudoConfig pcfg;
  std::size_t p_min = 2, p_negatives = 1;
  {
    auto* gen = pseudo->add_subcommand("gen", "Generate rewritten utterances");
    gen->add_option("--task", p_task, "gen|sel")->check(CLI::IsMember({"gen", "sel"}))->capture_default_str();
    gen->add_option("--stats", p_stats)->required();
    gen->add_option("--lm", p_lm)->required();
    gen->add_option("--reranker", p_reranker, "Generator (gen) or selector (sel) checkpoint")->required();
    gen->add_option("--in", p_in)->required();
    gen->add_option("--out", p_out)->required();
    gen->add_option("--stats-out", p_side, "Sidecar summary (default: <out>.stats.json)");
    gen->add_option("--ratio", pcfg.keyword_ratio)->capture_default_str();
    gen->add_option("--top-k", pcfg.top_k)->capture_default_str();
    gen->add_option("--delta", pcfg.delta)->capture_default_str();
    gen->add_option("--min-count", p_min)->capture_default_str();
    gen->add_option("--negatives", p_negatives)->capture_default_str();
    gen->callback([&] {
      run = [&] {
        const auto mode = parse_tokenize_mode(g.tokenize);
        const auto sessions = load_sessions(p_in, {mode, g.max_len, 0});
        const auto table = stats::CooccurrenceTable::load(p_stats);
        stats::StatsConfig sc;
        sc.min_count = p_min;
        const stats::PmiScorer pmi(table, sc);
        const auto lm = lm::NgramLM::load(p_lm);
        std::optional<singleturn::S2sModel> s2s;
        std::optional<singleturn::IrModel> ir;
        if (p_task == "gen") {
          s2s.emplace(singleturn::S2sModel::load(p_reranker));
        } else {
          ir.emplace(singleturn::IrModel::load(p_reranker));
        }
        std::vector<pseudo::PseudoResult> results;
        for (std::size_t i = 0; i < sessions.size(); ++i) {
          const auto& s = sessions[i];
          if (s2s) {
            results.push_back(pseudo::generate_pseudo(s, pmi, lm, pseudo::GenerationReranker(*s2s, s.response), pcfg));
          } else {
            pseudo::SelectionReranker rr(*ir, s.response, negatives_for(sessions, i, p_negatives, g.seed));
            results.push_back(pseudo::generate_pseudo(s, pmi, lm, rr, pcfg));
          }
        }
        std::vector<PseudoQuadruplet> quads;
        for (const auto& r : results) quads.push_back(r.quad);
        write_quadruplets(p_out, quads, mode);
        emit(pseudo::PseudoStats::of(results).to_json(), p_side.empty() ? p_out + ".stats.json" : p_side);
      };
    });
  }

  // ---- crn ----
  auto* crnc = app.add_subcommand("crn", "Context rewriting network")->require_subcommand(1);
  std::string r_ckpt, r_in, r_out;
  int r_beam = 5, r_max = 0;
  {
    auto* rw = crnc->add_subcommand("rewrite", "Beam-search rewrites of each session's last utterance");
    rw->add_option("--ckpt", r_ckpt)->required();
    rw->add_option("--in", r_in)->required();
    rw->add_option("--out", r_out)->required();
    rw->add_option("--beam", r_beam)->capture_default_str();
    rw->add_option("--decode-len", r_max, "Decode length limit (0: model default)");
    rw->callback([&] {
      run = [&] {
        const auto mode = parse_tokenize_mode(g.tokenize);
        const auto model = crn::CrnModel::load(r_ckpt);
        auto out = open_out(r_out);
        for (const auto& s : load_sessions(r_in, {mode, g.max_len, 0})) {
          const auto hyps = model.beam_search(model.prepare(s.context, s.last), r_beam, r_max);
          json j = session_to_json(s, mode);
          j["rewritten_model"] = detokenize(hyps.front().tokens, mode);
          out << j.dump() << '\n';
        }
      };
    });
  }

  // ---- singleturn ----
  auto* st = app.add_subcommand("singleturn", "Single-turn generator and selector")->require_subcommand(1);
  std::string st_in, st_out, st_log;
  singleturn::ModelConfig st_model;
  singleturn::FitConfig st_fit;
  for (const std::string name : {"train-gen", "train-sel"}) {
    auto* c = st->add_subcommand(name, name == "train-gen" ? "Train the attention seq2seq generator"
                                                          : "Train the dual-encoder selector");
    c->add_option("--in", st_in, "Session JSONL")->required();
    c->add_option("--out", st_out)->required();
    c->add_option("--log", st_log, "Training log JSONL");
    model_flags(c, st_model);
    fit_flags(c, st_fit);
    c->callback([&, name] {
      run = [&, name] {
        st_model.seed = g.seed;
        st_fit.seed = g.seed;
        const auto pairs = singleturn::adjacent_pairs(
            load_sessions(st_in, {parse_tokenize_mode(g.tokenize), g.max_len, 0}));
        std::vector<EpochMetrics> log;
        if (name == "train-gen") {
          singleturn::train_s2s(pairs, st_model, st_fit, &log).save(st_out);
        } else {
          singleturn::train_ir(singleturn::sample_triples(pairs, g.seed), st_model, st_fit, &log).save(st_out);
        }
        if (!st_log.empty()) write_training_log(st_log, log);
      };
    });
  }

  // ---- train ----
  auto* tr = app.add_subcommand("train", "CRN training")->require_subcommand(1);
  std::string t_data, t_out, t_in, t_log, t_task = "gen", t_reward;
  std::size_t t_vocab = 20000, t_vocab_min = 1;
  train::TrainConfig tcfg;
  crn::CrnConfig ccfg;
  auto train_flags = [&](CLI::App* c) {
    c->add_option("--data", t_data, "Quadruplet JSONL")->required();
    c->add_option("--out", t_out)->required();
    c->add_option("--log", t_log, "Training log JSONL");
    c->add_option("--epochs", tcfg.epochs)->capture_default_str();
    c->add_option("--batch", tcfg.batch)->capture_default_str();
    c->add_option("--lr", tcfg.lr)->capture_default_str();
    c->add_option("--max-steps", tcfg.max_steps)->capture_default_str();
    c->add_option("--clip", tcfg.clip)->capture_default_str();
  };
  {
    auto* pre = tr->add_subcommand("pretrain", "MLE pretraining on pseudo quadruplets");
    train_flags(pre);
    pre->add_option("--valid-fraction", tcfg.valid_fraction)->capture_default_str();
    pre->add_option("--patience", tcfg.patience)->capture_default_str();
    pre->add_option("--vocab-size", t_vocab)->capture_default_str();
    pre->add_option("--vocab-min-count", t_vocab_min)->capture_default_str();
    pre->add_option("--emb", ccfg.emb)->capture_default_str();
    pre->add_option("--enc-hidden", ccfg.enc_hidden)->capture_default_str();
    pre->add_option("--dec-hidden", ccfg.dec_hidden)->capture_default_str();
    pre->add_option("--dropout", ccfg.dropout)->capture_default_str();
    pre->add_flag("--copy-from-q", ccfg.copy_from_q, "Let the copy path also point into q");
    pre->callback([&] {
      run = [&] {
        tcfg.seed = g.seed;
        ccfg.seed = g.seed;
        const auto quads = load_quadruplets(t_data, {parse_tokenize_mode(g.tokenize), g.max_len + 10, 0});
        std::vector<DialogueSession> sessions;
        for (const auto& q : quads) {
          sessions.push_back(q.session);
          sessions.back().last = q.rewritten;
        }
        crn::CrnModel model(Vocab::build(sessions, t_vocab, t_vocab_min), ccfg);
        tensor::AdamState adam;
        const auto res = train::pretrain(model, quads, tcfg, &adam);
        model.save(t_out, &adam);
        if (!t_log.empty()) write_training_log(t_log, res.log);
      };
    });
    auto* ft = tr->add_subcommand("finetune", "Policy-gradient fine-tuning with a task reward");
    train_flags(ft);
    ft->add_option("--in", t_in, "Pretrained CRN checkpoint")->required();
    ft->add_option("--task", t_task, "gen|sel")->check(CLI::IsMember({"gen", "sel"}))->capture_default_str();
    ft->add_option("--reward-ckpt", t_reward, "Generator (gen) or selector (sel) checkpoint")->required();
    ft->add_option("--lambda", tcfg.lambda)->capture_default_str();
    ft->add_option("--samples", tcfg.samples)->capture_default_str();
    ft->add_option("--temperature", tcfg.temperature)->capture_default_str();
    ft->callback([&] {
      run = [&] {
        tcfg.seed = g.seed;
        auto model = crn::CrnModel::load(t_in);
        const auto quads = load_quadruplets(t_data, {parse_tokenize_mode(g.tokenize), g.max_len + 10, 0});
        const auto examples = train::make_rl_examples(model, quads, g.seed);
        const auto type = train::parse_reward_type(t_task);
        tensor::AdamState adam;
        train::FinetuneResult res;
        if (type == train::RewardType::Generation) {
          const auto m = singleturn::S2sModel::load(t_reward);
          res = train::finetune(model, examples, train::generation_reward(m), type, tcfg, &adam);
        } else {
          const auto m = singleturn::IrModel::load(t_reward);
          res = train::finetune(model, examples, train::selection_reward(m), type, tcfg, &adam);
        }
        model.save(t_out, &adam);
        if (!t_log.empty()) write_training_log(t_log, res.log);
      };
    });
  }

  // ---- eval ----
  auto* ev = app.add_subcommand("eval", "Automatic metrics")->require_subcommand(1);
  std::string e_hyp, e_ref, e_vec, e_out, e_smooth = "none", e_in;
  int e_n = 4, e_dim = 200, e_window = 2;
  {
    auto* b = ev->add_subcommand("bleu", "Corpus BLEU");
    b->add_option("--hyp", e_hyp)->required();
    b->add_option("--ref", e_ref)->required();
    b->add_option("--max-n", e_n)->capture_default_str();
    b->add_option("--smoothing", e_smooth, "none|add1")->capture_default_str();
    b->add_option("--out", e_out);
    b->callback([&] {
      run = [&] {
        const auto mode = parse_tokenize_mode(g.tokenize);
        const double v = eval::bleu(read_lines(e_hyp, mode, false), read_lines(e_ref, mode, false), e_n,
                                    eval::parse_smoothing(e_smooth));
        emit({{"bleu", v}, {"max_n", e_n}, {"smoothing", e_smooth}}, e_out);
      };
    });
    auto* d = ev->add_subcommand("distinct", "Distinct-n");
    d->add_option("--hyp", e_hyp)->required();
    d->add_option("--n", e_n)->required();
    d->add_option("--out", e_out);
    d->callback([&] {
      run = [&] {
        emit({{"distinct", eval::distinct_n(read_lines(e_hyp, parse_tokenize_mode(g.tokenize), false), e_n)},
              {"n", e_n}},
             e_out);
      };
    });
    auto* e = ev->add_subcommand("embed", "Embedding Average / Extrema / Greedy");
    e->add_option("--hyp", e_hyp)->required();
    e->add_option("--ref", e_ref)->required();
    e->add_option("--vec", e_vec)->required();
    e->add_option("--out", e_out);
    e->callback([&] {
      run = [&] {
        const auto mode = parse_tokenize_mode(g.tokenize);
        const auto hyps = read_lines(e_hyp, mode, false);
        const auto refs = read_lines(e_ref, mode, false);
        if (hyps.size() != refs.size()) throw Error("eval embed: hypothesis and reference counts differ");
        const auto table = eval::EmbeddingTable::load(e_vec);
        double a = 0, x = 0, gr = 0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < hyps.size(); ++i) {
          try {
            const auto s = eval::embed_metrics(hyps[i], refs[i], table);
            a += s.average;
            x += s.extrema;
            gr += s.greedy;
            ++n;
          } catch (const Error& err) {
            spdlog::warn("line {}: {}", i + 1, err.what());
          }
        }
        const double dn = n ? static_cast<double>(n) : 1.0;
        emit({{"average", a / dn}, {"extrema", x / dn}, {"greedy", gr / dn}, {"scored", n}, {"lines", hyps.size()}},
             e_out);
      };
    });
    auto* vv = ev->add_subcommand("vectors", "Word vectors from a PPMI factorization");
    vv->add_option("--in", e_in, "One sentence per line")->required();
    vv->add_option("--out", e_out)->required();
    vv->add_option("--dim", e_dim)->capture_default_str();
    vv->add_option("--window", e_window)->capture_default_str();
    vv->callback([&] {
      run = [&] {
        eval::EmbeddingTable::from_ppmi(read_lines(e_in, parse_tokenize_mode(g.tokenize), true), e_dim, e_window)
            .save(e_out);
      };
    });
  }

  // ---- pipeline ----
  auto* pl = app.add_subcommand("pipeline", "Retrieve-then-rank response selection")->require_subcommand(1);
  std::string pl_pairs, pl_out, pl_index, pl_crn, pl_ir, pl_in, pl_trace, pl_train;
  std::size_t pl_k = 10, pl_keywords = 5;
  int pl_beam = 5;
  auto select_flags = [&](CLI::App* c) {
    c->add_option("--index", pl_index)->required();
    c->add_option("--ir", pl_ir, "Selector checkpoint")->required();
    c->add_option("--in", pl_in, "Session JSONL")->required();
    c->add_option("--out", pl_out)->required();
    c->add_option("--trace", pl_trace, "Per-query JSON trace");
    c->add_option("--k", pl_k)->capture_default_str();
  };
  auto run_select = [&](const pipeline::Rewriter& rw) {
    const auto mode = parse_tokenize_mode(g.tokenize);
    const auto index = pipeline::InvertedIndex::load(pl_index);
    const auto ir = singleturn::IrModel::load(pl_ir);
    auto out = open_out(pl_out);
    std::ofstream trace;
    if (!pl_trace.empty()) trace = open_out(pl_trace);
    std::size_t fallbacks = 0;
    for (const auto& s : load_sessions(pl_in, {mode, g.max_len, 0})) {
      const auto sel = pipeline::end_to_end_select(s, rw, index, ir, pl_k);
      fallbacks += sel.fallback;
      out << json{{"query", detokenize(sel.query, mode)}, {"response", detokenize(sel.response, mode)},
                  {"doc", sel.doc}}.dump()
          << '\n';
      if (trace.is_open()) trace << sel.trace().dump() << '\n';
    }
    spdlog::info("raw-query fallbacks: {}", fallbacks);
  };
  {
    auto* ix = pl->add_subcommand("index", "Build a TF-IDF index from {utterance, response} JSONL");
    ix->add_option("--pairs", pl_pairs)->required();
    ix->add_option("--out", pl_out)->required();
    ix->callback([&] {
      run = [&] {
        const auto mode = parse_tokenize_mode(g.tokenize);
        std::ifstream in(pl_pairs);
        if (!in) throw Error("cannot open " + pl_pairs);
        std::vector<std::pair<Tokens, Tokens>> pairs;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
          ++lineno;
          if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
          try {
            const auto j = json::parse(line);
            pairs.emplace_back(tokenize(j.at("utterance").get<std::string>(), mode),
                               tokenize(j.at("response").get<std::string>(), mode));
          } catch (const json::exception& e) {
            throw ParseError(std::string("pairs file: ") + e.what(), lineno);
          }
        }
        pipeline::InvertedIndex::build(pairs).save(pl_out);
      };
    });
    auto* sel = pl->add_subcommand("select", "Rewrite with the CRN, retrieve, and rank");
    select_flags(sel);
    sel->add_option("--crn", pl_crn, "CRN checkpoint")->required();
    sel->add_option("--beam", pl_beam)->capture_default_str();
    sel->callback([&] {
      run = [&] {
        const auto model = crn::CrnModel::load(pl_crn);
        run_select(pipeline::CrnRewriter(model, pl_beam));
      };
    });
    auto* base = pl->add_subcommand("baseline-select", "Append TF-IDF context keywords, retrieve, and rank");
    select_flags(base);
    base->add_option("--train", pl_train, "Session JSONL for document frequencies (default: the index)");
    base->add_option("--keywords", pl_keywords)->capture_default_str();
    base->callback([&] {
      run = [&] {
        pipeline::IdfTable idf;
        if (!pl_train.empty()) {
          idf = pipeline::IdfTable::from_sessions(load_sessions(pl_train, {parse_tokenize_mode(g.tokenize), g.max_len, 0}));
        } else {
          const auto index = pipeline::InvertedIndex::load(pl_index);
          std::vector<Tokens> docs;
          for (std::uint32_t d = 0; d < index.size(); ++d) {
            docs.push_back(index.doc(d).first);
            docs.push_back(index.doc(d).second);
          }
          idf = pipeline::IdfTable::build(docs);
        }
        run_select(pipeline::KeywordRewriter(idf, pl_keywords));
      };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  auto logger = spdlog::stderr_color_mt("ctxrw");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(g.log_level));
  if (g.threads < 1) {
    std::cerr << "error: --threads must be >= 1\n";
    return 2;
  }
  try {
    if (run) run();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
