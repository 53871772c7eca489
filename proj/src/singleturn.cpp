#include "ctxrw/singleturn.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <spdlog/spdlog.h>

#include "ctxrw/checkpoint.hpp"
#include "ctxrw/error.hpp"

namespace ctxrw::singleturn {

namespace t = ctxrw::tensor;

nlohmann::json ModelConfig::to_json() const {
  return {{"emb", emb},         {"enc_hidden", enc_hidden}, {"dec_hidden", dec_hidden},
          {"dropout", dropout}, {"init_scale", init_scale}, {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.emb = j.at("emb").get<int>();
  c.enc_hidden = j.at("enc_hidden").get<int>();
  c.dec_hidden = j.at("dec_hidden").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.init_scale = j.at("init_scale").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

namespace {

std::vector<int> ids_of(const Tokens& toks, const Vocab& v) { return encode(toks, v).ids; }

std::vector<Var> embed_all(Graph& g, t::Parameter& table, const std::vector<int>& ids, double p) {
  std::vector<Var> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(t::dropout(t::embed(g.param(table), id), p));
  return out;
}

template <typename Model>
nlohmann::json model_header(const char* kind, const Model& m) {
  nlohmann::json h;
  h["kind"] = kind;
  h["config"] = m.config().to_json();
  h["vocab"] = m.vocab().entries();
  return h;
}

template <typename Model>
Model load_model(const std::filesystem::path& path, const char* kind) {
  const auto data = read_checkpoint(path);
  if (data.header.value("kind", "") != kind)
    throw Error(std::string("checkpoint is not a ") + kind + " model: " + path.string());
  Model m(Vocab::from_tokens(data.header.at("vocab").get<std::vector<std::string>>()),
          ModelConfig::from_json(data.header.at("config")));
  restore_parameters(data, m.params());
  return m;
}

}  // namespace

// ---- S2sModel ---------------------------------------------------------------

S2sModel::S2sModel(Vocab vocab, ModelConfig config) : vocab_(std::move(vocab)), config_(config) {
  Rng rng(config_.seed);
  const double sc = config_.init_scale;
  const int V = vocab_.size(), E = config_.emb, He = config_.enc_hidden, Hd = config_.dec_hidden;
  embedding_ = &params_.add_weight("embedding", V, E, rng, sc);
  encoder_ = nn::BiGru::make(params_, "enc", E, He, rng, sc);
  init_ = nn::Linear::make(params_, "dec_init", 2 * He, Hd, rng, sc);
  decoder_ = nn::Gru::make(params_, "decoder", E, Hd, rng, sc);
  attn_ = &params_.add_weight("attn.W", 2 * He, Hd, rng, sc);
  combine_ = nn::Linear::make(params_, "combine", Hd + 2 * He, Hd, rng, sc);
  output_ = nn::Linear::make(params_, "output", Hd, V, rng, sc);
}

Var S2sModel::loss_sum(Graph& g, const std::vector<int>& source, const std::vector<int>& response) const {
  if (source.empty() || response.empty()) throw Error("s2s_loss: empty input");
  const auto enc = encoder_.encode(g, embed_all(g, *embedding_, source, config_.dropout));
  const Var memory = t::concat(enc.states, 1);
  Var s = t::tanh(init_(g, t::concat({enc.forward_final, enc.backward_final})));
  int prev = Vocab::kBos;
  std::vector<Var> terms;
  terms.reserve(response.size() + 1);
  auto step = [&](int y) {
    const Var x = t::dropout(t::embed(g.param(*embedding_), prev), config_.dropout);
    s = decoder_.cell(g, x, s);
    const auto att = nn::attend(g, s, memory, g.param(*attn_));
    const Var h = t::dropout(t::tanh(combine_(g, t::concat({s, att.context}))), config_.dropout);
    terms.push_back(t::cross_entropy(output_(g, h), y));
    prev = y;
  };
  for (int y : response) step(y);
  step(Vocab::kEos);
  return t::sum(t::concat(terms));
}

double S2sModel::loss(const Tokens& source, const Tokens& response) const {
  Graph g(false, 0, false);
  const Var l = loss_sum(g, ids_of(source, vocab_), ids_of(response, vocab_));
  return l.scalar() / static_cast<double>(response.size() + 1);
}

void S2sModel::save(const std::filesystem::path& path) const {
  save_checkpoint(path, model_header("s2s", *this), params_);
}

S2sModel S2sModel::load(const std::filesystem::path& path) { return load_model<S2sModel>(path, "s2s"); }

// ---- IrModel ----------------------------------------------------------------

IrModel::IrModel(Vocab vocab, ModelConfig config) : vocab_(std::move(vocab)), config_(config) {
  Rng rng(config_.seed);
  const double sc = config_.init_scale;
  const int V = vocab_.size(), E = config_.emb, He = config_.enc_hidden;
  embedding_ = &params_.add_weight("embedding", V, E, rng, sc);
  utterance_enc_ = nn::BiGru::make(params_, "u_enc", E, He, rng, sc);
  response_enc_ = nn::BiGru::make(params_, "r_enc", E, He, rng, sc);
  utterance_proj_ = nn::Linear::make(params_, "u_proj", 2 * He, 2 * He, rng, sc);
  response_proj_ = nn::Linear::make(params_, "r_proj", 2 * He, 2 * He, rng, sc);
}

Var IrModel::encode(Graph& g, const nn::BiGru& enc, const nn::Linear& proj, const std::vector<int>& ids) const {
  const auto out = enc.encode(g, embed_all(g, *embedding_, ids, config_.dropout));
  return t::tanh(proj(g, t::concat({out.forward_final, out.backward_final})));
}

Var IrModel::score_var(Graph& g, const std::vector<int>& utterance, const std::vector<int>& response) const {
  if (utterance.empty() || response.empty()) throw Error("ir_score: empty input");
  const Var u = encode(g, utterance_enc_, utterance_proj_, utterance);
  const Var r = encode(g, response_enc_, response_proj_, response);
  return t::matmul_tn(u, r);
}

double IrModel::score(const Tokens& utterance, const Tokens& response) const {
  Graph g(false, 0, false);
  return score_var(g, ids_of(utterance, vocab_), ids_of(response, vocab_)).scalar();
}

void IrModel::save(const std::filesystem::path& path) const {
  save_checkpoint(path, model_header("ir", *this), params_);
}

IrModel IrModel::load(const std::filesystem::path& path) { return load_model<IrModel>(path, "ir"); }

// ---- training ---------------------------------------------------------------

std::vector<Pair> adjacent_pairs(const std::vector<DialogueSession>& sessions) {
  std::vector<Pair> out;
  for (const auto& s : sessions) {
    std::vector<const Tokens*> turns;
    for (const auto& u : s.context) turns.push_back(&u);
    turns.push_back(&s.last);
    turns.push_back(&s.response);
    for (std::size_t i = 0; i + 1 < turns.size(); ++i) out.emplace_back(*turns[i], *turns[i + 1]);
  }
  return out;
}

std::vector<Triple> sample_triples(const std::vector<Pair>& pairs, std::uint64_t seed) {
  if (pairs.size() < 2) throw Error("sample_triples: need at least two pairs");
  Rng rng(seed);
  std::vector<Triple> out;
  out.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    std::size_t j = rng.below(pairs.size() - 1);
    if (j >= i) ++j;
    out.emplace_back(pairs[i].first, pairs[i].second, pairs[j].second);
  }
  return out;
}

namespace {

std::size_t split_point(std::size_t n, double valid_fraction) {
  if (n < 2 || valid_fraction <= 0.0) return n;
  auto v = static_cast<std::size_t>(std::floor(static_cast<double>(n) * valid_fraction));
  v = std::min(v, n - 1);
  return n - v;
}

/// Shared minibatch loop. `example_loss` records one example's summed loss on
/// the graph and returns (loss node, token count).
template <typename Model, typename LossFn>
void fit(Model& model, std::size_t n_train, std::size_t n_total, const FitConfig& fit, LossFn example_loss,
         std::vector<EpochMetrics>* log) {
  auto& params = model.params();
  t::AdamState adam;
  adam.lr = fit.lr;
  adam.init(params);
  Rng rng(fit.seed);
  std::vector<std::size_t> order(n_train);
  for (std::size_t i = 0; i < n_train; ++i) order[i] = i;
  double best = std::numeric_limits<double>::infinity();
  std::vector<t::Matrix> best_values = params.snapshot();
  std::uint64_t step = 0;
  for (int epoch = 1; epoch <= fit.epochs; ++epoch) {
    rng.shuffle(order);
    double train_loss = 0.0, train_count = 0.0;
    for (std::size_t start = 0; start < n_train; start += static_cast<std::size_t>(fit.batch)) {
      const std::size_t end = std::min(n_train, start + static_cast<std::size_t>(fit.batch));
      double batch_count = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        Graph g(true, Rng::mix(fit.seed, step * 1000003 + k));
        const auto [loss, count] = example_loss(g, order[k]);
        g.backward(loss);
        train_loss += loss.scalar();
        batch_count += count;
      }
      train_count += batch_count;
      for (std::size_t i = 0; i < params.size(); ++i) params[i].grad /= batch_count;
      params.clip_grad_norm(fit.clip);
      t::adam_step(params, adam);
      ++step;
    }
    const double tl = train_loss / std::max(1.0, train_count);
    double vl = 0.0, vc = 0.0;
    for (std::size_t i = n_train; i < n_total; ++i) {
      Graph g(false, 0, false);
      const auto [loss, count] = example_loss(g, i);
      vl += loss.scalar();
      vc += count;
    }
    const double valid = vc > 0 ? vl / vc : tl;
    if (log) {
      log->push_back({epoch, "train", tl, std::exp(tl), std::nullopt});
      log->push_back({epoch, "valid", valid, std::exp(valid), std::nullopt});
    }
    spdlog::debug("epoch {} train {:.4f} valid {:.4f}", epoch, tl, valid);
    if (valid < best) {
      best = valid;
      best_values = params.snapshot();
    }
  }
  params.restore(best_values);
}

std::vector<Tokens> collect_tokens(const std::vector<Pair>& pairs) {
  std::vector<Tokens> out;
  for (const auto& [a, b] : pairs) {
    out.push_back(a);
    out.push_back(b);
  }
  return out;
}

Vocab vocab_from(const std::vector<Tokens>& sents, const FitConfig& fit) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& s : sents)
    for (const auto& w : s) ++counts[w];
  return Vocab::from_counts(counts, fit.vocab_size, fit.min_count);
}

}  // namespace

S2sModel train_s2s(const std::vector<Pair>& pairs, const ModelConfig& model_cfg, const FitConfig& fit_cfg,
                   std::vector<EpochMetrics>* log) {
  if (pairs.empty()) throw Error("train_s2s: no training pairs");
  S2sModel model(vocab_from(collect_tokens(pairs), fit_cfg), model_cfg);
  std::vector<std::pair<std::vector<int>, std::vector<int>>> data;
  for (const auto& [s, r] : pairs) data.emplace_back(ids_of(s, model.vocab()), ids_of(r, model.vocab()));
  fit(model, split_point(data.size(), fit_cfg.valid_fraction), data.size(), fit_cfg,
      [&](Graph& g, std::size_t i) {
        return std::pair<Var, double>(model.loss_sum(g, data[i].first, data[i].second),
                                      static_cast<double>(data[i].second.size() + 1));
      },
      log);
  return model;
}

IrModel train_ir(const std::vector<Triple>& triples, const ModelConfig& model_cfg, const FitConfig& fit_cfg,
                 std::vector<EpochMetrics>* log) {
  if (triples.empty()) throw Error("train_ir: no training triples");
  std::vector<Tokens> sents;
  for (const auto& [u, p, n] : triples) {
    sents.push_back(u);
    sents.push_back(p);
    sents.push_back(n);
  }
  IrModel model(vocab_from(sents, fit_cfg), model_cfg);
  struct Enc {
    std::vector<int> u, p, n;
  };
  std::vector<Enc> data;
  for (const auto& [u, p, n] : triples)
    data.push_back({ids_of(u, model.vocab()), ids_of(p, model.vocab()), ids_of(n, model.vocab())});
  fit(model, split_point(data.size(), fit_cfg.valid_fraction), data.size(), fit_cfg,
      [&](Graph& g, std::size_t i) {
        const Var margin = t::sub(model.score_var(g, data[i].u, data[i].p), model.score_var(g, data[i].u, data[i].n));
        return std::pair<Var, double>(t::affine(t::log_sigmoid(margin), -1.0), 1.0);
      },
      log);
  return model;
}

}  // namespace ctxrw::singleturn
