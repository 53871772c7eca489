#include "ctxrw/crn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ctxrw/checkpoint.hpp"
#include "ctxrw/error.hpp"

namespace ctxrw::crn {

namespace t = ctxrw::tensor;

nlohmann::json CrnConfig::to_json() const {
  return {{"emb", emb},           {"enc_hidden", enc_hidden}, {"dec_hidden", dec_hidden},
          {"dropout", dropout},   {"copy_from_q", copy_from_q}, {"init_scale", init_scale},
          {"seed", seed},         {"max_len", max_len}};
}

CrnConfig CrnConfig::from_json(const nlohmann::json& j) {
  CrnConfig c;
  c.emb = j.at("emb").get<int>();
  c.enc_hidden = j.at("enc_hidden").get<int>();
  c.dec_hidden = j.at("dec_hidden").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.copy_from_q = j.at("copy_from_q").get<bool>();
  c.init_scale = j.at("init_scale").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.max_len = j.at("max_len").get<int>();
  return c;
}

double Hypothesis::normalized() const {
  return ids.empty() ? log_prob : log_prob / static_cast<double>(ids.size());
}

double SampleResult::total_log_prob() const {
  double s = 0.0;
  for (double v : log_probs) s += v;
  return s;
}

CrnModel::CrnModel(Vocab vocab, CrnConfig config) : vocab_(std::move(vocab)), config_(config) {
  Rng rng(config_.seed);
  const double sc = config_.init_scale;
  const int V = vocab_.size();
  const int E = config_.emb, He = config_.enc_hidden, Hd = config_.dec_hidden;
  embedding_ = &params_.add_weight("embedding", V, E, rng, sc);
  q_encoder_ = nn::BiGru::make(params_, "q_enc", E, He, rng, sc);
  c_encoder_ = nn::BiGru::make(params_, "c_enc", E, He, rng, sc);
  init_ = nn::Linear::make(params_, "dec_init", 4 * He, Hd, rng, sc);
  decoder_ = nn::Gru::make(params_, "decoder", E + Hd, Hd, rng, sc);
  attn_q_ = &params_.add_weight("attn_q.W", 2 * He, Hd, rng, sc);
  attn_c_ = &params_.add_weight("attn_c.W", 2 * He, Hd, rng, sc);
  fuse_ = nn::Linear::make(params_, "fuse", Hd + 4 * He, Hd, rng, sc);
  predict_head_ = nn::Mlp::make(params_, "predict", Hd, Hd, V, rng, sc);
  copy_head_ = nn::Mlp::make(params_, "copy", Hd, Hd, 2 * He, rng, sc);
  gate_head_ = nn::Mlp::make(params_, "gate", Hd, Hd, 2, rng, sc);
}

void CrnModel::save(const std::filesystem::path& path, const t::AdamState* optimizer) const {
  nlohmann::json header;
  header["kind"] = "crn";
  header["config"] = config_.to_json();
  header["vocab"] = vocab_.entries();
  save_checkpoint(path, header, params_, optimizer);
}

CrnModel CrnModel::load(const std::filesystem::path& path, t::AdamState* optimizer) {
  const auto data = read_checkpoint(path);
  if (data.header.value("kind", "") != "crn") throw Error("not a rewriter checkpoint: " + path.string());
  CrnModel m(Vocab::from_tokens(data.header.at("vocab").get<std::vector<std::string>>()),
             CrnConfig::from_json(data.header.at("config")));
  restore_parameters(data, m.params_);
  if (optimizer && data.optimizer) *optimizer = *data.optimizer;
  return m;
}

CrnInput CrnModel::prepare(const std::vector<Tokens>& context, const Tokens& q, const Tokens* target) const {
  if (q.empty()) throw Error("rewriter input: empty last utterance");
  if (context.empty()) throw Error("rewriter input: empty context");
  CrnInput in;
  in.vocab_size = vocab_.size();
  Tokens c_flat;
  std::vector<bool> is_sep;
  for (std::size_t u = 0; u < context.size(); ++u) {
    if (u > 0) {
      c_flat.push_back(vocab_.token(Vocab::kEos));
      is_sep.push_back(true);
    }
    for (const auto& tok : context[u]) {
      c_flat.push_back(tok);
      is_sep.push_back(false);
    }
  }
  if (c_flat.empty()) throw Error("rewriter input: empty context");
  Tokens source;
  if (config_.copy_from_q) source.insert(source.end(), q.begin(), q.end());
  source.insert(source.end(), c_flat.begin(), c_flat.end());
  const Encoded src = ctxrw::encode(source, vocab_, &source);
  in.oov = src.oov;
  in.copy_map = src.extended;
  in.q_ids = ctxrw::encode(q, vocab_).ids;
  in.c_ids = ctxrw::encode(c_flat, vocab_).ids;
  for (std::size_t i = 0; i < is_sep.size(); ++i)
    if (is_sep[i]) in.c_ids[i] = Vocab::kEos;
  const std::size_t offset = config_.copy_from_q ? q.size() : 0;
  for (std::size_t i = 0; i < is_sep.size(); ++i)
    if (is_sep[i]) in.copy_map[offset + i] = Vocab::kEos;
  if (target) {
    const Encoded tg = ctxrw::encode(*target, vocab_, &source);
    in.target = tg.extended;
    in.target.push_back(Vocab::kEos);
  }
  return in;
}

Var CrnModel::embed_token(Graph& g, int id) const {
  const int base = id >= vocab_.size() ? Vocab::kUnk : id;
  return t::dropout(t::embed(g.param(*embedding_), base), config_.dropout);
}

EncoderOutputs CrnModel::encode(Graph& g, const CrnInput& in) const {
  if (in.q_ids.empty() || in.c_ids.empty()) throw Error("encode: empty input");
  std::vector<Var> qe, ce;
  qe.reserve(in.q_ids.size());
  ce.reserve(in.c_ids.size());
  for (int id : in.q_ids) qe.push_back(embed_token(g, id));
  for (int id : in.c_ids) ce.push_back(embed_token(g, id));
  const auto qo = q_encoder_.encode(g, qe);
  const auto co = c_encoder_.encode(g, ce);
  EncoderOutputs out;
  out.hq = t::concat(qo.states, 1);
  out.hc = t::concat(co.states, 1);
  out.copy_memory = config_.copy_from_q ? t::concat({out.hq, out.hc}, 1) : out.hc;
  out.s0 = t::tanh(init_(g, t::concat({qo.forward_final, qo.backward_final, co.forward_final, co.backward_final})));
  if (static_cast<std::size_t>(out.copy_memory.cols()) != in.copy_map.size())
    throw Error("copy map does not match the copy source length");
  return out;
}

DecoderState CrnModel::initial_state(Graph& g, const EncoderOutputs& enc) const {
  return {enc.s0, g.constant(t::Matrix::Zero(config_.dec_hidden, 1))};
}

StepOutput CrnModel::decode_step(Graph& g, const DecoderState& state, int y_prev, const EncoderOutputs& enc,
                                 const CrnInput& in) const {
  if (static_cast<std::size_t>(enc.copy_memory.cols()) != in.copy_map.size())
    throw Error("decode_step: copy map inconsistent with context length");
  StepOutput out;
  const Var x = t::concat({embed_token(g, y_prev), state.z_prev});
  const Var s = decoder_.cell(g, x, state.s);
  const auto aq = nn::attend(g, s, enc.hq, g.param(*attn_q_));
  const auto ac = nn::attend(g, s, enc.hc, g.param(*attn_c_));
  out.alpha_q = aq.weights;
  out.alpha_c = ac.weights;
  out.z = fuse_(g, t::concat({s, aq.context, ac.context}));
  const Var zd = t::dropout(out.z, config_.dropout);
  out.p_predict = t::softmax(predict_head_(g, zd));
  out.p_copy = t::softmax(t::matmul_tn(enc.copy_memory, copy_head_(g, zd)));
  out.gate = t::softmax(gate_head_(g, zd));
  out.next = {s, t::detach(out.z)};
  return out;
}

Var CrnModel::distribution(Graph& g, const StepOutput& step, const CrnInput& in) const {
  const int ext = in.ext_size();
  Var pr = step.p_predict;
  if (ext > vocab_.size()) pr = t::concat({pr, g.constant(t::Matrix::Zero(ext - vocab_.size(), 1))});
  const Var co = t::scatter_add(step.p_copy, in.copy_map, ext);
  return t::add(t::scale_by(pr, t::pick(step.gate, 0)), t::scale_by(co, t::pick(step.gate, 1)));
}

Var CrnModel::token_prob(Graph& g, const StepOutput& step, const CrnInput& in, int y) const {
  if (y < 0 || y >= in.ext_size())
    throw Error("target id " + std::to_string(y) + " outside base and extended vocabulary");
  Var total;
  if (y < vocab_.size()) total = t::mul(t::pick(step.gate, 0), t::pick(step.p_predict, y));
  std::vector<Var> copies;
  for (std::size_t i = 0; i < in.copy_map.size(); ++i)
    if (in.copy_map[i] == y) copies.push_back(t::pick(step.p_copy, static_cast<Eigen::Index>(i)));
  if (!copies.empty()) {
    const Var mass = copies.size() == 1 ? copies[0] : t::sum(t::concat(copies));
    const Var c = t::mul(t::pick(step.gate, 1), mass);
    total = total.valid() ? t::add(total, c) : c;
  }
  if (!total.valid()) throw Error("target id " + std::to_string(y) + " is not reachable from the copy source");
  (void)g;
  return total;
}

Var CrnModel::loss_sum(Graph& g, const CrnInput& in) const {
  if (in.target.empty()) throw Error("loss: example has no target");
  const auto enc = encode(g, in);
  DecoderState st = initial_state(g, enc);
  int prev = Vocab::kBos;
  std::vector<Var> terms;
  terms.reserve(in.target.size());
  for (int y : in.target) {
    const auto step = decode_step(g, st, prev, enc, in);
    terms.push_back(t::affine(t::log(token_prob(g, step, in, y)), -1.0));
    st = step.next;
    prev = y;
  }
  return t::sum(t::concat(terms));
}

Tokens CrnModel::surface(const std::vector<int>& ids, const CrnInput& in) const {
  std::vector<int> body;
  for (int id : ids) {
    if (id == Vocab::kEos) break;
    body.push_back(id);
  }
  return decode(body, vocab_, in.oov);
}

std::vector<Hypothesis> CrnModel::beam_search(const CrnInput& in, int beam, int max_len) const {
  if (beam < 1) throw Error("beam_search: beam must be >= 1");
  if (max_len <= 0) max_len = config_.max_len;
  Graph g(false, 0, false);
  const auto enc = encode(g, in);
  struct Live {
    Hypothesis hyp;
    DecoderState state;
  };
  std::vector<Live> live{{Hypothesis{}, initial_state(g, enc)}};
  std::vector<Hypothesis> finished;
  for (int step = 0; step < max_len && !live.empty(); ++step) {
    struct Cand {
      std::size_t parent;
      int token;
      double log_prob;
      DecoderState state;
    };
    std::vector<Cand> cands;
    for (std::size_t h = 0; h < live.size(); ++h) {
      const int prev = live[h].hyp.ids.empty() ? Vocab::kBos : live[h].hyp.ids.back();
      const auto out = decode_step(g, live[h].state, prev, enc, in);
      const t::Matrix& p = distribution(g, out, in).value();
      std::vector<int> order(static_cast<std::size_t>(p.rows()));
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      const auto k = std::min<std::size_t>(static_cast<std::size_t>(beam), order.size());
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                        [&](int a, int b) { return p(a, 0) != p(b, 0) ? p(a, 0) > p(b, 0) : a < b; });
      for (std::size_t i = 0; i < k; ++i) {
        const double pi = p(order[i], 0);
        if (!(pi > 0.0)) continue;
        cands.push_back({h, order[i], live[h].hyp.log_prob + std::log(pi), out.next});
      }
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Cand& a, const Cand& b) { return a.log_prob > b.log_prob; });
    std::vector<Live> next;
    for (const auto& c : cands) {
      if (static_cast<int>(next.size()) + static_cast<int>(finished.size()) >= beam) break;
      Hypothesis h = live[c.parent].hyp;
      h.ids.push_back(c.token);
      h.log_prob = c.log_prob;
      if (c.token == Vocab::kEos) {
        h.finished = true;
        finished.push_back(std::move(h));
      } else {
        next.push_back({std::move(h), c.state});
      }
    }
    live = std::move(next);
    if (static_cast<int>(finished.size()) >= beam) break;
  }
  for (auto& l : live) finished.push_back(std::move(l.hyp));
  for (auto& h : finished) h.tokens = surface(h.ids, in);
  std::stable_sort(finished.begin(), finished.end(),
                   [](const Hypothesis& a, const Hypothesis& b) { return a.normalized() > b.normalized(); });
  return finished;
}

SampleResult CrnModel::sample(Graph& g, const CrnInput& in, double temperature, Rng& rng, int max_len) const {
  if (!(temperature > 0.0)) throw Error("sample: temperature must be > 0");
  if (max_len <= 0) max_len = config_.max_len;
  SampleResult res;
  const auto enc = encode(g, in);
  DecoderState st = initial_state(g, enc);
  int prev = Vocab::kBos;
  std::vector<double> w;
  for (int step = 0; step < max_len; ++step) {
    const auto out = decode_step(g, st, prev, enc, in);
    const Var dist = distribution(g, out, in);
    const t::Matrix& p = dist.value();
    w.assign(static_cast<std::size_t>(p.rows()), 0.0);
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < p.rows(); ++i)
      if (p(i, 0) > 0.0) mx = std::max(mx, std::log(p(i, 0)) / temperature);
    for (Eigen::Index i = 0; i < p.rows(); ++i)
      w[static_cast<std::size_t>(i)] = p(i, 0) > 0.0 ? std::exp(std::log(p(i, 0)) / temperature - mx) : 0.0;
    const int y = static_cast<int>(rng.categorical(w));
    const Var lp = t::log(t::pick(dist, y));
    res.ids.push_back(y);
    res.step_log_probs.push_back(lp);
    res.log_probs.push_back(lp.scalar());
    st = out.next;
    prev = y;
    if (y == Vocab::kEos) break;
  }
  res.tokens = surface(res.ids, in);
  return res;
}

double mle_loss(const CrnModel& model, std::span<const CrnInput> batch) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& in : batch) {
    Graph g(false, 0, false);
    total += model.loss_sum(g, in).scalar();
    count += in.target.size();
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

}  // namespace ctxrw::crn
