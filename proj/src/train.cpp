#include "ctxrw/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <spdlog/spdlog.h>

#include "json.hpp"

#include "ctxrw/error.hpp"

namespace ctxrw {

void write_training_log(const std::filesystem::path& path, const std::vector<EpochMetrics>& log) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write training log " + path.string());
  for (const auto& m : log) {
    nlohmann::json j = {{"epoch", m.epoch}, {"split", m.split}, {"loss", m.loss}, {"perplexity", m.perplexity}};
    j["mean_reward"] = m.mean_reward ? nlohmann::json(*m.mean_reward) : nlohmann::json(nullptr);
    out << j.dump() << '\n';
  }
}

}  // namespace ctxrw

namespace ctxrw::train {

namespace t = tensor;
using crn::CrnInput;
using crn::CrnModel;

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw Error("train config: lr must be > 0");
  if (batch < 1) throw Error("train config: batch must be >= 1");
  if (lambda < 0.0) throw Error("train config: lambda must be >= 0");
  if (samples < 1) throw Error("train config: samples must be >= 1");
  if (!(temperature > 0.0)) throw Error("train config: temperature must be > 0");
  if (patience < 1) throw Error("train config: patience must be >= 1");
  if (valid_fraction < 0.0 || valid_fraction >= 1.0) throw Error("train config: valid_fraction must be in [0, 1)");
}

RewardType parse_reward_type(const std::string& s) {
  if (s == "gen") return RewardType::Generation;
  if (s == "sel") return RewardType::Selection;
  throw Error("unknown task '" + s + "' (expected gen or sel)");
}

std::string to_string(RewardType t) { return t == RewardType::Generation ? "gen" : "sel"; }

double reward_generation(const Tokens& response, const Tokens& q_star, const Tokens& q_r,
                         const singleturn::GenerationScorer& model) {
  if (response.empty() || q_star.empty() || q_r.empty()) throw Error("reward_generation: empty input");
  if (q_star == q_r) return 0.0;
  return model.loss(q_star, response) - model.loss(q_r, response);
}

double reward_selection(const Tokens& positive, const Tokens& negative, const Tokens& q_star, const Tokens& q_r,
                        const singleturn::SelectionScorer& model) {
  if (positive.empty() || negative.empty() || q_star.empty() || q_r.empty())
    throw Error("reward_selection: empty input");
  if (q_star == q_r) return 0.0;
  return model.margin(positive, negative, q_r) - model.margin(positive, negative, q_star);
}

std::vector<RlExample> make_rl_examples(const CrnModel& model, const std::vector<PseudoQuadruplet>& quads,
                                        std::uint64_t seed) {
  std::vector<RlExample> out;
  out.reserve(quads.size());
  for (std::size_t i = 0; i < quads.size(); ++i) {
    const auto& q = quads[i];
    RlExample ex;
    ex.session = i;
    ex.input = model.prepare(q.session.context, q.session.last, &q.rewritten);
    ex.pseudo = q.rewritten;
    ex.response = q.session.response;
    if (quads.size() > 1) {
      Rng rng(Rng::mix(seed, i));
      std::size_t j = rng.below(quads.size() - 1);
      if (j >= i) ++j;
      ex.negative = quads[j].session.response;
    } else {
      ex.negative = q.session.response;
    }
    out.push_back(std::move(ex));
  }
  return out;
}

RewardFn generation_reward(const singleturn::GenerationScorer& model) {
  return [&model](const RlExample& ex, const Tokens& sampled) {
    return reward_generation(ex.response, ex.pseudo, sampled, model);
  };
}

RewardFn selection_reward(const singleturn::SelectionScorer& model) {
  return [&model](const RlExample& ex, const Tokens& sampled) {
    return reward_selection(ex.response, ex.negative, ex.pseudo, sampled, model);
  };
}

t::Var reinforce_surrogate(t::Graph& g, std::span<const t::Var> step_log_probs, double reward) {
  if (step_log_probs.empty()) return g.scalar(0.0);
  return t::affine(t::sum(t::concat(step_log_probs)), -reward);
}

namespace {

std::size_t target_tokens(std::span<const CrnInput> batch) {
  std::size_t n = 0;
  for (const auto& in : batch) n += in.target.size();
  return n;
}

/// Accumulates d(mean per-token loss · weight) into the parameter gradients.
double accumulate_mle(const CrnModel& model, std::span<const CrnInput> batch, double weight, std::uint64_t seed) {
  const std::size_t n = target_tokens(batch);
  if (n == 0) throw Error("mle step: batch has no target tokens");
  double total = 0.0;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    t::Graph g(true, Rng::mix(seed, k));
    const t::Var loss = model.loss_sum(g, batch[k]);
    if (weight != 0.0) g.backward(loss, weight / static_cast<double>(n));
    total += loss.scalar();
  }
  return total / static_cast<double>(n);
}

std::size_t split_point(std::size_t n, double valid_fraction) {
  if (n < 2) return n;
  auto v = static_cast<std::size_t>(std::floor(static_cast<double>(n) * valid_fraction));
  return n - std::min(v, n - 1);
}

}  // namespace

double mle_step(CrnModel& model, std::span<const CrnInput> batch, t::AdamState& adam, double clip,
                std::uint64_t seed) {
  if (batch.empty()) throw Error("mle step: empty batch");
  auto& params = model.params();
  if (!adam.initialized()) adam.init(params);
  params.zero_grad();
  const double loss = accumulate_mle(model, batch, 1.0, seed);
  params.clip_grad_norm(clip);
  t::adam_step(params, adam);
  return loss;
}

RlStepResult rl_step(CrnModel& model, std::span<const RlExample> batch, const RewardFn& reward, RewardType type,
                     const TrainConfig& config, t::AdamState& adam, std::uint64_t seed, bool apply) {
  config.validate();
  if (batch.empty()) throw Error("rl step: empty batch");
  auto& params = model.params();
  if (apply && !adam.initialized()) adam.init(params);
  params.zero_grad();
  RlStepResult res;
  const double n_samples = static_cast<double>(batch.size()) * config.samples;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const RlExample& ex = batch[k];
    for (int s = 0; s < config.samples; ++s) {
      const std::uint64_t draw = Rng::mix(seed, k * 1009 + static_cast<std::uint64_t>(s));
      t::Graph g(true, draw);
      Rng rng(Rng::mix(draw, 1));
      auto sample = model.sample(g, ex.input, config.temperature, rng, config.max_len);
      Tokens scored = sample.tokens;
      if (scored.empty()) scored.push_back(model.vocab().token(Vocab::kUnk));
      double r = 0.0;
      try {
        r = reward(ex, scored);
      } catch (const std::exception& e) {
        params.zero_grad();
        throw Error("reward oracle failed on session " + std::to_string(ex.session) + ": " + e.what());
      }
      if (!std::isfinite(r)) {
        params.zero_grad();
        throw Error("reward oracle returned a non-finite value on session " + std::to_string(ex.session));
      }
      const t::Var sur = reinforce_surrogate(g, sample.step_log_probs, r);
      if (r != 0.0) g.backward(sur, 1.0 / n_samples);
      res.l_rl += sur.scalar() / n_samples;
      res.mean_reward += r / n_samples;
      res.records.push_back({ex.session, std::move(scored), ex.pseudo, r, type});
    }
  }
  std::vector<CrnInput> inputs;
  inputs.reserve(batch.size());
  for (const auto& ex : batch) inputs.push_back(ex.input);
  res.l_mle = accumulate_mle(model, inputs, config.lambda, Rng::mix(seed, 0x6d6c65));
  res.l_com = res.l_rl + config.lambda * res.l_mle;
  if (apply) {
    params.clip_grad_norm(config.clip);
    t::adam_step(params, adam);
  }
  return res;
}

PretrainResult pretrain(CrnModel& model, const std::vector<PseudoQuadruplet>& quads, const TrainConfig& config,
                        t::AdamState* adam_in) {
  config.validate();
  if (quads.empty()) throw Error("pretrain: no training data");
  std::vector<CrnInput> data;
  data.reserve(quads.size());
  for (const auto& q : quads) data.push_back(model.prepare(q.session.context, q.session.last, &q.rewritten));
  const std::size_t n_train = split_point(data.size(), config.valid_fraction);
  const std::span<const CrnInput> valid(data.data() + n_train, data.size() - n_train);

  t::AdamState local;
  t::AdamState& adam = adam_in ? *adam_in : local;
  if (!adam.initialized()) adam.init(model.params());
  adam.lr = config.lr;

  PretrainResult res;
  Rng rng(config.seed);
  std::vector<std::size_t> order(n_train);
  for (std::size_t i = 0; i < n_train; ++i) order[i] = i;
  double best = std::numeric_limits<double>::infinity();
  double previous = best;
  int rises = 0;
  auto best_values = model.params().snapshot();
  std::vector<CrnInput> batch;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_tokens = 0.0, tokens = 0.0;
    for (std::size_t start = 0; start < n_train; start += static_cast<std::size_t>(config.batch)) {
      if (config.max_steps > 0 && res.steps >= config.max_steps) break;
      const std::size_t end = std::min(n_train, start + static_cast<std::size_t>(config.batch));
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(data[order[k]]);
      const double n = static_cast<double>(target_tokens(batch));
      loss_tokens += n * mle_step(model, batch, adam, config.clip, Rng::mix(config.seed, static_cast<std::uint64_t>(res.steps)));
      tokens += n;
      ++res.steps;
    }
    const double train_loss = tokens > 0 ? loss_tokens / tokens : 0.0;
    const double valid_loss = valid.empty() ? crn::mle_loss(model, std::span<const CrnInput>(data.data(), n_train))
                                            : crn::mle_loss(model, valid);
    const double ppl = std::exp(valid_loss);
    res.log.push_back({epoch, "train", train_loss, std::exp(train_loss), std::nullopt});
    res.log.push_back({epoch, "valid", valid_loss, ppl, std::nullopt});
    spdlog::info("pretrain epoch {} train loss {:.4f} valid ppl {:.4f} lr {:.2e}", epoch, train_loss, ppl, adam.lr);
    if (ppl > previous) {
      if (++rises >= config.patience) {
        adam.lr /= 2.0;
        rises = 0;
      }
    } else {
      rises = 0;
    }
    previous = ppl;
    if (ppl < best) {
      best = ppl;
      res.best_epoch = epoch;
      best_values = model.params().snapshot();
    }
    if (config.max_steps > 0 && res.steps >= config.max_steps) break;
  }
  model.params().restore(best_values);
  res.best_perplexity = best;
  res.final_lr = adam.lr;
  return res;
}

FinetuneResult finetune(CrnModel& model, const std::vector<RlExample>& examples, const RewardFn& reward,
                        RewardType type, const TrainConfig& config, t::AdamState* adam_in) {
  config.validate();
  if (examples.empty()) throw Error("finetune: no training data");
  t::AdamState local;
  t::AdamState& adam = adam_in ? *adam_in : local;
  if (!adam.initialized()) adam.init(model.params());
  adam.lr = config.lr;

  FinetuneResult res;
  Rng rng(config.seed);
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  double best = -std::numeric_limits<double>::infinity();
  auto best_values = model.params().snapshot();
  std::vector<RlExample> batch;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    double reward_sum = 0.0, loss_sum = 0.0, mle_sum = 0.0;
    std::size_t count = 0, steps = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch)) {
      if (config.max_steps > 0 && res.steps >= config.max_steps) break;
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch));
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(examples[order[k]]);
      const auto step = rl_step(model, batch, reward, type, config, adam,
                                Rng::mix(config.seed, 0x726c00 + static_cast<std::uint64_t>(res.steps)));
      reward_sum += step.mean_reward * static_cast<double>(step.records.size());
      count += step.records.size();
      loss_sum += step.l_com;
      mle_sum += step.l_mle;
      ++steps;
      ++res.steps;
    }
    if (steps == 0) break;
    const double mean_reward = reward_sum / static_cast<double>(count);
    const double mle = mle_sum / static_cast<double>(steps);
    res.epoch_rewards.push_back(mean_reward);
    res.log.push_back({epoch, "train", loss_sum / static_cast<double>(steps), std::exp(mle), mean_reward});
    spdlog::info("finetune epoch {} L_com {:.4f} mean reward {:.4f}", epoch, loss_sum / static_cast<double>(steps),
                 mean_reward);
    if (mean_reward > best) {
      best = mean_reward;
      res.best_epoch = epoch;
      best_values = model.params().snapshot();
    }
  }
  model.params().restore(best_values);
  res.best_reward = best;
  return res;
}

}  // namespace ctxrw::train
