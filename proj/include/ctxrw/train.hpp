#pragma once

// Two-stage CRN training: teacher-forced MLE on pseudo quadruplets, then
// policy-gradient fine-tuning on task rewards mixed with the MLE objective.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ctxrw/corpus.hpp"
#include "ctxrw/crn.hpp"
#include "ctxrw/singleturn.hpp"
#include "ctxrw/tensor.hpp"
#include "ctxrw/trainlog.hpp"

namespace ctxrw::train {

struct TrainConfig {
  double lr = 4e-4;
  int batch = 32;
  /// Consecutive epochs of rising validation perplexity before lr halves.
  int patience = 1;
  int epochs = 10;
  /// Stop after this many optimizer steps (0: no limit).
  long max_steps = 0;
  std::uint64_t seed = 1;
  double clip = 5.0;
  double lambda = 0.1;
  /// Samples per example in rl_step.
  int samples = 1;
  double temperature = 1.0;
  /// Trailing fraction of pretraining data held out for validation.
  double valid_fraction = 0.1;
  /// Decode length limit for sampling (0: the model's own limit).
  int max_len = 0;

  void validate() const;
};

enum class RewardType { Generation, Selection };
RewardType parse_reward_type(const std::string& s);
std::string to_string(RewardType t);

struct RewardRecord {
  std::size_t session = 0;
  Tokens sampled;
  Tokens pseudo;
  double reward = 0.0;
  RewardType type = RewardType::Generation;
};

/// R_g = L(r | q*) − L(r | q_r)
double reward_generation(const Tokens& response, const Tokens& q_star, const Tokens& q_r,
                         const singleturn::GenerationScorer& model);

/// R_ir = margin(po, ne, q_r) − margin(po, ne, q*)
double reward_selection(const Tokens& positive, const Tokens& negative, const Tokens& q_star, const Tokens& q_r,
                        const singleturn::SelectionScorer& model);

/// One fine-tuning example: the prepared CRN input (target q*) plus what the
/// reward oracles need.
struct RlExample {
  std::size_t session = 0;
  crn::CrnInput input;
  Tokens pseudo;
  Tokens response;
  Tokens negative;
};

/// Pairs every quadruplet with the response of a randomly chosen other
/// session as its negative.
std::vector<RlExample> make_rl_examples(const crn::CrnModel& model, const std::vector<PseudoQuadruplet>& quads,
                                        std::uint64_t seed);

using RewardFn = std::function<double(const RlExample&, const Tokens& sampled)>;

RewardFn generation_reward(const singleturn::GenerationScorer& model);
RewardFn selection_reward(const singleturn::SelectionScorer& model);

/// −R · Σ_t log p(y_t) over one sample's recorded step log-probs.
tensor::Var reinforce_surrogate(tensor::Graph& g, std::span<const tensor::Var> step_log_probs, double reward);

/// One teacher-forced Adam step over a batch; returns mean per-token loss.
double mle_step(crn::CrnModel& model, std::span<const crn::CrnInput> batch, tensor::AdamState& adam, double clip,
                std::uint64_t seed);

struct RlStepResult {
  double l_com = 0.0;
  double l_rl = 0.0;
  double l_mle = 0.0;
  double mean_reward = 0.0;
  std::vector<RewardRecord> records;
};

/// Samples `config.samples` rewrites per example, scores them and takes one
/// clipped Adam step on L_rl + λ·L_MLE, where L_rl is the mean REINFORCE
/// surrogate over samples and L_MLE the mean per-token loss against q*.
/// With `apply` false the gradients are left in the parameters instead.
RlStepResult rl_step(crn::CrnModel& model, std::span<const RlExample> batch, const RewardFn& reward,
                     RewardType type, const TrainConfig& config, tensor::AdamState& adam, std::uint64_t seed,
                     bool apply = true);

struct PretrainResult {
  std::vector<EpochMetrics> log;
  int best_epoch = 0;
  double best_perplexity = 0.0;
  double final_lr = 0.0;
  long steps = 0;
};

/// Minimizes teacher-forced NLL with Adam, halving lr when validation
/// perplexity rises and restoring the best-validation parameters.
PretrainResult pretrain(crn::CrnModel& model, const std::vector<PseudoQuadruplet>& quads, const TrainConfig& config,
                        tensor::AdamState* adam = nullptr);

struct FinetuneResult {
  std::vector<EpochMetrics> log;
  std::vector<double> epoch_rewards;
  int best_epoch = 0;
  double best_reward = 0.0;
  long steps = 0;
};

/// Iterates rl_step over the examples; keeps the parameters of the epoch with
/// the highest mean reward.
FinetuneResult finetune(crn::CrnModel& model, const std::vector<RlExample>& examples, const RewardFn& reward,
                        RewardType type, const TrainConfig& config, tensor::AdamState* adam = nullptr);

}  // namespace ctxrw::train
