#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ctxrw {

/// One line of a training log.
struct EpochMetrics {
  int epoch = 0;
  std::string split;
  double loss = 0.0;
  double perplexity = 0.0;
  std::optional<double> mean_reward;
};

/// JSONL, one {epoch, split, loss, perplexity, mean_reward} object per line.
void write_training_log(const std::filesystem::path& path, const std::vector<EpochMetrics>& log);

}  // namespace ctxrw
