#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ctxrw/tensor.hpp"

namespace ctxrw {

/// Versioned binary container of named arrays plus optional Adam state.
///
/// Layout (little-endian):
///   "CTXRWCKP" | u32 version | u64 header bytes | header (JSON text)
///   u64 entry count | entries: u32 name bytes, name, u64 rows, u64 cols,
///   rows*cols doubles (column-major)
///   u8 has_optimizer | [lr, beta1, beta2, eps: f64 | step: i64 | m, v per entry]
struct CheckpointData {
  nlohmann::json header;
  std::vector<std::pair<std::string, tensor::Matrix>> arrays;
  std::optional<tensor::AdamState> optimizer;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& header,
                     const tensor::ParameterSet& params, const tensor::AdamState* optimizer = nullptr);

CheckpointData read_checkpoint(const std::filesystem::path& path);

/// Copies arrays into `params` by name; every parameter must be present with
/// a matching shape.
void restore_parameters(const CheckpointData& data, tensor::ParameterSet& params);

}  // namespace ctxrw
