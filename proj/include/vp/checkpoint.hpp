// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "vp/optim.hpp"
#include "vp/predictor.hpp"

namespace vp {

inline constexpr char kCheckpointMagic[4] = {'N', 'F', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointTensor {
  std::string name;
  Tensor value;
};

/// Everything needed to resume training bit-for-bit.
struct Checkpoint {
  std::vector<CheckpointTensor> parameters;
  OptimState optim;
  std::uint32_t epoch = 0;  // epochs completed
  std::uint64_t seed = 0;
  std::string config_text;  // canonical RunConfig snapshot
};

/// Deep copies of the model parameters plus the given training state.
Checkpoint capture_checkpoint(const PredictorModel& model, const OptimState& optim, std::uint32_t epoch,
                              std::uint64_t seed, std::string config_text);

/// Copies checkpointed values into the model's parameters in place. Names and
/// shapes must match exactly.
void restore_parameters(PredictorModel& model, const Checkpoint& checkpoint);

/// Little-endian layout:
///   "NFCK" u32 version
///   u32 count, then per parameter: str name, u32 rank, u64 extents[rank],
///     u8 dtype (0 = f64, 1 = f32), u64 n, n raw values
///   optimizer: u64 step, f64 lr_max, f64 lr_min, u32 total_epochs,
///     f64 beta1, f64 beta2, f64 eps, u32 count, per entry: str name, u8 dtype,
///     u64 n, n first moments, n second moments
///   u32 epoch, u64 seed, str config
/// where str is a u32 byte length followed by the bytes.
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vp
