// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "vp/checkpoint.hpp"
#include "vp/dataset.hpp"
#include "vp/losses.hpp"
#include "vp/metrics.hpp"
#include "vp/predictor.hpp"

namespace vp {

struct TrainConfig {
  std::uint32_t epochs = 30;
  std::size_t batch_size = 8;
  real lr = real(2e-4);
  real lr_min = real(0);
  real lambda_g = real(0.01);
  std::uint64_t seed = 1;

  void validate() const;
};

struct EpochMetrics {
  std::uint32_t epoch = 0;  // 1-based
  double lr = 0;
  double train_loss = 0;
  double val_psnr = 0;
  double val_ssim = 0;

  bool operator==(const EpochMetrics&) const = default;
};

struct FitOptions {
  /// Continue from this state instead of the model's current parameters.
  const Checkpoint* resume = nullptr;
  /// Stop once this many epochs are complete (0 = run all). The schedule
  /// still spans TrainConfig::epochs, so a stopped run can be resumed.
  std::uint32_t stop_after = 0;
  /// Where the last good state is written when a non-finite value appears.
  std::filesystem::path failure_dump;
  /// Stored verbatim in every checkpoint.
  std::string config_text;
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct FitResult {
  Checkpoint checkpoint;
  std::vector<EpochMetrics> log;  // epochs run by this call only
};

/// Mini-batch training of next-frame prediction. Each batch accumulates the
/// gradient of the batch-mean total loss, then takes one Adam step at the
/// annealed rate of the current epoch. Sample order is reshuffled per epoch
/// from (seed, epoch), so a resumed run follows the uninterrupted one.
FitResult fit(PredictorModel& model, const VideoDataset& train, const VideoDataset& val, const TrainConfig& config,
              const FitOptions& options = {});

/// Mean next-frame metrics over every sample of `data`.
FrameMetrics evaluate_next_frame(const PredictorModel& model, const VideoDataset& data);
/// The same samples scored with the previous frame as the prediction.
FrameMetrics evaluate_copy_last(const VideoDataset& data);

struct SequenceEval {
  std::size_t sequence = 0;
  std::size_t samples = 0;
  FrameMetrics model;
  FrameMetrics copy_last;
};

/// Per-sequence means. With `model == nullptr` only the baseline is filled.
/// With `self_eval` the target itself is scored as the prediction.
std::vector<SequenceEval> evaluate_sequences(const PredictorModel* model, const VideoDataset& data,
                                             bool self_eval = false);

void write_metric_log(const std::filesystem::path& path, const std::vector<EpochMetrics>& log);

}  // namespace vp
