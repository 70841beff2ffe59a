// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "vp/frames.hpp"
#include "vp/shapes.hpp"

namespace vp {

/// One next-frame training pair: the window ending at frame `target - 1`
/// of `sequence`, predicting frame `target`.
struct Sample {
  std::size_t sequence = 0;
  std::size_t target = 0;
};

struct VideoDataset {
  std::vector<FrameSequence> sequences;

  std::size_t size() const { return sequences.size(); }

  /// Every (sequence, t) with t >= 1, in sequence-major order. Windows of
  /// early targets are left-padded.
  std::vector<Sample> next_frame_samples() const;

  FrameSequence window(const Sample& sample, std::size_t delta) const;
  const Tensor& target(const Sample& sample) const;
};

/// `count` clips of `length` frames; clip i uses a seed derived from
/// config.seed and i.
VideoDataset generate_dataset(const ShapeSceneConfig& config, std::size_t count, std::size_t length);

/// Splits off the last `held_out` sequences.
std::pair<VideoDataset, VideoDataset> split_held_out(const VideoDataset& data, std::size_t held_out);

}  // namespace vp
