// SPDX-License-Identifier: Apache-2.0
#include "vp/dataset.hpp"

#include <stdexcept>
#include <string>

#include "vp/errors.hpp"
#include "vp/predictor.hpp"
#include "vp/random.hpp"

namespace vp {

std::vector<Sample> VideoDataset::next_frame_samples() const {
  std::vector<Sample> out;
  for (std::size_t s = 0; s < sequences.size(); ++s)
    for (std::size_t t = 1; t < sequences[s].size(); ++t) out.push_back({s, t});
  return out;
}

FrameSequence VideoDataset::window(const Sample& sample, std::size_t delta) const {
  if (sample.target == 0) throw std::invalid_argument("VideoDataset::window: target 0 has no history");
  return pad_window(sequences.at(sample.sequence), sample.target - 1, delta);
}

const Tensor& VideoDataset::target(const Sample& sample) const { return sequences.at(sample.sequence)[sample.target]; }

VideoDataset generate_dataset(const ShapeSceneConfig& config, std::size_t count, std::size_t length) {
  VideoDataset data;
  for (std::size_t i = 0; i < count; ++i) {
    ShapeSceneConfig clip = config;
    clip.seed = derive_seed(config.seed, "sequence/" + std::to_string(i));
    data.sequences.push_back(gen_moving_shapes(clip, length));
  }
  return data;
}

std::pair<VideoDataset, VideoDataset> split_held_out(const VideoDataset& data, std::size_t held_out) {
  if (held_out >= data.size()) {
    throw ConfigError("held_out must leave at least one training sequence (" + std::to_string(held_out) + " of " +
                      std::to_string(data.size()) + ")");
  }
  VideoDataset train, val;
  const std::size_t cut = data.size() - held_out;
  train.sequences.assign(data.sequences.begin(), data.sequences.begin() + static_cast<long>(cut));
  val.sequences.assign(data.sequences.begin() + static_cast<long>(cut), data.sequences.end());
  return {std::move(train), std::move(val)};
}

}  // namespace vp
