// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "vp/tensor.hpp"

namespace vp {

/// A clip of H x W x C frames with values in [-1, 1].
struct FrameSequence {
  std::vector<Tensor> frames;

  std::size_t size() const { return frames.size(); }
  bool empty() const { return frames.empty(); }
  const Tensor& operator[](std::size_t i) const { return frames.at(i); }
  void push_back(Tensor frame) { frames.push_back(std::move(frame)); }
};

/// Counts values clamped into range by normalize().
struct ClampCounter {
  std::size_t clamped = 0;
};

/// [0, 1] -> [-1, 1] via 2x - 1. Values outside [0, 1] are clamped first and
/// counted in `counter`.
Tensor normalize(const Tensor& raw, ClampCounter& counter);
Tensor normalize(const Tensor& raw);

/// [-1, 1] -> [0, 1] via (x + 1) / 2.
Tensor denormalize(const Tensor& frame);

/// Reads a binary 8-bit P5 (grey) or P6 (RGB) file as an H x W x C tensor of
/// raw values in [0, 1].
Tensor read_pnm(const std::filesystem::path& path);

/// Writes an H x W x 1 or H x W x 3 tensor of [0, 1] values as binary 8-bit
/// P5/P6, rounding to the nearest of 256 levels.
void write_pnm(const std::filesystem::path& path, const Tensor& raw);

/// Name of the i-th frame file, frame_%05d plus the pixmap extension.
std::string frame_filename(std::size_t index, std::size_t channels);

/// Writes a normalized sequence into `dir` (created if missing).
void save_frames(const std::filesystem::path& dir, const FrameSequence& sequence);

/// Loads every frame_*.pgm / frame_*.ppm file of `dir` in filename order and
/// normalizes it to [-1, 1].
FrameSequence load_frames(const std::filesystem::path& dir);

}  // namespace vp
