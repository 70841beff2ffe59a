// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "vp/frames.hpp"
#include "vp/random.hpp"

namespace vp {

enum class ShapeKind { square, circle };

/// Moving-shapes scene: constant-velocity squares and discs on a dark
/// canvas, optionally reflecting off the borders.
struct ShapeSceneConfig {
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t channels = 1;
  std::size_t shape_count = 2;
  std::vector<ShapeKind> kinds{ShapeKind::square, ShapeKind::circle};
  std::size_t min_size = 3;
  std::size_t max_size = 5;
  int max_speed = 2;  // pixels per frame, per axis
  double min_intensity = 0.6;
  double max_intensity = 0.9;
  double background = 0.2;  // raw canvas value
  bool bounce = true;
  std::uint64_t seed = 1;

  /// Throws ConfigError on an invalid scene, including shapes larger than the canvas.
  void validate() const;
};

struct MovingShape {
  ShapeKind kind = ShapeKind::square;
  std::size_t size = 1;
  long y = 0;  // top-left corner
  long x = 0;
  int vy = 0;
  int vx = 0;
  std::vector<double> intensity;  // one value per channel, in [0, 1]
};

/// Draws the initial shapes of one clip. Velocities are never (0, 0).
std::vector<MovingShape> sample_shapes(const ShapeSceneConfig& config, Rng& rng);

/// Advances one frame, reflecting position and velocity at the borders when
/// bouncing is enabled.
void advance(MovingShape& shape, const ShapeSceneConfig& config);

/// Renders shapes as raw [0, 1] values over the background level; where
/// shapes overlap the brightest wins.
Tensor render(const std::vector<MovingShape>& shapes, const ShapeSceneConfig& config);

/// Deterministic clip of `length` normalized frames for config.seed.
FrameSequence gen_moving_shapes(const ShapeSceneConfig& config, std::size_t length);

}  // namespace vp
