// SPDX-License-Identifier: Apache-2.0
#include "vp/shapes.hpp"

#include <algorithm>
#include <string>

#include "vp/errors.hpp"

namespace vp {

void ShapeSceneConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("data: " + msg); };
  if (height == 0 || width == 0) fail("canvas must be non-empty");
  if (channels == 0) fail("channels must be >= 1");
  if (kinds.empty()) fail("at least one shape kind is required");
  if (min_size == 0 || min_size > max_size) fail("need 1 <= min_size <= max_size");
  if (max_size > std::min(height, width)) fail("shape larger than canvas");
  if (max_speed < 0) fail("max_speed must be >= 0");
  if (2 * static_cast<std::size_t>(max_speed) >= std::min(height, width)) {
    fail("max_speed must be below half the smaller canvas extent");
  }
  if (bounce && static_cast<std::size_t>(max_speed) > std::min(height, width) - max_size) {
    fail("max_speed exceeds the free travel range of the largest shape");
  }
  if (shape_count > 0 && max_speed == 0) fail("max_speed must be >= 1 when shapes are present");
  if (!(min_intensity >= 0 && min_intensity <= max_intensity && max_intensity <= 1)) {
    fail("need 0 <= min_intensity <= max_intensity <= 1");
  }
  if (!(background >= 0 && background <= 1)) fail("need 0 <= background <= 1");
}

std::vector<MovingShape> sample_shapes(const ShapeSceneConfig& config, Rng& rng) {
  config.validate();
  std::uniform_int_distribution<std::size_t> kind_dist(0, config.kinds.size() - 1);
  std::uniform_int_distribution<std::size_t> size_dist(config.min_size, config.max_size);
  std::uniform_int_distribution<int> speed_dist(-config.max_speed, config.max_speed);
  std::uniform_real_distribution<double> intensity_dist(config.min_intensity, config.max_intensity);

  std::vector<MovingShape> shapes;
  for (std::size_t i = 0; i < config.shape_count; ++i) {
    MovingShape s;
    s.kind = config.kinds[kind_dist(rng)];
    s.size = size_dist(rng);
    std::uniform_int_distribution<long> ypos(0, static_cast<long>(config.height - s.size));
    std::uniform_int_distribution<long> xpos(0, static_cast<long>(config.width - s.size));
    s.y = ypos(rng);
    s.x = xpos(rng);
    do {
      s.vy = speed_dist(rng);
      s.vx = speed_dist(rng);
    } while (s.vy == 0 && s.vx == 0);
    for (std::size_t c = 0; c < config.channels; ++c) s.intensity.push_back(intensity_dist(rng));
    shapes.push_back(std::move(s));
  }
  return shapes;
}

namespace {
void reflect(long& pos, int& vel, long range) {
  pos += vel;
  if (pos < 0) {
    pos = -pos;
    vel = -vel;
  } else if (pos > range) {
    pos = 2 * range - pos;
    vel = -vel;
  }
}
}  // namespace

void advance(MovingShape& shape, const ShapeSceneConfig& config) {
  if (!config.bounce) {
    shape.y += shape.vy;
    shape.x += shape.vx;
    return;
  }
  reflect(shape.y, shape.vy, static_cast<long>(config.height - shape.size));
  reflect(shape.x, shape.vx, static_cast<long>(config.width - shape.size));
}

Tensor render(const std::vector<MovingShape>& shapes, const ShapeSceneConfig& config) {
  const std::size_t H = config.height, W = config.width, C = config.channels;
  Tensor frame({H, W, C}, static_cast<real>(config.background));
  auto out = frame.data();
  std::vector<char> covered(H * W, 0);
  for (const auto& s : shapes) {
    const double r = static_cast<double>(s.size) / 2.0;
    for (std::size_t i = 0; i < s.size; ++i) {
      for (std::size_t j = 0; j < s.size; ++j) {
        if (s.kind == ShapeKind::circle) {
          const double dy = static_cast<double>(i) + 0.5 - r;
          const double dx = static_cast<double>(j) + 0.5 - r;
          if (dy * dy + dx * dx > r * r) continue;
        }
        const long y = s.y + static_cast<long>(i);
        const long x = s.x + static_cast<long>(j);
        if (y < 0 || x < 0 || y >= static_cast<long>(H) || x >= static_cast<long>(W)) continue;
        for (std::size_t c = 0; c < C; ++c) {
          real& px = out[(static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x)) * C + c];
          const real v = static_cast<real>(s.intensity[c]);
          px = covered[y * static_cast<long>(W) + x] ? std::max(px, v) : v;
        }
        covered[y * static_cast<long>(W) + x] = 1;
      }
    }
  }
  return frame;
}

FrameSequence gen_moving_shapes(const ShapeSceneConfig& config, std::size_t length) {
  Rng rng(config.seed);
  std::vector<MovingShape> shapes = sample_shapes(config, rng);
  FrameSequence seq;
  for (std::size_t t = 0; t < length; ++t) {
    if (t > 0) {
      for (auto& s : shapes) advance(s, config);
    }
    seq.push_back(normalize(render(shapes, config)));
  }
  return seq;
}

}  // namespace vp
