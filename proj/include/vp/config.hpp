// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>

#include "vp/predictor.hpp"
#include "vp/shapes.hpp"
#include "vp/trainer.hpp"

namespace vp {

struct DataConfig {
  std::size_t sequences = 64;
  std::size_t length = 20;
  /// Canvas extents are taken from the model section.
  ShapeSceneConfig scene;
};

struct EvalConfig {
  std::size_t held_out = 8;  // trailing sequences kept out of training
  std::size_t rollout_steps = 15;
};

/// Sectioned `key = value` text with sections [model], [training], [data] and
/// [eval]. Every key has a default; unknown sections or keys are errors.
/// `#` and `;` start comments.
struct RunConfig {
  ModelConfig model;
  TrainConfig training;
  DataConfig data;
  EvalConfig eval;

  /// Throws ConfigError naming the line of the first problem.
  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);

  /// Canonical form: every key, fixed order, shortest round-tripping numbers.
  std::string serialize() const;

  /// Scene with the model's canvas extents and the data seed applied.
  ShapeSceneConfig scene() const;

  void validate() const;
};

}  // namespace vp
