// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "vp/config.hpp"
#include "vp/dataset.hpp"

namespace vp {

namespace fs = std::filesystem;

/// Process-wide switches read from the environment.
struct RuntimeEnv {
  bool deterministic = true;  // VP_DETERMINISTIC (0 disables)
  unsigned max_threads = 1;   // VP_THREADS

  static RuntimeEnv from_environment();
};

/// Loads --config when given, defaults otherwise.
RunConfig load_run_config(const std::optional<fs::path>& path);

// ---------------------------------------------------------------------------
// Dataset directories: one frame directory per sequence plus manifest.json.

inline constexpr const char* kManifestName = "manifest.json";

void write_dataset(const fs::path& out, const VideoDataset& data, const RunConfig& config);
/// Reads a dataset written by write_dataset. `config`, when given, receives
/// the generating configuration recorded in the manifest.
VideoDataset read_dataset(const fs::path& dir, RunConfig* config = nullptr);

// ---------------------------------------------------------------------------

struct GenOptions {
  std::optional<fs::path> config;
  fs::path out;
  std::optional<std::size_t> sequences;
  std::optional<std::size_t> length;
  std::optional<std::uint64_t> seed;
};
void cmd_gen(const GenOptions& options, std::ostream& log);

struct TrainOptions {
  std::optional<fs::path> config;
  fs::path data;
  fs::path out;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint32_t> epochs;
  std::optional<fs::path> resume;
  std::uint32_t stop_after = 0;
};
/// Writes out/model.ckpt, out/metrics.csv and out/config.ini.
void cmd_train(const TrainOptions& options, std::ostream& log);

struct EvalOptions {
  fs::path ckpt;
  fs::path data;
  fs::path report;
  bool self_eval = false;
  bool timing = false;
};
void cmd_eval(const EvalOptions& options, std::ostream& log);

struct RolloutOptions {
  fs::path ckpt;
  fs::path seed_frames;
  std::size_t steps = 15;
  std::optional<std::size_t> context;  // seed frames used; default delta
  fs::path out;
};
/// Writes out/frame_*.p?m for the predictions and out/rollout.csv. Frames of
/// the seed directory past the context serve as ground truth.
void cmd_rollout(const RolloutOptions& options, std::ostream& log);

struct GradcheckOptions {
  std::optional<fs::path> config;
  std::uint64_t seed = 1;
  bool corrupt_backward = false;
};

struct GradcheckRow {
  std::string component;
  double max_relative_error = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  bool passed = false;
};

inline constexpr double kGradcheckTolerance = 1e-4;

std::vector<GradcheckRow> run_gradcheck(const GradcheckOptions& options);
/// Prints the report; returns true when every component passed.
bool cmd_gradcheck(const GradcheckOptions& options, std::ostream& log);

struct AblateOptions {
  std::optional<fs::path> config;
  fs::path data;
  fs::path out;
  std::size_t seeds = 5;
  std::uint64_t base_seed = 1;
};

struct AblationRun {
  std::string variant;
  std::uint64_t seed = 0;
  double val_psnr = 0;
  double val_ssim = 0;
  double final_train_loss = 0;
};

/// Variant name -> model switches. Names: base, lfmn, gcpn, full, mem_0,
/// mem_2, mem_4, mem_8.
std::vector<std::pair<std::string, ModelConfig>> ablation_variants(const ModelConfig& base);

/// Writes out/ablation.csv (one row per variant and seed) and
/// out/ablation_summary.csv (mean and sd per variant).
std::vector<AblationRun> cmd_ablate(const AblateOptions& options, std::ostream& log);

}  // namespace vp
