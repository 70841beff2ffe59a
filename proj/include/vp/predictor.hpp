// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "vp/frames.hpp"
#include "vp/gcpn.hpp"
#include "vp/lfmn.hpp"
#include "vp/tensor.hpp"

namespace vp {

struct ModelConfig {
  std::size_t frame_height = 16;
  std::size_t frame_width = 16;
  std::size_t frame_channels = 1;
  std::size_t delta = 4;          // input window length
  std::size_t channels = 16;      // C of the fused feature
  std::size_t memory_items = 8;   // N; 0 disables the memory stream
  std::size_t kernel_size = 3;    // k of the generated filters
  std::size_t gcpn_steps = 2;     // L
  bool use_lfmn = true;
  bool use_gcpn = true;
  bool skip_connections = true;
  bool depthwise_filters = false;
  real leaky_slope = real(0.2);
  std::size_t gcpn_max_positions = 1024;
  real generator_init_std = real(0.05);
  real gcpn_output_init_std = real(0.2);

  bool lfmn_enabled() const { return use_lfmn && memory_items > 0; }
  bool gcpn_enabled() const { return use_gcpn; }

  /// Throws ConfigError on inconsistent extents.
  void validate() const;
};

/// Parameter groups: "encoder", "gcpn", "memory", "filter_gen", "decoder".
struct NamedParameter {
  std::string name;
  std::string group;
  Tensor value;
};

struct EncoderOutput {
  Tensor z;          // H/4 x W/4 x C
  Tensor skip_full;  // H x W x C/2, input of the first stride-2 conv
  Tensor skip_half;  // H/2 x W/2 x C/2, input of the second stride-2 conv
};

/// Intermediate features of one fusion pass, for inspection and ablations.
struct FusionTrace {
  Tensor global_context;  // Z bar
  AddressWeights address;
  DynamicFilterField filters;
  std::vector<Tensor> attention;
};

struct ForwardProfile {
  double gcpn_seconds = 0;
  double lfmn_seconds = 0;
  double total_seconds = 0;
};

/// U-shaped next-frame predictor: strided conv encoder over the concatenated
/// window, global-context propagation filtered by memory-generated per-pixel
/// kernels, transposed-conv decoder with skip connections and a tanh output.
class PredictorModel {
 public:
  /// Each parameter group draws from its own stream derived from `seed`, so
  /// two variants that share a group start from identical values for it.
  PredictorModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  std::vector<NamedParameter>& parameters() { return params_; }
  const std::vector<NamedParameter>& parameters() const { return params_; }
  const Tensor& parameter(std::string_view name) const;
  std::vector<std::string> groups() const;

  GcpnParams gcpn() const;
  MemoryBank memory() const;
  FilterGenerator filter_generator() const;

  EncoderOutput encode(const FrameSequence& window) const;
  /// Z -> Z hat. Disabled streams reduce to the identity.
  Tensor fuse(const Tensor& z, FusionTrace* trace = nullptr, ForwardProfile* profile = nullptr) const;
  Tensor decode(const Tensor& fused, const EncoderOutput& encoded) const;

  Tensor predict_next(const FrameSequence& window, FusionTrace* trace = nullptr,
                      ForwardProfile* profile = nullptr) const;

  void zero_grad();

 private:
  Tensor& add_param(std::string name, std::string group, Tensor value);
  Tensor conv_block(const Tensor& x, const Tensor& w, const Tensor& b, int stride) const;

  ModelConfig config_;
  std::vector<NamedParameter> params_;
  Tensor enc1_w_, enc1_b_, enc2_w_, enc2_b_, enc3_w_, enc3_b_;
  Tensor dec2_w_, dec2_b_, dec1_w_, dec1_b_, out_w_, out_b_;
};

/// The last `delta` frames ending at index `t` (0-based), left-padded by
/// repeating the first frame when fewer are available.
FrameSequence pad_window(const FrameSequence& frames, std::size_t t, std::size_t delta);

/// Origin of one window slot during a rollout.
struct FrameSource {
  bool predicted = false;
  std::size_t index = 0;  // seed index, or prediction step for predicted frames

  bool operator==(const FrameSource&) const = default;
};

using RolloutTrace = std::vector<std::vector<FrameSource>>;

/// Predicts `steps` frames, feeding each prediction back into the sliding
/// window. Returns only the predicted frames.
FrameSequence rollout(const PredictorModel& model, const FrameSequence& seed, std::size_t steps,
                      RolloutTrace* trace = nullptr);

}  // namespace vp
