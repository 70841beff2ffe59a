// SPDX-License-Identifier: Apache-2.0
#include "vp/predictor.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "vp/errors.hpp"
#include "vp/ops.hpp"
#include "vp/random.hpp"

namespace vp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model: " + msg); };
  if (frame_height == 0 || frame_width == 0 || frame_height % 4 || frame_width % 4) {
    fail("frame height and width must be positive multiples of 4");
  }
  if (frame_channels == 0) fail("frame_channels must be >= 1");
  if (delta == 0) fail("delta must be >= 1");
  if (channels < 2 || channels % 2) fail("channels must be an even number >= 2");
  if (kernel_size == 0 || kernel_size % 2 == 0) fail("kernel_size must be odd");
  if (gcpn_steps == 0) fail("gcpn_steps must be >= 1");
  if (leaky_slope < 0) fail("leaky_slope must be >= 0");
  if (generator_init_std < 0 || gcpn_output_init_std < 0) fail("init scales must be >= 0");
  if (use_gcpn && (frame_height / 4) * (frame_width / 4) > gcpn_max_positions) {
    fail("feature map exceeds gcpn_max_positions");
  }
}

PredictorModel::PredictorModel(ModelConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const std::size_t C = config_.channels;
  const std::size_t half = C / 2;
  const std::size_t in = config_.delta * config_.frame_channels;
  const real slope = config_.leaky_slope;
  auto he = [slope](std::size_t fan_in) {
    return std::sqrt(real(2) / ((1 + slope * slope) * static_cast<real>(fan_in)));
  };

  Rng enc(derive_seed(seed, "encoder"));
  enc1_w_ = add_param("encoder.conv1.weight", "encoder", randn({half, in, 3, 3}, he(in * 9), enc));
  enc1_b_ = add_param("encoder.conv1.bias", "encoder", Tensor({half}));
  enc2_w_ = add_param("encoder.conv2.weight", "encoder", randn({half, half, 3, 3}, he(half * 9), enc));
  enc2_b_ = add_param("encoder.conv2.bias", "encoder", Tensor({half}));
  enc3_w_ = add_param("encoder.conv3.weight", "encoder", randn({C, half, 3, 3}, he(half * 9), enc));
  enc3_b_ = add_param("encoder.conv3.bias", "encoder", Tensor({C}));

  if (config_.gcpn_enabled()) {
    Rng rng(derive_seed(seed, "gcpn"));
    GcpnParams p = GcpnParams::random(C, config_.gcpn_steps, real(1) / std::sqrt(static_cast<real>(C)),
                                      config_.gcpn_output_init_std, rng);
    add_param("gcpn.w_theta", "gcpn", p.w_theta);
    add_param("gcpn.w_phi", "gcpn", p.w_phi);
    add_param("gcpn.w_g", "gcpn", p.w_g);
    add_param("gcpn.w_o", "gcpn", p.w_o);
  }
  if (config_.lfmn_enabled()) {
    Rng mem(derive_seed(seed, "memory"));
    add_param("lfmn.memory", "memory", MemoryBank::random(config_.memory_items, C, mem).items);
    Rng gen(derive_seed(seed, "filter_gen"));
    FilterGenerator g =
        FilterGenerator::delta_init(C, config_.kernel_size, config_.depthwise_filters, config_.generator_init_std, gen);
    add_param("lfmn.generator.weight", "filter_gen", g.weights);
    add_param("lfmn.generator.bias", "filter_gen", g.bias);
  }

  Rng dec(derive_seed(seed, "decoder"));
  const std::size_t dec1_in = config_.skip_connections ? C : half;
  const std::size_t out_in = config_.skip_connections ? C : half;
  dec2_w_ = add_param("decoder.up2.weight", "decoder", randn({C, half, 3, 3}, he(C * 9 / 4), dec));
  dec2_b_ = add_param("decoder.up2.bias", "decoder", Tensor({half}));
  dec1_w_ = add_param("decoder.up1.weight", "decoder", randn({dec1_in, half, 3, 3}, he(dec1_in * 9 / 4), dec));
  dec1_b_ = add_param("decoder.up1.bias", "decoder", Tensor({half}));
  out_w_ = add_param("decoder.out.weight", "decoder",
                     randn({config_.frame_channels, out_in, 3, 3}, std::sqrt(real(1) / (out_in * 9)), dec));
  out_b_ = add_param("decoder.out.bias", "decoder", Tensor({config_.frame_channels}));
}

Tensor& PredictorModel::add_param(std::string name, std::string group, Tensor value) {
  value.set_requires_grad(true);
  params_.push_back(NamedParameter{std::move(name), std::move(group), std::move(value)});
  return params_.back().value;
}

const Tensor& PredictorModel::parameter(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return p.value;
  throw std::out_of_range("PredictorModel: no parameter named " + std::string(name));
}

std::vector<std::string> PredictorModel::groups() const {
  std::vector<std::string> out;
  for (const auto& p : params_)
    if (std::find(out.begin(), out.end(), p.group) == out.end()) out.push_back(p.group);
  return out;
}

GcpnParams PredictorModel::gcpn() const {
  GcpnParams p;
  p.w_theta = parameter("gcpn.w_theta");
  p.w_phi = parameter("gcpn.w_phi");
  p.w_g = parameter("gcpn.w_g");
  p.w_o = parameter("gcpn.w_o");
  p.steps = config_.gcpn_steps;
  p.max_positions = config_.gcpn_max_positions;
  return p;
}

MemoryBank PredictorModel::memory() const { return MemoryBank{parameter("lfmn.memory")}; }

FilterGenerator PredictorModel::filter_generator() const {
  FilterGenerator g;
  g.weights = parameter("lfmn.generator.weight");
  g.bias = parameter("lfmn.generator.bias");
  g.filter_out = config_.channels;
  g.filter_in = config_.channels;
  g.kernel_size = config_.kernel_size;
  g.depthwise = config_.depthwise_filters;
  return g;
}

Tensor PredictorModel::conv_block(const Tensor& x, const Tensor& w, const Tensor& b, int stride) const {
  return leaky_relu(add_bias(conv2d(x, w, stride, 1), b), config_.leaky_slope);
}

EncoderOutput PredictorModel::encode(const FrameSequence& window) const {
  if (window.size() != config_.delta) {
    throw ShapeError("encode: window holds " + std::to_string(window.size()) + " frames, model expects " +
                     std::to_string(config_.delta));
  }
  const Shape frame_shape{config_.frame_height, config_.frame_width, config_.frame_channels};
  for (const Tensor& f : window.frames) {
    if (f.shape() != frame_shape) {
      throw ShapeError("encode: frame " + shape_str(f.shape()) + " does not match " + shape_str(frame_shape));
    }
  }
  EncoderOutput out;
  Tensor x = concat_lastdim(window.frames);
  out.skip_full = conv_block(x, enc1_w_, enc1_b_, 1);
  out.skip_half = conv_block(out.skip_full, enc2_w_, enc2_b_, 2);
  out.z = conv_block(out.skip_half, enc3_w_, enc3_b_, 2);
  return out;
}

Tensor PredictorModel::fuse(const Tensor& z, FusionTrace* trace, ForwardProfile* profile) const {
  Tensor context = z;
  if (config_.gcpn_enabled()) {
    const auto start = Clock::now();
    context = propagate(z, gcpn(), trace ? &trace->attention : nullptr);
    if (profile) profile->gcpn_seconds += seconds_since(start);
  }
  if (trace) trace->global_context = context;
  if (!config_.lfmn_enabled()) return context;

  const auto start = Clock::now();
  const MemoryBank mem = memory();
  AddressWeights address = address_memory(z, mem);
  DynamicFilterField field = generate_filters(read_memory(address, mem), filter_generator());
  Tensor fused = apply_filters(context, field);
  if (profile) profile->lfmn_seconds += seconds_since(start);
  if (trace) {
    trace->address = address;
    trace->filters = field;
  }
  return fused;
}

Tensor PredictorModel::decode(const Tensor& fused, const EncoderOutput& encoded) const {
  const real slope = config_.leaky_slope;
  Tensor x = leaky_relu(add_bias(conv_transpose2d(fused, dec2_w_, 2, 1, 1), dec2_b_), slope);
  if (config_.skip_connections) x = concat_lastdim({x, encoded.skip_half});
  x = leaky_relu(add_bias(conv_transpose2d(x, dec1_w_, 2, 1, 1), dec1_b_), slope);
  if (config_.skip_connections) x = concat_lastdim({x, encoded.skip_full});
  return tanh(add_bias(conv2d(x, out_w_, 1, 1), out_b_));
}

Tensor PredictorModel::predict_next(const FrameSequence& window, FusionTrace* trace, ForwardProfile* profile) const {
  const auto start = Clock::now();
  EncoderOutput encoded = encode(window);
  Tensor frame = decode(fuse(encoded.z, trace, profile), encoded);
  if (profile) profile->total_seconds += seconds_since(start);
  return frame;
}

void PredictorModel::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

FrameSequence pad_window(const FrameSequence& frames, std::size_t t, std::size_t delta) {
  if (frames.empty()) throw std::invalid_argument("pad_window: empty frame sequence");
  if (t >= frames.size()) throw std::out_of_range("pad_window: index past the last frame");
  if (delta == 0) throw std::invalid_argument("pad_window: delta must be >= 1");
  FrameSequence window;
  for (std::size_t i = 0; i < delta; ++i) {
    const long src = static_cast<long>(t) - static_cast<long>(delta - 1) + static_cast<long>(i);
    window.push_back(frames[static_cast<std::size_t>(std::max(src, 0L))]);
  }
  return window;
}

FrameSequence rollout(const PredictorModel& model, const FrameSequence& seed, std::size_t steps,
                      RolloutTrace* trace) {
  if (seed.empty()) throw std::invalid_argument("rollout: empty seed sequence");
  if (steps == 0) throw std::invalid_argument("rollout: steps must be >= 1");
  NoGradGuard no_grad;
  const std::size_t delta = model.config().delta;
  FrameSequence history = seed;
  std::vector<FrameSource> sources;
  for (std::size_t i = 0; i < seed.size(); ++i) sources.push_back({false, i});
  if (trace) trace->clear();

  FrameSequence predicted;
  for (std::size_t step = 0; step < steps; ++step) {
    const std::size_t t = history.size() - 1;
    if (trace) {
      std::vector<FrameSource> slots;
      for (std::size_t i = 0; i < delta; ++i) {
        const long src = static_cast<long>(t) - static_cast<long>(delta - 1) + static_cast<long>(i);
        slots.push_back(sources[static_cast<std::size_t>(std::max(src, 0L))]);
      }
      trace->push_back(std::move(slots));
    }
    Tensor next = model.predict_next(pad_window(history, t, delta));
    history.push_back(next);
    sources.push_back({true, step});
    predicted.push_back(next);
  }
  return predicted;
}

}  // namespace vp
