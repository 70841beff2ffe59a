// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstring>
#include <map>

#include "oracles.hpp"
#include "vp/errors.hpp"
#include "vp/gcpn.hpp"
#include "vp/gradcheck.hpp"
#include "vp/lfmn.hpp"
#include "vp/losses.hpp"
#include "vp/ops.hpp"
#include "vp/predictor.hpp"
#include "vp/shapes.hpp"

using namespace vp;

namespace {

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(real)) == 0;
}

FrameSequence random_clip(std::size_t n, std::uint64_t seed, std::size_t H = 16, std::size_t W = 16) {
  Rng rng(seed);
  FrameSequence s;
  for (std::size_t i = 0; i < n; ++i) s.push_back(randu({H, W, 1}, -1, 1, rng));
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Memory stream

TEST(Lfmn, AddressAndReadMatchOracle) {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t H = pick(rng, 1, 5), W = pick(rng, 1, 5), C = pick(rng, 1, 6), N = pick(rng, 1, 6);
    const auto z = oracle::random_buf(H * W * C, rng), m = oracle::random_buf(N * C, rng);
    MemoryBank mem{oracle::tensor({N, C}, m)};
    AddressWeights w = address_memory(oracle::tensor({H, W, C}, z), mem);
    ASSERT_EQ(w.w.shape(), (Shape{H, W, N}));
    const auto want_w = oracle::address(z, H * W, C, m, N);
    ASSERT_LT(oracle::max_abs_diff(w.w, want_w), 1e-9);
    AggregatedMemory r = read_memory(w, mem);
    ASSERT_LT(oracle::max_abs_diff(r.m_hat, oracle::read(want_w, H * W, N, m, C)), 1e-9);
  }
}

TEST(Lfmn, AddressWeightsAreProbabilityVectors) {
  Rng rng(32);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t N = pick(rng, 1, 10);
    Tensor z = randn({4, 4, 8}, 5, rng);
    AddressWeights w = address_memory(z, MemoryBank::random(N, 8, rng));
    auto d = w.w.data();
    for (std::size_t p = 0; p < 16; ++p) {
      double s = 0;
      for (std::size_t i = 0; i < N; ++i) {
        ASSERT_GE(d[p * N + i], 0);
        s += d[p * N + i];
      }
      ASSERT_NEAR(s, 1, 1e-6);
    }
  }
}

TEST(Lfmn, ZeroFeatureGivesUniformWeights) {
  Rng rng(33);
  AddressWeights w = address_memory(Tensor({2, 2, 4}), MemoryBank::random(5, 4, rng));
  for (real v : w.w.data()) EXPECT_NEAR(v, 0.2, 1e-15);
}

TEST(Lfmn, DeltaInitFiltersAreIdentity) {
  Rng rng(34);
  for (bool depthwise : {false, true}) {
    FilterGenerator g = FilterGenerator::delta_init(6, 3, depthwise, 0, rng);
    Tensor z = randn({4, 4, 6}, 1, rng);
    MemoryBank mem = MemoryBank::random(5, 6, rng);
    DynamicFilterField field = generate_filters(read_memory(address_memory(z, mem), mem), g);
    Tensor ctx = randn({4, 4, 6}, 1, rng);
    EXPECT_TRUE(bitwise_equal(apply_filters(ctx, field), ctx)) << depthwise;
  }
}

TEST(Lfmn, GeneratedFilterShapes) {
  Rng rng(35);
  FilterGenerator full = FilterGenerator::delta_init(4, 5, false, 0.01, rng);
  FilterGenerator dw = FilterGenerator::delta_init(4, 5, true, 0.01, rng);
  EXPECT_EQ(full.kernel_numel(), 4u * 4 * 25);
  EXPECT_EQ(dw.kernel_numel(), 4u * 25);
  AggregatedMemory m{randn({3, 2, 4}, 1, rng)};
  EXPECT_EQ(generate_filters(m, full).filters.shape(), (Shape{3, 2, 4, 4, 5, 5}));
  EXPECT_EQ(generate_filters(m, dw).filters.shape(), (Shape{3, 2, 4, 5, 5}));
  EXPECT_THROW(delta_kernel(4, 2, false), ShapeError);
}

TEST(Lfmn, GradientsMatchFiniteDifferences) {
  Rng rng(36);
  Tensor z = randn({3, 3, 4}, 1, rng);
  z.set_requires_grad(true);
  MemoryBank mem = MemoryBank::random(5, 4, rng);
  mem.items.set_requires_grad(true);
  FilterGenerator g = FilterGenerator::delta_init(4, 3, false, 0.3, rng);
  g.weights.set_requires_grad(true);
  Tensor ctx = randn({3, 3, 4}, 1, rng);
  Tensor dir = randn({3, 3, 4}, 1, rng);
  auto f = [&](const Tensor&) {
    auto field = generate_filters(read_memory(address_memory(z, mem), mem), g);
    return sum(mul(apply_filters(ctx, field), dir));
  };
  for (Tensor* x : {&z, &mem.items, &g.weights}) EXPECT_LT(finite_diff_check(f, *x).max_relative_error, 1e-6);
}

// ---------------------------------------------------------------------------
// Global-context propagation

TEST(Gcpn, PropagateStepMatchesOracle) {
  Rng rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t P = pick(rng, 1, 12), C = pick(rng, 1, 6);
    const auto h = oracle::random_buf(P * C, rng);
    const auto wt = oracle::random_buf(C * C, rng), wp = oracle::random_buf(C * C, rng),
               wg = oracle::random_buf(C * C, rng);
    GcpnParams p;
    p.w_theta = oracle::tensor({C, C}, wt);
    p.w_phi = oracle::tensor({C, C}, wp);
    p.w_g = oracle::tensor({C, C}, wg);
    p.w_o = Tensor({C, C});
    Tensor att;
    PropagationState next = propagate_step({oracle::tensor({P, C}, h)}, p, &att);
    oracle::Buf want_att;
    const auto want = oracle::propagate_step(h, P, C, wt, wp, wg, &want_att);
    ASSERT_LT(oracle::max_abs_diff(next.h, want), 1e-9);
    ASSERT_LT(oracle::max_abs_diff(att, want_att), 1e-9);
  }
}

TEST(Gcpn, PropagateIteratesStepsAndAddsResidual) {
  Rng rng(42);
  const std::size_t H = 3, W = 4, C = 5, P = H * W;
  GcpnParams p = GcpnParams::random(C, 3, 0.5, 0.5, rng);
  Tensor z = randn({H, W, C}, 1, rng);
  std::vector<Tensor> att;
  Tensor out = propagate(z, p, &att);
  ASSERT_EQ(att.size(), 3u);
  oracle::Buf h = oracle::values(z);
  const auto wt = oracle::values(p.w_theta), wp = oracle::values(p.w_phi), wg = oracle::values(p.w_g);
  for (int l = 0; l < 3; ++l) h = oracle::propagate_step(h, P, C, wt, wp, wg);
  oracle::Buf want = oracle::matmul(h, oracle::values(p.w_o), P, C, C);
  const auto zb = oracle::values(z);
  for (std::size_t i = 0; i < want.size(); ++i) want[i] += zb[i];
  EXPECT_LT(oracle::max_abs_diff(out, want), 1e-9);
}

TEST(Gcpn, AttentionRowsSumToOneAtEveryStep) {
  Rng rng(43);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t steps = pick(rng, 1, 4);
    GcpnParams p = GcpnParams::random(8, steps, 1.0, 0.1, rng);
    std::vector<Tensor> att;
    propagate(randn({4, 4, 8}, 3, rng), p, &att);
    ASSERT_EQ(att.size(), steps);
    for (const Tensor& a : att) {
      for (std::size_t r = 0; r < 16; ++r) {
        double s = 0;
        for (std::size_t c = 0; c < 16; ++c) s += a.data()[r * 16 + c];
        ASSERT_NEAR(s, 1, 1e-6);
      }
    }
  }
}

TEST(Gcpn, ZeroOutputProjectionIsIdentity) {
  Rng rng(44);
  GcpnParams p = GcpnParams::random(6, 2, 1.0, 0.0, rng);
  Tensor z = randn({4, 4, 6}, 1, rng);
  EXPECT_TRUE(bitwise_equal(propagate(z, p), z));
}

TEST(Gcpn, PositionCapIsEnforced) {
  Rng rng(45);
  GcpnParams p = GcpnParams::random(2, 1, 1.0, 0.1, rng);
  p.max_positions = 15;
  EXPECT_THROW(propagate(Tensor({4, 4, 2}), p), ShapeError);
  p.max_positions = 16;
  EXPECT_NO_THROW(propagate(Tensor({4, 4, 2}), p));
  ModelConfig c;
  c.frame_height = c.frame_width = 64;
  c.gcpn_max_positions = 255;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Gcpn, GradientsMatchFiniteDifferences) {
  Rng rng(46);
  GcpnParams p = GcpnParams::random(4, 2, 0.7, 0.5, rng);
  Tensor z = randn({3, 3, 4}, 1, rng);
  for (Tensor* t : {&z, &p.w_theta, &p.w_phi, &p.w_g, &p.w_o}) t->set_requires_grad(true);
  Tensor dir = randn({3, 3, 4}, 1, rng);
  auto f = [&](const Tensor&) { return sum(mul(propagate(z, p), dir)); };
  for (Tensor* t : {&z, &p.w_theta, &p.w_phi, &p.w_g, &p.w_o}) {
    EXPECT_LT(finite_diff_check(f, *t).max_relative_error, 1e-6);
  }
}

// ---------------------------------------------------------------------------
// Predictor

TEST(Predictor, ShapesAndGroups) {
  PredictorModel m(ModelConfig{}, 1);
  EXPECT_EQ(m.groups(), (std::vector<std::string>{"encoder", "gcpn", "memory", "filter_gen", "decoder"}));
  FrameSequence clip = random_clip(4, 2);
  EncoderOutput e = m.encode(clip);
  EXPECT_EQ(e.z.shape(), (Shape{4, 4, 16}));
  EXPECT_EQ(e.skip_full.shape(), (Shape{16, 16, 8}));
  EXPECT_EQ(e.skip_half.shape(), (Shape{8, 8, 8}));
  FusionTrace trace;
  Tensor y = m.predict_next(clip, &trace);
  EXPECT_EQ(y.shape(), (Shape{16, 16, 1}));
  for (real v : y.data()) {
    EXPECT_GE(v, -1);
    EXPECT_LE(v, 1);
  }
  EXPECT_EQ(trace.attention.size(), 2u);
  EXPECT_EQ(trace.address.w.shape(), (Shape{4, 4, 8}));
  EXPECT_EQ(trace.filters.filters.shape(), (Shape{4, 4, 16, 16, 3, 3}));
  EXPECT_THROW(m.predict_next(random_clip(3, 2)), ShapeError);
  EXPECT_THROW(m.predict_next(random_clip(4, 2, 8, 8)), ShapeError);
}

TEST(Predictor, ConfigValidation) {
  ModelConfig c;
  c.frame_height = 18;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig{};
  c.kernel_size = 4;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig{};
  c.channels = 7;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Predictor, PadWindowRepeatsFirstFrame) {
  FrameSequence clip;
  for (int i = 0; i < 6; ++i) clip.push_back(Tensor({1}, real(i)));
  auto ids = [](const FrameSequence& w) {
    std::vector<real> out;
    for (const auto& f : w.frames) out.push_back(f.item());
    return out;
  };
  EXPECT_EQ(ids(pad_window(clip, 0, 4)), (std::vector<real>{0, 0, 0, 0}));
  EXPECT_EQ(ids(pad_window(clip, 1, 4)), (std::vector<real>{0, 0, 0, 1}));
  EXPECT_EQ(ids(pad_window(clip, 3, 4)), (std::vector<real>{0, 1, 2, 3}));
  EXPECT_EQ(ids(pad_window(clip, 5, 4)), (std::vector<real>{2, 3, 4, 5}));
  EXPECT_EQ(ids(pad_window(clip, 5, 1)), (std::vector<real>{5}));
  EXPECT_THROW(pad_window(clip, 6, 4), std::out_of_range);
  EXPECT_THROW(pad_window(FrameSequence{}, 0, 4), std::invalid_argument);
}

TEST(Predictor, ReducesToEncoderDecoderBitwise) {
  ModelConfig full;
  PredictorModel model(full, 9);
  for (auto& p : model.parameters()) {
    if (p.name == "gcpn.w_o" || p.name == "lfmn.generator.weight") std::fill(p.value.data().begin(), p.value.data().end(), 0);
  }
  ModelConfig plain = full;
  plain.use_gcpn = plain.use_lfmn = false;
  PredictorModel base(plain, 9);
  for (std::uint64_t s = 0; s < 5; ++s) {
    FrameSequence clip = random_clip(4, 100 + s);
    EXPECT_TRUE(bitwise_equal(model.predict_next(clip), base.predict_next(clip)));
  }
}

TEST(Predictor, EmptyMemoryEqualsGcpnOnly) {
  ModelConfig n0;
  n0.memory_items = 0;
  ModelConfig gcpn_only;
  gcpn_only.use_lfmn = false;
  PredictorModel a(n0, 4), b(gcpn_only, 4);
  ASSERT_EQ(a.parameters().size(), b.parameters().size());
  FrameSequence clip = random_clip(4, 7);
  EXPECT_TRUE(bitwise_equal(a.predict_next(clip), b.predict_next(clip)));
}

TEST(Predictor, SharedGroupsStartIdentical) {
  ModelConfig full, plain;
  plain.use_gcpn = plain.use_lfmn = false;
  PredictorModel a(full, 3), b(plain, 3);
  for (const auto& p : b.parameters()) EXPECT_TRUE(bitwise_equal(p.value, a.parameter(p.name))) << p.name;
}

TEST(Predictor, EveryGroupReceivesGradient) {
  PredictorModel m(ModelConfig{}, 5);
  FrameSequence clip = random_clip(5, 8);
  FrameSequence window = pad_window(clip, 3, 4);
  total_loss(m.predict_next(window), clip[4], LossConfig{}).backward();
  std::map<std::string, double> norm;
  for (const auto& p : m.parameters()) {
    ASSERT_TRUE(p.value.has_grad()) << p.name;
    for (real g : p.value.grad()) norm[p.group] += std::abs(g);
  }
  for (const auto& g : m.groups()) EXPECT_GT(norm[g], 0) << g;
}

TEST(Predictor, RolloutWindowTrace) {
  ModelConfig c;
  PredictorModel m(c, 2);
  FrameSequence seed = random_clip(4, 9);
  RolloutTrace trace;
  FrameSequence out = rollout(m, seed, 15, &trace);
  ASSERT_EQ(out.size(), 15u);
  ASSERT_EQ(trace.size(), 15u);
  // Window of step s holds history frames s .. s+3; history is seed then predictions.
  for (std::size_t s = 0; s < 15; ++s) {
    ASSERT_EQ(trace[s].size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
      const std::size_t h = s + i;
      const FrameSource want = h < 4 ? FrameSource{false, h} : FrameSource{true, h - 4};
      EXPECT_EQ(trace[s][i], want) << "step " << s << " slot " << i;
    }
  }
}

TEST(Predictor, RolloutShortSeedIsPadded) {
  PredictorModel m(ModelConfig{}, 2);
  FrameSequence seed = random_clip(2, 10);
  RolloutTrace trace;
  rollout(m, seed, 3, &trace);
  EXPECT_EQ(trace[0], (std::vector<FrameSource>{{false, 0}, {false, 0}, {false, 0}, {false, 1}}));
  EXPECT_EQ(trace[2], (std::vector<FrameSource>{{false, 0}, {false, 1}, {true, 0}, {true, 1}}));
}

TEST(Predictor, RolloutPrefixAndFirstStep) {
  PredictorModel m(ModelConfig{}, 6);
  FrameSequence seed = random_clip(4, 11);
  FrameSequence long_run = rollout(m, seed, 15);
  FrameSequence short_run = rollout(m, seed, 5);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_TRUE(bitwise_equal(long_run[i], short_run[i]));
  EXPECT_TRUE(bitwise_equal(long_run[0], m.predict_next(seed)));
  for (const auto& f : long_run.frames) {
    for (real v : f.data()) {
      ASSERT_TRUE(std::isfinite(v));
      ASSERT_LE(std::abs(v), 1);
    }
  }
  EXPECT_THROW(rollout(m, seed, 0), std::invalid_argument);
}
