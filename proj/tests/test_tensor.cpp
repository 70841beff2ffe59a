// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "oracles.hpp"
#include "vp/errors.hpp"
#include "vp/gradcheck.hpp"
#include "vp/ops.hpp"
#include "vp/random.hpp"

using namespace vp;

namespace {

constexpr double kOracleTol = 1e-9;
constexpr double kGradTol = 1e-6;

// Projects an op output onto a fixed random direction so any op becomes a scalar.
Tensor project(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(y, randn(y.shape(), 1, rng)));
}

Tensor leaf(Shape shape, Rng& rng, real std = 1) {
  Tensor t = randn(std::move(shape), std, rng);
  t.set_requires_grad(true);
  return t;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

}  // namespace

TEST(Tensor, ConstructionAndAccess) {
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_EQ(t.dim(1), 3u);
  for (real v : t.data()) EXPECT_EQ(v, 1.5);
  EXPECT_THROW(t.dim(2), ShapeError);
  EXPECT_THROW(t.item(), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<real>{1, 2, 3}), ShapeError);
  EXPECT_EQ(Tensor::scalar(4).item(), 4);
}

TEST(Tensor, HandlesAliasAndDetachCopies) {
  Tensor a({3}, 1);
  Tensor b = a;
  b.data()[0] = 7;
  EXPECT_EQ(a.data()[0], 7);
  EXPECT_TRUE(a.same_storage(b));
  Tensor c = a.detach();
  c.data()[0] = 9;
  EXPECT_EQ(a.data()[0], 7);
  EXPECT_FALSE(c.same_storage(a));
}

TEST(Tensor, BackwardAccumulatesThroughSharedInputs) {
  Tensor x({2}, std::vector<real>{2, -3});
  x.set_requires_grad(true);
  // f = sum(x*x) + sum(x): df/dx = 2x + 1
  Tensor f = add(sum(mul(x, x)), sum(x));
  f.backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 5);
  EXPECT_DOUBLE_EQ(x.grad()[1], -5);
  // a second sweep accumulates
  add(sum(mul(x, x)), sum(x)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 10);
  x.zero_grad();
  EXPECT_DOUBLE_EQ(x.grad()[0], 0);
}

TEST(Tensor, NoGradGuardSkipsRecording) {
  Tensor x({2}, 1.0);
  x.set_requires_grad(true);
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    EXPECT_TRUE(mul(x, x).is_leaf());
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_FALSE(mul(x, x).is_leaf());
}

TEST(Tensor, DeepGraphBackwardDoesNotOverflowOrLeak) {
  Tensor x({4}, 0.5);
  x.set_requires_grad(true);
  Tensor y = x;
  for (int i = 0; i < 5000; ++i) y = scale(y, 1.0);
  sum(y).backward();
  for (real g : x.grad()) EXPECT_DOUBLE_EQ(g, 1);
}

TEST(Ops, ElementwiseValues) {
  Tensor a({3}, std::vector<real>{-2, 0.5, 3});
  Tensor b({3}, std::vector<real>{1, 1, -1});
  EXPECT_EQ(oracle::values(add(a, b)), (oracle::Buf{-1, 1.5, 2}));
  EXPECT_EQ(oracle::values(sub(a, b)), (oracle::Buf{-3, -0.5, 4}));
  EXPECT_EQ(oracle::values(mul(a, b)), (oracle::Buf{-2, 0.5, -3}));
  EXPECT_EQ(oracle::values(abs(a)), (oracle::Buf{2, 0.5, 3}));
  EXPECT_EQ(oracle::values(leaky_relu(a, 0.2)), (oracle::Buf{-0.4, 0.5, 3}));
  EXPECT_DOUBLE_EQ(mean(a).item(), 0.5);
  EXPECT_THROW(add(a, Tensor({2})), ShapeError);
}

TEST(Ops, SoftmaxRowsSumToOne) {
  Rng rng(3);
  Tensor x = randn({5, 7}, 30, rng);
  Tensor s = softmax_lastdim(x);
  for (std::size_t r = 0; r < 5; ++r) {
    double t = 0;
    for (std::size_t c = 0; c < 7; ++c) t += s.data()[r * 7 + c];
    EXPECT_NEAR(t, 1, 1e-12);
  }
}

TEST(Ops, MatmulMatchesOracle) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = pick(rng, 1, 6), k = pick(rng, 1, 6), m = pick(rng, 1, 6);
    const auto a = oracle::random_buf(n * k, rng), b = oracle::random_buf(k * m, rng);
    Tensor out = matmul(oracle::tensor({n, k}, a), oracle::tensor({k, m}, b));
    ASSERT_LT(oracle::max_abs_diff(out, oracle::matmul(a, b, n, k, m)), kOracleTol);
  }
}

TEST(Ops, Conv2dMatchesOracle) {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t H = pick(rng, 3, 8), W = pick(rng, 3, 8), Ci = pick(rng, 1, 3), Co = pick(rng, 1, 3);
    const std::size_t K = pick(rng, 0, 1) ? 3 : 1;
    const int stride = static_cast<int>(pick(rng, 1, 2)), pad = static_cast<int>(pick(rng, 0, 1));
    const auto in = oracle::random_buf(H * W * Ci, rng), k = oracle::random_buf(Co * Ci * K * K, rng);
    std::size_t Ho, Wo;
    const auto want = oracle::conv2d(in, H, W, Ci, k, Co, K, stride, pad, Ho, Wo);
    Tensor out = conv2d(oracle::tensor({H, W, Ci}, in), oracle::tensor({Co, Ci, K, K}, k), stride, pad);
    ASSERT_EQ(out.shape(), (Shape{Ho, Wo, Co}));
    ASSERT_LT(oracle::max_abs_diff(out, want), kOracleTol);
  }
}

TEST(Ops, ConvTranspose2dMatchesOracle) {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t H = pick(rng, 2, 6), W = pick(rng, 2, 6), Ci = pick(rng, 1, 3), Co = pick(rng, 1, 3);
    const int stride = static_cast<int>(pick(rng, 1, 2));
    const int output_pad = stride == 2 ? static_cast<int>(pick(rng, 0, 1)) : 0;
    const auto in = oracle::random_buf(H * W * Ci, rng), k = oracle::random_buf(Ci * Co * 9, rng);
    std::size_t Ho, Wo;
    const auto want = oracle::conv_transpose2d(in, H, W, Ci, k, Co, 3, stride, 1, output_pad, Ho, Wo);
    Tensor out = conv_transpose2d(oracle::tensor({H, W, Ci}, in), oracle::tensor({Ci, Co, 3, 3}, k), stride, 1,
                                  output_pad);
    ASSERT_EQ(out.shape(), (Shape{Ho, Wo, Co}));
    ASSERT_LT(oracle::max_abs_diff(out, want), kOracleTol);
  }
}

TEST(Ops, ConvTransposeIsAdjointOfConv) {
  // <conv(x), y> == <x, convT(y)> for the same kernel read in swapped layout.
  Rng rng(14);
  const std::size_t H = 8, W = 8, Ci = 2, Co = 3;
  Tensor x = randn({H, W, Ci}, 1, rng);
  Tensor k = randn({Co, Ci, 3, 3}, 1, rng);
  Tensor y = randn({H / 2, W / 2, Co}, 1, rng);
  Tensor kt({Co, Ci, 3, 3});
  // conv kernel Co x Ci x k x k is already the Cin x Cout layout of the transpose (Cin = Co).
  std::copy(k.data().begin(), k.data().end(), kt.data().begin());
  const double lhs = sum(mul(conv2d(x, k, 2, 1), y)).item();
  const double rhs = sum(mul(x, conv_transpose2d(y, kt, 2, 1, 1))).item();
  EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(Ops, DynamicFilterMatchesOracle) {
  Rng rng(15);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t H = pick(rng, 1, 6), W = pick(rng, 1, 6), C = pick(rng, 1, 3), Co = pick(rng, 1, 3);
    const std::size_t K = 2 * pick(rng, 0, 2) + 1;
    const auto in = oracle::random_buf(H * W * C, rng), f = oracle::random_buf(H * W * Co * C * K * K, rng);
    Tensor out = dynamic_filter(oracle::tensor({H, W, C}, in), oracle::tensor({H, W, Co, C, K, K}, f));
    ASSERT_LT(oracle::max_abs_diff(out, oracle::dynamic_filter(in, H, W, C, f, Co, K)), kOracleTol);

    const auto fd = oracle::random_buf(H * W * C * K * K, rng);
    Tensor dw = dynamic_filter_depthwise(oracle::tensor({H, W, C}, in), oracle::tensor({H, W, C, K, K}, fd));
    ASSERT_LT(oracle::max_abs_diff(dw, oracle::dynamic_filter_depthwise(in, H, W, C, fd, K)), kOracleTol);
  }
}

TEST(Ops, BackwardDiffValues) {
  // 3 x 3 x 1 ramp: x[u, v] = 3u + v
  Tensor x({3, 3, 1}, std::vector<real>{0, 1, 2, 3, 4, 5, 6, 7, 8});
  EXPECT_EQ(oracle::values(backward_diff(x, 0)), (oracle::Buf{3, 3, 3, 3}));
  EXPECT_EQ(oracle::values(backward_diff(x, 1)), (oracle::Buf{1, 1, 1, 1}));
  EXPECT_THROW(backward_diff(x, 2), ShapeError);
  EXPECT_THROW(backward_diff(Tensor({1, 3, 1}), 0), ShapeError);
}

TEST(Ops, ShapeContractsAreEnforced) {
  EXPECT_THROW(conv2d(Tensor({4, 4, 2}), Tensor({1, 3, 3, 3}), 1, 1), ShapeError);
  EXPECT_THROW(conv2d(Tensor({4, 4, 1}), Tensor({1, 1, 2, 2}), 1, 1), ShapeError);
  EXPECT_THROW(dynamic_filter(Tensor({4, 4, 1}), Tensor({4, 3, 1, 1, 3, 3})), ShapeError);
  EXPECT_THROW(matmul(Tensor({2, 3}), Tensor({2, 3})), ShapeError);
  EXPECT_THROW(add_bias(Tensor({2, 3}), Tensor({2})), ShapeError);
  EXPECT_THROW(concat_lastdim({Tensor({2, 3}), Tensor({3, 3})}), ShapeError);
  EXPECT_THROW(reshape(Tensor({2, 3}), {4}), ShapeError);
}

TEST(Ops, GradientsMatchFiniteDifferences) {
  Rng rng(21);
  Tensor a = leaf({3, 4}, rng), b = leaf({4, 2}, rng);
  struct Case {
    const char* name;
    ScalarFn f;
    Tensor x;
  };
  Tensor img = leaf({5, 5, 2}, rng), ker = leaf({3, 2, 3, 3}, rng), tker = leaf({2, 3, 3, 3}, rng);
  Tensor field = leaf({5, 5, 3, 2, 3, 3}, rng), dfield = leaf({5, 5, 2, 3, 3}, rng);
  Tensor bias = leaf({2}, rng);
  std::vector<Case> cases{
      {"matmul/a", [&](const Tensor&) { return project(matmul(a, b), 1); }, a},
      {"matmul/b", [&](const Tensor&) { return project(matmul(a, b), 1); }, b},
      {"transpose", [&](const Tensor& x) { return project(transpose(x), 2); }, a},
      {"softmax", [&](const Tensor& x) { return project(softmax_lastdim(x), 3); }, a},
      {"normalize", [&](const Tensor& x) { return project(normalize_lastdim(x), 4); }, a},
      {"tanh", [&](const Tensor& x) { return project(tanh(x), 5); }, a},
      {"concat", [&](const Tensor& x) { return project(concat_lastdim({x, x, a}), 6); }, a},
      {"add_bias", [&](const Tensor&) { return project(add_bias(img, bias), 7); }, bias},
      {"conv2d/x", [&](const Tensor&) { return project(conv2d(img, ker, 2, 1), 8); }, img},
      {"conv2d/k", [&](const Tensor&) { return project(conv2d(img, ker, 1, 1), 9); }, ker},
      {"convT/x", [&](const Tensor&) { return project(conv_transpose2d(img, tker, 2, 1, 1), 10); }, img},
      {"convT/k", [&](const Tensor&) { return project(conv_transpose2d(img, tker, 2, 1, 1), 11); }, tker},
      {"dynamic/x", [&](const Tensor&) { return project(dynamic_filter(img, field), 12); }, img},
      {"dynamic/f", [&](const Tensor&) { return project(dynamic_filter(img, field), 13); }, field},
      {"depthwise/x", [&](const Tensor&) { return project(dynamic_filter_depthwise(img, dfield), 14); }, img},
      {"depthwise/f", [&](const Tensor&) { return project(dynamic_filter_depthwise(img, dfield), 15); }, dfield},
      {"backward_diff", [&](const Tensor& x) { return project(backward_diff(x, 0), 16); }, img},
      {"reshape", [&](const Tensor& x) { return project(reshape(x, {2, 6}), 17); }, a},
      {"cosine", [&](const Tensor& x) { return cosine_sim(reshape(x, {12}), reshape(mul(a, a), {12})); }, a},
  };
  for (auto& c : cases) {
    auto r = finite_diff_check(c.f, c.x);
    EXPECT_LT(r.max_relative_error, kGradTol) << c.name;
    EXPECT_GT(r.checked, 0u) << c.name;
  }
}

TEST(Ops, KinkProbesAreSkipped) {
  // abs at exactly 0: the +/- probes take different branches.
  Tensor x({3}, std::vector<real>{0, 1, -1});
  x.set_requires_grad(true);
  auto r = finite_diff_check([](const Tensor& t) { return sum(abs(t)); }, x);
  EXPECT_EQ(r.skipped_at_kinks, 1u);
  EXPECT_EQ(r.checked, 2u);
  EXPECT_LT(r.max_relative_error, kGradTol);
}

TEST(Ops, CorruptBackwardIsDetected) {
  Rng rng(22);
  Tensor img = leaf({4, 4, 1}, rng), ker = leaf({1, 1, 3, 3}, rng);
  debug::set_corrupt_backward(true);
  auto r = finite_diff_check([&](const Tensor&) { return project(conv2d(img, ker, 1, 1), 1); }, ker);
  debug::set_corrupt_backward(false);
  EXPECT_GT(r.max_relative_error, 1e-3);
}

TEST(Gradcheck, SamplingAndFivePoint) {
  Rng rng(23);
  Tensor x = leaf({40}, rng);
  GradCheckOptions opt;
  opt.max_coordinates = 10;
  opt.sample_seed = 5;
  opt.five_point = true;
  opt.eps = 1e-3;
  auto r = finite_diff_check([](const Tensor& t) { return sum(tanh(mul(t, t))); }, x, opt);
  EXPECT_EQ(r.checked + r.skipped_at_kinks, 10u);
  EXPECT_LT(r.max_relative_error, 1e-5);
  Tensor y = mul(x, x);
  EXPECT_THROW(finite_diff_check([](const Tensor& t) { return sum(t); }, y), std::invalid_argument);
}
