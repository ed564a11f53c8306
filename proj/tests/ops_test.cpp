#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "test_util.hpp"
#include "tsrcan/ops.hpp"

using oracle::Dims4;
using tsr::Shape;
using tsr::Tensor;
using tsr::Tensor64;
using testutil::kink_free_tensor;
using testutil::random_tensor;
using testutil::to_double;

namespace {

Dims4 dims(const Shape& s) { return {s[0], s[1], s[2], s[3]}; }

double max_abs_diff(const std::vector<double>& a, std::span<const float> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

using LibForward = std::function<Tensor64(const std::vector<Tensor64>&)>;
using OracleForward = std::function<std::vector<double>(const std::vector<std::vector<double>>&)>;

// Analytic gradients of sum(R * op(inputs)) from the double-precision tape,
// against central differences of the same projection through the oracle.
double gradcheck(std::vector<Tensor64> inputs, const LibForward& lib, const OracleForward& ref,
                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  auto out = lib(inputs);
  auto r = random_tensor<double>(out.shape(), rng);
  tsr::backward(tsr::sum(tsr::mul(out, r)));

  std::vector<std::vector<double>> flat;
  for (const auto& t : inputs) flat.push_back(to_double(t));
  const auto rv = to_double(r);
  double worst = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto f = [&](const std::vector<double>& xk) {
      auto args = flat;
      args[k] = xk;
      const auto y = ref(args);
      double s = 0;
      for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * rv[i];
      return s;
    };
    const auto numeric = testutil::numeric_grad(f, flat[k], 1e-3);
    const std::vector<double> analytic(inputs[k].grad().begin(), inputs[k].grad().end());
    worst = std::max(worst, testutil::max_rel_err(analytic, numeric, 1e-6));
  }
  return worst;
}

constexpr double kOpGradTol = 1e-4;

}  // namespace

// ---------------------------------------------------------------------------
// conv2d

TEST(Conv2d, AllOnesGivesNine) {
  Tensor x(Shape{1, 1, 3, 3}, 1.0f), w(Shape{1, 1, 3, 3}, 1.0f), b(Shape{1}, 0.0f);
  auto y = tsr::conv2d(x, w, b, 1, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_FLOAT_EQ(y[0], 9.0f);
}

TEST(Conv2d, IdentityKernelIsExactIdentity) {
  std::mt19937_64 rng(1);
  for (int k : {1, 3, 5, 7}) {
    auto x = random_tensor(Shape{2, 3, 6, 7}, rng);
    Tensor w(Shape{3, 3, static_cast<std::size_t>(k), static_cast<std::size_t>(k)});
    for (std::size_t c = 0; c < 3; ++c) w.at({c, c, std::size_t(k / 2), std::size_t(k / 2)}) = 1.0f;
    auto y = tsr::conv2d(x, w, Tensor(Shape{3}), 1, (k - 1) / 2);
    EXPECT_EQ(y.values(), x.values()) << "kernel " << k;
  }
}

TEST(Conv2d, MatchesDirectSummation) {
  std::mt19937_64 rng(2);
  auto x = random_tensor(Shape{1, 2, 5, 5}, rng);
  auto w = random_tensor(Shape{3, 2, 3, 3}, rng);
  auto b = random_tensor(Shape{3}, rng);
  for (auto [stride, pad] : {std::pair{1, 0}, {1, 1}, {2, 1}, {2, 0}}) {
    Dims4 od{};
    const auto ref = oracle::conv2d(to_double(x), dims(x.shape()), to_double(w), dims(w.shape()),
                                    to_double(b), stride, pad, &od);
    auto y = tsr::conv2d(x, w, b, stride, pad);
    ASSERT_EQ(y.shape(), (Shape{od.n, od.c, od.h, od.w}));
    EXPECT_LT(max_abs_diff(ref, y.data()), 1e-6);
  }
}

TEST(Conv2d, ChannelMismatchRejected) {
  Tensor x(Shape{1, 2, 4, 4}), w(Shape{1, 3, 3, 3}), b(Shape{1});
  EXPECT_THROW(tsr::conv2d(x, w, b, 1, 1), tsr::DimensionError);
  EXPECT_THROW(tsr::conv2d(x, Tensor(Shape{1, 2, 7, 7}), b, 1, 0), tsr::DimensionError);
}

TEST(Conv2d, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  for (auto [stride, pad] : {std::pair{1, 1}, {2, 3}}) {
    const std::size_t k = stride == 1 ? 3 : 7;
    auto x = random_tensor<double>(Shape{2, 2, 6, 6}, rng);
    auto w = random_tensor<double>(Shape{3, 2, k, k}, rng);
    auto b = random_tensor<double>(Shape{3}, rng);
    const Dims4 xd = dims(x.shape()), wd = dims(w.shape());
    const double err = gradcheck(
        {x, w, b}, [=](const auto& in) { return tsr::conv2d(in[0], in[1], in[2], stride, pad); },
        [=](const auto& in) { return oracle::conv2d(in[0], xd, in[1], wd, in[2], stride, pad); }, 4);
    EXPECT_LT(err, kOpGradTol);
  }
}

// ---------------------------------------------------------------------------
// conv_transpose2d

TEST(ConvTranspose2d, StrideTwoScatter) {
  Tensor x(Shape{1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  auto y = tsr::conv_transpose2d(x, Tensor(Shape{1, 1, 1, 1}, 1.0f), Tensor(Shape{1}), 2, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
  EXPECT_EQ(y.values(), (std::vector<float>{1, 0, 2, 0, 0, 0, 3, 0, 4}));
}

TEST(ConvTranspose2d, UnitKernelScales) {
  std::mt19937_64 rng(5);
  auto x = random_tensor(Shape{1, 1, 4, 3}, rng);
  auto y = tsr::conv_transpose2d(x, Tensor(Shape{1, 1, 1, 1}, 2.5f), Tensor(Shape{1}), 1, 0);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_FLOAT_EQ(y[i], 2.5f * x[i]);
}

TEST(ConvTranspose2d, MatchesScatterAccumulate) {
  std::mt19937_64 rng(6);
  auto x = random_tensor(Shape{2, 3, 4, 5}, rng);
  auto w = random_tensor(Shape{3, 2, 8, 8}, rng);
  auto b = random_tensor(Shape{2}, rng);
  for (auto [stride, pad] : {std::pair{4, 2}, {1, 0}, {2, 1}}) {
    Dims4 od{};
    const auto ref = oracle::conv_transpose2d(to_double(x), dims(x.shape()), to_double(w),
                                              dims(w.shape()), to_double(b), stride, pad, &od);
    auto y = tsr::conv_transpose2d(x, w, b, stride, pad);
    ASSERT_EQ(y.shape(), (Shape{od.n, od.c, od.h, od.w}));
    EXPECT_LT(max_abs_diff(ref, y.data()), 1e-5);
  }
}

TEST(ConvTranspose2d, IsAdjointOfConv2d) {
  // <conv(u), v> == <u, conv_transpose(v)> with the same kernel and zero bias.
  std::mt19937_64 rng(7);
  auto u = random_tensor<double>(Shape{1, 2, 8, 8}, rng);
  auto w = random_tensor<double>(Shape{3, 2, 4, 4}, rng);
  auto y = tsr::conv2d(u, w, Tensor64(Shape{3}), 2, 1);
  auto v = random_tensor<double>(y.shape(), rng);
  auto back = tsr::conv_transpose2d(v, w, Tensor64(Shape{2}), 2, 1);
  ASSERT_EQ(back.shape(), u.shape());
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < y.numel(); ++i) lhs += y[i] * v[i];
  for (std::size_t i = 0; i < u.numel(); ++i) rhs += u[i] * back[i];
  EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(ConvTranspose2d, NonPositiveOutputRejected) {
  Tensor x(Shape{1, 1, 1, 1}), w(Shape{1, 1, 2, 2}), b(Shape{1});
  EXPECT_THROW(tsr::conv_transpose2d(x, w, b, 1, 1), tsr::DimensionError);
}

TEST(ConvTranspose2d, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  auto x = random_tensor<double>(Shape{1, 3, 3, 4}, rng);
  auto w = random_tensor<double>(Shape{3, 2, 8, 8}, rng);
  auto b = random_tensor<double>(Shape{2}, rng);
  const Dims4 xd = dims(x.shape()), wd = dims(w.shape());
  const double err = gradcheck(
      {x, w, b}, [](const auto& in) { return tsr::conv_transpose2d(in[0], in[1], in[2], 4, 2); },
      [=](const auto& in) { return oracle::conv_transpose2d(in[0], xd, in[1], wd, in[2], 4, 2); }, 9);
  EXPECT_LT(err, kOpGradTol);
}

// ---------------------------------------------------------------------------
// maxpool2d

TEST(MaxPool2d, PicksWindowMax) {
  Tensor x(Shape{1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  auto y = tsr::maxpool2d(x, 2, 2);
  ASSERT_EQ(y.numel(), 1u);
  EXPECT_EQ(y[0], 4.0f);
}

TEST(MaxPool2d, TiesRouteGradientToFirstElement) {
  Tensor x(Shape{1, 1, 2, 2}, 3.0f);
  x.set_requires_grad(true);
  auto y = tsr::maxpool2d(x, 2, 2);
  EXPECT_EQ(y[0], 3.0f);
  tsr::backward(tsr::sum(y));
  EXPECT_EQ(std::vector<float>(x.grad().begin(), x.grad().end()), (std::vector<float>{1, 0, 0, 0}));
}

TEST(MaxPool2d, MatchesWindowScan) {
  std::mt19937_64 rng(10);
  auto x = random_tensor(Shape{2, 3, 9, 8}, rng);
  for (auto [size, stride, pad] : {std::tuple{3, 2, 1}, {2, 2, 0}, {3, 1, 0}}) {
    const auto ref = oracle::maxpool2d(to_double(x), dims(x.shape()), size, stride, pad);
    auto y = tsr::maxpool2d(x, size, stride, pad);
    ASSERT_EQ(y.numel(), ref.size());
    EXPECT_EQ(max_abs_diff(ref, y.data()), 0.0);
  }
}

TEST(MaxPool2d, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  auto x = kink_free_tensor<double>(Shape{1, 2, 6, 6}, rng);
  const Dims4 xd = dims(x.shape());
  const double err = gradcheck(
      {x}, [](const auto& in) { return tsr::maxpool2d(in[0], 3, 2, 1); },
      [=](const auto& in) { return oracle::maxpool2d(in[0], xd, 3, 2, 1); }, 12);
  EXPECT_LT(err, kOpGradTol);
}

// ---------------------------------------------------------------------------
// batchnorm2d

TEST(BatchNorm2d, StandardisedInputPassesThrough) {
  // Each channel holds +-1 in equal counts: mean 0, biased variance 1.
  Tensor x(Shape{2, 2, 2, 2});
  for (std::size_t i = 0; i < x.numel(); ++i) x[i] = (i % 2) ? 1.0f : -1.0f;
  Tensor g(Shape{2}, 1.0f), b(Shape{2}, 0.0f), rm(Shape{2}, 0.0f), rv(Shape{2}, 1.0f);
  auto y = tsr::batchnorm2d(x, g, b, rm, rv, tsr::NormMode::Train);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_LT(std::abs(y[i] - x[i]), 1e-4);
}

TEST(BatchNorm2d, ZeroGammaYieldsBeta) {
  std::mt19937_64 rng(12);
  auto x = random_tensor(Shape{2, 3, 4, 4}, rng);
  Tensor g(Shape{3}, 0.0f), b(Shape{3}, std::vector<float>{0.5f, -1.0f, 2.0f});
  Tensor rm(Shape{3}), rv(Shape{3}, 1.0f);
  auto y = tsr::batchnorm2d(x, g, b, rm, rv, tsr::NormMode::Train);
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_EQ(y[i], b[(i / 16) % 3]);
}

TEST(BatchNorm2d, RunningStatisticsUseMomentum) {
  Tensor x(Shape{1, 1, 1, 4}, std::vector<float>{1, 2, 3, 4});
  Tensor g(Shape{1}, 1.0f), b(Shape{1}), rm(Shape{1}, 0.0f), rv(Shape{1}, 1.0f);
  tsr::batchnorm2d(x, g, b, rm, rv, tsr::NormMode::Train);
  EXPECT_NEAR(rm[0], 0.1 * 2.5, 1e-6);
  EXPECT_NEAR(rv[0], 0.9 + 0.1 * (5.0 / 3.0), 1e-6);  // unbiased batch variance 5/3
  auto y = tsr::batchnorm2d(x, g, b, rm, rv, tsr::NormMode::Eval);
  EXPECT_NEAR(y[0], (1 - rm[0]) / std::sqrt(rv[0] + 1e-5), 1e-6);
}

TEST(BatchNorm2d, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(13);
  auto x = random_tensor<double>(Shape{2, 3, 3, 3}, rng);
  auto g = random_tensor<double>(Shape{3}, rng, 0.5, 1.5);
  auto b = random_tensor<double>(Shape{3}, rng);
  const Dims4 xd = dims(x.shape());
  const double err = gradcheck(
      {x, g, b},
      [](const auto& in) {
        Tensor64 rm(Shape{3}), rv(Shape{3}, 1.0);
        return tsr::batchnorm2d(in[0], in[1], in[2], rm, rv, tsr::NormMode::Train);
      },
      [=](const auto& in) { return oracle::batchnorm_train(in[0], xd, in[1], in[2]); }, 14);
  EXPECT_LT(err, kOpGradTol);
}

// ---------------------------------------------------------------------------
// elementwise, attention helpers

TEST(Elementwise, SigmoidOfZeroIsHalf) {
  EXPECT_EQ(tsr::sigmoid(Tensor(Shape{1}, 0.0f))[0], 0.5f);
}

TEST(Elementwise, ScaleChannelsWithOnesIsIdentity) {
  std::mt19937_64 rng(15);
  auto x = random_tensor(Shape{2, 3, 4, 5}, rng);
  auto y = tsr::scale_channels(x, Tensor(Shape{2, 3, 1, 1}, 1.0f));
  EXPECT_EQ(y.values(), x.values());
  EXPECT_THROW(tsr::scale_channels(x, Tensor(Shape{2, 3, 2, 1}, 1.0f)), tsr::DimensionError);
}

TEST(Elementwise, ShapeMismatchRejected) {
  EXPECT_THROW(tsr::add(Tensor(Shape{2, 3}), Tensor(Shape{3, 2})), tsr::DimensionError);
  EXPECT_THROW(tsr::mul(Tensor(Shape{2}), Tensor(Shape{3})), tsr::DimensionError);
}

TEST(Elementwise, ReluBackwardGatesOnPositiveInput) {
  Tensor x(Shape{4}, std::vector<float>{-1.0f, 0.0f, 0.5f, 2.0f});
  x.set_requires_grad(true);
  tsr::backward(tsr::sum(tsr::relu(x)));
  EXPECT_EQ(std::vector<float>(x.grad().begin(), x.grad().end()), (std::vector<float>{0, 0, 1, 1}));
}

TEST(Elementwise, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(16);
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  {
    auto x = kink_free_tensor<double>(Shape{2, 3, 2, 2}, rng);
    const double err = gradcheck(
        {x}, [](const auto& in) { return tsr::relu(tsr::sigmoid(in[0])); },
        [&](const auto& in) {
          std::vector<double> y(in[0].size());
          for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::max(0.0, sig(in[0][i]));
          return y;
        }, 17);
    EXPECT_LT(err, kOpGradTol) << "relu(sigmoid)";
  }
  {
    auto x = kink_free_tensor<double>(Shape{2, 3, 2, 2}, rng);
    const double err = gradcheck(
        {x}, [](const auto& in) { return tsr::sigmoid(tsr::relu(in[0])); },
        [&](const auto& in) {
          std::vector<double> y(in[0].size());
          for (std::size_t i = 0; i < y.size(); ++i) y[i] = sig(std::max(0.0, in[0][i]));
          return y;
        }, 18);
    EXPECT_LT(err, kOpGradTol) << "sigmoid(relu)";
  }
  {
    auto x = random_tensor<double>(Shape{2, 3, 2, 2}, rng);
    auto y = random_tensor<double>(Shape{2, 3, 2, 2}, rng);
    const double err = gradcheck(
        {x, y}, [](const auto& in) { return tsr::mul(tsr::add(in[0], in[1]), in[1]); },
        [](const auto& in) {
          std::vector<double> out(in[0].size());
          for (std::size_t i = 0; i < out.size(); ++i) out[i] = (in[0][i] + in[1][i]) * in[1][i];
          return out;
        }, 19);
    EXPECT_LT(err, kOpGradTol) << "add/mul";
  }
  {
    auto x = random_tensor<double>(Shape{2, 3, 4, 5}, rng);
    auto s = random_tensor<double>(Shape{2, 3, 1, 1}, rng);
    const double err = gradcheck(
        {x, s}, [](const auto& in) { return tsr::scale_channels(in[0], in[1]); },
        [](const auto& in) {
          std::vector<double> out(in[0].size());
          for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[0][i] * in[1][i / 20];
          return out;
        }, 20);
    EXPECT_LT(err, kOpGradTol) << "scale_channels";
  }
}

TEST(GlobalAvgPool, Examples) {
  EXPECT_FLOAT_EQ(tsr::global_avg_pool(Tensor(Shape{1, 1, 3, 2}, 0.7f))[0], 0.7f);
  Tensor x(Shape{1, 1, 2, 2}, std::vector<float>{1, 3, 5, 7});
  EXPECT_FLOAT_EQ(tsr::global_avg_pool(x)[0], 4.0f);
}

TEST(GlobalAvgPool, MatchesSummationAndGradient) {
  std::mt19937_64 rng(21);
  auto x = random_tensor(Shape{2, 3, 5, 4}, rng);
  auto y = tsr::global_avg_pool(x);
  ASSERT_EQ(y.shape(), (Shape{2, 3, 1, 1}));
  for (std::size_t p = 0; p < 6; ++p) {
    double s = 0;
    for (std::size_t q = 0; q < 20; ++q) s += x[p * 20 + q];
    EXPECT_NEAR(y[p], s / 20.0, 1e-6);
  }
  auto xd = random_tensor<double>(Shape{2, 3, 5, 4}, rng);
  const double err = gradcheck(
      {xd}, [](const auto& in) { return tsr::global_avg_pool(in[0]); },
      [](const auto& in) {
        std::vector<double> out(6, 0.0);
        for (std::size_t i = 0; i < in[0].size(); ++i) out[i / 20] += in[0][i] / 20.0;
        return out;
      }, 22);
  EXPECT_LT(err, kOpGradTol);
}

// ---------------------------------------------------------------------------
// concat / slice / depth_to_space

TEST(Concat, TextureAndRgbGiveKPlusThree) {
  auto y = tsr::concat_channels(Tensor(Shape{1, 3, 4, 4}), Tensor(Shape{1, 256, 4, 4}));
  EXPECT_EQ(y.shape(), (Shape{1, 259, 4, 4}));
}

TEST(Concat, EmptyChannelOperandIsNeutral) {
  std::mt19937_64 rng(23);
  auto x = random_tensor(Shape{2, 3, 4, 4}, rng);
  auto y = tsr::concat_channels(x, Tensor(Shape{2, 0, 4, 4}));
  EXPECT_EQ(y.shape(), x.shape());
  EXPECT_EQ(y.values(), x.values());
}

TEST(Concat, SliceBackReproducesInputsExactly) {
  std::mt19937_64 rng(24);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t ca = 1 + rng() % 5, cb = 1 + rng() % 5, n = 1 + rng() % 3;
    auto a = random_tensor(Shape{n, ca, 3, 4}, rng);
    auto b = random_tensor(Shape{n, cb, 3, 4}, rng);
    auto y = tsr::concat_channels(a, b);
    EXPECT_EQ(tsr::slice_channels(y, 0, ca).values(), a.values());
    EXPECT_EQ(tsr::slice_channels(y, ca, ca + cb).values(), b.values());
  }
}

TEST(Concat, SpatialMismatchRejected) {
  EXPECT_THROW(tsr::concat_channels(Tensor(Shape{1, 3, 4, 4}), Tensor(Shape{1, 3, 4, 5})),
               tsr::DimensionError);
}

TEST(Concat, GradientSplitsByChannelRange) {
  std::mt19937_64 rng(25);
  auto a = random_tensor<double>(Shape{2, 2, 3, 3}, rng);
  auto b = random_tensor<double>(Shape{2, 3, 3, 3}, rng);
  const double err = gradcheck(
      {a, b}, [](const auto& in) { return tsr::concat_channels(in[0], in[1]); },
      [](const auto& in) {
        std::vector<double> out;
        for (std::size_t n = 0; n < 2; ++n) {
          out.insert(out.end(), in[0].begin() + n * 18, in[0].begin() + (n + 1) * 18);
          out.insert(out.end(), in[1].begin() + n * 27, in[1].begin() + (n + 1) * 27);
        }
        return out;
      }, 26);
  EXPECT_LT(err, kOpGradTol);
}

TEST(DepthToSpace, ShufflesSubPixels) {
  // 4 channels of one pixel become a 2x2 patch in channel-major order.
  Tensor x(Shape{1, 4, 1, 1}, std::vector<float>{1, 2, 3, 4});
  auto y = tsr::depth_to_space(x, 2);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_EQ(y.values(), (std::vector<float>{1, 2, 3, 4}));
  std::mt19937_64 rng(27);
  auto xd = random_tensor<double>(Shape{1, 8, 2, 3}, rng);
  const double err = gradcheck(
      {xd}, [](const auto& in) { return tsr::depth_to_space(in[0], 2); },
      [](const auto& in) {
        std::vector<double> out(48);
        for (std::size_t c = 0; c < 2; ++c)
          for (std::size_t oy = 0; oy < 4; ++oy)
            for (std::size_t ox = 0; ox < 6; ++ox)
              out[(c * 4 + oy) * 6 + ox] = in[0][((c * 4 + (oy % 2) * 2 + ox % 2) * 2 + oy / 2) * 3 + ox / 2];
        return out;
      }, 28);
  EXPECT_LT(err, kOpGradTol);
}

// ---------------------------------------------------------------------------
// smooth_l1

TEST(SmoothL1, AnalyticValues) {
  Tensor t(Shape{1}, 0.25f);
  EXPECT_EQ(tsr::smooth_l1(t, t)[0], 0.0f);
  EXPECT_NEAR(tsr::smooth_l1(Tensor(Shape{1}, 0.75f), t)[0], 0.125, 1e-7);
  EXPECT_NEAR(tsr::smooth_l1(Tensor(Shape{1}, 2.25f), t)[0], 1.5, 1e-7);
  EXPECT_THROW(tsr::smooth_l1(Tensor(Shape{2}), Tensor(Shape{3})), tsr::DimensionError);
}

TEST(SmoothL1, ContinuousWithContinuousSlopeAtOne) {
  auto value = [](double d) {
    return static_cast<double>(tsr::smooth_l1(Tensor64(Shape{1}, d), Tensor64(Shape{1}, 0.0))[0]);
  };
  auto slope = [](double d) {
    Tensor64 p(Shape{1}, d);
    p.set_requires_grad(true);
    tsr::backward(tsr::smooth_l1(p, Tensor64(Shape{1}, 0.0)));
    return p.grad()[0];
  };
  EXPECT_LT(std::abs(value(1 - 1e-4) - value(1 + 1e-4)), 1e-3);
  EXPECT_LT(std::abs(slope(1 - 1e-4) - slope(1 + 1e-4)), 1e-3);
}

TEST(SmoothL1, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(29);
  // Differences spread over both branches, away from |d| = 1.
  auto p = random_tensor<double>(Shape{1, 1, 4, 6}, rng, -3, 3);
  auto t = random_tensor<double>(Shape{1, 1, 4, 6}, rng, -0.2, 0.2);
  for (std::size_t i = 0; i < p.numel(); ++i) {
    if (std::abs(std::abs(p[i] - t[i]) - 1.0) < 0.01) p[i] += 0.05;
  }
  const double err = gradcheck(
      {p, t}, [](const auto& in) { return tsr::smooth_l1(in[0], in[1]); },
      [](const auto& in) { return std::vector<double>{oracle::smooth_l1(in[0], in[1])}; }, 30);
  EXPECT_LT(err, kOpGradTol);
}
