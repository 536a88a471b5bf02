#include <gtest/gtest.h>

#include <random>
#include <stdexcept>
#include <vector>

#include "sface/ops.hpp"
#include "sface/tensor.hpp"

using sface::nn::TensorT;
using sface::nn::TrainMode;
namespace ops = sface::nn::ops;

namespace {

TensorT<double> random_tensor(std::vector<std::size_t> shape, std::uint32_t seed) {
  TensorT<double> t = TensorT<double>::zeros(std::move(shape));
  std::mt19937 rng(seed);
  for (auto& v : t.data) v = 2.0 * (rng() * (1.0 / 4294967296.0)) - 1.0;
  return t;
}

}  // namespace

TEST(Tensor, ShapeDataMismatchThrows) {
  EXPECT_THROW(TensorT<float>({2, 3}, std::vector<float>(5)), std::invalid_argument);
  EXPECT_NO_THROW(TensorT<float>({2, 3}, std::vector<float>(6)));
}

TEST(Tensor, ReshapePreservesOrder) {
  TensorT<float> t({1, 2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  auto r = t.reshaped({2, 4});
  EXPECT_EQ(r.shape, (std::vector<std::size_t>{2, 4}));
  EXPECT_EQ(r.data, t.data);
  EXPECT_THROW(t.reshaped({3, 3}), std::invalid_argument);
}

TEST(ReflectionPad, HandComputedExample) {
  // [[1,2],[3,4]] padded by 1 mirrors without repeating the edge row/col.
  TensorT<float> x({1, 1, 2, 2}, {1, 2, 3, 4});
  auto y = ops::reflection_pad(x, 1);
  EXPECT_EQ(y.shape, (std::vector<std::size_t>{1, 1, 4, 4}));
  const std::vector<float> want = {4, 3, 4, 3, 2, 1, 2, 1, 4, 3, 4, 3, 2, 1, 2, 1};
  EXPECT_EQ(y.data, want);
}

TEST(ReflectionPad, ZeroPadIsIdentity) {
  auto x = random_tensor({2, 3, 4, 5}, 11);
  auto y = ops::reflection_pad(x, 0);
  EXPECT_EQ(y.shape, x.shape);
  EXPECT_EQ(y.data, x.data);
}

TEST(ReflectionPad, InteriorIsUntouched) {
  auto x = random_tensor({1, 2, 5, 6}, 12);
  const std::size_t p = 2;
  auto y = ops::reflection_pad(x, p);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 6; ++j)
        EXPECT_EQ(y.data[c * 9 * 10 + (i + p) * 10 + (j + p)], x.data[c * 30 + i * 6 + j]);
}

TEST(ReflectionPad, PadTooLargeThrows) {
  auto x = random_tensor({1, 1, 3, 3}, 13);
  EXPECT_THROW(ops::reflection_pad(x, 3), std::invalid_argument);
  EXPECT_NO_THROW(ops::reflection_pad(x, 2));
}

TEST(Conv2d, HandComputedExample) {
  // 3x3 ramp, 2x2 kernel [[1,0],[0,-1]], bias 0.5: every output is -3.5.
  TensorT<float> x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  TensorT<float> w({1, 1, 2, 2}, {1, 0, 0, -1});
  TensorT<float> b({1}, {0.5f});
  auto y = ops::conv2d(x, w, b);
  EXPECT_EQ(y.shape, (std::vector<std::size_t>{1, 1, 2, 2}));
  for (float v : y.data) EXPECT_FLOAT_EQ(v, -3.5f);
}

TEST(Conv2d, MatchesDirectLoopOracle) {
  auto x = random_tensor({2, 3, 7, 6}, 21);
  auto w = random_tensor({4, 3, 3, 3}, 22);
  auto b = random_tensor({4}, 23);
  auto y = ops::conv2d(x, w, b);
  ASSERT_EQ(y.shape, (std::vector<std::size_t>{2, 4, 5, 4}));
  // Independent re-derivation: plain sum over the kernel window per output.
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t co = 0; co < 4; ++co)
      for (std::size_t oh = 0; oh < 5; ++oh)
        for (std::size_t ow = 0; ow < 4; ++ow) {
          double acc = b.data[co];
          for (std::size_t ci = 0; ci < 3; ++ci)
            for (std::size_t u = 0; u < 3; ++u)
              for (std::size_t v = 0; v < 3; ++v)
                acc += w.data[((co * 3 + ci) * 3 + u) * 3 + v] *
                       x.data[((n * 3 + ci) * 7 + oh + u) * 6 + ow + v];
          EXPECT_NEAR(y.data[((n * 4 + co) * 5 + oh) * 4 + ow], acc, 1e-12);
        }
}

TEST(Conv2d, ShapeAndChannelErrors) {
  auto x = random_tensor({1, 2, 4, 4}, 31);
  auto w_bad_channels = random_tensor({3, 3, 3, 3}, 32);
  auto w_too_big = random_tensor({3, 2, 5, 5}, 33);
  auto w_ok = random_tensor({3, 2, 3, 3}, 34);
  auto b_bad = random_tensor({2}, 35);
  TensorT<double> none;
  EXPECT_THROW(ops::conv2d(x, w_bad_channels, none), std::invalid_argument);
  EXPECT_THROW(ops::conv2d(x, w_too_big, none), std::invalid_argument);
  EXPECT_THROW(ops::conv2d(x, w_ok, b_bad), std::invalid_argument);
  EXPECT_NO_THROW(ops::conv2d(x, w_ok, none));
}

TEST(Relu, ClampsNegatives) {
  TensorT<float> x({1, 1, 1, 4}, {-2, 0, 0.5f, 3});
  auto y = ops::relu(x);
  EXPECT_EQ(y.data, (std::vector<float>{0, 0, 0.5f, 3}));
}

TEST(BatchNorm, TrainingMatchesRecomputedStatistics) {
  auto x = random_tensor({3, 2, 4, 4}, 41);
  TensorT<double> gamma({2}, {1.3, 0.7});
  TensorT<double> beta({2}, {0.2, -0.4});
  std::vector<double> rm = {0.5, -0.5}, rv = {2.0, 0.5};
  const double eps = 1e-5, momentum = 0.1;
  auto rm_before = rm, rv_before = rv;

  auto y = ops::batchnorm_forward(x, gamma, beta, rm, rv, eps, momentum,
                                  TrainMode::Training, (ops::BatchNormCache<double>*)nullptr);

  const std::size_t n = 3 * 4 * 4;
  for (std::size_t c = 0; c < 2; ++c) {
    // Recompute channel statistics the long way.
    double mean = 0;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t t = 0; t < 16; ++t) mean += x.data[(i * 2 + c) * 16 + t];
    mean /= n;
    double var = 0;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t t = 0; t < 16; ++t) {
        const double d = x.data[(i * 2 + c) * 16 + t] - mean;
        var += d * d;
      }
    const double var_biased = var / n;
    const double var_unbiased = var / (n - 1);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t t = 0; t < 16; ++t) {
        const double want = gamma.data[c] * (x.data[(i * 2 + c) * 16 + t] - mean) /
                                std::sqrt(var_biased + eps) +
                            beta.data[c];
        EXPECT_NEAR(y.data[(i * 2 + c) * 16 + t], want, 1e-9);
      }
    EXPECT_NEAR(rm[c], (1 - momentum) * rm_before[c] + momentum * mean, 1e-9);
    EXPECT_NEAR(rv[c], (1 - momentum) * rv_before[c] + momentum * var_unbiased, 1e-9);
  }
}

TEST(BatchNorm, EvaluationIsPureAndUsesRunningStats) {
  auto x = random_tensor({2, 2, 3, 3}, 42);
  TensorT<double> gamma({2}, {1.0, 2.0});
  TensorT<double> beta({2}, {0.0, 1.0});
  std::vector<double> rm = {0.25, -0.75}, rv = {1.5, 0.25};
  const auto rm_keep = rm, rv_keep = rv;
  auto y1 = ops::batchnorm_forward(x, gamma, beta, rm, rv, 1e-5, 0.1, TrainMode::Evaluation,
                                   (ops::BatchNormCache<double>*)nullptr);
  auto y2 = ops::batchnorm_forward(x, gamma, beta, rm, rv, 1e-5, 0.1, TrainMode::Evaluation,
                                   (ops::BatchNormCache<double>*)nullptr);
  EXPECT_EQ(rm, rm_keep);
  EXPECT_EQ(rv, rv_keep);
  EXPECT_EQ(y1.data, y2.data);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t t = 0; t < 9; ++t) {
        const double want =
            gamma.data[c] * (x.data[(i * 2 + c) * 9 + t] - rm_keep[c]) /
                std::sqrt(rv_keep[c] + 1e-5) +
            beta.data[c];
        EXPECT_NEAR(y1.data[(i * 2 + c) * 9 + t], want, 1e-9);
      }
}

TEST(BatchNorm, SingleValuePerChannelThrowsInTraining) {
  auto x = random_tensor({1, 3, 1, 1}, 43);
  TensorT<double> gamma = TensorT<double>::full({3}, 1.0);
  TensorT<double> beta = TensorT<double>::zeros({3});
  std::vector<double> rm(3, 0.0), rv(3, 1.0);
  EXPECT_THROW(ops::batchnorm_forward(x, gamma, beta, rm, rv, 1e-5, 0.1, TrainMode::Training,
                                      (ops::BatchNormCache<double>*)nullptr),
               std::invalid_argument);
  // The same shape is fine when running stats are used.
  EXPECT_NO_THROW(ops::batchnorm_forward(x, gamma, beta, rm, rv, 1e-5, 0.1,
                                         TrainMode::Evaluation,
                                         (ops::BatchNormCache<double>*)nullptr));
}

TEST(MaxPool, WindowsAndFirstArgmaxWin) {
  // One 4x4 channel; the 2x2 windows have known maxima.
  TensorT<float> x({1, 1, 4, 4}, {1, 3, 2, 2,   //
                                  4, 2, 2, 2,   //
                                  5, 5, 7, 8,   //
                                  5, 5, 9, 9});
  std::vector<std::size_t> argmax;
  auto y = ops::maxpool2x2(x, &argmax);
  EXPECT_EQ(y.shape, (std::vector<std::size_t>{1, 1, 2, 2}));
  EXPECT_EQ(y.data, (std::vector<float>{4, 2, 5, 9}));
  // Ties resolve to the first position in row-major window order.
  EXPECT_EQ(argmax[0], 4u);   // the 4 at (1,0)
  EXPECT_EQ(argmax[1], 2u);   // four-way tie of 2s -> (0,2)
  EXPECT_EQ(argmax[2], 8u);   // tie of 5s -> (2,0)
  EXPECT_EQ(argmax[3], 14u);  // tie of 9s -> (3,2)
}

TEST(MaxPool, OddExtentsThrow) {
  auto x = random_tensor({1, 1, 3, 4}, 44);
  EXPECT_THROW(ops::maxpool2x2(x, nullptr), std::invalid_argument);
}

TEST(MaxPool, BackwardRoutesToArgmax) {
  TensorT<double> x({1, 1, 2, 2}, {1, 1, 1, 1});  // full tie -> position 0
  std::vector<std::size_t> argmax;
  ops::maxpool2x2(x, &argmax);
  TensorT<double> gy({1, 1, 1, 1}, {2.5});
  auto gx = ops::maxpool2x2_backward(gy, x.shape, argmax);
  EXPECT_EQ(gx.data, (std::vector<double>{2.5, 0, 0, 0}));
}

TEST(Flatten, ChannelMajorOrder) {
  TensorT<float> x({2, 2, 1, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  auto y = ops::flatten(x);
  EXPECT_EQ(y.shape, (std::vector<std::size_t>{2, 4}));
  EXPECT_EQ(y.data, x.data);
}

TEST(Linear, MatchesDotProductOracle) {
  auto x = random_tensor({3, 5}, 51);
  auto w = random_tensor({4, 5}, 52);
  auto b = random_tensor({4}, 53);
  auto y = ops::linear(x, w, b);
  ASSERT_EQ(y.shape, (std::vector<std::size_t>{3, 4}));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t g = 0; g < 4; ++g) {
      double acc = b.data[g];
      for (std::size_t f = 0; f < 5; ++f) acc += x.data[i * 5 + f] * w.data[g * 5 + f];
      EXPECT_NEAR(y.data[i * 4 + g], acc, 1e-12);
    }
}

TEST(Linear, WidthMismatchThrows) {
  auto x = random_tensor({2, 5}, 54);
  auto w = random_tensor({4, 6}, 55);
  TensorT<double> none;
  EXPECT_THROW(ops::linear(x, w, none), std::invalid_argument);
}

TEST(Linear, LargeShapeMatchesOracleSpotChecks) {
  // Big enough to exercise the blocked kernels across block boundaries.
  auto x = random_tensor({3, 9000}, 56);
  auto w = random_tensor({7, 9000}, 57);
  TensorT<double> none;
  auto y = ops::linear(x, w, none);
  std::mt19937 rng(58);
  for (int probe = 0; probe < 12; ++probe) {
    const std::size_t i = rng() % 3, g = rng() % 7;
    double acc = 0;
    for (std::size_t f = 0; f < 9000; ++f) acc += x.data[i * 9000 + f] * w.data[g * 9000 + f];
    EXPECT_NEAR(y.data[i * 7 + g], acc, 1e-9);
  }
}

TEST(Ops, ForwardIsBitDeterministic) {
  auto x = random_tensor({2, 3, 8, 8}, 61);
  auto w = random_tensor({4, 3, 3, 3}, 62);
  auto b = random_tensor({4}, 63);
  auto y1 = ops::conv2d(x, w, b);
  auto y2 = ops::conv2d(x, w, b);
  EXPECT_EQ(y1.data, y2.data);
  auto f1 = ops::linear(ops::flatten(y1), random_tensor({5, 4 * 36}, 64), TensorT<double>());
  auto f2 = ops::linear(ops::flatten(y2), random_tensor({5, 4 * 36}, 64), TensorT<double>());
  EXPECT_EQ(f1.data, f2.data);
}
