#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

#include "sface/gradcheck.hpp"
#include "sface/layers.hpp"

using sface::NumericError;
using sface::nn::LayerT;
using sface::nn::SgdT;
using sface::nn::TapeT;
using sface::nn::TensorT;
using sface::nn::TrainMode;

TEST(GradCheck, AllBackwardPathsMatchFiniteDifferences) {
  const auto results = sface::nn::run_gradient_checks();
  ASSERT_FALSE(results.empty());
  for (const auto& r : results) {
    EXPECT_TRUE(r.pass) << r.name << " max relative error " << r.max_rel_error;
    EXPECT_LT(r.max_rel_error, 1e-4) << r.name;
  }
  // The suite must exercise every layer kind plus the pair loss.
  auto has = [&](const char* needle) {
    for (const auto& r : results)
      if (r.name.find(needle) != std::string::npos) return true;
    return false;
  };
  EXPECT_TRUE(has("reflection_pad"));
  EXPECT_TRUE(has("conv2d"));
  EXPECT_TRUE(has("relu"));
  EXPECT_TRUE(has("batchnorm(train)"));
  EXPECT_TRUE(has("batchnorm(eval)"));
  EXPECT_TRUE(has("maxpool"));
  EXPECT_TRUE(has("linear"));
  EXPECT_TRUE(has("network"));
  EXPECT_TRUE(has("contrastive"));
}

TEST(Tape, BackwardWithoutForwardThrows) {
  TapeT<double> tape;
  EXPECT_THROW(tape.backward(TensorT<double>::zeros({1})), std::logic_error);
}

TEST(Tape, TraceIsConsumedByBackward) {
  auto layer = LayerT<double>::relu();
  TensorT<double> x({1, 1, 1, 2}, {1.0, -1.0});
  TapeT<double> tape;
  layer.forward(x, TrainMode::Evaluation, &tape);
  auto gx = tape.backward(TensorT<double>::full({1, 1, 1, 2}, 1.0));
  EXPECT_EQ(gx.data, (std::vector<double>{1.0, 0.0}));
  EXPECT_THROW(tape.backward(TensorT<double>::full({1, 1, 1, 2}, 1.0)), std::logic_error);
}

TEST(Tape, SumOfReluGradientIsIndicator) {
  // loss = sum(relu(x)) -> d/dx is 1 where x > 0, else 0.
  auto layer = LayerT<double>::relu();
  TensorT<double> x({1, 1, 2, 3}, {0.5, -2.0, 3.0, -0.1, 0.2, 7.0});
  TapeT<double> tape;
  layer.forward(x, TrainMode::Evaluation, &tape);
  auto gx = tape.backward(TensorT<double>::full({1, 1, 2, 3}, 1.0));
  EXPECT_EQ(gx.data, (std::vector<double>{1, 0, 1, 0, 1, 1}));
}

TEST(Tape, ScalingLayerDoublesGradient) {
  // loss = sum(linear(x, 2*I)) -> d/dx is 2 everywhere.
  auto layer = LayerT<double>::linear(3, 3);
  layer.weight.data = {2, 0, 0, 0, 2, 0, 0, 0, 2};
  TensorT<double> x({1, 3}, {4.0, 5.0, 6.0});
  TapeT<double> tape;
  layer.forward(x, TrainMode::Evaluation, &tape);
  auto gx = tape.backward(TensorT<double>::full({1, 3}, 1.0));
  EXPECT_EQ(gx.data, (std::vector<double>{2, 2, 2}));
}

TEST(Tape, TwoBranchesAccumulateIntoSharedParameters) {
  auto layer = LayerT<double>::linear(2, 2);
  layer.weight.data = {1, 2, 3, 4};
  layer.bias.data = {0, 0};
  TensorT<double> xa({1, 2}, {1.0, 0.0});
  TensorT<double> xb({1, 2}, {0.0, 1.0});
  auto ones = TensorT<double>::full({1, 2}, 1.0);

  // Separate passes, separate tapes, one parameter set.
  layer.weight.zero_grad();
  layer.bias.zero_grad();
  TapeT<double> ta, tb;
  layer.forward(xa, TrainMode::Evaluation, &ta);
  layer.forward(xb, TrainMode::Evaluation, &tb);
  tb.backward(ones);
  ta.backward(ones);
  const auto accumulated = layer.weight.grad;

  // Must equal the sum of the two single-branch gradients.
  layer.weight.zero_grad();
  layer.bias.zero_grad();
  TapeT<double> t1;
  layer.forward(xa, TrainMode::Evaluation, &t1);
  t1.backward(ones);
  auto ga = layer.weight.grad;
  layer.weight.zero_grad();
  TapeT<double> t2;
  layer.forward(xb, TrainMode::Evaluation, &t2);
  t2.backward(ones);
  for (std::size_t i = 0; i < accumulated.size(); ++i)
    EXPECT_DOUBLE_EQ(accumulated[i], ga[i] + layer.weight.grad[i]);
}

TEST(Sgd, PlainStepWithoutMomentum) {
  TensorT<double> p({2}, {1.0, -2.0});
  p.grad = {0.5, -0.5};
  SgdT<double> sgd(0.1, 0.0);
  sgd.step({&p});
  EXPECT_DOUBLE_EQ(p.data[0], 1.0 - 0.1 * 0.5);
  EXPECT_DOUBLE_EQ(p.data[1], -2.0 + 0.1 * 0.5);
}

TEST(Sgd, MomentumAccumulatesVelocity) {
  // v1 = g1; v2 = mu*v1 + g2; p = p0 - lr*(v1 + v2).
  TensorT<double> p({1}, {0.0});
  SgdT<double> sgd(1.0, 0.5);
  p.grad = {1.0};
  sgd.step({&p});
  EXPECT_DOUBLE_EQ(p.data[0], -1.0);
  p.grad = {1.0};
  sgd.step({&p});
  EXPECT_DOUBLE_EQ(p.data[0], -1.0 - (0.5 * 1.0 + 1.0));
}

TEST(Sgd, ConvergesOnQuadraticBowl) {
  // f(x) = x^2/2, lr 0.2: x shrinks by 0.8 per step, so 100 steps reach ~2e-10.
  TensorT<double> p({1}, {1.0});
  SgdT<double> sgd(0.2, 0.0);
  for (int i = 0; i < 100; ++i) {
    p.grad = {p.data[0]};
    sgd.step({&p});
  }
  EXPECT_LT(std::abs(p.data[0]), 1e-8);
}

TEST(Sgd, NonFiniteGradientThrows) {
  TensorT<double> p({1}, {0.0});
  p.grad = {std::numeric_limits<double>::quiet_NaN()};
  SgdT<double> sgd(0.1, 0.0);
  EXPECT_THROW(sgd.step({&p}), NumericError);
}

TEST(Sgd, MissingGradientBufferThrows) {
  TensorT<double> p({2}, {0.0, 0.0});
  SgdT<double> sgd(0.1, 0.0);
  EXPECT_THROW(sgd.step({&p}), std::invalid_argument);
}
