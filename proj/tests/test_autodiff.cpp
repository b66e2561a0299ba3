#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mre/errors.hpp"
#include "mre/ops.hpp"
#include "support/oracles.hpp"

using namespace mre;

namespace {

// loss = sum(f(inputs) * R) for a fixed random R; compares the analytic
// gradient of every input with central differences.
void expect_gradients(const std::function<Tensor(const std::vector<Tensor>&)>& f, std::vector<Tensor> inputs,
                      double tol = 1e-5, double h = 1e-6, std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  Tensor probe = f(inputs);
  Tensor weights = Tensor::from_data(probe.shape(), oracle::random_vector(probe.numel(), rng));
  auto loss_of = [&] { return sum(mul(f(inputs), weights)); };
  Tensor loss = loss_of();
  backward(loss);
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    if (!inputs[t].requires_grad()) continue;
    std::vector<double> analytic(inputs[t].grad().begin(), inputs[t].grad().end());
    auto numeric = oracle::numeric_gradient(
        [&] {
          NoGradGuard guard;
          return loss_of().item();
        },
        inputs[t].mutable_data(), h);
    ASSERT_EQ(analytic.size(), numeric.size());
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      EXPECT_LT(oracle::relative_error(analytic[i], numeric[i]), tol)
          << "input " << t << " element " << i << ": analytic " << analytic[i] << " numeric " << numeric[i];
    }
  }
}

Tensor rand_param(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  return Tensor::parameter(shape, oracle::random_vector(shape_numel(shape), rng, lo, hi));
}

}  // namespace

TEST(Tensor, ShapeAndDataInvariants) {
  Tensor t = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_EQ(t.at(4), 5.0);
  EXPECT_FALSE(t.requires_grad());
  EXPECT_THROW(Tensor::from_data({2, 2}, {1, 2, 3}), UsageError);
}

TEST(Backward, SquareGivesTwiceX) {
  Tensor x = Tensor::parameter({}, {3.0});
  Tensor loss = mul(x, x);
  backward(loss);
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Backward, LinearMapGradientIsInput) {
  Tensor w = Tensor::parameter({4}, {0.1, -0.2, 0.3, 0.4});
  Tensor x = Tensor::from_data({4}, {1.5, -2.0, 0.25, 7.0});
  backward(sum(mul(w, x)));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(w.grad()[i], x.at(i));
}

TEST(Backward, NonScalarLossIsAUsageError) {
  Tensor x = Tensor::parameter({2}, {1.0, 2.0});
  EXPECT_THROW(backward(mul(x, x)), UsageError);
}

TEST(Backward, UnreachableParameterGetsZeroGradThroughStore) {
  Tensor a = Tensor::parameter({2}, {1.0, 2.0});
  Tensor b = Tensor::parameter({2}, {3.0, 4.0});
  b.zero_grad();
  backward(sum(a));
  ASSERT_EQ(b.grad().size(), 2u);
  EXPECT_EQ(b.grad()[0], 0.0);
}

TEST(Backward, ReplayYieldsIdenticalGradients) {
  std::mt19937_64 rng(3);
  Tensor x = rand_param({2, 3, 4}, rng);
  Tensor loss = sum(exp(softmax(mul(x, x), 2)));
  backward(loss);
  std::vector<double> first(x.grad().begin(), x.grad().end());
  backward(loss);
  std::vector<double> second(x.grad().begin(), x.grad().end());
  EXPECT_EQ(first, second);
}

TEST(Backward, LinearityOfGradients) {
  std::mt19937_64 rng(5);
  Tensor x = rand_param({3, 4}, rng, 0.2, 1.0);
  auto f = [&] { return sum(mul(sigmoid(x), x)); };
  auto g = [&] { return sum(log(x)); };
  backward(f());
  std::vector<double> gf(x.grad().begin(), x.grad().end());
  backward(g());
  std::vector<double> gg(x.grad().begin(), x.grad().end());
  const double a = 2.5, b = -0.75;
  backward(add(scale(f(), a), scale(g(), b)));
  for (std::size_t i = 0; i < gf.size(); ++i) EXPECT_NEAR(x.grad()[i], a * gf[i] + b * gg[i], 1e-12);
}

TEST(Backward, NoGradGuardRecordsNothing) {
  Tensor x = Tensor::parameter({2}, {1.0, 2.0});
  NoGradGuard guard;
  Tensor y = mul(x, x);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Backward, OpOutputsAreImmutable) {
  Tensor x = Tensor::parameter({2}, {1.0, 2.0});
  Tensor y = mul(x, x);
  EXPECT_THROW(y.mutable_data(), UsageError);
}

TEST(Backward, RandomFourLayerGraphMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  Tensor x = rand_param({1, 2, 4, 4, 4}, rng);
  Tensor k = rand_param({3, 2, 3, 3, 3}, rng);
  Tensor b = rand_param({3}, rng);
  ConvGeometry g;
  g.padding = {1, 1, 1};
  auto f = [&](const std::vector<Tensor>& in) { return sum(l2_normalize(relu(conv3d(in[0], in[1], in[2], g)), 1)); };
  std::vector<Tensor> inputs{x, k, b};
  Tensor loss = f(inputs);
  backward(loss);
  for (Tensor& t : inputs) {
    std::vector<double> analytic(t.grad().begin(), t.grad().end());
    auto numeric = oracle::numeric_gradient(
        [&] {
          NoGradGuard guard;
          return f(inputs).item();
        },
        t.mutable_data(), 1e-5);
    for (std::size_t i = 0; i < numeric.size(); ++i) EXPECT_LT(oracle::relative_error(analytic[i], numeric[i]), 1e-5);
  }
}

TEST(Gradients, ElementwiseWithBroadcasting) {
  std::mt19937_64 rng(1);
  Tensor a = rand_param({2, 3, 4}, rng);
  Tensor b = rand_param({3, 1}, rng, 0.5, 1.5);
  expect_gradients([](const auto& in) { return add(in[0], in[1]); }, {a, b});
  expect_gradients([](const auto& in) { return sub(in[0], in[1]); }, {a, b});
  expect_gradients([](const auto& in) { return mul(in[0], in[1]); }, {a, b});
  expect_gradients([](const auto& in) { return div(in[0], in[1]); }, {a, b});
  expect_gradients([](const auto& in) { return scale(in[0], -1.7); }, {a});
  expect_gradients([](const auto& in) { return broadcast_to(in[0], {2, 3, 5}); }, {b});
}

TEST(Gradients, UnaryOps) {
  std::mt19937_64 rng(2);
  Tensor a = rand_param({3, 5}, rng);
  Tensor pos = rand_param({3, 5}, rng, 0.1, 2.0);
  expect_gradients([](const auto& in) { return relu(in[0]); }, {a});
  expect_gradients([](const auto& in) { return sigmoid(in[0]); }, {a});
  expect_gradients([](const auto& in) { return exp(in[0]); }, {a});
  expect_gradients([](const auto& in) { return log(in[0]); }, {pos});
}

TEST(Gradients, MatmulTransposeReshape) {
  std::mt19937_64 rng(3);
  Tensor a = rand_param({3, 4}, rng);
  Tensor b = rand_param({4, 2}, rng);
  expect_gradients([](const auto& in) { return matmul(in[0], in[1]); }, {a, b});
  expect_gradients([](const auto& in) { return transpose(in[0]); }, {a});
  expect_gradients([](const auto& in) { return reshape(in[0], {2, 6}); }, {a});
}

TEST(Gradients, Reductions) {
  std::mt19937_64 rng(4);
  Tensor a = rand_param({2, 3, 4}, rng);
  expect_gradients([](const auto& in) { return sum(in[0]); }, {a});
  expect_gradients([](const auto& in) { return mean(in[0]); }, {a});
  for (std::size_t axis = 0; axis < 3; ++axis) {
    expect_gradients([axis](const auto& in) { return sum(in[0], axis, true); }, {a});
    expect_gradients([axis](const auto& in) { return mean(in[0], axis, false); }, {a});
  }
}

TEST(Gradients, SoftmaxFamilyAndNormalize) {
  std::mt19937_64 rng(5);
  Tensor a = rand_param({2, 4, 3}, rng, -2.0, 2.0);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    expect_gradients([axis](const auto& in) { return softmax(in[0], axis); }, {a});
    expect_gradients([axis](const auto& in) { return log_softmax(in[0], axis); }, {a});
    expect_gradients([axis](const auto& in) { return l2_normalize(in[0], axis); }, {a});
  }
}

TEST(Gradients, ConcatAndSlice) {
  std::mt19937_64 rng(6);
  Tensor a = rand_param({2, 3, 2}, rng);
  Tensor b = rand_param({2, 1, 2}, rng);
  expect_gradients(
      [](const auto& in) {
        std::vector<Tensor> parts{in[0], in[1], in[0]};
        return concat(parts, 1);
      },
      {a, b});
  expect_gradients([](const auto& in) { return slice(in[0], 1, 1, 2); }, {a});
}

TEST(Gradients, PoolingAndUpsampling) {
  std::mt19937_64 rng(7);
  Tensor x = rand_param({2, 3, 4, 4, 6}, rng);
  expect_gradients([](const auto& in) { return global_avg_pool(in[0]); }, {x});
  expect_gradients([](const auto& in) { return avg_pool3d(in[0], {2, 2, 2}); }, {x});
  expect_gradients([](const auto& in) { return avg_pool3d(in[0], {1, 2, 3}); }, {x});
  expect_gradients([](const auto& in) { return upsample_nearest(in[0], {1, 2, 2}); }, {x});
}

TEST(Gradients, BatchNormTrainingAndEval) {
  std::mt19937_64 rng(8);
  Tensor x = rand_param({3, 2, 2, 3, 2}, rng);
  Tensor gamma = rand_param({2}, rng, 0.5, 1.5);
  Tensor beta = rand_param({2}, rng);
  for (bool training : {true, false}) {
    expect_gradients(
        [training](const auto& in) {
          Tensor rm = Tensor::from_data({2}, {0.1, -0.2});
          Tensor rv = Tensor::from_data({2}, {1.3, 0.7});
          return batch_norm(in[0], in[1], in[2], rm, rv, training);
        },
        {x, gamma, beta});
  }
}

TEST(BatchNorm, RunningStatisticsUseMomentumAndUnbiasedVariance) {
  Tensor x = Tensor::from_data({4, 1}, {1.0, 2.0, 3.0, 6.0});
  Tensor gamma = Tensor::from_data({1}, {1.0});
  Tensor beta = Tensor::from_data({1}, {0.0});
  Tensor rm = Tensor::from_data({1}, {0.0});
  Tensor rv = Tensor::from_data({1}, {1.0});
  Tensor y = batch_norm(x, gamma, beta, rm, rv, true);
  // mean 3, biased var 3.5, unbiased 14/3
  EXPECT_NEAR(rm.at(0), 0.1 * 3.0, 1e-15);
  EXPECT_NEAR(rv.at(0), 0.9 + 0.1 * 14.0 / 3.0, 1e-15);
  EXPECT_NEAR(y.at(0), (1.0 - 3.0) / std::sqrt(3.5 + 1e-5), 1e-12);
  Tensor z = batch_norm(x, gamma, beta, rm, rv, false);
  EXPECT_NEAR(z.at(3), (6.0 - rm.at(0)) / std::sqrt(rv.at(0) + 1e-5), 1e-12);
}

TEST(L2Normalize, Examples) {
  Tensor v = Tensor::from_data({2}, {3.0, 4.0});
  Tensor n = l2_normalize(v, 0);
  EXPECT_NEAR(n.at(0), 0.6, 1e-12);
  EXPECT_NEAR(n.at(1), 0.8, 1e-12);
  Tensor u = Tensor::from_data({3}, {0.0, 1.0, 0.0});
  Tensor nu = l2_normalize(u, 0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(nu.at(i), u.at(i), 1e-11);
  Tensor z = Tensor::parameter({3}, {0.0, 0.0, 0.0});
  Tensor nz = l2_normalize(z, 0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(nz.at(i), 0.0);
  backward(sum(nz));
  for (double g : z.grad()) EXPECT_TRUE(std::isfinite(g));
}

TEST(Pooling, IndivisibleExtentNamesAxis) {
  Tensor x = Tensor::zeros({1, 1, 3, 4, 4});
  try {
    avg_pool3d(x, {2, 2, 2});
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("D"), std::string::npos) << e.what();
  }
}
