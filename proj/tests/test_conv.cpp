#include <gtest/gtest.h>

#include <random>

#include "mre/errors.hpp"
#include "mre/ops.hpp"
#include "support/oracles.hpp"

using namespace mre;

namespace {

Tensor rand_param(Shape shape, std::mt19937_64& rng) {
  return Tensor::parameter(shape, oracle::random_vector(shape_numel(shape), rng));
}

void expect_fd(const std::function<Tensor()>& f, std::vector<Tensor> inputs, double tol = 1e-5) {
  backward(f());
  for (Tensor& t : inputs) {
    std::vector<double> analytic(t.grad().begin(), t.grad().end());
    auto numeric = oracle::numeric_gradient(
        [&] {
          NoGradGuard g;
          return f().item();
        },
        t.mutable_data(), 1e-6);
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      ASSERT_LT(oracle::relative_error(analytic[i], numeric[i]), tol) << "element " << i;
    }
  }
}

}  // namespace

TEST(Conv3d, PointwiseIdentity) {
  std::mt19937_64 rng(1);
  Tensor x = Tensor::from_data({1, 4, 3, 5}, oracle::random_vector(60, rng));
  Tensor k = Tensor::from_data({1, 1, 1, 1, 1}, {1.0});
  Tensor b = Tensor::from_data({1}, {0.0});
  Tensor y = conv3d(x, k, b);
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.at(i), x.at(i));
}

TEST(Conv3d, AllOnesInteriorIs27) {
  Tensor x = Tensor::full({1, 5, 5, 5}, 1.0);
  Tensor k = Tensor::full({1, 1, 3, 3, 3}, 1.0);
  ConvGeometry g;
  g.padding = {1, 1, 1};
  Tensor y = conv3d(x, k, Tensor(), g);
  ASSERT_EQ(y.shape(), (Shape{1, 5, 5, 5}));
  for (std::size_t d = 1; d < 4; ++d)
    for (std::size_t h = 1; h < 4; ++h)
      for (std::size_t w = 1; w < 4; ++w) EXPECT_EQ(y.at((d * 5 + h) * 5 + w), 27.0);
  EXPECT_EQ(y.at(0), 8.0);  // corner sees 2x2x2 in-bounds voxels
}

TEST(Conv3d, MatchesNestedLoopOracle) {
  std::mt19937_64 rng(2);
  struct Case {
    std::size_t N, Ci, Co;
    Triple in, k, stride, pad, dil;
  };
  const Case cases[] = {
      {2, 3, 5, {4, 4, 4}, {3, 3, 3}, {1, 2, 2}, {1, 1, 1}, {1, 1, 1}},
      {1, 2, 3, {5, 6, 7}, {3, 3, 3}, {1, 1, 1}, {2, 2, 2}, {2, 2, 2}},
      {2, 2, 2, {3, 8, 8}, {3, 3, 3}, {1, 1, 1}, {6, 6, 6}, {6, 6, 6}},
      {1, 4, 2, {4, 4, 4}, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, {1, 1, 1}},
      {1, 1, 2, {6, 5, 4}, {2, 3, 1}, {2, 1, 1}, {0, 1, 0}, {1, 1, 1}},
  };
  for (const Case& c : cases) {
    auto xv = oracle::random_vector(c.N * c.Ci * c.in[0] * c.in[1] * c.in[2], rng);
    auto kv = oracle::random_vector(c.Co * c.Ci * c.k[0] * c.k[1] * c.k[2], rng);
    auto bv = oracle::random_vector(c.Co, rng);
    ConvGeometry g{c.stride, c.pad, c.dil};
    Tensor y = conv3d(Tensor::from_data({c.N, c.Ci, c.in[0], c.in[1], c.in[2]}, xv),
                      Tensor::from_data({c.Co, c.Ci, c.k[0], c.k[1], c.k[2]}, kv), Tensor::from_data({c.Co}, bv), g);
    Triple out;
    auto ref = oracle::conv3d(xv, c.N, c.Ci, c.in, kv, c.Co, c.k, &bv, c.stride, c.pad, c.dil, &out);
    ASSERT_EQ(y.shape(), (Shape{c.N, c.Co, out[0], out[1], out[2]}));
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y.at(i), ref[i], 1e-12);
  }
}

TEST(Conv3d, OutputExtentFormula) {
  EXPECT_EQ(conv_output_extent(10, 3, 1, 1, 1), 10u);
  EXPECT_EQ(conv_output_extent(10, 3, 2, 1, 1), 5u);
  EXPECT_EQ(conv_output_extent(12, 3, 1, 6, 6), 12u);
  EXPECT_EQ(conv_output_extent(7, 3, 2, 0, 2), 2u);
  EXPECT_THROW(conv_output_extent(3, 3, 1, 0, 2), ConfigError);
}

TEST(Conv3d, ChannelMismatchNamesBothShapes) {
  Tensor x = Tensor::zeros({1, 2, 3, 3, 3});
  Tensor k = Tensor::zeros({4, 3, 1, 1, 1});
  try {
    conv3d(x, k, Tensor());
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[1,2,3,3,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4,3,1,1,1]"), std::string::npos) << msg;
  }
}

TEST(Conv3d, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(3);
  Tensor x = rand_param({2, 2, 3, 4, 4}, rng);
  Tensor k = rand_param({3, 2, 3, 3, 3}, rng);
  Tensor b = rand_param({3}, rng);
  Tensor w = Tensor::from_data({2, 3, 3, 2, 2}, oracle::random_vector(72, rng));
  ConvGeometry g{{1, 2, 2}, {1, 1, 1}, {1, 1, 1}};
  expect_fd([&] { return sum(mul(conv3d(x, k, b, g), w)); }, {x, k, b});

  Tensor x2 = rand_param({1, 2, 4, 6, 6}, rng);
  Tensor k2 = rand_param({2, 2, 3, 3, 3}, rng);
  ConvGeometry dil{{1, 1, 1}, {3, 3, 3}, {3, 3, 3}};
  Tensor w2 = Tensor::from_data({1, 2, 4, 6, 6}, oracle::random_vector(288, rng));
  expect_fd([&] { return sum(mul(conv3d(x2, k2, Tensor(), dil), w2)); }, {x2, k2});

  Tensor x3 = rand_param({2, 3, 2, 2, 2}, rng);
  Tensor k3 = rand_param({4, 3, 1, 1, 1}, rng);
  Tensor b3 = rand_param({4}, rng);
  Tensor w3 = Tensor::from_data({2, 4, 2, 2, 2}, oracle::random_vector(64, rng));
  expect_fd([&] { return sum(mul(conv3d(x3, k3, b3), w3)); }, {x3, k3, b3});
}

TEST(ConvTranspose3d, IsAdjointOfStridedConv) {
  // <conv(x), y> == <x, conv_transpose(y)> with the same kernel.
  std::mt19937_64 rng(4);
  const Triple stride{2, 2, 2};
  Tensor x = Tensor::from_data({1, 3, 4, 6, 6}, oracle::random_vector(3 * 4 * 36, rng));
  Tensor k = Tensor::from_data({2, 3, 2, 2, 2}, oracle::random_vector(48, rng));
  ConvGeometry g;
  g.stride = stride;
  Tensor cx = conv3d(x, k, Tensor(), g);
  ASSERT_EQ(cx.shape(), (Shape{1, 2, 2, 3, 3}));
  Tensor y = Tensor::from_data(cx.shape(), oracle::random_vector(cx.numel(), rng));
  // conv_transpose3d takes its kernel as [Ci, Co, ...] with Ci the channels of its input.
  Tensor ty = conv_transpose3d(y, k, Tensor(), stride);
  ASSERT_EQ(ty.shape(), x.shape());
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < cx.numel(); ++i) lhs += cx.at(i) * y.at(i);
  for (std::size_t i = 0; i < x.numel(); ++i) rhs += x.at(i) * ty.at(i);
  EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(ConvTranspose3d, ShapesAndGradients) {
  std::mt19937_64 rng(5);
  Tensor x = rand_param({2, 3, 2, 2, 3}, rng);
  Tensor k = rand_param({3, 2, 1, 2, 2}, rng);
  Tensor b = rand_param({2}, rng);
  Tensor y = conv_transpose3d(x, k, b, {1, 2, 2});
  ASSERT_EQ(y.shape(), (Shape{2, 2, 2, 4, 6}));
  Tensor w = Tensor::from_data(y.shape(), oracle::random_vector(y.numel(), rng));
  expect_fd([&] { return sum(mul(conv_transpose3d(x, k, b, {1, 2, 2}), w)); }, {x, k, b});
}
