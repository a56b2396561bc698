#include <gtest/gtest.h>

#include <cmath>

#include "ratfm/gradcheck.hpp"
#include "ratfm/layers.hpp"
#include "test_util.hpp"

namespace ratfm {
namespace {

using testing::bit_equal;
using testing::expect_all_near;
using testing::random_tensor;
using testing::values;

// Direct evaluation of the directional line filter, one output value at a time.
Tensor mdconv_oracle(const Tensor& x, const std::array<Tensor, 4>& k, int radius) {
  const int h = static_cast<int>(x.dim(0)), w = static_cast<int>(x.dim(1));
  const std::size_t cin = x.dim(2), quarter = k[0].dim(2);
  std::vector<double> out(static_cast<std::size_t>(h * w) * 4 * quarter, 0.0);
  for (int d = 0; d < 4; ++d) {
    const int dh = kDirections[d][0], dw = kDirections[d][1];
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        for (std::size_t o = 0; o < quarter; ++o) {
          double acc = 0.0;
          for (int i = -radius; i <= radius; ++i) {
            const int rr = r + i * dh, cc = c + i * dw;
            if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
            for (std::size_t j = 0; j < cin; ++j) {
              acc += x.at({std::size_t(rr), std::size_t(cc), j}) * k[d].at({j, std::size_t(i + radius), o});
            }
          }
          out[(std::size_t(r) * w + c) * 4 * quarter + d * quarter + o] = acc;
        }
      }
    }
  }
  return Tensor::from({x.dim(0), x.dim(1), 4 * quarter}, std::move(out));
}

Tensor conv_oracle(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  const int h = int(x.dim(0)), w = int(x.dim(1)), k = int(kernel.dim(0)), pad = k / 2;
  const std::size_t cin = x.dim(2), cout = kernel.dim(3);
  std::vector<double> out;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (std::size_t o = 0; o < cout; ++o) {
        double acc = bias.data()[o];
        for (int a = 0; a < k; ++a) {
          for (int b = 0; b < k; ++b) {
            const int rr = r + a - pad, cc = c + b - pad;
            if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
            for (std::size_t j = 0; j < cin; ++j) {
              acc += x.at({std::size_t(rr), std::size_t(cc), j}) * kernel.at({std::size_t(a), std::size_t(b), j, o});
            }
          }
        }
        out.push_back(acc);
      }
    }
  }
  return Tensor::from({x.dim(0), x.dim(1), cout}, std::move(out));
}

std::array<Tensor, 4> direction_kernels(std::size_t cin, std::size_t radius, std::size_t quarter, double value) {
  std::array<Tensor, 4> k;
  for (auto& t : k) t = Tensor::full({cin, 2 * radius + 1, quarter}, value);
  return k;
}

TEST(Conv2d, AllOnesThreeByThree) {
  const Tensor y = conv2d(Tensor::full({3, 3, 1}, 1.0), Tensor::full({3, 3, 1, 1}, 1.0), Tensor::zeros({1}));
  EXPECT_EQ(y.at({1, 1, 0}), 9.0);
  EXPECT_EQ(y.at({0, 0, 0}), 4.0);
  EXPECT_EQ(y.at({2, 2, 0}), 4.0);
  EXPECT_EQ(y.at({0, 1, 0}), 6.0);
}

TEST(Conv2d, IdentityPointwiseKernel) {
  const Tensor x = random_tensor({4, 5, 3}, 1);
  Tensor k = Tensor::zeros({1, 1, 3, 3});
  for (std::size_t c = 0; c < 3; ++c) k.mutable_data()[c * 3 + c] = 1.0;
  EXPECT_TRUE(bit_equal(conv2d(x, k, Tensor::zeros({3})), x));
}

TEST(Conv2d, MatchesDirectOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t k = 1 + 2 * (seed % 3);
    const Tensor x = random_tensor({5 + seed % 3, 4 + seed % 4, 1 + seed % 3}, seed);
    const Tensor kernel = random_tensor({k, k, x.dim(2), 2 + seed % 2}, seed + 100);
    const Tensor bias = random_tensor({kernel.dim(3)}, seed + 200);
    expect_all_near(conv2d(x, kernel, bias), values(conv_oracle(x, kernel, bias)), 1e-12);
  }
}

TEST(Conv2d, CommutesWithSpatialTransposition) {
  const Tensor x = random_tensor({5, 7, 2}, 3);
  const Tensor kernel = random_tensor({3, 3, 2, 4}, 4);
  const Tensor bias = random_tensor({4}, 5);
  const Tensor xt = permute(x, {1, 0, 2});
  const Tensor kt = permute(kernel, {1, 0, 2, 3});
  expect_all_near(permute(conv2d(x, kernel, bias), {1, 0, 2}), values(conv2d(xt, kt, bias)), 1e-12);
}

TEST(Conv2d, RejectsChannelMismatch) {
  EXPECT_THROW(conv2d(Tensor::zeros({3, 3, 2}), Tensor::zeros({3, 3, 1, 1}), Tensor::zeros({1})), ShapeError);
}

TEST(Conv2d, BatchedEqualsPerSample) {
  const Tensor x = random_tensor({3, 6, 6, 2}, 6);
  const Tensor kernel = random_tensor({3, 3, 2, 3}, 7);
  const Tensor bias = random_tensor({3}, 8);
  const Tensor y = conv2d(x, kernel, bias);
  for (std::size_t b = 0; b < 3; ++b) {
    const Tensor xb = reshape(slice(x, 0, b, b + 1), {6, 6, 2});
    expect_all_near(reshape(slice(y, 0, b, b + 1), {6, 6, 3}), values(conv2d(xb, kernel, bias)), 1e-12);
  }
}

TEST(Conv2d, GradientMatchesFiniteDifferences) {
  Tensor x = random_tensor({2, 5, 5, 2}, 9);
  Tensor kernel = random_tensor({3, 3, 2, 3}, 10);
  Tensor bias = random_tensor({3}, 11);
  const Tensor dir = random_tensor({2, 5, 5, 3}, 12);
  const auto e = check_gradient("conv2d", [&] { return sum(mul(conv2d(x, kernel, bias), dir)); }, {x, kernel, bias},
                                1e-5, 1e-4);
  EXPECT_TRUE(e.passed) << e.max_rel_error;
}

TEST(MdConv, NestedLoopOracle) {
  Rng rng(2024, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t h = 1 + rng.below(8), w = 1 + rng.below(8), cin = 1 + rng.below(4);
    const std::size_t quarter = 1 + rng.below(2), radius = rng.below(4);
    const Tensor x = random_tensor({h, w, cin}, 1000 + trial);
    std::array<Tensor, 4> k;
    for (std::size_t d = 0; d < 4; ++d) k[d] = random_tensor({cin, 2 * radius + 1, quarter}, 5000 + 4 * trial + d);
    const Tensor got = mdconv1d(x, k, radius);
    const Tensor want = mdconv_oracle(x, k, int(radius));
    ASSERT_EQ(got.shape(), want.shape());
    for (std::size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got.data()[i], want.data()[i], 1e-12) << "trial " << trial;
  }
}

TEST(MdConv, CentreTapDeltaCopiesChannelZero) {
  const Tensor x = random_tensor({6, 5, 3}, 13);
  auto k = direction_kernels(3, 2, 1, 0.0);
  for (auto& t : k) t.mutable_data()[(0 * 5 + 2) * 1 + 0] = 1.0;
  const Tensor y = mdconv1d(x, k, 2);
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t c = 0; c < 5; ++c) {
      for (std::size_t d = 0; d < 4; ++d) EXPECT_EQ(y.at({r, c, d}), x.at({r, c, 0}));
    }
  }
}

TEST(MdConv, AllOnesFiveByFive) {
  const Tensor y = mdconv1d(Tensor::full({5, 5, 1}, 1.0), direction_kernels(1, 1, 1, 1.0), 1);
  for (std::size_t d = 0; d < 4; ++d) EXPECT_EQ(y.at({2, 2, d}), 3.0);
  for (std::size_t d = 0; d < 3; ++d) {
    EXPECT_EQ(y.at({0, 0, d}), 2.0);
    EXPECT_EQ(y.at({4, 4, d}), 2.0);
  }
  // The backward diagonal reaches only the anti-diagonal corners.
  EXPECT_EQ(y.at({0, 4, 3}), 2.0);
  EXPECT_EQ(y.at({4, 0, 3}), 2.0);
  EXPECT_EQ(y.at({0, 0, 3}), 1.0);
  EXPECT_EQ(y.at({0, 2, 0}), 3.0);  // horizontal along the top edge
  EXPECT_EQ(y.at({0, 2, 1}), 2.0);  // vertical clipped at the top
  EXPECT_EQ(y.at({0, 2, 2}), 2.0);
}

TEST(MdConv, DirectionalSelectivity) {
  const std::size_t radius = 2;
  Tensor x = Tensor::zeros({9, 9, 1});
  for (std::size_t r = 0; r < 9; ++r) x.mutable_data()[r * 9 + 4] = 1.0;
  const Tensor y = mdconv1d(x, direction_kernels(1, radius, 1, 1.0), radius);
  EXPECT_EQ(y.at({4, 4, 1}), double(2 * radius + 1));
  EXPECT_EQ(y.at({4, 4, 0}), 1.0);
  for (std::size_t r = 0; r < 9; ++r) {
    for (std::size_t c = 0; c < 9; ++c) {
      if (c != 4) EXPECT_LE(y.at({r, c, 0}), 1.0);
    }
  }
}

TEST(MdConv, LayerSplitsChannelsEvenly) {
  Rng rng(1);
  EXPECT_THROW(MDConv1DLayer(1, 4, 6, rng), std::invalid_argument);
  MDConv1DLayer layer(2, 3, 8, rng);
  EXPECT_EQ(layer.out_channels(), 8u);
  for (const auto& k : layer.kernels()) EXPECT_EQ(k.shape(), (Shape{3, 5, 2}));
  EXPECT_EQ(layer.forward(random_tensor({7, 6, 3}, 1)).shape(), (Shape{7, 6, 8}));
}

TEST(MdConv, GradientMatchesFiniteDifferences) {
  Tensor x = random_tensor({2, 6, 5, 3}, 14);
  std::array<Tensor, 4> k;
  for (std::size_t d = 0; d < 4; ++d) k[d] = random_tensor({3, 5, 2}, 15 + d);
  const Tensor dir = random_tensor({2, 6, 5, 8}, 20);
  const auto e = check_gradient("mdconv1d", [&] { return sum(mul(mdconv1d(x, k, 2), dir)); },
                                {x, k[0], k[1], k[2], k[3]}, 1e-5, 1e-4);
  EXPECT_TRUE(e.passed) << e.max_rel_error;
}

TEST(BatchNorm, NormalizesPerChannel) {
  BatchNormLayer bn(3);
  const Tensor y = bn.forward(random_tensor({4, 5, 5, 3}, 21, -3, 7), Mode::train);
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0, sq = 0.0;
    const std::size_t n = y.size() / 3;
    for (std::size_t i = 0; i < n; ++i) mean += y.data()[i * 3 + c];
    mean /= double(n);
    for (std::size_t i = 0; i < n; ++i) sq += std::pow(y.data()[i * 3 + c] - mean, 2);
    EXPECT_LT(std::abs(mean), 1e-8);
    // The epsilon guard shrinks the variance slightly below 1.
    EXPECT_NEAR(sq / double(n), 1.0, 1e-3);
  }
}

TEST(BatchNorm, PreAffineVarianceIsUnit) {
  const Tensor x = random_tensor({4, 5, 5, 2}, 22, 0, 50);
  const Tensor y = batch_norm_train(x, Tensor::full({2}, 1.0), Tensor::zeros({2}), 0.0);
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0.0, sq = 0.0;
    const std::size_t n = y.size() / 2;
    for (std::size_t i = 0; i < n; ++i) mean += y.data()[i * 2 + c];
    mean /= double(n);
    for (std::size_t i = 0; i < n; ++i) sq += std::pow(y.data()[i * 2 + c] - mean, 2);
    EXPECT_LT(std::abs(mean), 1e-8);
    EXPECT_NEAR(sq / double(n), 1.0, 1e-6);
  }
}

TEST(BatchNorm, ConstantChannelGivesBeta) {
  BatchNormLayer bn(1);
  bn.beta().mutable_data()[0] = 0.7;
  const Tensor y = bn.forward(Tensor::full({2, 3, 3, 1}, 4.0), Mode::train);
  for (double v : y.data()) EXPECT_NEAR(v, 0.7, 1e-12);
}

TEST(BatchNorm, StandardizedInputPassesThroughInEval) {
  BatchNormLayer bn(2);
  const Tensor x = random_tensor({3, 3, 2}, 23);
  expect_all_near(bn.forward(x, Mode::eval), values(x), 1e-5);
}

TEST(BatchNorm, RunningStatisticsUpdate) {
  BatchNormLayer bn(1);
  const Tensor x = Tensor::from({1, 2, 2, 1}, {1, 2, 3, 4});
  bn.forward(x, Mode::train);
  // mean 2.5, unbiased variance 5/3; momentum weights the old value by 0.9.
  EXPECT_NEAR(bn.running_mean().data()[0], 0.25, 1e-15);
  EXPECT_NEAR(bn.running_var().data()[0], 0.9 + 0.1 * 5.0 / 3.0, 1e-15);
  const Tensor before = bn.running_mean().clone();
  bn.forward(x, Mode::eval);
  EXPECT_TRUE(bit_equal(bn.running_mean(), before));
}

TEST(BatchNorm, GradientMatchesFiniteDifferences) {
  Tensor x = random_tensor({2, 4, 4, 3}, 24);
  Tensor gamma = random_tensor({3}, 25, 0.5, 1.5);
  Tensor beta = random_tensor({3}, 26);
  const Tensor dir = random_tensor({2, 4, 4, 3}, 27);
  const auto e = check_gradient(
      "batch_norm", [&] { return sum(mul(batch_norm_train(x, gamma, beta, 1e-5), dir)); }, {x, gamma, beta}, 1e-5,
      1e-4);
  EXPECT_TRUE(e.passed) << e.max_rel_error;
}

TEST(MaxPool, Examples) {
  EXPECT_EQ(values(max_pool2d(Tensor::from({2, 2, 1}, {1, 2, 3, 4}), 2)), (std::vector<double>{4}));
  const Tensor c = max_pool2d(Tensor::full({4, 6, 2}, 3.5), 2);
  EXPECT_EQ(c.shape(), (Shape{2, 3, 2}));
  for (double v : c.data()) EXPECT_EQ(v, 3.5);
  EXPECT_THROW(max_pool2d(Tensor::zeros({3, 4, 1}), 2), ShapeError);
}

TEST(MaxPool, DominatesMeanPool) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor x = random_tensor({6, 6, 2}, seed);
    const Tensor p = max_pool2d(x, 3);
    for (std::size_t r = 0; r < 2; ++r) {
      for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t ch = 0; ch < 2; ++ch) {
          double mean = 0.0;
          for (std::size_t a = 0; a < 3; ++a) {
            for (std::size_t b = 0; b < 3; ++b) mean += x.at({3 * r + a, 3 * c + b, ch}) / 9.0;
          }
          EXPECT_GE(p.at({r, c, ch}), mean);
        }
      }
    }
  }
}

TEST(MaxPool, TiesRouteGradientToFirstIndex) {
  Tensor x = Tensor::from({2, 2, 1}, {5, 5, 5, 5}, true);
  Tape tape;
  TapeScope scope(tape);
  tape.backward(sum(max_pool2d(x, 2)));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{1, 0, 0, 0}));
}

TEST(BilinearResize, HalfPixelExample) {
  expect_all_near(bilinear_resize(Tensor::from({1, 2, 1}, {0, 1}), 1, 4), {0, 0.25, 0.75, 1}, 1e-15);
}

TEST(BilinearResize, ConstantAndIdentity) {
  const Tensor c = bilinear_resize(Tensor::full({3, 2, 2}, 2.5), 7, 5);
  for (double v : c.data()) EXPECT_NEAR(v, 2.5, 1e-14);
  const Tensor x = random_tensor({4, 5, 3}, 28);
  expect_all_near(bilinear_resize(x, 4, 5), values(x), 1e-15);
}

TEST(BilinearResize, GradientMatchesFiniteDifferences) {
  Tensor x = random_tensor({2, 3, 2, 2}, 29);
  const Tensor dir = random_tensor({2, 12, 8, 2}, 30);
  const auto e =
      check_gradient("bilinear", [&] { return sum(mul(bilinear_resize(x, 12, 8), dir)); }, {x}, 1e-5, 1e-4);
  EXPECT_TRUE(e.passed) << e.max_rel_error;
}

TEST(NearestResize, BlockReplication) {
  const Tensor y = nearest_resize(Tensor::from({2, 2, 1}, {1, 2, 3, 4}), 4, 4);
  EXPECT_EQ(values(y), (std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4}));
}

TEST(NearestResize, IdentityAndBlockRecovery) {
  const Tensor x = random_tensor({3, 4, 2}, 31);
  EXPECT_TRUE(bit_equal(nearest_resize(x, 3, 4), x));
  EXPECT_TRUE(bit_equal(nearest_resize(nearest_resize(x, 12, 16), 3, 4), x));
}

TEST(ResidualBlock, ZeroConvolutionsGiveSkipPath) {
  Rng rng(3);
  ResidualBlock block = make_residual_block_2d(4, rng);
  for (auto* conv : {&block.first(), &block.second()}) {
    auto& layer = std::get<Conv2DLayer>(*conv);
    for (double& v : layer.kernel().mutable_data()) v = 0.0;
  }
  const Tensor x = random_tensor({2, 5, 5, 4}, 32);
  expect_all_near(block.forward(x, Mode::train), values(x), 1e-12);
}

TEST(ResidualBlock, ShapesPreserved) {
  Rng rng(4);
  ResidualBlock b2 = make_residual_block_2d(4, rng);
  ResidualBlock b1 = make_residual_block_1d(8, 2, rng);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Shape s2{1 + seed % 3, 3 + seed, 4 + seed, 4};
    EXPECT_EQ(b2.forward(random_tensor(s2, seed), Mode::train).shape(), s2);
    const Shape s1{1 + seed % 2, 5 + seed, 3 + seed, 8};
    EXPECT_EQ(b1.forward(random_tensor(s1, seed), Mode::eval).shape(), s1);
  }
}

TEST(ResidualBlock, SixteenStackedBlocksGradient) {
  Rng rng(5);
  std::vector<ResidualBlock> blocks;
  for (int i = 0; i < 16; ++i) blocks.push_back(make_residual_block_2d(2, rng));
  Tensor x = random_tensor({2, 4, 4, 2}, 33);
  const Tensor dir = random_tensor({2, 4, 4, 2}, 34);
  auto loss = [&] {
    Tensor h = x;
    for (auto& b : blocks) h = b.forward(h, Mode::eval);
    return sum(mul(h, dir));
  };
  std::vector<Tensor> inputs{x};
  for (auto& b : blocks) {
    NamedTensors p;
    b.parameters("b", p);
    for (auto& n : p) inputs.push_back(n.tensor);
  }
  const auto e = check_gradient("stack", loss, inputs, 1e-5, 1e-3);
  EXPECT_TRUE(e.passed) << e.max_rel_error;
}

TEST(Dense, Examples) {
  const Tensor x = Tensor::from({1, 2}, {1, 2});
  EXPECT_EQ(values(dense(x, Tensor::from({2, 1}, {1, 1}), Tensor::zeros({1}))), (std::vector<double>{3}));
  const Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  EXPECT_EQ(values(dense(x, eye, Tensor::zeros({2}))), values(x));
  EXPECT_THROW(dense(x, Tensor::zeros({3, 1}), Tensor::zeros({1})), ShapeError);
}

TEST(Dense, GradientMatchesFiniteDifferences) {
  Tensor x = random_tensor({3, 4}, 35);
  Tensor w = random_tensor({4, 5}, 36);
  Tensor b = random_tensor({5}, 37);
  const Tensor dir = random_tensor({3, 5}, 38);
  const auto e = check_gradient("dense", [&] { return sum(mul(dense(x, w, b), dir)); }, {x, w, b}, 1e-5, 1e-4);
  EXPECT_TRUE(e.passed) << e.max_rel_error;
}

TEST(Layers, ParameterNamesAndInitDeterminism) {
  Rng a(9), b(9);
  Conv2DLayer ca(3, 2, 4, a), cb(3, 2, 4, b);
  EXPECT_TRUE(bit_equal(ca.kernel(), cb.kernel()));
  for (double v : ca.bias().data()) EXPECT_EQ(v, 0.0);
  NamedTensors names;
  ca.parameters("stem", names);
  ASSERT_EQ(names.size(), 2u);
  EXPECT_EQ(names[0].name, "stem.kernel");
  EXPECT_EQ(names[1].name, "stem.bias");
  EXPECT_THROW(Conv2DLayer(2, 1, 1, a), std::invalid_argument);
}

}  // namespace
}  // namespace ratfm
