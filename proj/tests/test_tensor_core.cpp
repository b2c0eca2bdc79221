#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cci/error.hpp"
#include "cci/fkt.hpp"
#include "cci/gradcheck.hpp"
#include "cci/ops.hpp"
#include "cci/param_store.hpp"
#include "oracles.hpp"

using namespace cci;

namespace {

struct ConvCase {
  int cin, cout, k, stride, pad, dil, groups, h, w;
};

class ConvOracle : public ::testing::TestWithParam<ConvCase> {};

TEST_P(ConvOracle, MatchesNestedLoops) {
  const ConvCase p = GetParam();
  Rng rng(11);
  ConvSpec spec{p.cin, p.cout, p.k, p.stride, p.pad, p.dil, p.groups};
  const Tensor x = Tensor::normal({2, p.cin, p.h, p.w}, rng);
  const Tensor w = Tensor::normal(spec.weight_shape(), rng);
  const Tensor b = Tensor::normal({1, p.cout, 1, 1}, rng);
  const Tensor got = ops::conv2d(x, spec, w, b);
  const Tensor want = oracle::conv2d(x, w, b, p.stride, p.pad, p.dil, p.groups);
  ASSERT_EQ(got.shape(), want.shape());
  EXPECT_LE(max_abs_diff(got, want), 1e-4f);
}

INSTANTIATE_TEST_SUITE_P(Shapes, ConvOracle,
                         ::testing::Values(ConvCase{1, 1, 2, 1, 0, 1, 1, 3, 3},
                                           ConvCase{3, 5, 3, 1, 1, 1, 1, 6, 7},
                                           ConvCase{4, 6, 3, 2, 1, 1, 2, 7, 5},
                                           ConvCase{2, 3, 3, 1, 2, 2, 1, 6, 6},
                                           ConvCase{6, 6, 3, 1, 1, 1, 6, 5, 8},
                                           ConvCase{6, 6, 3, 2, 2, 2, 6, 9, 7},
                                           ConvCase{4, 8, 1, 1, 0, 1, 1, 4, 4},
                                           ConvCase{3, 4, 5, 3, 2, 1, 1, 11, 10}));

TEST(Conv, SmallCaseMatchesQuadrupleLoop) {
  Rng rng(3);
  const Tensor x = Tensor::normal({1, 1, 3, 3}, rng);
  const Tensor w = Tensor::normal({1, 1, 2, 2}, rng);
  const Tensor got = ops::conv2d(x, ConvSpec{1, 1, 2, 1, 0, 1, 1}, w);
  ASSERT_EQ(got.shape(), (Shape{1, 1, 2, 2}));
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      double s = 0.0;
      for (int u = 0; u < 2; ++u)
        for (int v = 0; v < 2; ++v) s += static_cast<double>(x.at(0, 0, i + u, j + v)) * w.at(0, 0, u, v);
      EXPECT_NEAR(got.at(0, 0, i, j), s, 1e-6);
    }
}

TEST(Conv, IdentityKernel) {
  Rng rng(1);
  const Tensor x = Tensor::normal({2, 1, 4, 5}, rng);
  const Tensor y = ops::conv2d(x, ConvSpec{}, Tensor::full({1, 1, 1, 1}, 1.0f));
  EXPECT_TRUE(bit_equal(x, y));
}

TEST(Conv, ZeroWeightGivesBias) {
  Rng rng(1);
  const Tensor x = Tensor::normal({1, 3, 4, 4}, rng);
  const ConvSpec spec = ConvSpec::same(3, 2, 3);
  const Tensor y = ops::conv2d(x, spec, Tensor::zeros(spec.weight_shape()), Tensor::vector({0.5f, -2.0f}));
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(y.at(0, 0, i, 1), 0.5f);
    EXPECT_EQ(y.at(0, 1, 3, i), -2.0f);
  }
}

TEST(Conv, OutputExtentFormula) {
  const ConvSpec s{3, 4, 3, 2, 1, 2, 1};
  EXPECT_EQ(s.out_extent(10), (10 + 2 - 2 * 2 - 1) / 2 + 1);
}

TEST(Conv, ShapeErrors) {
  const ConvSpec spec = ConvSpec::same(3, 4, 3);
  EXPECT_THROW(ops::conv2d(Tensor({1, 2, 4, 4}), spec, Tensor(spec.weight_shape())), ConfigError);
  EXPECT_THROW(ops::conv2d(Tensor({1, 3, 4, 4}), spec, Tensor({4, 3, 1, 1})), ConfigError);
  const ConvSpec big{1, 1, 5, 1, 0, 1, 1};
  EXPECT_THROW(ops::conv2d(Tensor({1, 1, 3, 3}), big, Tensor(big.weight_shape())), ConfigError);
  EXPECT_THROW((ConvSpec{3, 4, 3, 1, 1, 1, 2}.validate()), ConfigError);
}

TEST(Conv, BackwardShapesAndZeroGrad) {
  Rng rng(2);
  const ConvSpec spec = ConvSpec::same(2, 3, 3, 2);
  const Tensor x = Tensor::normal({1, 2, 5, 5}, rng);
  const Tensor w = Tensor::normal(spec.weight_shape(), rng);
  const ConvGrads g = ops::conv2d_backward(x, spec, w, Tensor(spec.output_shape(x.shape())), true);
  EXPECT_EQ(g.x.shape(), x.shape());
  EXPECT_EQ(g.weight.shape(), w.shape());
  for (float v : g.x.data()) EXPECT_EQ(v, 0.0f);
  for (float v : g.bias.data()) EXPECT_EQ(v, 0.0f);
}

TEST(BatchNorm, TrainMatchesFormula) {
  Rng rng(4);
  const Tensor x = Tensor::normal({3, 2, 4, 3}, rng, 1.5f, 2.0f);
  BatchNormParams bn = BatchNormParams::identity(2);
  bn.gamma = Tensor::vector({0.5f, 2.0f});
  bn.beta = Tensor::vector({1.0f, -1.0f});
  const Tensor y = ops::batch_norm(x, bn, Mode::train);
  EXPECT_LE(max_abs_diff(y, oracle::batch_norm_train(x, bn.gamma, bn.beta)), 1e-5f);
}

TEST(BatchNorm, RunningStatisticsUseUnbiasedVariance) {
  const Tensor x({2, 1, 1, 2}, {1.0f, 2.0f, 3.0f, 6.0f});
  BatchNormParams bn = BatchNormParams::identity(1);
  ops::batch_norm(x, bn, Mode::train);
  // mean 3, unbiased variance (4 + 1 + 0 + 9) / 3
  EXPECT_NEAR(bn.running_mean[0], 0.1 * 3.0, 1e-6);
  EXPECT_NEAR(bn.running_var[0], 0.9 + 0.1 * 14.0 / 3.0, 1e-6);
}

TEST(BatchNorm, EvalUsesRunningStatistics) {
  BatchNormParams bn = BatchNormParams::identity(1);
  bn.running_mean = Tensor::vector({2.0f});
  bn.running_var = Tensor::vector({4.0f});
  const Tensor y = ops::batch_norm(Tensor({1, 1, 1, 1}, {6.0f}), bn, Mode::eval);
  EXPECT_NEAR(y[0], 4.0 / std::sqrt(4.0 + 1e-5), 1e-6);
}

TEST(Activations, MatchClosedForms) {
  Rng rng(5);
  const Tensor x = Tensor::normal({1, 3, 4, 4}, rng, 0.0f, 3.0f);
  EXPECT_LE(max_abs_diff(ops::relu(x), oracle::map(x, [](double v) { return v > 0 ? v : 0.0; })), 0.0f);
  EXPECT_LE(max_abs_diff(ops::sigmoid(x), oracle::map(x, oracle::sigmoid)), 1e-6f);
  EXPECT_LE(max_abs_diff(ops::silu(x), oracle::map(x, [](double v) { return v * oracle::sigmoid(v); })),
            1e-5f);
  const Tensor extreme({1, 1, 1, 2}, {-1000.0f, 1000.0f});
  const Tensor s = ops::sigmoid(extreme);
  EXPECT_EQ(s[0], 0.0f);
  EXPECT_EQ(s[1], 1.0f);
}

TEST(Softmax, GroupsSumToOneAndMatchDirect) {
  Rng rng(6);
  const Tensor x = Tensor::normal({2, 6, 3, 2}, rng, 0.0f, 4.0f);
  const Tensor y = ops::softmax_groups(x, 3);
  EXPECT_LE(max_abs_diff(y, oracle::softmax_groups(x, 3)), 1e-6f);
  for (int i = 0; i < 3; ++i) {
    const double sum = y.at(1, 3, i, 1) + y.at(1, 4, i, 1) + y.at(1, 5, i, 1);
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
  EXPECT_THROW(ops::softmax_groups(x, 4), ConfigError);
}

TEST(Softmax, LargeLogitsStayFinite) {
  const Tensor x({1, 2, 1, 1}, {1000.0f, 0.0f});
  const Tensor y = ops::softmax_groups(x, 2);
  EXPECT_TRUE(y.all_finite());
  EXPECT_NEAR(y[0], 1.0, 1e-6);
}

TEST(PixelShuffle, IndexFormulaAndInverse) {
  Rng rng(7);
  const int r = 3;
  const Tensor x = Tensor::normal({2, 2 * r * r, 2, 3}, rng);
  const Tensor y = ops::pixel_shuffle(x, r);
  ASSERT_EQ(y.shape(), (Shape{2, 2, 6, 9}));
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 2; ++c)
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 3; ++j)
          for (int di = 0; di < r; ++di)
            for (int dj = 0; dj < r; ++dj)
              EXPECT_EQ(y.at(n, c, r * i + di, r * j + dj), x.at(n, c * r * r + di * r + dj, i, j));
  EXPECT_TRUE(bit_equal(ops::pixel_unshuffle(y, r), x));
}

TEST(Pooling, GlobalAverageAndBackward) {
  Rng rng(8);
  const Tensor x = Tensor::normal({2, 3, 4, 5}, rng);
  const Tensor y = ops::global_avg_pool(x);
  double s = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 5; ++j) s += x.at(1, 2, i, j);
  EXPECT_NEAR(y.at(1, 2, 0, 0), s / 20.0, 1e-6);
  const Tensor g = ops::global_avg_pool_backward(Tensor::full({2, 3, 1, 1}, 2.0f), x.shape());
  for (float v : g.data()) EXPECT_FLOAT_EQ(v, 0.1f);
}

TEST(Pooling, MaxPoolMatchesBruteForce) {
  Rng rng(9);
  const Tensor x = Tensor::normal({1, 2, 7, 6}, rng);
  const Tensor y = ops::max_pool2d(x, 5, 1, 2);
  ASSERT_EQ(y.shape(), x.shape());
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 6; ++j) {
        float m = -INFINITY;
        for (int u = i - 2; u <= i + 2; ++u)
          for (int v = j - 2; v <= j + 2; ++v)
            if (u >= 0 && u < 7 && v >= 0 && v < 6) m = std::max(m, x.at(0, c, u, v));
        EXPECT_EQ(y.at(0, c, i, j), m);
      }
}

TEST(Linear, FullyConnectedMatchesLoops) {
  Rng rng(10);
  const Tensor x = Tensor::normal({3, 2, 2, 1}, rng);
  const Tensor w = Tensor::normal({5, 4, 1, 1}, rng);
  const Tensor b = Tensor::normal({1, 5, 1, 1}, rng);
  const Tensor y = ops::fully_connected(x, w, b);
  for (int n = 0; n < 3; ++n)
    for (int o = 0; o < 5; ++o) {
      double s = b[static_cast<std::size_t>(o)];
      for (int i = 0; i < 4; ++i) s += static_cast<double>(w[static_cast<std::size_t>(o * 4 + i)]) * x[static_cast<std::size_t>(n * 4 + i)];
      EXPECT_NEAR(y.at(n, o, 0, 0), s, 1e-5);
    }
}

TEST(Layout, ConcatSplitRoundTrip) {
  Rng rng(12);
  const Tensor a = Tensor::normal({2, 3, 2, 2}, rng);
  const Tensor b = Tensor::normal({2, 1, 2, 2}, rng);
  const Tensor cat = ops::concat_channels({&a, &b});
  EXPECT_EQ(cat.at(1, 3, 1, 0), b.at(1, 0, 1, 0));
  const std::vector<Tensor> parts = ops::split_channels(cat, {3, 1});
  EXPECT_TRUE(bit_equal(parts[0], a));
  EXPECT_TRUE(bit_equal(parts[1], b));
  EXPECT_THROW(ops::split_channels(cat, {2, 1}), ConfigError);
}

TEST(Layout, UpsampleNearest) {
  Rng rng(13);
  const Tensor x = Tensor::normal({1, 2, 3, 2}, rng);
  EXPECT_TRUE(bit_equal(ops::upsample_nearest(x, 2), oracle::nearest_upsample(x, 2)));
  const Tensor g = ops::upsample_nearest_backward(Tensor::full({1, 2, 6, 4}, 1.0f), 2);
  for (float v : g.data()) EXPECT_EQ(v, 4.0f);
}

TEST(Layout, ScaleChannels) {
  const Tensor x = Tensor::full({1, 2, 2, 2}, 3.0f);
  const Tensor y = ops::scale_channels(x, Tensor::vector({0.5f, 2.0f}));
  EXPECT_EQ(y.at(0, 0, 1, 1), 1.5f);
  EXPECT_EQ(y.at(0, 1, 0, 0), 6.0f);
}

TEST(Tensor, InvalidShapesRejected) {
  EXPECT_THROW(Tensor({0, 1, 1, 1}), ConfigError);
  EXPECT_THROW(Tensor({1, 1, 1, 2}, std::vector<float>{1.0f}), ConfigError);
  EXPECT_THROW(Tensor({1, 1, 1, 1}).add_(Tensor({1, 1, 1, 2})), ConfigError);
}

TEST(Fkt, RoundTripIsBitExact) {
  Rng rng(14);
  const Tensor t = Tensor::normal({2, 3, 4, 5}, rng);
  const auto path = std::filesystem::temp_directory_path() / "cci_fkt_roundtrip.fkt";
  fkt::save(path, t);
  EXPECT_TRUE(bit_equal(fkt::load(path), t));
  std::filesystem::remove(path);
}

TEST(Fkt, BadMagicIsParseError) {
  const auto path = std::filesystem::temp_directory_path() / "cci_fkt_bad.fkt";
  {
    std::ofstream f(path, std::ios::binary);
    f << "NOPE1234";
  }
  EXPECT_THROW(fkt::load(path), ParseError);
  std::filesystem::remove(path);
}

TEST(ParamStore, DuplicateAndMismatchRejected) {
  ParamStore store;
  Tensor a({1, 1, 1, 2});
  Tensor ga({1, 1, 1, 2});
  Tensor bad({1, 1, 1, 3});
  store.add("a", a, &ga);
  EXPECT_THROW(store.add("a", a, &ga), ConfigError);
  EXPECT_THROW(store.add("b", a, &bad), ConfigError);
  ga.fill(2.0f);
  store.sgd_step(0.5f);
  EXPECT_EQ(a[0], -1.0f);
  store.zero_grad();
  EXPECT_EQ(ga[1], 0.0f);
}

TEST(GradCheck, TensorCoreSuitePasses) {
  const gradcheck::Report r = gradcheck::run(0, "tensor-core");
  ASSERT_FALSE(r.entries.empty());
  for (const auto& e : r.entries) {
    EXPECT_TRUE(e.passed) << e.name << " " << e.max_rel_error;
    EXPECT_GE(e.shapes.size(), 5u);
  }
}

TEST(GradCheck, CatchesAWrongGradient) {
  Rng rng(1);
  Tensor x = Tensor::normal({1, 1, 2, 2}, rng);
  gradcheck::Case c;
  c.forward = [&] { return ops::sigmoid(x); };
  c.wrt = {{"x", &x}};
  c.backward = [&](const Tensor& r) {
    Tensor g = ops::sigmoid_backward(ops::sigmoid(x), r);
    g.scale_(1.01f);
    return std::vector<Tensor>{g};
  };
  EXPECT_GT(gradcheck::check_case(c, rng), 5e-3);
}

TEST(GradCheck, UnknownFilterRejected) { EXPECT_THROW(gradcheck::run(0, "nonexistent"), ConfigError); }

}  // namespace
