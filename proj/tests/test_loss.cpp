#include <gtest/gtest.h>

#include <cmath>

#include "cci/error.hpp"
#include "cci/loss.hpp"
#include "cci/synthetic.hpp"
#include "oracles.hpp"

using namespace cci;

namespace {

double softplus(double v) { return std::log1p(std::exp(v)); }

net::NetworkConfig tiny(int input) {
  net::NetworkConfig cfg;
  cfg.width_multiple = 0.125;
  cfg.input_size = input;
  return cfg;
}

TEST(Loss, NegativesOnlyIsSumOfObjectnessSoftplus) {
  Rng rng(1);
  const std::vector<Tensor> heads{Tensor::normal({2, 7, 4, 4}, rng, -1.0f, 2.0f),
                                  Tensor::normal({2, 7, 2, 2}, rng, -1.0f, 2.0f)};
  const std::vector<int> strides{8, 16};
  const std::vector<std::vector<BoundingBox>> truth(2);
  const train::LossResult r = train::detection_loss(heads, strides, 32, truth);
  double want = 0.0;
  for (const Tensor& h : heads)
    for (int n = 0; n < 2; ++n)
      for (int i = 0; i < h.h(); ++i)
        for (int j = 0; j < h.w(); ++j) want += softplus(h.at(n, 4, i, j));
  EXPECT_NEAR(r.total, want, 1e-6 * want);
  EXPECT_EQ(r.classification, 0.0);
  EXPECT_EQ(r.box, 0.0);
  EXPECT_EQ(r.positives, 0);
  // d/dz softplus(z) = sigmoid(z), everything else untouched
  EXPECT_NEAR(r.grads[1].at(1, 4, 1, 0), oracle::sigmoid(heads[1].at(1, 4, 1, 0)), 1e-6);
  EXPECT_EQ(r.grads[0].at(0, 0, 2, 2), 0.0f);
  EXPECT_EQ(r.grads[0].at(0, 5, 2, 2), 0.0f);
}

TEST(Loss, SinglePositiveClosedForm) {
  const std::vector<Tensor> heads{Tensor::zeros({1, 6, 2, 2})};
  const std::vector<int> strides{16};
  // 16-pixel box centred in cell (1, 0)
  const std::vector<std::vector<BoundingBox>> truth{{BoundingBox{0, 0.75f, 0.25f, 0.5f, 0.5f}}};
  const train::LossResult r = train::detection_loss(heads, strides, 32, truth);
  const double l2 = std::log(2.0);
  EXPECT_NEAR(r.objectness, 4 * l2, 1e-9);  // bce(0, y) = log 2 for either target
  EXPECT_NEAR(r.classification, l2, 1e-9);
  // sigmoid(0) = 0.5 matches the centre offsets; softplus(0) = log 2 against size 1
  const double d = l2 - 1.0;
  EXPECT_NEAR(r.box, 2 * 0.5 * d * d, 1e-7);
  EXPECT_EQ(r.positives, 1);
}

TEST(Loss, AssignmentPicksStrideByBoxSize) {
  const std::vector<Shape> shapes{{1, 7, 80, 80}, {1, 7, 40, 40}, {1, 7, 20, 20}};
  const std::vector<int> strides{8, 16, 32};
  const std::vector<BoundingBox> truth{BoundingBox{0, 0.5f, 0.5f, 32.0f / 640, 16.0f / 640},
                                       BoundingBox{1, 0.1f, 0.9f, 128.0f / 640, 128.0f / 640}};
  const auto a = train::assign_targets(truth, shapes, strides, 640);
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a[0].head, 0);
  EXPECT_EQ(a[0].row, 40);
  EXPECT_EQ(a[0].col, 40);
  EXPECT_EQ(a[1].head, 2);
  EXPECT_EQ(a[1].row, 18);
  EXPECT_EQ(a[1].col, 2);
  EXPECT_NEAR(a[1].target[2], 4.0, 1e-5);
}

TEST(Loss, HeadGradientsMatchFiniteDifferences) {
  Rng rng(2);
  std::vector<Tensor> heads{Tensor::normal({2, 7, 4, 4}, rng), Tensor::normal({2, 7, 2, 2}, rng)};
  const std::vector<int> strides{8, 16};
  const std::vector<std::vector<BoundingBox>> truth{
      {BoundingBox{1, 0.3f, 0.6f, 0.2f, 0.3f}, BoundingBox{0, 0.7f, 0.2f, 0.6f, 0.5f}},
      {BoundingBox{0, 0.5f, 0.5f, 0.25f, 0.25f}}};
  const train::LossResult r = train::detection_loss(heads, strides, 32, truth);
  ASSERT_EQ(r.positives, 3);
  double worst = 0.0;
  for (std::size_t h = 0; h < heads.size(); ++h)
    for (std::size_t i = 0; i < heads[h].numel(); ++i) {
      const float keep = heads[h][i];
      heads[h][i] = keep + 1e-2f;
      const double up = train::detection_loss(heads, strides, 32, truth).total;
      heads[h][i] = keep - 1e-2f;
      const double down = train::detection_loss(heads, strides, 32, truth).total;
      heads[h][i] = keep;
      const double numeric = (up - down) / 2e-2;
      worst = std::max(worst, std::abs(numeric - r.grads[h][i]));
    }
  EXPECT_LT(worst, 1e-3);
}

TEST(Loss, GraphGradientsMatchFiniteDifferences) {
  net::NetworkConfig cfg = tiny(64);
  cfg.use_cgd = false;  // keep the path free of ReLU kinks
  net::Graph g = net::build_network(cfg, 3);
  Rng rng(3);
  const Tensor images = Tensor::uniform({2, 3, 64, 64}, 0.0f, 1.0f, rng);
  const std::vector<std::vector<BoundingBox>> truth{{BoundingBox{1, 0.4f, 0.5f, 0.3f, 0.2f}},
                                                    {BoundingBox{0, 0.6f, 0.3f, 0.5f, 0.5f}}};
  const auto loss = [&] {
    const std::vector<Tensor> heads = g.forward(images, Mode::train);
    return train::detection_loss(heads, g.strides(), 64, truth);
  };
  g.params().zero_grad();
  const train::LossResult r = loss();
  g.backward(r.grads);

  double max_err = 0.0;
  double max_grad = 0.0;
  for (const char* name : {"head.p3.cls.pred.weight", "neck.up1.encode.weight", "backbone.stem.conv.weight",
                           "backbone.c2f2.m.0.dw.weight", "backbone.down3.conv.weight"}) {
    ASSERT_TRUE(g.params().contains(name)) << name;
    const ParamEntry& e = g.params().at(name);
    for (std::size_t k = 0; k < 4; ++k) {
      const std::size_t i = (k * 7919) % e.value->numel();
      const float keep = (*e.value)[i];
      (*e.value)[i] = keep + 1e-2f;
      const double up = loss().total;
      (*e.value)[i] = keep - 1e-2f;
      const double down = loss().total;
      (*e.value)[i] = keep;
      const double numeric = (up - down) / 2e-2;
      max_err = std::max(max_err, std::abs(numeric - (*e.grad)[i]));
      max_grad = std::max({max_grad, std::abs(numeric), std::abs(static_cast<double>((*e.grad)[i]))});
    }
  }
  EXPECT_LT(max_err / max_grad, 2e-2) << "max_err " << max_err << " max_grad " << max_grad;
}

TEST(Loss, TwentyStepsReduceLossAcrossSeeds) {
  const int trials = 20;
  int decreased = 0;
  for (int seed = 0; seed < trials; ++seed) {
    net::Graph g = net::build_network(tiny(64), static_cast<std::uint64_t>(seed));
    Rng rng(static_cast<std::uint64_t>(seed) + 100);
    const synth::ToySample s = synth::make_toy_sample(rng, 64);
    const std::vector<std::vector<BoundingBox>> truth{s.boxes};
    const double first = train::train_step(g, s.image, truth, 1e-3f).total;
    double last = first;
    for (int step = 1; step < 20; ++step) last = train::train_step(g, s.image, truth, 1e-3f).total;
    if (last < first) ++decreased;
  }
  EXPECT_GE(decreased, 19);
}

TEST(Loss, TargetCountMustMatchBatch) {
  const std::vector<Tensor> heads{Tensor::zeros({2, 6, 2, 2})};
  const std::vector<int> strides{16};
  const std::vector<std::vector<BoundingBox>> truth(1);
  EXPECT_THROW(train::detection_loss(heads, strides, 32, truth), ConfigError);
}

}  // namespace
