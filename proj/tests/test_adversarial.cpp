#include <gtest/gtest.h>

#include <random>

#include "bsnn/adversarial.hpp"
#include "support.hpp"

using namespace bsnn;
using namespace testing_support;

namespace {

SurrogateCnn random_cnn(std::mt19937_64& rng) {
  SurrogateCnn m = SurrogateCnn::zeros(8, 3, 2, 3);
  m.kernels = random_matrix(2, 9, rng, 0.5);
  m.conv_bias = random_vector(2, rng, 0.5);
  m.dense = random_matrix(3, m.dense.cols(), rng, 0.5);
  m.dense_bias = random_vector(3, rng, 0.5);
  return m;
}

bool close(double fd, double analytic) { return std::abs(fd - analytic) <= 1e-7 + 1e-5 * std::abs(analytic); }

double cnn_loss(const SurrogateCnn& m, const Tensor3& x, std::size_t t) {
  return -std::log(m.predict_proba(x)(static_cast<Eigen::Index>(t)));
}

template <class Getter>
void check_block(SurrogateCnn m, const Tensor3& x, std::size_t t, Getter get,
                 const double* analytic, Eigen::Index n) {
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < n; ++i) {
    double& p = get(m)[i];
    const double keep = p;
    p = keep + h;
    const double up = cnn_loss(m, x, t);
    p = keep - h;
    const double down = cnn_loss(m, x, t);
    p = keep;
    EXPECT_TRUE(close((up - down) / (2 * h), analytic[i])) << "entry " << i;
  }
}

LabeledDataset bar_dataset(std::size_t per_class) {
  // Class 0: a vertical bar, class 1: a horizontal bar, at varying offsets.
  LabeledDataset ds;
  ds.class_count = 2;
  for (std::size_t i = 0; i < per_class; ++i)
    for (std::size_t c = 0; c < 2; ++c) {
      GrayImage im(8, 8);
      const std::size_t at = 1 + i % 6;
      for (std::size_t j = 0; j < 8; ++j) c == 0 ? im.set(j, at, 1.0) : im.set(at, j, 1.0);
      ds.images.push_back(im);
      ds.labels.push_back(c);
    }
  return ds;
}

}  // namespace

TEST(Surrogate, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  const SurrogateCnn m = random_cnn(rng);
  const Tensor3 x = random_tensor(1, 8, 8, rng, 0.0, 1.0);
  for (std::size_t t = 0; t < 3; ++t) {
    const SurrogateCnn::Gradient g = m.backward(x, t);
    EXPECT_NEAR(g.loss, cnn_loss(m, x, t), 1e-12);
    check_block(m, x, t, [](SurrogateCnn& s) { return s.kernels.data(); }, g.kernels.data(), g.kernels.size());
    check_block(m, x, t, [](SurrogateCnn& s) { return s.conv_bias.data(); }, g.conv_bias.data(), g.conv_bias.size());
    check_block(m, x, t, [](SurrogateCnn& s) { return s.dense.data(); }, g.dense.data(), g.dense.size());
    check_block(m, x, t, [](SurrogateCnn& s) { return s.dense_bias.data(); }, g.dense_bias.data(), g.dense_bias.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      Tensor3 a = x, b = x;
      a.values()[i] += 1e-6;
      b.values()[i] -= 1e-6;
      const double fd = (cnn_loss(m, a, t) - cnn_loss(m, b, t)) / 2e-6;
      EXPECT_TRUE(close(fd, g.input.values()[i])) << fd << " vs " << g.input.values()[i];
    }
  }
}

TEST(Surrogate, GeometryIsChecked) {
  EXPECT_THROW(SurrogateCnn::zeros(8, 4, 2, 3), Error);  // odd conv output
  std::mt19937_64 rng(2);
  const SurrogateCnn m = random_cnn(rng);
  EXPECT_THROW(m.predict(Tensor3(1, 9, 9)), Error);
  EXPECT_THROW(m.backward(Tensor3(1, 8, 8), 3), Error);
}

TEST(Surrogate, TrainingIsDeterministicAndFitsBars) {
  const LabeledDataset ds = bar_dataset(6);
  SurrogateTrainConfig cfg;
  cfg.filters = 2;
  cfg.kernel_width = 3;
  cfg.epochs = 200;
  const SurrogateCnn a = train_surrogate(ds, cfg, 4);
  EXPECT_EQ(a, train_surrogate(ds, cfg, 4));
  std::size_t right = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) right += a.predict(ds.images[i].tensor()) == ds.labels[i];
  EXPECT_EQ(right, ds.size());
}

TEST(LinearReference, GradientIsClosedForm) {
  std::mt19937_64 rng(3);
  const LinearSoftmax m{random_matrix(4, 9, rng), random_vector(4, rng)};
  const Tensor3 x = random_tensor(1, 3, 3, rng, 0.0, 1.0);
  const Tensor3 g = m.input_gradient(x, 2);
  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor3 a = x, b = x;
    a.values()[i] += 1e-6;
    b.values()[i] -= 1e-6;
    const double fd = (-std::log(m.predict_proba(a)(2)) + std::log(m.predict_proba(b)(2))) / 2e-6;
    EXPECT_LT(relative_error(fd, g.values()[i]), 1e-6);
  }
}

TEST(Perturbation, StepsAreBoundedAndPixelsStayInRange) {
  std::mt19937_64 rng(4);
  const LinearSoftmax m{random_matrix(3, 16, rng), random_vector(3, rng)};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> px(16);
    for (double& p : px) p = u(rng);
    const GrayImage img(4, 4, px);
    PerturbConfig cfg;
    cfg.target = 1;
    cfg.max_steps = 3;
    const PerturbResult r = perturb(img, m, cfg);
    EXPECT_LE(r.steps, 3u);
    EXPECT_EQ(r.success, m.predict(r.image.tensor()) == 1u);
    for (std::size_t i = 0; i < 16; ++i) {
      EXPECT_LE(std::abs(r.image.pixels()[i] - px[i]), 0.05 * static_cast<double>(r.steps) + 1e-12);
      EXPECT_GE(r.image.pixels()[i], 0.0);
      EXPECT_LE(r.image.pixels()[i], 1.0);
    }
    if (m.predict(img.tensor()) == 1u) {
      EXPECT_EQ(r.steps, 0u);
      EXPECT_EQ(r.image, img);
    }
  }
}

TEST(Perturbation, SignStepFollowsNegativeGradient) {
  // Two classes, weights favouring pixel 0 for the target: one step must raise
  // pixel 0 and lower pixel 1.
  RowMatrix w(2, 2);
  w << 0.0, 5.0, 5.0, 0.0;
  const LinearSoftmax m{w, Vector::Zero(2)};
  const GrayImage img(1, 2, std::vector<double>{0.5, 0.5});
  PerturbConfig cfg;
  cfg.target = 1;
  cfg.max_steps = 1;
  cfg.eps_step = 0.1;
  const PerturbResult r = perturb(img, m, cfg);
  EXPECT_DOUBLE_EQ(r.image(0, 0), 0.6);
  EXPECT_DOUBLE_EQ(r.image(0, 1), 0.4);
  EXPECT_TRUE(r.success);
  cfg.eps_step = 0.0;
  EXPECT_THROW(perturb(img, m, cfg), Error);
  cfg.eps_step = 0.1;
  cfg.target = 2;
  EXPECT_THROW(perturb(img, m, cfg), Error);
}

TEST(Perturbation, AttackSetSkipsTargetClass) {
  const LabeledDataset ds = bar_dataset(3);
  RowMatrix w = RowMatrix::Zero(2, 64);
  const LinearSoftmax m{w, Vector::Zero(2)};
  PerturbConfig cfg;
  cfg.target = 1;
  const AttackSet set = make_attack_set(ds, m, cfg);
  ASSERT_EQ(set.records.size(), ds.size());
  EXPECT_EQ(set.data.labels, ds.labels);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(set.records[i].attempted, ds.labels[i] != 1u);
    if (ds.labels[i] == 1u) {
      EXPECT_EQ(set.data.images[i], ds.images[i]);
    }
  }
  // A constant model predicts class 0 forever and has zero gradient, so nothing succeeds.
  EXPECT_EQ(set.success_rate(), 0.0);
}
