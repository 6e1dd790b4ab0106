#include <gtest/gtest.h>

#include <random>

#include "bsnn/cdbn.hpp"
#include "bsnn/data_io.hpp"
#include "support.hpp"

using namespace bsnn;
using namespace testing_support;

namespace {

CdbnStack random_stack(std::size_t input, std::size_t nw1, std::size_t nw2, std::size_t k,
                       std::mt19937_64& rng) {
  CdbnStack s;
  CrbmParams a = CrbmParams::zeros(k, 1, input, nw1, 2);
  a.kernels = random_matrix(k, nw1 * nw1, rng, 0.3);
  a.hidden_bias = random_vector(k, rng, 0.3);
  CrbmParams b = CrbmParams::zeros(k, k, a.pooled_width(), nw2, 2);
  b.kernels = random_matrix(k, k * nw2 * nw2, rng, 0.3);
  b.hidden_bias = random_vector(k, rng, 0.3);
  s.layers = {a, b};
  s.validate();
  return s;
}

GrayImage random_image(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> px(n * n);
  for (double& p : px) p = u(rng);
  return {n, n, px};
}

}  // namespace

TEST(Cdbn, DigitAndFaceGeometry) {
  std::mt19937_64 rng(1);
  const CdbnStack digits = random_stack(28, 7, 4, 3, rng);
  EXPECT_EQ(digits.layers[0].pooled_width(), 11u);
  EXPECT_EQ(digits.top().pooled_width(), 4u);
  EXPECT_EQ(receptive_field(digits, 0), 7u);
  EXPECT_EQ(receptive_field(digits, 1), 13u);
  const CdbnStack faces = random_stack(64, 9, 5, 3, rng);
  EXPECT_EQ(faces.top().pooled_width(), 12u);
  EXPECT_EQ(receptive_field(faces, 1), 17u);
}

TEST(Cdbn, MismatchedLayersAreRejected) {
  CdbnStack s;
  s.layers = {CrbmParams::zeros(3, 1, 28, 7, 2), CrbmParams::zeros(3, 4, 11, 4, 2)};
  EXPECT_THROW(s.validate(), Error);
  EXPECT_THROW(CdbnStack{}.validate(), Error);
}

TEST(Cdbn, ExtractionChainsPooledProbabilities) {
  std::mt19937_64 rng(2);
  const CdbnStack s = random_stack(28, 7, 4, 3, rng);
  const GrayImage img = random_image(28, rng);
  const LayerActivations acts = extract_layers(img.tensor(), s);
  const HiddenPosterior p0 = hidden_conditional(img.tensor(), s.layers[0]);
  EXPECT_EQ(acts.pooled[0], p0.pooled());
  const HiddenPosterior p1 = hidden_conditional(p0.pooled(), s.layers[1]);
  EXPECT_EQ(acts.pooled[1], p1.pooled());
  // Switches point at the most probable unit of every block.
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t by = 0; by < 11; ++by)
      for (std::size_t bx = 0; bx < 11; ++bx) {
        const std::uint32_t at = acts.switches[0][(k * 11 + by) * 11 + bx];
        const double chosen = p0.hidden(k, 2 * by + at / 2, 2 * bx + at % 2);
        for (std::size_t d = 0; d < 4; ++d)
          EXPECT_GE(chosen, p0.hidden(k, 2 * by + d / 2, 2 * bx + d % 2));
      }
  const EpisodicFeatures f = extract_episodic(img, s);
  EXPECT_EQ(f.maps, acts.pooled[1]);
  EXPECT_THROW(extract_episodic(random_image(20, rng), s), Error);
}

TEST(Cdbn, DeconvolutionIsLinear) {
  std::mt19937_64 rng(3);
  const CdbnStack s = random_stack(28, 7, 4, 3, rng);
  const EpisodicFeatures f = extract_episodic(random_image(28, rng), s);
  const Tensor3 x = random_tensor(3, 4, 4, rng), y = random_tensor(3, 4, 4, rng);
  Tensor3 mix = x;
  for (std::size_t i = 0; i < mix.size(); ++i) mix.values()[i] = 2.0 * x.values()[i] - 0.5 * y.values()[i];
  const Tensor3 a = deconvolve(x, 1, s, f.switches);
  const Tensor3 b = deconvolve(y, 1, s, f.switches);
  const Tensor3 m = deconvolve(mix, 1, s, f.switches);
  for (std::size_t i = 0; i < m.size(); ++i)
    EXPECT_NEAR(m.values()[i], 2.0 * a.values()[i] - 0.5 * b.values()[i], 1e-10);

  const std::vector<double> weights = {0.0, 3.0, 1.0};
  Tensor3 scaled = x;
  for (std::size_t k = 0; k < 3; ++k)
    for (double& v : scaled.channel(k)) v *= weights[k];
  const Tensor3 ws = deconvolve(x, 1, s, f.switches, weights);
  const Tensor3 direct = deconvolve(scaled, 1, s, f.switches);
  for (std::size_t i = 0; i < ws.size(); ++i) EXPECT_NEAR(ws.values()[i], direct.values()[i], 1e-10);
  EXPECT_THROW(deconvolve(x, 1, s, f.switches, std::vector<double>{1.0}), Error);
}

TEST(Cdbn, FeatureResponseStaysInsideReceptiveField) {
  std::mt19937_64 rng(4);
  const CdbnStack s = random_stack(28, 7, 4, 3, rng);
  for (std::size_t layer : {0u, 1u}) {
    const std::size_t r = receptive_field(s, layer);
    for (std::size_t k = 0; k < 3; ++k) {
      const Tensor3 full = deconvolve(one_hot_pooled(s, layer, k), layer, s, {});
      double inside = 0.0;
      for (std::size_t y = 0; y < full.height(); ++y)
        for (std::size_t x = 0; x < full.width(); ++x) {
          if (y < r && x < r) inside += std::abs(full(0, y, x));
          else EXPECT_EQ(full(0, y, x), 0.0);
        }
      EXPECT_GT(inside, 0.0);
      const Tensor3 crop = feature_response(s, layer, k);
      EXPECT_EQ(crop.height(), r);
    }
  }
  // A first-layer response is the kernel itself.
  const Tensor3 k0 = feature_response(s, 0, 1);
  for (std::size_t u = 0; u < 7; ++u)
    for (std::size_t v = 0; v < 7; ++v) EXPECT_EQ(k0(0, u, v), s.layers[0].weight(1, 0, u, v));
}

TEST(Cdbn, GreedyTrainingShapesAndDeterminism) {
  std::mt19937_64 rng(5);
  std::vector<GrayImage> imgs;
  for (int i = 0; i < 6; ++i) imgs.push_back(random_image(16, rng));
  CdbnTrainConfig cfg;
  CrbmTrainConfig a, b;
  a.features = 4;
  a.kernel_width = 5;
  a.epochs = 2;
  b.features = 3;
  b.kernel_width = 3;
  b.epochs = 2;
  cfg.layers = {a, b};
  const TrainedStack t1 = train_stack(imgs, cfg, 9);
  const TrainedStack t2 = train_stack(imgs, cfg, 9);
  ASSERT_EQ(t1.stack.depth(), 2u);
  EXPECT_EQ(t1.stack.layers[0], t2.stack.layers[0]);
  EXPECT_EQ(t1.stack.layers[1], t2.stack.layers[1]);
  EXPECT_EQ(t1.stack.layers[1].channels, 4u);
  EXPECT_EQ(t1.stack.top().pooled_width(), 2u);
  EXPECT_EQ(t1.loss_traces[0].size(), 3u);
  const TrainedStack t3 = train_stack(imgs, cfg, 10);
  EXPECT_FALSE(t1.stack.layers[0] == t3.stack.layers[0]);
}

TEST(Cdbn, ReconstructionResemblesTrainingDigits) {
  const std::filesystem::path dir = BSNN_MNIST_DIR;
  const LabeledDataset pool = load_mnist(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
  const LabeledDataset digits = sample_per_class(pool, 2, 1);
  const TrainedStack ts = train_stack(digits.images, CdbnTrainConfig::mnist(), 1);
  double total = 0.0;
  for (const GrayImage& im : digits.images) {
    const GrayImage rec = reconstruct(extract_episodic(im, ts.stack), ts.stack);
    Eigen::Map<const Vector> a(im.pixels().data(), 784), b(rec.pixels().data(), 784);
    const Vector da = a.array() - a.mean(), db = b.array() - b.mean();
    total += da.dot(db) / (da.norm() * db.norm());
  }
  EXPECT_GE(total / 20.0, 0.7);
}
