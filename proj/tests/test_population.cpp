#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "bsnn/population.hpp"
#include "support.hpp"

using namespace bsnn;
using namespace testing_support;

namespace {

double naive_pm_entry(const Tensor3& maps, std::size_t c, std::size_t m, std::size_t r, std::size_t s) {
  const double h = static_cast<double>(maps.height()), w = static_cast<double>(maps.width());
  const double cy = h * (2.0 * static_cast<double>(r) + 1.0) / (2.0 * static_cast<double>(m)) - 0.5;
  const double cx = w * (2.0 * static_cast<double>(s) + 1.0) / (2.0 * static_cast<double>(m)) - 0.5;
  const double sy = h / (2.0 * static_cast<double>(m)), sx = w / (2.0 * static_cast<double>(m));
  double num = 0.0, den = 0.0;
  for (std::size_t y = 0; y < maps.height(); ++y)
    for (std::size_t x = 0; x < maps.width(); ++x) {
      const double a = maps(c, y, x);
      const double gy = (static_cast<double>(y) - cy) / sy, gx = (static_cast<double>(x) - cx) / sx;
      num += a * std::exp(-(gy * gy + gx * gx) / 2.0);
      den += a;
    }
  return den > 0 ? num / den : 0.0;
}

// Angle-based evaluator: preferred angle d*45deg, difference wrapped by remainder.
double naive_direction(double dx, double dy, std::size_t d, double sigma) {
  const double theta = std::atan2(dy, dx);
  const double pref = static_cast<double>(d) * std::numbers::pi / 4.0;
  const double delta = std::remainder(theta - pref, 2.0 * std::numbers::pi);
  return std::exp(-delta * delta / (2.0 * sigma * sigma));
}

Location random_location(std::mt19937_64& rng, double lo = 0.0, double hi = 12.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  return {u(rng), u(rng)};
}

}  // namespace

TEST(PNeurons, GridGeometry) {
  const PNeuronGrid g = PNeuronGrid::uniform(4, 12, 12);
  EXPECT_DOUBLE_EQ(g.center_y(0), 1.0);
  EXPECT_DOUBLE_EQ(g.center_x(3), 10.0);
  EXPECT_DOUBLE_EQ(g.sigma_y, 1.5);
  EXPECT_THROW(PNeuronGrid::uniform(0, 4, 4), Error);
}

TEST(PNeurons, MatchesNaiveEvaluation) {
  std::mt19937_64 rng(1);
  for (std::size_t m : {4u, 8u}) {
    for (std::size_t side : {4u, 12u, 7u}) {
      const Tensor3 maps = random_tensor(3, side, side, rng, 0.0, 1.0);
      const PNeuronGrid g = PNeuronGrid::uniform(m, side, side);
      for (std::size_t c = 0; c < 3; ++c) {
        const RowMatrix pm = position_matrix(maps, c, g);
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t s = 0; s < m; ++s)
            EXPECT_NEAR(pm(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(s)),
                        naive_pm_entry(maps, c, m, r, s), 1e-12);
      }
    }
  }
}

TEST(PNeurons, DyadicScalingIsExact) {
  std::mt19937_64 rng(2);
  const Tensor3 maps = random_tensor(2, 12, 12, rng, 0.0, 1.0);
  const PNeuronGrid g = PNeuronGrid::uniform(8, 12, 12);
  const Tensor3 base = position_matrices(maps, g);
  for (double alpha : {0.25, 2.0, 1024.0}) {
    Tensor3 scaled = maps;
    for (double& v : scaled.values()) v *= alpha;
    EXPECT_EQ(position_matrices(scaled, g), base);
  }
}

TEST(PNeurons, ArbitraryScalingWithinRoundoff) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> a(0.01, 100.0);
  const PNeuronGrid g = PNeuronGrid::uniform(4, 12, 12);
  for (int t = 0; t < 20; ++t) {
    const Tensor3 maps = random_tensor(1, 12, 12, rng, 0.0, 1.0);
    Tensor3 scaled = maps;
    const double alpha = a(rng);
    for (double& v : scaled.values()) v *= alpha;
    const Tensor3 p = position_matrices(maps, g), q = position_matrices(scaled, g);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p.values()[i], q.values()[i], 1e-12);
  }
}

TEST(PNeurons, EmptyMapGivesZeroAndDeltaPeaksAtItsNeuron) {
  const PNeuronGrid g = PNeuronGrid::uniform(4, 12, 12);
  Tensor3 maps(1, 12, 12);
  EXPECT_TRUE(position_matrix(maps, 0, g).isZero());
  maps(0, 4, 7) = 0.3;  // centre of neuron (1, 2)
  const RowMatrix pm = position_matrix(maps, 0, g);
  Eigen::Index r, s;
  EXPECT_DOUBLE_EQ(pm.maxCoeff(&r, &s), 1.0);
  EXPECT_EQ(r, 1);
  EXPECT_EQ(s, 2);
  EXPECT_THROW(position_matrix(maps, 1, g), Error);
}

TEST(Location, CentroidAndPresence) {
  Tensor3 maps(2, 4, 4);
  maps(0, 1, 1) = 0.2;
  maps(0, 3, 1) = 0.2;
  maps(1, 0, 0) = 0.1;
  const auto locs = locate_features(maps, 0.16);
  ASSERT_TRUE(locs[0].has_value());
  EXPECT_DOUBLE_EQ(locs[0]->y, 2.0);
  EXPECT_DOUBLE_EQ(locs[0]->x, 1.0);
  EXPECT_FALSE(locs[1].has_value());
  EXPECT_DOUBLE_EQ(default_presence_threshold(maps), 0.16);
  EXPECT_FALSE(locate_feature(Tensor3(1, 4, 4), 0, 0.0).has_value());
}

TEST(RNeurons, MatchesAngleBasedEvaluator) {
  std::mt19937_64 rng(4);
  const double sigma = default_rneuron_sigma;
  for (int t = 0; t < 200; ++t) {
    const Location a = random_location(rng), b = random_location(rng);
    const RelationBlock blk = relation_block(a, b, 10.0, sigma);
    const double dx = b.x - a.x, dy = a.y - b.y;
    for (std::size_t d = 0; d < 8; ++d)
      EXPECT_NEAR(blk[rneuron::cell_of[d]], naive_direction(dx, dy, d, sigma), 1e-12);
    EXPECT_NEAR(blk[rneuron::distance_cell], std::min(1.0, std::sqrt(dx * dx + dy * dy) / 10.0), 1e-15);
  }
}

TEST(RNeurons, CompassLayout) {
  // "to" straight above "from": the N cell (top middle) fires fully.
  const RelationBlock up = relation_block({5.0, 3.0}, {1.0, 3.0}, 8.0, 0.3);
  EXPECT_DOUBLE_EQ(up[1], 1.0);
  EXPECT_DOUBLE_EQ(up[4], 0.5);
  // To the lower right: SE is the bottom-right cell.
  const RelationBlock se = relation_block({0.0, 0.0}, {2.0, 2.0}, 8.0, 0.3);
  EXPECT_DOUBLE_EQ(se[8], 1.0);
  EXPECT_LT(se[0], 1e-10);
}

TEST(RNeurons, ReversalSwapsOppositeDirectionsExactly) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 200; ++t) {
    const Location a = random_location(rng), b = random_location(rng);
    const RelationBlock ab = relation_block(a, b, 17.0, default_rneuron_sigma);
    const RelationBlock ba = relation_block(b, a, 17.0, default_rneuron_sigma);
    for (std::size_t d = 0; d < 8; ++d)
      EXPECT_EQ(ba[rneuron::cell_of[(d + 4) % 8]], ab[rneuron::cell_of[d]]);
    EXPECT_EQ(ab[rneuron::distance_cell], ba[rneuron::distance_cell]);
  }
}

TEST(RNeurons, QuarterTurnRotatesNeuronsExactly) {
  // (y, x) -> (-x, y) turns every displacement a quarter counter-clockwise.
  std::mt19937_64 rng(6);
  for (int t = 0; t < 200; ++t) {
    const Location a = random_location(rng), b = random_location(rng);
    const Location ra{-a.x, a.y}, rb{-b.x, b.y};
    const RelationBlock blk = relation_block(a, b, 17.0, default_rneuron_sigma);
    const RelationBlock rot = relation_block(ra, rb, 17.0, default_rneuron_sigma);
    for (std::size_t d = 0; d < 8; ++d)
      EXPECT_EQ(rot[rneuron::cell_of[(d + 2) % 8]], blk[rneuron::cell_of[d]]);
    EXPECT_EQ(rot[rneuron::distance_cell], blk[rneuron::distance_cell]);
  }
}

TEST(RNeurons, CoincidentPointsAndBadArguments) {
  const RelationBlock z = relation_block({2.0, 2.0}, {2.0, 2.0}, 5.0, 0.4);
  for (double v : z) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(relation_block({0, 0}, {1, 1}, 0.0, 0.4), Error);
  EXPECT_THROW(relation_block({0, 0}, {1, 1}, 1.0, 0.0), Error);
  EXPECT_EQ(relation_block({0, 0}, {30, 40}, 10.0, 0.4)[rneuron::distance_cell], 1.0);
}

TEST(Relationship, BlockLayoutDiagonalAndAbsence) {
  std::mt19937_64 rng(7);
  std::vector<std::optional<Location>> locs = {random_location(rng), std::nullopt,
                                               random_location(rng), random_location(rng)};
  const RelationshipMatrix rm = relationship_matrix(locs, 12.0, default_rneuron_sigma);
  ASSERT_EQ(rm.values.size(), 4u * 4u * 9u);
  EXPECT_EQ(rm.present, std::vector<bool>({true, false, true, true}));
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t l = 0; l < 4; ++l) {
      const bool zero = j == l || j == 1 || l == 1;
      const RelationBlock ref =
          zero ? RelationBlock{} : relation_block(*locs[j], *locs[l], 12.0, default_rneuron_sigma);
      for (std::size_t c = 0; c < 9; ++c) {
        EXPECT_EQ(rm.at(j, l, c), ref[c]);
        EXPECT_EQ(rm.values[(j * 4 + l) * 9 + c], rm.block(j, l)[c]);
      }
    }
}

TEST(Concepts, PerCategoryMeans) {
  std::mt19937_64 rng(8);
  std::vector<Tensor3> pms;
  std::vector<RelationshipMatrix> rms;
  const std::vector<std::size_t> labels = {0, 1, 0, 1, 1};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    pms.push_back(random_tensor(2, 4, 4, rng, 0, 1));
    std::vector<std::optional<Location>> locs = {random_location(rng), random_location(rng)};
    rms.push_back(relationship_matrix(locs, 12.0, default_rneuron_sigma));
  }
  const auto concepts = concept_distribution(pms, rms, labels, 2);
  EXPECT_EQ(concepts[1].samples, 3u);
  for (std::size_t t = 0; t < pms[0].size(); ++t)
    EXPECT_NEAR(concepts[0].position.values()[t], (pms[0].values()[t] + pms[2].values()[t]) / 2, 1e-15);
  for (std::size_t t = 0; t < rms[0].values.size(); ++t)
    EXPECT_NEAR(concepts[1].relationship.values[t],
                (rms[1].values[t] + rms[3].values[t] + rms[4].values[t]) / 3, 1e-15);
  try {
    concept_distribution(pms, rms, labels, 3);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::insufficient_samples);
  }
}
