#pragma once

// Population coding of structure.
//
// PNeurons: an m x m grid of unit-peak 2D Gaussians laid uniformly over a
// semantic map; their activation-normalised responses form the position
// matrix (PM).
//
// RNeurons: for an ordered pair of located semantic features, eight
// direction-tuned units (preferred directions 45 degrees apart, wrapped
// Gaussian tuning) around one centre unit holding the normalised distance.
// Each pair yields a 3x3 block laid out like a compass:
//
//     NW  N  NE
//     W   d  E
//     SW  S  SE

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "bsnn/tensor.hpp"

namespace bsnn {

struct PNeuronGrid {
  std::size_t side = 4;
  std::size_t map_height = 0;
  std::size_t map_width = 0;
  double sigma_y = 0.5;
  double sigma_x = 0.5;

  /// Centres at the middle of an even m x m tiling; sigma is half the spacing.
  static PNeuronGrid uniform(std::size_t side, std::size_t map_height, std::size_t map_width) {
    require(side >= 1 && map_height >= 1 && map_width >= 1, ErrorCode::invalid_argument,
            "PNeuron grid and map must be non-empty");
    const double sy = static_cast<double>(map_height) / static_cast<double>(side);
    const double sx = static_cast<double>(map_width) / static_cast<double>(side);
    return {side, map_height, map_width, 0.5 * sy, 0.5 * sx};
  }

  double center_y(std::size_t r) const {
    return (static_cast<double>(r) + 0.5) * static_cast<double>(map_height) /
               static_cast<double>(side) -
           0.5;
  }
  double center_x(std::size_t s) const {
    return (static_cast<double>(s) + 0.5) * static_cast<double>(map_width) /
               static_cast<double>(side) -
           0.5;
  }

  /// Discretised tuning curve of PNeuron (r, s) at pixel (y, x).
  double tuning(std::size_t r, std::size_t s, std::size_t y, std::size_t x) const {
    const double dy = (static_cast<double>(y) - center_y(r)) / sigma_y;
    const double dx = (static_cast<double>(x) - center_x(s)) / sigma_x;
    return std::exp(-0.5 * (dy * dy + dx * dx));
  }
};

/// m x m PM of one map (channel `c` of `maps`).
inline RowMatrix position_matrix(const Tensor3& maps, std::size_t c, const PNeuronGrid& grid) {
  require(c < maps.channels() && maps.height() == grid.map_height &&
              maps.width() == grid.map_width,
          ErrorCode::shape_mismatch, "map does not match the PNeuron grid");
  const auto m = static_cast<Eigen::Index>(grid.side);
  RowMatrix pm = RowMatrix::Zero(m, m);
  double total = 0.0;
  for (double v : maps.channel(c)) total += v;
  if (total <= 0.0) return pm;
  for (std::size_t r = 0; r < grid.side; ++r) {
    for (std::size_t s = 0; s < grid.side; ++s) {
      double acc = 0.0;
      for (std::size_t y = 0; y < maps.height(); ++y)
        for (std::size_t x = 0; x < maps.width(); ++x) acc += maps(c, y, x) * grid.tuning(r, s, y, x);
      pm(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(s)) = acc / total;
    }
  }
  return pm;
}

/// PMs of every map stacked as K x m x m.
inline Tensor3 position_matrices(const Tensor3& maps, const PNeuronGrid& grid) {
  Tensor3 out(maps.channels(), grid.side, grid.side);
  for (std::size_t c = 0; c < maps.channels(); ++c) {
    const RowMatrix pm = position_matrix(maps, c, grid);
    std::copy(pm.data(), pm.data() + pm.size(), out.channel(c).begin());
  }
  return out;
}

/// Location in map pixel coordinates (row y grows downward).
struct Location {
  double y = 0.0;
  double x = 0.0;
};

inline double default_presence_threshold(const Tensor3& maps) {
  return 0.01 * static_cast<double>(maps.plane());
}

/// Activation-weighted centroid; absent when the total is below threshold or zero.
inline std::optional<Location> locate_feature(const Tensor3& maps, std::size_t c,
                                              double threshold) {
  require(threshold >= 0.0, ErrorCode::invalid_argument, "threshold must be non-negative");
  double total = 0.0, sy = 0.0, sx = 0.0;
  for (std::size_t y = 0; y < maps.height(); ++y) {
    for (std::size_t x = 0; x < maps.width(); ++x) {
      const double v = maps(c, y, x);
      total += v;
      sy += v * static_cast<double>(y);
      sx += v * static_cast<double>(x);
    }
  }
  if (total <= 0.0 || total < threshold) return std::nullopt;
  return Location{sy / total, sx / total};
}

inline std::vector<std::optional<Location>> locate_features(const Tensor3& maps,
                                                            double threshold) {
  std::vector<std::optional<Location>> out;
  for (std::size_t c = 0; c < maps.channels(); ++c) out.push_back(locate_feature(maps, c, threshold));
  return out;
}

namespace rneuron {

inline constexpr double diag = std::numbers::sqrt2 / 2.0;

/// Preferred unit directions (x right, y up): E, NE, N, NW, W, SW, S, SE.
/// Entries are exact so that negation and 90-degree rotation map the table onto itself.
inline constexpr std::array<std::array<double, 2>, 8> preferred = {
    {{1.0, 0.0}, {diag, diag}, {0.0, 1.0}, {-diag, diag}, {-1.0, 0.0}, {-diag, -diag},
     {0.0, -1.0}, {diag, -diag}}};

/// 3x3 cell (row-major) holding direction neuron d.
inline constexpr std::array<std::size_t, 8> cell_of = {5, 2, 1, 0, 3, 6, 7, 8};
inline constexpr std::size_t distance_cell = 4;

}  // namespace rneuron

using RelationBlock = std::array<double, 9>;

/// Block for the ordered pair from -> to; direction is measured from `from`.
inline RelationBlock relation_block(const Location& from, const Location& to, double image_diag,
                                    double sigma) {
  require(image_diag > 0.0 && sigma > 0.0, ErrorCode::invalid_argument,
          "diagonal and tuning width must be positive");
  RelationBlock block{};
  const double dx = to.x - from.x;
  const double dy = from.y - to.y;  // image rows grow downward
  if (dx == 0.0 && dy == 0.0) return block;  // direction undefined, distance 0
  for (std::size_t d = 0; d < 8; ++d) {
    const auto& u = rneuron::preferred[d];
    const double cross = u[0] * dy - u[1] * dx;
    const double dot = u[0] * dx + u[1] * dy;
    const double delta = std::atan2(cross, dot);  // wrapped to [-pi, pi]
    block[rneuron::cell_of[d]] = std::exp(-(delta * delta) / (2.0 * sigma * sigma));
  }
  block[rneuron::distance_cell] = std::min(1.0, std::hypot(dx, dy) / image_diag);
  return block;
}

struct RelationshipMatrix {
  std::size_t features = 0;
  /// Block-major: ((j * features + l) * 9 + cell).
  std::vector<double> values;
  std::vector<bool> present;

  double at(std::size_t j, std::size_t l, std::size_t cell) const {
    return values[(j * features + l) * 9 + cell];
  }
  std::span<const double> block(std::size_t j, std::size_t l) const {
    return {values.data() + (j * features + l) * 9, 9};
  }
};

inline RelationshipMatrix relationship_matrix(std::span<const std::optional<Location>> locations,
                                              double image_diag, double sigma) {
  const std::size_t k = locations.size();
  RelationshipMatrix rm{k, std::vector<double>(k * k * 9, 0.0), std::vector<bool>(k, false)};
  for (std::size_t j = 0; j < k; ++j) rm.present[j] = locations[j].has_value();
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t l = 0; l < k; ++l) {
      if (j == l || !locations[j] || !locations[l]) continue;
      const RelationBlock b = relation_block(*locations[j], *locations[l], image_diag, sigma);
      std::copy(b.begin(), b.end(), rm.values.begin() + static_cast<std::ptrdiff_t>((j * k + l) * 9));
    }
  }
  return rm;
}

/// Default RNeuron tuning width: 22.5 degrees.
inline constexpr double default_rneuron_sigma = std::numbers::pi / 8.0;

/// Per-category mean PM (K x m x m) and mean RM values.
struct Concept {
  Tensor3 position;
  RelationshipMatrix relationship;
  std::size_t samples = 0;
};

inline std::vector<Concept> concept_distribution(std::span<const Tensor3> pms,
                                                 std::span<const RelationshipMatrix> rms,
                                                 std::span<const std::size_t> labels,
                                                 std::size_t class_count) {
  require(pms.size() == labels.size() && rms.size() == labels.size() && !labels.empty(),
          ErrorCode::shape_mismatch, "PMs, RMs and labels must align");
  std::vector<Concept> concepts(class_count);
  for (auto& c : concepts) {
    c.position = Tensor3(pms[0].channels(), pms[0].height(), pms[0].width());
    c.relationship = {rms[0].features, std::vector<double>(rms[0].values.size(), 0.0),
                      std::vector<bool>(rms[0].features, false)};
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] < class_count, ErrorCode::invalid_argument, "label out of range");
    require(pms[i].same_shape(pms[0]) && rms[i].values.size() == rms[0].values.size(),
            ErrorCode::shape_mismatch, "structural matrices differ in shape");
    Concept& c = concepts[labels[i]];
    for (std::size_t t = 0; t < pms[i].size(); ++t) c.position.values()[t] += pms[i].values()[t];
    for (std::size_t t = 0; t < rms[i].values.size(); ++t)
      c.relationship.values[t] += rms[i].values[t];
    for (std::size_t f = 0; f < rms[i].features; ++f)
      if (rms[i].present[f]) c.relationship.present[f] = true;
    ++c.samples;
  }
  for (std::size_t cls = 0; cls < class_count; ++cls) {
    Concept& c = concepts[cls];
    require(c.samples > 0, ErrorCode::insufficient_samples,
            "category " + std::to_string(cls) + " has no samples");
    const double n = static_cast<double>(c.samples);
    for (double& v : c.position.values()) v /= n;
    for (double& v : c.relationship.values) v /= n;
  }
  return concepts;
}

}  // namespace bsnn
