#pragma once

// Semantic abstraction: Lloyd k-means over the input-space responses of the
// top-layer episodic features, and max-merging of episodic maps per cluster.

#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "bsnn/cdbn.hpp"

namespace bsnn {

struct SemanticBank {
  std::vector<Tensor3> centers;
  /// Episodic feature index -> semantic cluster index.
  std::vector<std::size_t> assignment;
  /// Within-cluster sum of squares after every assignment step.
  std::vector<double> wcss_trace;

  std::size_t cluster_count() const noexcept { return centers.size(); }
  double wcss() const { return wcss_trace.empty() ? 0.0 : wcss_trace.back(); }
};

/// One raw (un-normalised) patch per top-layer feature.
inline std::vector<Tensor3> reconstruct_patches(const CdbnStack& stack) {
  stack.validate();
  const std::size_t top = stack.depth() - 1;
  std::vector<Tensor3> patches;
  for (std::size_t k = 0; k < stack.top().feature_count(); ++k)
    patches.push_back(feature_response(stack, top, k));
  return patches;
}

inline double squared_distance(const Tensor3& a, const Tensor3& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a.values()[i] - b.values()[i];
    d += t * t;
  }
  return d;
}

/// K distinct patch indices drawn uniformly for the given seed.
inline std::vector<std::size_t> kmeans_init_indices(std::size_t n, std::size_t k,
                                                    std::uint64_t seed) {
  require(k >= 1 && k <= n, ErrorCode::invalid_argument, "need 1 <= K <= number of patches");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(k);
  return order;
}

/// Nearest centre, ties to the lowest index.
inline std::size_t nearest_center(const Tensor3& patch, const std::vector<Tensor3>& centers) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < centers.size(); ++j) {
    const double d = squared_distance(patch, centers[j]);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

namespace detail {

inline SemanticBank lloyd(std::span<const Tensor3> patches, std::vector<Tensor3> centers,
                          std::size_t max_iter) {
  SemanticBank bank;
  bank.centers = std::move(centers);
  const std::size_t k = bank.centers.size();
  std::vector<std::size_t> assign(patches.size(), std::numeric_limits<std::size_t>::max());
  // A reseed moves a patch without moving the centre it left, so the next pass must update.
  bool reseeded = false;

  for (std::size_t iter = 0; iter < std::max<std::size_t>(max_iter, 1); ++iter) {
    bool changed = false;
    double wcss = 0.0;
    for (std::size_t i = 0; i < patches.size(); ++i) {
      const std::size_t j = nearest_center(patches[i], bank.centers);
      changed = changed || j != assign[i];
      assign[i] = j;
      wcss += squared_distance(patches[i], bank.centers[j]);
    }
    bank.wcss_trace.push_back(wcss);
    if (!changed && !reseeded) break;
    reseeded = false;

    std::vector<Tensor3> sums(k, Tensor3(patches[0].channels(), patches[0].height(),
                                         patches[0].width()));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < patches.size(); ++i) {
      for (std::size_t t = 0; t < patches[i].size(); ++t)
        sums[assign[i]].values()[t] += patches[i].values()[t];
      ++counts[assign[i]];
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] == 0) continue;
      for (double& v : sums[j].values()) v /= static_cast<double>(counts[j]);
      bank.centers[j] = std::move(sums[j]);
    }
    // An emptied cluster takes over the patch worst served by its own centre.
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] != 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < patches.size(); ++i) {
        const double d = squared_distance(patches[i], bank.centers[assign[i]]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      bank.centers[j] = patches[far];
      --counts[assign[far]];
      assign[far] = j;
      counts[j] = 1;
      reseeded = true;
    }
  }
  bank.assignment = std::move(assign);
  return bank;
}

}  // namespace detail

inline SemanticBank kmeans(std::span<const Tensor3> patches, std::size_t k, std::uint64_t seed,
                           std::size_t max_iter = 100, std::size_t restarts = 1) {
  require(!patches.empty(), ErrorCode::invalid_argument, "no patches to cluster");
  require(k >= 1, ErrorCode::invalid_argument, "K must be positive");
  require(k <= patches.size(), ErrorCode::invalid_argument, "K exceeds the number of patches");
  for (const Tensor3& p : patches)
    require(p.same_shape(patches.front()), ErrorCode::shape_mismatch, "patch shapes differ");

  SemanticBank best;
  for (std::size_t r = 0; r < std::max<std::size_t>(restarts, 1); ++r) {
    std::vector<Tensor3> init;
    for (std::size_t i : kmeans_init_indices(patches.size(), k, seed + r)) init.push_back(patches[i]);
    SemanticBank bank = detail::lloyd(patches, std::move(init), max_iter);
    if (r == 0 || bank.wcss() < best.wcss()) best = std::move(bank);
  }
  return best;
}

/// Semantic map j is the elementwise maximum of the episodic maps assigned to j.
inline Tensor3 semantic_maps(const Tensor3& episodic, const SemanticBank& bank) {
  require(bank.assignment.size() == episodic.channels(), ErrorCode::shape_mismatch,
          "assignment does not cover every episodic map");
  Tensor3 out(bank.cluster_count(), episodic.height(), episodic.width(),
              -std::numeric_limits<double>::infinity());
  std::vector<bool> seen(bank.cluster_count(), false);
  for (std::size_t i = 0; i < episodic.channels(); ++i) {
    const std::size_t j = bank.assignment[i];
    require(j < bank.cluster_count(), ErrorCode::shape_mismatch, "assignment out of range");
    seen[j] = true;
    auto dst = out.channel(j);
    const auto src = episodic.channel(i);
    for (std::size_t t = 0; t < dst.size(); ++t) dst[t] = std::max(dst[t], src[t]);
  }
  for (std::size_t j = 0; j < seen.size(); ++j)
    if (!seen[j])
      for (double& v : out.channel(j)) v = 0.0;
  return out;
}

inline Tensor3 semantic_maps(const EpisodicFeatures& feat, const SemanticBank& bank) {
  return semantic_maps(feat.maps, bank);
}

}  // namespace bsnn
