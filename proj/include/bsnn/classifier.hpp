#pragma once

// Per-pathway softmax models, product-rule fusion, ambiguity detection and
// block-wise feature re-selection between ambiguous candidates.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "bsnn/tensor.hpp"

namespace bsnn {

/// Multinomial logistic regression on standardised features.
struct PathwayModel {
  std::string name;
  RowMatrix weights;  // C x D, acting on standardised features
  Vector bias;        // C
  Vector mean;        // D
  Vector scale;       // D, strictly positive

  std::size_t class_count() const { return static_cast<std::size_t>(weights.rows()); }
  std::size_t dimension() const { return static_cast<std::size_t>(weights.cols()); }

  static PathwayModel zeros(std::string name, std::size_t classes, std::size_t dim) {
    return {std::move(name), RowMatrix::Zero(static_cast<Eigen::Index>(classes),
                                             static_cast<Eigen::Index>(dim)),
            Vector::Zero(static_cast<Eigen::Index>(classes)),
            Vector::Zero(static_cast<Eigen::Index>(dim)),
            Vector::Ones(static_cast<Eigen::Index>(dim))};
  }

  Vector standardize(const Vector& x) const {
    require(static_cast<std::size_t>(x.size()) == dimension(), ErrorCode::shape_mismatch,
            name + ": feature dimension " + std::to_string(x.size()) + ", model expects " +
                std::to_string(dimension()));
    return ((x - mean).array() / scale.array()).matrix();
  }

  bool operator==(const PathwayModel&) const = default;
};

inline Vector softmax(const Vector& scores) {
  const double peak = scores.maxCoeff();
  Vector p = (scores.array() - peak).exp().matrix();
  return p / p.sum();
}

/// Posterior for an already standardised feature vector.
inline Vector pathway_posterior_standardized(const PathwayModel& model, const Vector& z) {
  require(static_cast<std::size_t>(z.size()) == model.dimension(), ErrorCode::shape_mismatch,
          "feature dimension does not match the model");
  return softmax(model.weights * z + model.bias);
}

inline Vector pathway_posterior(const PathwayModel& model, const Vector& x) {
  return pathway_posterior_standardized(model, model.standardize(x));
}

struct SoftmaxTrainConfig {
  double l2 = 1e-3;
  double learning_rate = 0.05;
  std::size_t iterations = 300;
};

struct SoftmaxObjective {
  double loss = 0.0;
  RowMatrix grad_weights;
  Vector grad_bias;
};

/// Mean cross-entropy plus (l2/2)|W|^2 over rows of `z` (standardised), with gradients.
inline SoftmaxObjective loss_and_gradient(const RowMatrix& weights, const Vector& bias,
                                          const RowMatrix& z, std::span<const std::size_t> labels,
                                          double l2) {
  require(static_cast<std::size_t>(z.rows()) == labels.size() && z.cols() == weights.cols() &&
              bias.size() == weights.rows(),
          ErrorCode::shape_mismatch, "design matrix, labels and parameters disagree");
  const auto n = static_cast<double>(labels.size());
  RowMatrix scores = z * weights.transpose();
  scores.rowwise() += bias.transpose();
  SoftmaxObjective out;
  out.loss = 0.5 * l2 * weights.squaredNorm();
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double peak = scores.row(i).maxCoeff();
    scores.row(i).array() -= peak;
    const double log_z = std::log(scores.row(i).array().exp().sum());
    const auto y = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)]);
    require(y < weights.rows(), ErrorCode::invalid_argument, "label out of range");
    out.loss -= (scores(i, y) - log_z) / n;
    scores.row(i) = (scores.row(i).array() - log_z).exp().matrix();
    scores(i, y) -= 1.0;
  }
  require(std::isfinite(out.loss), ErrorCode::non_finite, "softmax loss is not finite");
  // scores now holds (P - Y)
  out.grad_weights = scores.transpose() * z / n + l2 * weights;
  out.grad_bias = scores.colwise().sum().transpose() / n;
  return out;
}

/// Per-feature mean and standard deviation (scale 1 for constant features).
inline void fit_standardization(PathwayModel& model, const RowMatrix& x) {
  model.mean = x.colwise().mean().transpose();
  model.scale.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double var = (x.col(j).array() - model.mean(j)).square().mean();
    model.scale(j) = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
}

/// Zero-initialised full-batch Adam on cross-entropy + L2; the result depends
/// only on the data, so runs are reproducible without a seed.
inline PathwayModel train_pathway(std::string name, const RowMatrix& x,
                                  std::span<const std::size_t> labels, std::size_t class_count,
                                  const SoftmaxTrainConfig& cfg = {}) {
  require(x.rows() > 0 && static_cast<std::size_t>(x.rows()) == labels.size(),
          ErrorCode::shape_mismatch, "one label per feature row required");
  require(cfg.l2 >= 0.0 && cfg.learning_rate > 0.0, ErrorCode::invalid_argument,
          "l2 must be non-negative and the learning rate positive");
  require(all_finite({x.data(), static_cast<std::size_t>(x.size())}), ErrorCode::non_finite,
          name + ": features contain non-finite values");
  PathwayModel model = PathwayModel::zeros(std::move(name), class_count, static_cast<std::size_t>(x.cols()));
  fit_standardization(model, x);
  RowMatrix z = x;
  z.rowwise() -= model.mean.transpose();
  z.array().rowwise() /= model.scale.transpose().array();

  constexpr double beta1 = 0.9, beta2 = 0.999, tiny = 1e-8;
  RowMatrix m_w = RowMatrix::Zero(model.weights.rows(), model.weights.cols());
  RowMatrix v_w = m_w;
  Vector m_b = Vector::Zero(model.bias.size());
  Vector v_b = m_b;
  for (std::size_t t = 1; t <= cfg.iterations; ++t) {
    const SoftmaxObjective obj = loss_and_gradient(model.weights, model.bias, z, labels, cfg.l2);
    m_w = beta1 * m_w + (1 - beta1) * obj.grad_weights;
    v_w = beta2 * v_w + (1 - beta2) * obj.grad_weights.cwiseAbs2();
    m_b = beta1 * m_b + (1 - beta1) * obj.grad_bias;
    v_b = beta2 * v_b + (1 - beta2) * obj.grad_bias.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    model.weights.array() -=
        cfg.learning_rate * (m_w.array() / c1) / ((v_w.array() / c2).sqrt() + tiny);
    model.bias.array() -=
        cfg.learning_rate * (m_b.array() / c1) / ((v_b.array() / c2).sqrt() + tiny);
  }
  require(all_finite({model.weights.data(), static_cast<std::size_t>(model.weights.size())}),
          ErrorCode::non_finite, model.name + ": training diverged");
  return model;
}

inline std::size_t argmax(const Vector& p) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < p.size(); ++i)
    if (p(i) > p(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(i);
  return best;
}

/// Product rule over pathway likelihood vectors; normalised in log space.
inline Vector integrate_likelihoods(const std::vector<Vector>& likelihoods, const Vector& priors) {
  require(!likelihoods.empty(), ErrorCode::invalid_argument, "no pathways to integrate");
  Vector log_post = priors.array().log().matrix();
  for (const Vector& l : likelihoods) {
    require(l.size() == priors.size(), ErrorCode::shape_mismatch,
            "likelihood and prior lengths differ");
    require((l.array() >= 0.0).all(), ErrorCode::invalid_argument,
            "likelihoods must be non-negative");
    log_post += l.array().log().matrix();
  }
  const double peak = log_post.maxCoeff();
  require(std::isfinite(peak), ErrorCode::degenerate,
          "every category has zero unnormalised mass");
  Vector post = (log_post.array() - peak).exp().matrix();
  return post / post.sum();
}

/// Likelihood read-out of a pathway posterior: p * C plus a floor of eps / (n * C).
inline Vector pathway_likelihood(const Vector& posterior, double epsilon, std::size_t pathways) {
  const auto c = static_cast<double>(posterior.size());
  const double floor = epsilon / (static_cast<double>(std::max<std::size_t>(pathways, 1)) * c);
  return (posterior.array() * c + floor).matrix();
}

inline Vector integrate(const std::vector<Vector>& posteriors, const Vector& priors,
                        double epsilon = 0.01) {
  require(epsilon >= 0.0, ErrorCode::invalid_argument, "epsilon must be non-negative");
  std::vector<Vector> likelihoods;
  for (const Vector& p : posteriors)
    likelihoods.push_back(pathway_likelihood(p, epsilon, posteriors.size()));
  return integrate_likelihoods(likelihoods, priors);
}

/// Category priors from training frequencies.
inline Vector class_priors(std::span<const std::size_t> labels, std::size_t class_count) {
  require(!labels.empty() && class_count > 0, ErrorCode::invalid_argument,
          "priors need labelled samples");
  Vector p = Vector::Zero(static_cast<Eigen::Index>(class_count));
  for (std::size_t y : labels) {
    require(y < class_count, ErrorCode::invalid_argument, "label out of range");
    p(static_cast<Eigen::Index>(y)) += 1.0;
  }
  return p / static_cast<double>(labels.size());
}

/// Categories whose posterior reaches rho times the maximum (always includes the argmax).
inline std::vector<std::size_t> detect_ambiguity(const Vector& posterior, double rho) {
  require(rho > 0.0 && rho <= 1.0, ErrorCode::invalid_argument, "rho must lie in (0, 1]");
  const double cut = rho * posterior.maxCoeff();
  std::vector<std::size_t> out;
  for (Eigen::Index i = 0; i < posterior.size(); ++i)
    if (posterior(i) >= cut) out.push_back(static_cast<std::size_t>(i));
  return out;
}

/// Contiguous feature blocks [offset, offset + size).
struct BlockPartition {
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> sizes;

  std::size_t block_count() const noexcept { return sizes.size(); }

  static BlockPartition uniform(std::size_t dim, std::size_t block) {
    require(block > 0 && dim % block == 0, ErrorCode::invalid_argument,
            "dimension is not a multiple of the block size");
    BlockPartition p;
    for (std::size_t o = 0; o < dim; o += block) {
      p.offsets.push_back(o);
      p.sizes.push_back(block);
    }
    return p;
  }

  std::size_t dimension() const {
    return sizes.empty() ? 0 : offsets.back() + sizes.back();
  }
};

using FeatureMask = std::vector<bool>;  // one flag per block

/// Mean over candidate pairs of |sum_block w_a - sum_block w_b|.
inline std::vector<double> block_significance(std::span<const std::size_t> candidates,
                                              const PathwayModel& model,
                                              const BlockPartition& blocks) {
  require(candidates.size() >= 2, ErrorCode::invalid_argument,
          "re-selection needs at least two candidates");
  require(blocks.dimension() == model.dimension(), ErrorCode::shape_mismatch,
          "block partition does not cover the model's features");
  std::vector<double> sig(blocks.block_count(), 0.0);
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    for (std::size_t j = i + 1; j < candidates.size(); ++j) {
      const auto a = static_cast<Eigen::Index>(candidates[i]);
      const auto b = static_cast<Eigen::Index>(candidates[j]);
      require(a < model.weights.rows() && b < model.weights.rows(), ErrorCode::invalid_argument,
              "candidate out of range");
      for (std::size_t k = 0; k < blocks.block_count(); ++k) {
        const auto o = static_cast<Eigen::Index>(blocks.offsets[k]);
        const auto s = static_cast<Eigen::Index>(blocks.sizes[k]);
        sig[k] += std::abs(model.weights.row(a).segment(o, s).sum() -
                           model.weights.row(b).segment(o, s).sum());
      }
      ++pairs;
    }
  }
  for (double& s : sig) s /= static_cast<double>(pairs);
  return sig;
}

/// Blocks whose significance is strictly above the mean; all blocks when every
/// significance is equal.
inline FeatureMask reselect_features(std::span<const std::size_t> candidates,
                                     const PathwayModel& model, const BlockPartition& blocks) {
  const std::vector<double> sig = block_significance(candidates, model, blocks);
  const auto [lo, hi] = std::minmax_element(sig.begin(), sig.end());
  FeatureMask mask(sig.size(), true);
  if (*lo == *hi) return mask;
  double mean = 0.0;
  for (double s : sig) mean += s;
  mean /= static_cast<double>(sig.size());
  for (std::size_t k = 0; k < sig.size(); ++k) mask[k] = sig[k] > mean;
  return mask;
}

/// Candidate-restricted posterior from the masked (standardised) features.
inline Vector masked_candidate_posterior(const PathwayModel& model, const Vector& x,
                                         std::span<const std::size_t> candidates,
                                         const BlockPartition& blocks, const FeatureMask& mask) {
  require(mask.size() == blocks.block_count(), ErrorCode::shape_mismatch,
          "mask does not match the block partition");
  require(std::find(mask.begin(), mask.end(), true) != mask.end(), ErrorCode::invalid_argument,
          "mask selects no block");
  require(!candidates.empty(), ErrorCode::invalid_argument, "no candidates");
  const Vector z = model.standardize(x);
  Vector zm = Vector::Zero(z.size());
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (!mask[k]) continue;
    const auto o = static_cast<Eigen::Index>(blocks.offsets[k]);
    const auto s = static_cast<Eigen::Index>(blocks.sizes[k]);
    zm.segment(o, s) = z.segment(o, s);
  }
  Vector scores(static_cast<Eigen::Index>(candidates.size()));
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(candidates[i]);
    require(c < model.weights.rows(), ErrorCode::invalid_argument, "candidate out of range");
    scores(static_cast<Eigen::Index>(i)) = model.weights.row(c).dot(zm) + model.bias(c);
  }
  return softmax(scores);
}

/// One masked structural pathway taking part in re-classification.
struct MaskedPathway {
  const PathwayModel* model;
  const Vector* features;
  BlockPartition blocks;
  FeatureMask mask;
};

/// Integrates candidate-restricted posteriors; returns the winning category.
inline std::size_t classify_ambiguous(std::span<const std::size_t> candidates,
                                      const std::vector<MaskedPathway>& pathways,
                                      const Vector& priors, double epsilon) {
  require(!candidates.empty(), ErrorCode::invalid_argument, "no candidates");
  if (candidates.size() == 1) return candidates[0];
  require(!pathways.empty(), ErrorCode::invalid_argument, "no structural pathways");
  std::vector<Vector> posteriors;
  for (const MaskedPathway& p : pathways)
    posteriors.push_back(
        masked_candidate_posterior(*p.model, *p.features, candidates, p.blocks, p.mask));
  Vector restricted(static_cast<Eigen::Index>(candidates.size()));
  for (std::size_t i = 0; i < candidates.size(); ++i)
    restricted(static_cast<Eigen::Index>(i)) = priors(static_cast<Eigen::Index>(candidates[i]));
  if (restricted.sum() > 0.0)
    restricted /= restricted.sum();
  else
    restricted.setConstant(1.0 / static_cast<double>(candidates.size()));
  return candidates[argmax(integrate(posteriors, restricted, epsilon))];
}

}  // namespace bsnn
