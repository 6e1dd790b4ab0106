#pragma once

// Convolutional RBM with probabilistic max-pooling.
//
// Energy of a joint state (v, h):
//
//   E(v,h) = - sum_k sum_ij h^k_ij (W~^k * v)_ij - sum_k b_k sum_ij h^k_ij
//            - sum_c a_c sum_ij v^c_ij + 1/2 sum v^2
//
// with W~ the 180-degree rotated kernel and '*' a valid convolution (so the
// first term is a plain cross-correlation with W). Hidden units inside every
// c x c pooling block are mutually exclusive. Visible units are real-valued with
// unit variance; their conditional mean is a_c + sum_k W^k * H^k (full
// convolution).
//
// Multi-channel visibles (a stacked layer sees K_prev pooled maps) use one
// kernel slice and one visible bias per channel.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "bsnn/conv.hpp"
#include "bsnn/tensor.hpp"

namespace bsnn {

struct CrbmParams {
  std::size_t visible_width = 0;
  std::size_t kernel_width = 0;
  std::size_t pool_size = 1;
  std::size_t channels = 1;
  RowMatrix kernels;    // K x (channels * n_w * n_w)
  Vector hidden_bias;   // K
  Vector visible_bias;  // channels

  std::size_t feature_count() const { return static_cast<std::size_t>(kernels.rows()); }
  std::size_t hidden_width() const { return visible_width - kernel_width + 1; }
  std::size_t pooled_width() const { return hidden_width() / pool_size; }

  double& weight(std::size_t k, std::size_t c, std::size_t u, std::size_t s) {
    return kernels(static_cast<Eigen::Index>(k),
                   static_cast<Eigen::Index>((c * kernel_width + u) * kernel_width + s));
  }
  double weight(std::size_t k, std::size_t c, std::size_t u, std::size_t s) const {
    return kernels(static_cast<Eigen::Index>(k),
                   static_cast<Eigen::Index>((c * kernel_width + u) * kernel_width + s));
  }

  void validate() const {
    require(kernel_width >= 1 && kernel_width <= visible_width, ErrorCode::invalid_argument,
            "kernel width must lie in [1, visible width]");
    require(pool_size >= 1 && hidden_width() % pool_size == 0, ErrorCode::invalid_argument,
            "hidden width must be a positive multiple of the pool size");
    require(channels >= 1 && kernels.rows() >= 1, ErrorCode::invalid_argument,
            "need at least one channel and one feature map");
    require(static_cast<std::size_t>(kernels.cols()) == channels * kernel_width * kernel_width,
            ErrorCode::shape_mismatch, "kernel matrix has wrong width");
    require(static_cast<std::size_t>(hidden_bias.size()) == feature_count(),
            ErrorCode::shape_mismatch, "one hidden bias per feature map");
    require(static_cast<std::size_t>(visible_bias.size()) == channels, ErrorCode::shape_mismatch,
            "one visible bias per channel");
  }

  static CrbmParams zeros(std::size_t features, std::size_t channels, std::size_t visible_width,
                          std::size_t kernel_width, std::size_t pool_size) {
    CrbmParams p;
    p.visible_width = visible_width;
    p.kernel_width = kernel_width;
    p.pool_size = pool_size;
    p.channels = channels;
    p.kernels = RowMatrix::Zero(static_cast<Eigen::Index>(features),
                                static_cast<Eigen::Index>(channels * kernel_width * kernel_width));
    p.hidden_bias = Vector::Zero(static_cast<Eigen::Index>(features));
    p.visible_bias = Vector::Zero(static_cast<Eigen::Index>(channels));
    p.validate();
    return p;
  }

  friend bool operator==(const CrbmParams& a, const CrbmParams& b) {
    return a.visible_width == b.visible_width && a.kernel_width == b.kernel_width &&
           a.pool_size == b.pool_size && a.channels == b.channels &&
           a.kernels.rows() == b.kernels.rows() && a.kernels == b.kernels &&
           a.hidden_bias == b.hidden_bias && a.visible_bias == b.visible_bias;
  }
};

/// Binary (or probability) hidden maps plus their pooled units.
struct HiddenState {
  Tensor3 hidden;  // K x n_h x n_h
  Tensor3 pooled;  // K x n_p x n_p
};

/// Block-softmax posterior over hidden units given the visibles.
struct HiddenPosterior {
  Tensor3 hidden;  // P(h_ij = 1 | v)
  Tensor3 off;     // P(p_alpha = 0 | v)

  Tensor3 pooled() const {
    Tensor3 on = off;
    for (double& x : on.values()) x = 1.0 - x;
    return on;
  }
};

namespace detail {

inline void check_visible(const Tensor3& v, const CrbmParams& theta) {
  require(v.channels() == theta.channels && v.height() == theta.visible_width &&
              v.width() == theta.visible_width,
          ErrorCode::shape_mismatch,
          "visible tensor " + v.shape_string() + " does not match layer geometry");
}

inline void check_hidden(const Tensor3& h, const CrbmParams& theta) {
  require(h.channels() == theta.feature_count() && h.height() == theta.hidden_width() &&
              h.width() == theta.hidden_width(),
          ErrorCode::shape_mismatch,
          "hidden tensor " + h.shape_string() + " does not match layer geometry");
}

// Softmax over {off, unit_1, ..., unit_c^2} for every block of every map.
inline HiddenPosterior block_softmax(const Tensor3& input, std::size_t pool) {
  const std::size_t np = input.height() / pool;
  HiddenPosterior post{Tensor3(input.channels(), input.height(), input.width()),
                       Tensor3(input.channels(), np, np)};
  for (std::size_t k = 0; k < input.channels(); ++k) {
    for (std::size_t by = 0; by < np; ++by) {
      for (std::size_t bx = 0; bx < np; ++bx) {
        double peak = 0.0;
        for (std::size_t dy = 0; dy < pool; ++dy)
          for (std::size_t dx = 0; dx < pool; ++dx)
            peak = std::max(peak, input(k, by * pool + dy, bx * pool + dx));
        double denom = std::exp(-peak);
        for (std::size_t dy = 0; dy < pool; ++dy) {
          for (std::size_t dx = 0; dx < pool; ++dx) {
            const double e = std::exp(input(k, by * pool + dy, bx * pool + dx) - peak);
            post.hidden(k, by * pool + dy, bx * pool + dx) = e;
            denom += e;
          }
        }
        for (std::size_t dy = 0; dy < pool; ++dy)
          for (std::size_t dx = 0; dx < pool; ++dx)
            post.hidden(k, by * pool + dy, bx * pool + dx) /= denom;
        post.off(k, by, bx) = std::exp(-peak) / denom;
      }
    }
  }
  return post;
}

}  // namespace detail

/// True when every c x c block of every map holds at most one unit of mass.
inline bool satisfies_pooling_constraint(const Tensor3& hidden, std::size_t pool,
                                         double tol = 1e-12) {
  if (pool == 0 || hidden.height() % pool != 0 || hidden.width() % pool != 0) return false;
  for (std::size_t k = 0; k < hidden.channels(); ++k) {
    for (std::size_t by = 0; by < hidden.height() / pool; ++by) {
      for (std::size_t bx = 0; bx < hidden.width() / pool; ++bx) {
        double sum = 0.0;
        for (std::size_t dy = 0; dy < pool; ++dy)
          for (std::size_t dx = 0; dx < pool; ++dx) sum += hidden(k, by * pool + dy, bx * pool + dx);
        if (sum > 1.0 + tol) return false;
      }
    }
  }
  return true;
}

/// Pools a hidden state: p_alpha = 1 iff its block has an active unit.
inline Tensor3 pool_hidden(const Tensor3& hidden, std::size_t pool) {
  Tensor3 pooled(hidden.channels(), hidden.height() / pool, hidden.width() / pool);
  for (std::size_t k = 0; k < hidden.channels(); ++k)
    for (std::size_t y = 0; y < hidden.height(); ++y)
      for (std::size_t x = 0; x < hidden.width(); ++x)
        if (hidden(k, y, x) > 0.0) pooled(k, y / pool, x / pool) = 1.0;
  return pooled;
}

/// Bottom-up input I = (W~ * v) + b for every hidden unit.
inline Tensor3 hidden_input(const Tensor3& v, const CrbmParams& theta) {
  detail::check_visible(v, theta);
  Tensor3 in = conv::correlate_valid(v, theta.kernels, theta.kernel_width);
  for (std::size_t k = 0; k < in.channels(); ++k)
    for (double& x : in.channel(k)) x += theta.hidden_bias[static_cast<Eigen::Index>(k)];
  return in;
}

inline HiddenPosterior hidden_conditional(const Tensor3& v, const CrbmParams& theta) {
  return detail::block_softmax(hidden_input(v, theta), theta.pool_size);
}

/// Conditional mean of the visibles, a_c + sum_k W^k * H^k.
inline Tensor3 visible_conditional(const Tensor3& hidden, const CrbmParams& theta) {
  detail::check_hidden(hidden, theta);
  Tensor3 v = conv::convolve_full(hidden, theta.kernels, theta.kernel_width);
  for (std::size_t c = 0; c < v.channels(); ++c)
    for (double& x : v.channel(c)) x += theta.visible_bias[static_cast<Eigen::Index>(c)];
  return v;
}

/// Draws one constrained hidden configuration from the block posterior.
template <class Rng>
HiddenState sample_hidden(const HiddenPosterior& post, std::size_t pool, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  HiddenState s{Tensor3(post.hidden.channels(), post.hidden.height(), post.hidden.width()),
                Tensor3(post.off.channels(), post.off.height(), post.off.width())};
  for (std::size_t k = 0; k < post.off.channels(); ++k) {
    for (std::size_t by = 0; by < post.off.height(); ++by) {
      for (std::size_t bx = 0; bx < post.off.width(); ++bx) {
        const double u = unit(rng);
        double acc = 0.0;
        bool placed = false;
        for (std::size_t dy = 0; dy < pool && !placed; ++dy) {
          for (std::size_t dx = 0; dx < pool && !placed; ++dx) {
            acc += post.hidden(k, by * pool + dy, bx * pool + dx);
            if (u < acc) {
              s.hidden(k, by * pool + dy, bx * pool + dx) = 1.0;
              s.pooled(k, by, bx) = 1.0;
              placed = true;
            }
          }
        }
      }
    }
  }
  return s;
}

inline double energy(const Tensor3& v, const HiddenState& h, const CrbmParams& theta) {
  detail::check_visible(v, theta);
  detail::check_hidden(h.hidden, theta);
  require(satisfies_pooling_constraint(h.hidden, theta.pool_size),
          ErrorCode::constraint_violation, "more than one active unit in a pooling block");
  const Tensor3 response = conv::correlate_valid(v, theta.kernels, theta.kernel_width);
  double e = 0.0;
  for (std::size_t k = 0; k < response.channels(); ++k) {
    const auto hk = h.hidden.channel(k);
    const auto rk = response.channel(k);
    double active = 0.0;
    for (std::size_t i = 0; i < hk.size(); ++i) {
      e -= hk[i] * rk[i];
      active += hk[i];
    }
    e -= theta.hidden_bias[static_cast<Eigen::Index>(k)] * active;
  }
  for (std::size_t c = 0; c < v.channels(); ++c) {
    double sum = 0.0, sq = 0.0;
    for (double x : v.channel(c)) {
      sum += x;
      sq += x * x;
    }
    e += -theta.visible_bias[static_cast<Eigen::Index>(c)] * sum + 0.5 * sq;
  }
  return e;
}

/// Mean squared error of the mean-field reconstruction v -> P(h|v) -> E[v|h].
inline double reconstruction_error(const Tensor3& v, const CrbmParams& theta) {
  const Tensor3 recon = visible_conditional(hidden_conditional(v, theta).hidden, theta);
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = v.values()[i] - recon.values()[i];
    sum += d * d;
  }
  return sum / static_cast<double>(v.size());
}

inline double reconstruction_error(std::span<const Tensor3> data, const CrbmParams& theta) {
  require(!data.empty(), ErrorCode::invalid_argument, "no data");
  double sum = 0.0;
  for (const Tensor3& v : data) sum += reconstruction_error(v, theta);
  return sum / static_cast<double>(data.size());
}

struct CdOptions {
  double sparsity_target = 0.02;
  double sparsity_cost = 1.0;  // 0 disables the sparsity term
};

/// Ascent direction for one CD-1 step, normalised per hidden/visible position.
struct CrbmGradient {
  RowMatrix kernels;
  Vector hidden_bias;
  Vector visible_bias;
  double reconstruction_error = 0.0;  // of the negative-phase reconstruction
};

template <class Rng>
CrbmGradient cd1_gradient(std::span<const Tensor3> batch, const CrbmParams& theta,
                          const CdOptions& opts, Rng& rng) {
  require(!batch.empty(), ErrorCode::invalid_argument, "empty batch");
  theta.validate();
  const std::size_t nw = theta.kernel_width;
  CrbmGradient g{RowMatrix::Zero(theta.kernels.rows(), theta.kernels.cols()),
                 Vector::Zero(theta.hidden_bias.size()), Vector::Zero(theta.visible_bias.size()),
                 0.0};
  Vector mean_activation = Vector::Zero(theta.hidden_bias.size());

  for (const Tensor3& v : batch) {
    detail::check_visible(v, theta);
    const RowMatrix cols = conv::im2col(v, nw);
    Tensor3 in(theta.feature_count(), theta.hidden_width(), theta.hidden_width());
    in.matrix().noalias() = theta.kernels * cols;
    in.matrix().colwise() += theta.hidden_bias;
    const HiddenPosterior pos = detail::block_softmax(in, theta.pool_size);

    const HiddenState sample = sample_hidden(pos, theta.pool_size, rng);
    const Tensor3 recon = visible_conditional(sample.hidden, theta);

    const RowMatrix recon_cols = conv::im2col(recon, nw);
    in.matrix().noalias() = theta.kernels * recon_cols;
    in.matrix().colwise() += theta.hidden_bias;
    const HiddenPosterior neg = detail::block_softmax(in, theta.pool_size);

    g.kernels.noalias() += pos.hidden.matrix() * cols.transpose();
    g.kernels.noalias() -= neg.hidden.matrix() * recon_cols.transpose();
    g.hidden_bias += pos.hidden.matrix().rowwise().sum() - neg.hidden.matrix().rowwise().sum();
    g.visible_bias += v.matrix().rowwise().sum() - recon.matrix().rowwise().sum();
    mean_activation += pos.hidden.matrix().rowwise().mean();

    double err = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double d = v.values()[i] - recon.values()[i];
      err += d * d;
    }
    g.reconstruction_error += err / static_cast<double>(v.size());
  }

  const double batch_size = static_cast<double>(batch.size());
  const double hidden_positions =
      static_cast<double>(theta.hidden_width() * theta.hidden_width()) * batch_size;
  const double visible_positions =
      static_cast<double>(theta.visible_width * theta.visible_width) * batch_size;
  g.kernels /= hidden_positions;
  g.hidden_bias /= hidden_positions;
  g.visible_bias /= visible_positions;
  g.reconstruction_error /= batch_size;
  if (opts.sparsity_cost > 0.0) {
    mean_activation /= batch_size;
    g.hidden_bias.array() +=
        opts.sparsity_cost * (opts.sparsity_target - mean_activation.array());
  }

  require(all_finite({g.kernels.data(), static_cast<std::size_t>(g.kernels.size())}) &&
              g.hidden_bias.allFinite() && g.visible_bias.allFinite(),
          ErrorCode::non_finite, "CD-1 gradient is not finite (learning rate too large?)");
  return g;
}

/// One plain CD-1 step: theta + lr * gradient.
template <class Rng>
CrbmParams cd1_update(std::span<const Tensor3> batch, const CrbmParams& theta, double lr,
                      const CdOptions& opts, Rng& rng) {
  require(lr >= 0.0, ErrorCode::invalid_argument, "learning rate must be non-negative");
  const CrbmGradient g = cd1_gradient(batch, theta, opts, rng);
  CrbmParams next = theta;
  next.kernels += lr * g.kernels;
  next.hidden_bias += lr * g.hidden_bias;
  next.visible_bias += lr * g.visible_bias;
  return next;
}

struct CrbmTrainConfig {
  std::size_t features = 40;
  std::size_t kernel_width = 7;
  std::size_t pool_size = 2;
  // The Gaussian layer is heavily overcomplete (every pixel is fed by K maps),
  // so updates must be small; many small steps with momentum learn fastest.
  double learning_rate = 0.003;
  std::size_t batch_size = 1;
  std::size_t epochs = 30;
  double momentum = 0.9;
  double init_sigma = 0.01;
  CdOptions cd;
};

struct TrainedLayer {
  CrbmParams params;
  /// Mean-field reconstruction error at initialisation, then after each epoch.
  std::vector<double> loss_trace;
};

inline CrbmParams random_layer(std::size_t features, std::size_t channels,
                               std::size_t visible_width, const CrbmTrainConfig& cfg,
                               std::mt19937_64& rng) {
  CrbmParams p =
      CrbmParams::zeros(features, channels, visible_width, cfg.kernel_width, cfg.pool_size);
  std::normal_distribution<double> normal(0.0, cfg.init_sigma);
  for (Eigen::Index i = 0; i < p.kernels.size(); ++i) p.kernels.data()[i] = normal(rng);
  return p;
}

/// Mini-batch CD-1 over `data` (every tensor channels x n_v x n_v).
inline TrainedLayer train_layer(std::span<const Tensor3> data, const CrbmTrainConfig& cfg,
                                std::uint64_t seed) {
  require(!data.empty(), ErrorCode::invalid_argument, "no training data");
  require(cfg.batch_size >= 1, ErrorCode::invalid_argument, "batch size must be positive");
  require(data.front().height() == data.front().width(), ErrorCode::shape_mismatch,
          "CRBM layers expect square inputs");
  std::mt19937_64 rng(seed);
  TrainedLayer out{random_layer(cfg.features, data.front().channels(), data.front().height(),
                                cfg, rng),
                   {}};
  out.loss_trace.push_back(reconstruction_error(data, out.params));

  RowMatrix vel_w = RowMatrix::Zero(out.params.kernels.rows(), out.params.kernels.cols());
  Vector vel_b = Vector::Zero(out.params.hidden_bias.size());
  Vector vel_a = Vector::Zero(out.params.visible_bias.size());

  std::vector<std::size_t> order(data.size());
  std::vector<Tensor3> batch;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i)
        batch.push_back(data[order[i]]);
      const CrbmGradient g = cd1_gradient(std::span<const Tensor3>(batch), out.params, cfg.cd, rng);
      vel_w = cfg.momentum * vel_w + cfg.learning_rate * g.kernels;
      vel_b = cfg.momentum * vel_b + cfg.learning_rate * g.hidden_bias;
      vel_a = cfg.momentum * vel_a + cfg.learning_rate * g.visible_bias;
      out.params.kernels += vel_w;
      out.params.hidden_bias += vel_b;
      out.params.visible_bias += vel_a;
    }
    out.loss_trace.push_back(reconstruction_error(data, out.params));
  }
  return out;
}

}  // namespace bsnn
