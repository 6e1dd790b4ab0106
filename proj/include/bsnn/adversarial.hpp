#pragma once

// Targeted gradient-sign perturbation against a differentiable surrogate.
//
// The surrogate is a small convolutional softmax network (one conv layer with
// tanh, 2x2 average pooling, dense softmax) trained on the same images as the
// recogniser. Attacked images are then handed to the recogniser.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "bsnn/classifier.hpp"
#include "bsnn/conv.hpp"
#include "bsnn/data_io.hpp"

namespace bsnn {

struct SurrogateCnn {
  std::size_t input_width = 28;
  std::size_t kernel_width = 5;
  RowMatrix kernels;  // F x (n_w * n_w)
  Vector conv_bias;   // F
  RowMatrix dense;    // C x (F * p * p)
  Vector dense_bias;  // C

  std::size_t filters() const { return static_cast<std::size_t>(kernels.rows()); }
  std::size_t conv_width() const { return input_width - kernel_width + 1; }
  std::size_t pooled_width() const { return conv_width() / 2; }
  std::size_t class_count() const { return static_cast<std::size_t>(dense.rows()); }

  static SurrogateCnn zeros(std::size_t input_width, std::size_t kernel_width,
                            std::size_t filters, std::size_t classes) {
    SurrogateCnn m{input_width, kernel_width, {}, {}, {}, {}};
    require(kernel_width >= 1 && kernel_width <= input_width && m.conv_width() % 2 == 0,
            ErrorCode::invalid_argument, "surrogate geometry needs an even conv output");
    const auto f = static_cast<Eigen::Index>(filters);
    const auto p = static_cast<Eigen::Index>(m.pooled_width());
    m.kernels = RowMatrix::Zero(f, static_cast<Eigen::Index>(kernel_width * kernel_width));
    m.conv_bias = Vector::Zero(f);
    m.dense = RowMatrix::Zero(static_cast<Eigen::Index>(classes), f * p * p);
    m.dense_bias = Vector::Zero(static_cast<Eigen::Index>(classes));
    return m;
  }

  bool operator==(const SurrogateCnn&) const = default;

  struct Cache {
    RowMatrix cols;       // im2col of the input
    RowMatrix activation;  // F x (conv * conv), after tanh
    Vector pooled;        // F * p * p
    Vector probs;
  };

  Cache forward_cache(const Tensor3& x) const {
    require(x.channels() == 1 && x.height() == input_width && x.width() == input_width,
            ErrorCode::shape_mismatch, "surrogate expects a " + std::to_string(input_width) +
                                           "x" + std::to_string(input_width) + " image");
    Cache c;
    c.cols = conv::im2col(x, kernel_width);
    c.activation = kernels * c.cols;
    c.activation.colwise() += conv_bias;
    c.activation = c.activation.array().tanh().matrix();
    const std::size_t n = conv_width(), p = pooled_width();
    c.pooled.resize(static_cast<Eigen::Index>(filters() * p * p));
    for (std::size_t f = 0; f < filters(); ++f)
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t xx = 0; xx < p; ++xx) {
          const auto r = static_cast<Eigen::Index>(f);
          const auto at = [&](std::size_t dy, std::size_t dx) {
            return c.activation(r, static_cast<Eigen::Index>((2 * y + dy) * n + 2 * xx + dx));
          };
          c.pooled(static_cast<Eigen::Index>((f * p + y) * p + xx)) =
              0.25 * (at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1));
        }
    c.probs = softmax(dense * c.pooled + dense_bias);
    return c;
  }

  Vector predict_proba(const Tensor3& x) const { return forward_cache(x).probs; }
  std::size_t predict(const Tensor3& x) const { return argmax(predict_proba(x)); }

  struct Gradient {
    double loss = 0.0;
    RowMatrix kernels;
    Vector conv_bias;
    RowMatrix dense;
    Vector dense_bias;
    Tensor3 input;
  };

  /// Cross-entropy toward `target` and its gradients w.r.t. every parameter and the input.
  Gradient backward(const Tensor3& x, std::size_t target) const {
    require(target < class_count(), ErrorCode::invalid_argument, "target out of range");
    const Cache c = forward_cache(x);
    Gradient g;
    g.loss = -std::log(c.probs(static_cast<Eigen::Index>(target)));
    Vector dlogits = c.probs;
    dlogits(static_cast<Eigen::Index>(target)) -= 1.0;
    g.dense = dlogits * c.pooled.transpose();
    g.dense_bias = dlogits;
    const Vector dpooled = dense.transpose() * dlogits;

    const std::size_t n = conv_width(), p = pooled_width();
    RowMatrix dpre(c.activation.rows(), c.activation.cols());
    for (std::size_t f = 0; f < filters(); ++f)
      for (std::size_t y = 0; y < n; ++y)
        for (std::size_t xx = 0; xx < n; ++xx) {
          const auto r = static_cast<Eigen::Index>(f);
          const auto col = static_cast<Eigen::Index>(y * n + xx);
          const double a = c.activation(r, col);
          dpre(r, col) = 0.25 * dpooled(static_cast<Eigen::Index>((f * p + y / 2) * p + xx / 2)) *
                         (1.0 - a * a);
        }
    g.kernels = dpre * c.cols.transpose();
    g.conv_bias = dpre.rowwise().sum();
    Tensor3 dh(filters(), n, n);
    std::copy(dpre.data(), dpre.data() + dpre.size(), dh.values().begin());
    g.input = conv::convolve_full(dh, kernels, kernel_width);
    require(all_finite(g.input.values()), ErrorCode::non_finite, "input gradient is not finite");
    return g;
  }

  Tensor3 input_gradient(const Tensor3& x, std::size_t target) const {
    return backward(x, target).input;
  }
};

/// Affine softmax on raw pixels; used as a closed-form reference model.
struct LinearSoftmax {
  RowMatrix weights;  // C x D
  Vector bias;        // C

  std::size_t class_count() const { return static_cast<std::size_t>(weights.rows()); }
  Vector predict_proba(const Tensor3& x) const {
    require(static_cast<Eigen::Index>(x.size()) == weights.cols(), ErrorCode::shape_mismatch,
            "input size does not match the model");
    return softmax(weights * flatten_view(x) + bias);
  }
  std::size_t predict(const Tensor3& x) const { return argmax(predict_proba(x)); }

  /// d(-log p_target)/dx = W^T (p - e_target).
  Tensor3 input_gradient(const Tensor3& x, std::size_t target) const {
    require(target < class_count(), ErrorCode::invalid_argument, "target out of range");
    Vector d = predict_proba(x);
    d(static_cast<Eigen::Index>(target)) -= 1.0;
    const Vector g = weights.transpose() * d;
    Tensor3 out(x.channels(), x.height(), x.width());
    std::copy(g.data(), g.data() + g.size(), out.values().begin());
    return out;
  }

 private:
  static Vector flatten_view(const Tensor3& x) {
    return Eigen::Map<const Vector>(x.values().data(), static_cast<Eigen::Index>(x.size()));
  }
};

struct SurrogateTrainConfig {
  std::size_t filters = 8;
  std::size_t kernel_width = 5;
  std::size_t epochs = 30;
  std::size_t batch_size = 10;
  double learning_rate = 0.01;
  double l2 = 1e-4;
  double init_sigma = 0.1;
};

/// Mini-batch Adam on cross-entropy; deterministic for a given seed.
inline SurrogateCnn train_surrogate(const LabeledDataset& ds, const SurrogateTrainConfig& cfg,
                                    std::uint64_t seed) {
  ds.validate();
  require(!ds.images.empty() && ds.images.front().height() == ds.images.front().width(),
          ErrorCode::invalid_argument, "surrogate needs square training images");
  require(cfg.batch_size >= 1 && cfg.learning_rate > 0.0, ErrorCode::invalid_argument,
          "invalid surrogate training configuration");
  std::mt19937_64 rng(seed);
  SurrogateCnn m = SurrogateCnn::zeros(ds.images.front().width(), cfg.kernel_width, cfg.filters,
                                       ds.class_count);
  std::normal_distribution<double> conv_init(0.0, cfg.init_sigma);
  for (Eigen::Index i = 0; i < m.kernels.size(); ++i) m.kernels.data()[i] = conv_init(rng);
  std::normal_distribution<double> dense_init(
      0.0, 1.0 / std::sqrt(static_cast<double>(m.dense.cols())));
  for (Eigen::Index i = 0; i < m.dense.size(); ++i) m.dense.data()[i] = dense_init(rng);

  std::vector<Tensor3> xs;
  for (const GrayImage& im : ds.images) xs.push_back(im.tensor());

  // Adam state, one slot per parameter block.
  struct Slot {
    Eigen::ArrayXd m, v;
  };
  auto step = [&](double* param, const double* grad, Eigen::Index n, Slot& s, std::size_t t) {
    constexpr double b1 = 0.9, b2 = 0.999, tiny = 1e-8;
    if (s.m.size() == 0) {
      s.m = Eigen::ArrayXd::Zero(n);
      s.v = Eigen::ArrayXd::Zero(n);
    }
    Eigen::Map<Eigen::ArrayXd> p(param, n);
    Eigen::Map<const Eigen::ArrayXd> g(grad, n);
    const Eigen::ArrayXd reg = g + cfg.l2 * p;
    s.m = b1 * s.m + (1 - b1) * reg;
    s.v = b2 * s.v + (1 - b2) * reg.square();
    const double c1 = 1 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1 - std::pow(b2, static_cast<double>(t));
    p -= cfg.learning_rate * (s.m / c1) / ((s.v / c2).sqrt() + tiny);
  };
  std::array<Slot, 4> slots;
  std::vector<std::size_t> order(xs.size());
  std::size_t t = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      SurrogateCnn::Gradient acc;
      for (std::size_t i = start; i < end; ++i) {
        SurrogateCnn::Gradient g = m.backward(xs[order[i]], ds.labels[order[i]]);
        if (i == start) {
          acc = std::move(g);
        } else {
          acc.kernels += g.kernels;
          acc.conv_bias += g.conv_bias;
          acc.dense += g.dense;
          acc.dense_bias += g.dense_bias;
        }
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      acc.kernels *= inv;
      acc.conv_bias *= inv;
      acc.dense *= inv;
      acc.dense_bias *= inv;
      ++t;
      step(m.kernels.data(), acc.kernels.data(), m.kernels.size(), slots[0], t);
      step(m.conv_bias.data(), acc.conv_bias.data(), m.conv_bias.size(), slots[1], t);
      step(m.dense.data(), acc.dense.data(), m.dense.size(), slots[2], t);
      step(m.dense_bias.data(), acc.dense_bias.data(), m.dense_bias.size(), slots[3], t);
    }
  }
  return m;
}

struct PerturbConfig {
  std::size_t target = 6;
  double eps_step = 0.05;
  std::size_t max_steps = 10;

  void validate() const {
    require(eps_step > 0.0, ErrorCode::invalid_argument, "eps_step must be positive");
  }
};

struct PerturbResult {
  GrayImage image;
  bool success = false;
  std::size_t steps = 0;
};

/// x <- clamp(x - eps * sign(grad of CE toward target)) until the model predicts
/// the target or the step budget runs out.
template <class Model>
PerturbResult perturb(const GrayImage& img, const Model& model, const PerturbConfig& cfg) {
  cfg.validate();
  require(cfg.target < model.class_count(), ErrorCode::invalid_argument, "target out of range");
  Tensor3 x = img.tensor();
  std::size_t steps = 0;
  while (model.predict(x) != cfg.target && steps < cfg.max_steps) {
    const Tensor3 g = model.input_gradient(x, cfg.target);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double s = g.values()[i] > 0.0 ? 1.0 : g.values()[i] < 0.0 ? -1.0 : 0.0;
      x.values()[i] = std::clamp(x.values()[i] - cfg.eps_step * s, 0.0, 1.0);
    }
    ++steps;
  }
  const bool success = model.predict(x) == cfg.target;
  return {GrayImage::clamped(x), success, steps};
}

struct AttackRecord {
  std::size_t source_index = 0;
  std::size_t label = 0;
  std::size_t target = 0;
  bool attempted = false;
  std::size_t steps = 0;
  bool success = false;
};

struct AttackSet {
  LabeledDataset data;  // perturbed images, true labels
  std::vector<AttackRecord> records;

  double success_rate() const {
    std::size_t tried = 0, ok = 0;
    for (const AttackRecord& r : records) {
      tried += r.attempted ? 1 : 0;
      ok += r.attempted && r.success ? 1 : 0;
    }
    return tried == 0 ? 0.0 : static_cast<double>(ok) / static_cast<double>(tried);
  }
};

/// Perturbs every image not already of the target class; target-class images pass through.
template <class Model>
AttackSet make_attack_set(const LabeledDataset& ds, const Model& model, const PerturbConfig& cfg) {
  ds.validate();
  AttackSet out;
  out.data.class_count = ds.class_count;
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    AttackRecord rec{i, ds.labels[i], cfg.target, ds.labels[i] != cfg.target, 0, false};
    if (rec.attempted) {
      PerturbResult r = perturb(ds.images[i], model, cfg);
      rec.steps = r.steps;
      rec.success = r.success;
      out.data.images.push_back(std::move(r.image));
    } else {
      out.data.images.push_back(ds.images[i]);
    }
    out.data.labels.push_back(ds.labels[i]);
    out.records.push_back(rec);
  }
  return out;
}

}  // namespace bsnn
