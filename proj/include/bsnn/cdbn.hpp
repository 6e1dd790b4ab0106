#pragma once

// Stacked CRBMs: greedy layer-wise training, deterministic feed-forward
// feature extraction and top-down reconstruction through the pooling layers.

#include <cstdint>
#include <optional>
#include <vector>

#include "bsnn/crbm.hpp"
#include "bsnn/data_io.hpp"

namespace bsnn {

struct CdbnStack {
  std::vector<CrbmParams> layers;

  std::size_t depth() const noexcept { return layers.size(); }
  std::size_t input_width() const { return layers.front().visible_width; }
  const CrbmParams& top() const { return layers.back(); }

  void validate() const {
    require(!layers.empty(), ErrorCode::invalid_argument, "stack has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      layers[l].validate();
      if (l + 1 < layers.size()) {
        require(layers[l + 1].visible_width == layers[l].pooled_width() &&
                    layers[l + 1].channels == layers[l].feature_count(),
                ErrorCode::shape_mismatch,
                "layer " + std::to_string(l + 1) + " does not consume layer " + std::to_string(l) +
                    "'s pooled maps");
      }
    }
    require(layers.front().channels == 1, ErrorCode::shape_mismatch,
            "first layer must see a single-channel image");
  }
};

/// Pooled activations of every layer plus the unpooling switches: for each
/// pooled unit, the offset (dy * c + dx) of the most probable hidden unit.
struct LayerActivations {
  std::vector<Tensor3> pooled;
  std::vector<std::vector<std::uint32_t>> switches;
};

/// Top-layer pooled probabilities for one image.
struct EpisodicFeatures {
  Tensor3 maps;
  /// Per-layer switches; empty when the features were not extracted from an
  /// image (one-hot probes), in which case unpooling uses the block's first unit.
  std::vector<std::vector<std::uint32_t>> switches;
};

namespace detail {

inline std::vector<std::uint32_t> argmax_switches(const Tensor3& hidden, std::size_t pool) {
  const std::size_t np = hidden.height() / pool;
  std::vector<std::uint32_t> sw(hidden.channels() * np * np, 0);
  for (std::size_t k = 0; k < hidden.channels(); ++k) {
    for (std::size_t by = 0; by < np; ++by) {
      for (std::size_t bx = 0; bx < np; ++bx) {
        double best = -1.0;
        std::uint32_t arg = 0;
        for (std::size_t dy = 0; dy < pool; ++dy) {
          for (std::size_t dx = 0; dx < pool; ++dx) {
            const double p = hidden(k, by * pool + dy, bx * pool + dx);
            if (p > best) {
              best = p;
              arg = static_cast<std::uint32_t>(dy * pool + dx);
            }
          }
        }
        sw[(k * np + by) * np + bx] = arg;
      }
    }
  }
  return sw;
}

inline Tensor3 unpool(const Tensor3& pooled, std::size_t pool,
                      const std::vector<std::uint32_t>* switches) {
  Tensor3 hidden(pooled.channels(), pooled.height() * pool, pooled.width() * pool);
  for (std::size_t k = 0; k < pooled.channels(); ++k) {
    for (std::size_t by = 0; by < pooled.height(); ++by) {
      for (std::size_t bx = 0; bx < pooled.width(); ++bx) {
        const std::size_t at =
            switches ? (*switches)[(k * pooled.height() + by) * pooled.width() + bx] : 0;
        hidden(k, by * pool + at / pool, bx * pool + at % pool) = pooled(k, by, bx);
      }
    }
  }
  return hidden;
}

}  // namespace detail

inline LayerActivations extract_layers(const Tensor3& input, const CdbnStack& stack) {
  LayerActivations out;
  const Tensor3* v = &input;
  for (const CrbmParams& layer : stack.layers) {
    const HiddenPosterior post = hidden_conditional(*v, layer);
    out.switches.push_back(detail::argmax_switches(post.hidden, layer.pool_size));
    out.pooled.push_back(post.pooled());
    v = &out.pooled.back();
  }
  return out;
}

inline EpisodicFeatures extract_episodic(const GrayImage& img, const CdbnStack& stack) {
  require(img.height() == stack.input_width() && img.width() == stack.input_width(),
          ErrorCode::shape_mismatch, "image does not match the stack's input width");
  LayerActivations acts = extract_layers(img.tensor(), stack);
  return {std::move(acts.pooled.back()), std::move(acts.switches)};
}

/// Deconvolves pooled maps of layer `from` down to input space:
/// v' = sum_k s_k (W^k * H^k) at layer `from`, then plain W * H below,
/// unpooling at the recorded switches. Linear in `pooled` and in `s`.
inline Tensor3 deconvolve(const Tensor3& pooled, std::size_t from, const CdbnStack& stack,
                          const std::vector<std::vector<std::uint32_t>>& switches,
                          std::span<const double> s = {}) {
  require(from < stack.depth(), ErrorCode::invalid_argument, "layer index out of range");
  const CrbmParams& layer = stack.layers[from];
  require(pooled.channels() == layer.feature_count() &&
              pooled.height() == layer.pooled_width() && pooled.width() == layer.pooled_width(),
          ErrorCode::shape_mismatch, "pooled maps do not match layer " + std::to_string(from));
  require(s.empty() || s.size() == layer.feature_count(), ErrorCode::shape_mismatch,
          "one reconstruction weight per feature");

  Tensor3 current = pooled;
  for (std::size_t l = from + 1; l-- > 0;) {
    const CrbmParams& p = stack.layers[l];
    const auto* sw = switches.empty() ? nullptr : &switches[l];
    Tensor3 hidden = detail::unpool(current, p.pool_size, sw);
    if (l == from && !s.empty()) {
      for (std::size_t k = 0; k < hidden.channels(); ++k)
        for (double& x : hidden.channel(k)) x *= s[k];
    }
    current = conv::convolve_full(hidden, p.kernels, p.kernel_width);
  }
  return current;
}

/// Unclipped reconstruction of an image from its top-layer features.
inline Tensor3 reconstruct_raw(const EpisodicFeatures& feat, const CdbnStack& stack,
                               std::span<const double> s = {}) {
  return deconvolve(feat.maps, stack.depth() - 1, stack, feat.switches, s);
}

inline GrayImage reconstruct(const EpisodicFeatures& feat, const CdbnStack& stack,
                             std::span<const double> s = {}) {
  return GrayImage::clamped(reconstruct_raw(feat, stack, s));
}

/// Side of the input window reached by one unit of layer `layer`'s first
/// pooled position when unpooling to the block's first unit.
inline std::size_t receptive_field(const CdbnStack& stack, std::size_t layer) {
  require(layer < stack.depth(), ErrorCode::invalid_argument, "layer index out of range");
  std::size_t r = stack.layers[layer].kernel_width;
  for (std::size_t l = layer; l-- > 0;)
    r = (r - 1) * stack.layers[l].pool_size + stack.layers[l].kernel_width;
  return r;
}

/// One-hot probe: pooled unit (0,0) of feature k at layer `layer`.
inline Tensor3 one_hot_pooled(const CdbnStack& stack, std::size_t layer, std::size_t k) {
  require(layer < stack.depth(), ErrorCode::invalid_argument, "layer index out of range");
  const CrbmParams& p = stack.layers[layer];
  require(k < p.feature_count(), ErrorCode::invalid_argument, "feature index out of range");
  Tensor3 t(p.feature_count(), p.pooled_width(), p.pooled_width());
  t(k, 0, 0) = 1.0;
  return t;
}

/// Raw input-space response of feature k, cropped to its receptive field.
inline Tensor3 feature_response(const CdbnStack& stack, std::size_t layer, std::size_t k) {
  const Tensor3 full = deconvolve(one_hot_pooled(stack, layer, k), layer, stack, {});
  const std::size_t r = receptive_field(stack, layer);
  Tensor3 crop(1, r, r);
  for (std::size_t y = 0; y < r; ++y)
    for (std::size_t x = 0; x < r; ++x) crop(0, y, x) = full(0, y, x);
  return crop;
}

inline GrayImage visualize_feature(const CdbnStack& stack, std::size_t layer, std::size_t k) {
  const Tensor3 raw = feature_response(stack, layer, k);
  return normalized(raw.height(), raw.width(), raw.values());
}

struct CdbnTrainConfig {
  std::vector<CrbmTrainConfig> layers;

  /// 28 -> (7x7, 40 maps, pool 2) -> 11 -> (4x4, 40 maps, pool 2) -> 4.
  static CdbnTrainConfig mnist() {
    CrbmTrainConfig first;
    first.kernel_width = 7;
    CrbmTrainConfig second;
    second.kernel_width = 4;
    return {{first, second}};
  }

  /// 64 -> (9x9, 40 maps, pool 2) -> 28 -> (5x5, 40 maps, pool 2) -> 12.
  static CdbnTrainConfig faces() {
    CrbmTrainConfig first;
    first.kernel_width = 9;
    CrbmTrainConfig second;
    second.kernel_width = 5;
    return {{first, second}};
  }
};

struct TrainedStack {
  CdbnStack stack;
  std::vector<std::vector<double>> loss_traces;
};

/// Greedy layer-wise training; layer l is fitted on layer l-1's pooled probabilities.
inline TrainedStack train_stack(std::span<const GrayImage> images, const CdbnTrainConfig& cfg,
                                std::uint64_t seed) {
  require(!images.empty(), ErrorCode::invalid_argument, "no training images");
  require(!cfg.layers.empty(), ErrorCode::invalid_argument, "no layers configured");
  std::vector<Tensor3> data;
  data.reserve(images.size());
  for (const GrayImage& im : images) data.push_back(im.tensor());

  TrainedStack out;
  for (std::size_t l = 0; l < cfg.layers.size(); ++l) {
    TrainedLayer layer = train_layer(data, cfg.layers[l], seed + 7919 * l);
    for (Tensor3& v : data) v = hidden_conditional(v, layer.params).pooled();
    out.stack.layers.push_back(std::move(layer.params));
    out.loss_traces.push_back(std::move(layer.loss_trace));
  }
  out.stack.validate();
  return out;
}

}  // namespace bsnn
