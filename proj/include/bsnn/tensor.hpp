#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bsnn/error.hpp"

namespace bsnn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Dense channels x height x width block of reals, row-major within a channel.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t channels, std::size_t height, std::size_t width, double fill = 0.0)
      : channels_(channels), height_(height), width_(width),
        data_(channels * height * width, fill) {}

  std::size_t channels() const noexcept { return channels_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t plane() const noexcept { return height_ * width_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * height_ + y) * width_ + x];
  }
  double operator()(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * height_ + y) * width_ + x];
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<double> channel(std::size_t c) { return {data_.data() + c * plane(), plane()}; }
  std::span<const double> channel(std::size_t c) const {
    return {data_.data() + c * plane(), plane()};
  }

  /// channels x (height*width) view, one row per channel.
  Eigen::Map<RowMatrix> matrix() {
    return {data_.data(), static_cast<Eigen::Index>(channels_),
            static_cast<Eigen::Index>(plane())};
  }
  Eigen::Map<const RowMatrix> matrix() const {
    return {data_.data(), static_cast<Eigen::Index>(channels_),
            static_cast<Eigen::Index>(plane())};
  }

  bool same_shape(const Tensor3& other) const noexcept {
    return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
  }

  std::string shape_string() const {
    return std::to_string(channels_) + "x" + std::to_string(height_) + "x" +
           std::to_string(width_);
  }

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  std::size_t channels_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  // Fixed alignment keeps vectorised reductions, and so results, identical run to run.
  std::vector<double, Eigen::aligned_allocator<double>> data_;
};

/// Single-channel image with every pixel in [0,1].
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(std::size_t height, std::size_t width, std::vector<double> pixels)
      : height_(height), width_(width), pixels_(std::move(pixels)) {
    require(height_ > 0 && width_ > 0, ErrorCode::invalid_argument, "image must be non-empty");
    require(pixels_.size() == height_ * width_, ErrorCode::shape_mismatch,
            "pixel count does not match image shape");
    for (double p : pixels_) {
      require(p >= 0.0 && p <= 1.0, ErrorCode::invalid_argument, "pixel outside [0,1]");
    }
  }
  GrayImage(std::size_t height, std::size_t width, double fill = 0.0)
      : GrayImage(height, width, std::vector<double>(height * width, fill)) {}

  /// Clamps every value into [0,1]; the tensor must have one channel.
  static GrayImage clamped(const Tensor3& t) {
    require(t.channels() == 1, ErrorCode::shape_mismatch, "image tensor must have one channel");
    std::vector<double> px(t.values().begin(), t.values().end());
    for (double& p : px) p = std::clamp(p, 0.0, 1.0);
    return {t.height(), t.width(), std::move(px)};
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::span<const double> pixels() const noexcept { return pixels_; }

  double operator()(std::size_t y, std::size_t x) const { return pixels_[y * width_ + x]; }
  void set(std::size_t y, std::size_t x, double value) {
    require(value >= 0.0 && value <= 1.0, ErrorCode::invalid_argument, "pixel outside [0,1]");
    pixels_[y * width_ + x] = value;
  }

  Tensor3 tensor() const {
    Tensor3 t(1, height_, width_);
    std::copy(pixels_.begin(), pixels_.end(), t.values().begin());
    return t;
  }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> pixels_;
};

inline bool all_finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double v) { return std::isfinite(v); });
}

/// Pearson correlation; zero when either side is constant.
inline double pearson(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size() && !a.empty(), ErrorCode::shape_mismatch,
          "pearson needs equal non-empty inputs");
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace bsnn
