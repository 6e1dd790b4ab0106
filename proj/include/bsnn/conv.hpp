#pragma once

// Multi-channel 2D convolution by unrolling receptive fields into columns so
// that every CRBM pass is a single matrix product.

#include "bsnn/tensor.hpp"

namespace bsnn::conv {

/// Unrolls every n_w x n_w window of `v` (valid positions only).
/// Result is (C*n_w*n_w) x (n_h*n_h'), row index = (c*n_w + u)*n_w + x.
inline RowMatrix im2col(const Tensor3& v, std::size_t kernel) {
  require(kernel >= 1 && kernel <= v.height() && kernel <= v.width(), ErrorCode::shape_mismatch,
          "kernel larger than input");
  const std::size_t oh = v.height() - kernel + 1;
  const std::size_t ow = v.width() - kernel + 1;
  RowMatrix cols(static_cast<Eigen::Index>(v.channels() * kernel * kernel),
                 static_cast<Eigen::Index>(oh * ow));
  for (std::size_t c = 0; c < v.channels(); ++c) {
    for (std::size_t u = 0; u < kernel; ++u) {
      for (std::size_t s = 0; s < kernel; ++s) {
        double* row = cols.row(static_cast<Eigen::Index>((c * kernel + u) * kernel + s)).data();
        for (std::size_t y = 0; y < oh; ++y) {
          for (std::size_t x = 0; x < ow; ++x) row[y * ow + x] = v(c, y + u, x + s);
        }
      }
    }
  }
  return cols;
}

/// Adjoint of im2col: scatter-adds columns back onto a C x h x w grid.
inline Tensor3 col2im(const RowMatrix& cols, std::size_t channels, std::size_t height,
                      std::size_t width, std::size_t kernel) {
  const std::size_t oh = height - kernel + 1;
  const std::size_t ow = width - kernel + 1;
  require(static_cast<std::size_t>(cols.rows()) == channels * kernel * kernel &&
              static_cast<std::size_t>(cols.cols()) == oh * ow,
          ErrorCode::shape_mismatch, "column matrix does not match target shape");
  Tensor3 out(channels, height, width);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t u = 0; u < kernel; ++u) {
      for (std::size_t s = 0; s < kernel; ++s) {
        const double* row =
            cols.row(static_cast<Eigen::Index>((c * kernel + u) * kernel + s)).data();
        for (std::size_t y = 0; y < oh; ++y) {
          for (std::size_t x = 0; x < ow; ++x) out(c, y + u, x + s) += row[y * ow + x];
        }
      }
    }
  }
  return out;
}

/// out[k] = sum_c correlate_valid(v[c], W[k,c]); kernels is K x (C*n_w*n_w).
inline Tensor3 correlate_valid(const Tensor3& v, const RowMatrix& kernels, std::size_t kernel) {
  const RowMatrix cols = im2col(v, kernel);
  require(kernels.cols() == cols.rows(), ErrorCode::shape_mismatch,
          "kernel channels do not match input");
  Tensor3 out(static_cast<std::size_t>(kernels.rows()), v.height() - kernel + 1,
              v.width() - kernel + 1);
  out.matrix().noalias() = kernels * cols;
  return out;
}

/// out[c] = sum_k convolve_full(h[k], W[k,c]); output grows by n_w - 1 per side pair.
inline Tensor3 convolve_full(const Tensor3& h, const RowMatrix& kernels, std::size_t kernel) {
  require(static_cast<std::size_t>(kernels.rows()) == h.channels(), ErrorCode::shape_mismatch,
          "kernel count does not match hidden maps");
  const std::size_t channels = static_cast<std::size_t>(kernels.cols()) / (kernel * kernel);
  const RowMatrix cols = kernels.transpose() * h.matrix();
  return col2im(cols, channels, h.height() + kernel - 1, h.width() + kernel - 1, kernel);
}

}  // namespace bsnn::conv
