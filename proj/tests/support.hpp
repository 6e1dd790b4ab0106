#pragma once

#include <cmath>
#include <random>

#include "bsnn/tensor.hpp"

namespace testing_support {

using bsnn::RowMatrix;
using bsnn::Tensor3;
using bsnn::Vector;

inline Tensor3 random_tensor(std::size_t c, std::size_t h, std::size_t w, std::mt19937_64& rng,
                             double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor3 t(c, h, w);
  for (double& x : t.values()) x = u(rng);
  return t;
}

inline RowMatrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng,
                               double sigma = 1.0) {
  std::normal_distribution<double> n(0.0, sigma);
  RowMatrix m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline Vector random_vector(std::size_t n, std::mt19937_64& rng, double sigma = 1.0) {
  std::normal_distribution<double> d(0.0, sigma);
  Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = d(rng);
  return v;
}

inline Vector random_simplex(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = u(rng);
  return v / v.sum();
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

}  // namespace testing_support
