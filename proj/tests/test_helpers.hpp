#pragma once

#include <random>

#include "fgpr/data.hpp"
#include "fgpr/model.hpp"

namespace test_helpers {

using fgpr::CurveSet;
using fgpr::Matrix;
using fgpr::TimeGrid;
using fgpr::Vector;

inline std::mt19937_64 rng(std::uint64_t seed) { return std::mt19937_64(seed); }

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& g,
                            double scale = 1.0) {
  std::normal_distribution<double> gauss(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = gauss(g);
  return m;
}

inline Vector random_vector(Eigen::Index size, std::mt19937_64& g, double scale = 1.0) {
  std::normal_distribution<double> gauss(0.0, scale);
  Vector v(size);
  for (Eigen::Index i = 0; i < size; ++i) v[i] = gauss(g);
  return v;
}

// Well-conditioned random SPD matrix B B^T + c I.
inline Matrix random_spd(Eigen::Index dim, std::mt19937_64& g, double ridge = 0.5) {
  const Matrix B = random_matrix(dim, dim, g);
  Matrix S = B * B.transpose() / static_cast<double>(dim);
  S.diagonal().array() += ridge;
  return S;
}

inline CurveSet random_curves(int n, const TimeGrid& grid, std::mt19937_64& g,
                              double scale = 1.0) {
  return CurveSet(random_matrix(n, grid.size(), g, scale), grid);
}

inline CurveSet constant_curve_set(const std::vector<double>& levels, const TimeGrid& grid) {
  Matrix m(static_cast<Eigen::Index>(levels.size()), grid.size());
  for (std::size_t i = 0; i < levels.size(); ++i) m.row(static_cast<Eigen::Index>(i)).setConstant(levels[i]);
  return CurveSet(m, grid);
}

// Brute-force Gaussian log density with dense Cholesky; test-side oracle.
inline double dense_gaussian_loglik(const Matrix& Sigma, const Vector& y) {
  const Eigen::LLT<Matrix> llt(Sigma);
  const Vector alpha = llt.solve(y);
  const double logdet = 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
  return -0.5 * (y.dot(alpha) + logdet +
                 static_cast<double>(y.size()) * std::log(2.0 * M_PI));
}

}  // namespace test_helpers
