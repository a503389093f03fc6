#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>

#include "fgpr/errors.hpp"

namespace fgpr {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Observation grid on [0,1], strictly increasing.
class TimeGrid {
 public:
  explicit TimeGrid(Vector points) : points_(std::move(points)) {
    if (points_.size() < 1) throw InvalidParameterError("TimeGrid: empty grid");
    for (Eigen::Index j = 0; j < points_.size(); ++j) {
      const double t = points_[j];
      if (!std::isfinite(t) || t < 0.0 || t > 1.0)
        throw InvalidParameterError("TimeGrid: points must lie in [0,1]");
      if (j > 0 && t <= points_[j - 1])
        throw InvalidParameterError("TimeGrid: points must be strictly increasing");
    }
  }

  // T equispaced points spanning [0,1].
  static TimeGrid equispaced(int T) {
    if (T < 1) throw InvalidParameterError("TimeGrid: need at least one point");
    Vector p(T);
    if (T == 1) {
      p[0] = 0.5;
    } else {
      for (int j = 0; j < T; ++j) p[j] = static_cast<double>(j) / (T - 1);
    }
    return TimeGrid(p);
  }

  int size() const { return static_cast<int>(points_.size()); }
  double operator[](int j) const { return points_[j]; }
  const Vector& points() const { return points_; }
  double min() const { return points_[0]; }
  double max() const { return points_[points_.size() - 1]; }

  bool operator==(const TimeGrid& o) const { return points_ == o.points_; }

 private:
  Vector points_;
};

// n curves sampled on a common grid, one curve per row.
struct CurveSet {
  Matrix values;  // n x T
  TimeGrid grid;

  CurveSet(Matrix v, TimeGrid g) : values(std::move(v)), grid(std::move(g)) {
    if (values.cols() != grid.size())
      throw DimensionError("CurveSet: column count must equal grid length");
    if (!values.allFinite())
      throw DataError("CurveSet: all curve values must be finite");
  }

  int n() const { return static_cast<int>(values.rows()); }
  int T() const { return static_cast<int>(values.cols()); }
  Eigen::Ref<const Vector> curve(int i) const { return values.row(i).transpose(); }

  CurveSet rows(const std::vector<int>& idx) const {
    Matrix v(static_cast<Eigen::Index>(idx.size()), values.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) v.row(static_cast<Eigen::Index>(k)) = values.row(idx[k]);
    return CurveSet(std::move(v), grid);
  }
};

// Covariate curves X, response curves Y on a shared grid. W_true carries the
// latent process (or the noiseless responses) in simulation settings.
struct FunctionalDataset {
  TimeGrid grid;
  CurveSet X;
  CurveSet Y;
  std::optional<CurveSet> W_true;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> params;

  FunctionalDataset(CurveSet x, CurveSet y, std::optional<CurveSet> w = std::nullopt)
      : grid(x.grid), X(std::move(x)), Y(std::move(y)), W_true(std::move(w)) {
    if (!(Y.grid == grid) || Y.n() != X.n())
      throw DimensionError("FunctionalDataset: X and Y must share grid and sample size");
    if (W_true && (!(W_true->grid == grid) || W_true->n() != X.n()))
      throw DimensionError("FunctionalDataset: W_true must share grid and sample size");
  }

  int n() const { return X.n(); }
  int T() const { return grid.size(); }
};

// Curve-major response vector Y = (y_1(t_1),...,y_1(t_T),...,y_n(t_T))^T.
inline Vector vectorize_curves(const Matrix& curves) {
  const Eigen::Index n = curves.rows(), T = curves.cols();
  Vector y(n * T);
  for (Eigen::Index i = 0; i < n; ++i) y.segment(i * T, T) = curves.row(i).transpose();
  return y;
}

inline Matrix devectorize_curves(const Vector& y, Eigen::Index n, Eigen::Index T) {
  if (y.size() != n * T) throw DimensionError("devectorize_curves: length mismatch");
  Matrix curves(n, T);
  for (Eigen::Index i = 0; i < n; ++i) curves.row(i) = y.segment(i * T, T).transpose();
  return curves;
}

// A curve-major vector of length n*T viewed as a T x n matrix: column i is
// curve i. Kronecker identities below all use this view.
inline Eigen::Map<const Matrix> as_time_by_curve(const Vector& y, Eigen::Index n, Eigen::Index T) {
  if (y.size() != n * T) throw DimensionError("as_time_by_curve: length mismatch");
  return Eigen::Map<const Matrix>(y.data(), T, n);
}

}  // namespace fgpr
