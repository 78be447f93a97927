#pragma once

// Entry-wise featurization: every cell (i, j) becomes one regression row
// (i, j, X[i, :], X[:, j]) whose target is the cell value, so imputation turns
// into supervised regression over the observed cells.

#include <utility>
#include <vector>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "missbench/core.hpp"

namespace missbench {

class SingularSystem : public Error {
 public:
  using Error::Error;
};

struct FeatureTable {
  Index source_rows = 0;
  Index source_cols = 0;
  /// (m*n) x (m+n+2), sentinels preserved where the source is missing.
  Matrix features;
  /// Observed value per table row, kMissing on test rows.
  Vector targets;
  /// Table row -> (i, j), canonical row-major cell order.
  std::vector<std::pair<Index, Index>> cell_index;
  std::vector<Index> train_rows;
  std::vector<Index> test_rows;

  [[nodiscard]] Index width() const { return features.cols(); }
  [[nodiscard]] Index row_of(Index i, Index j) const { return i * source_cols + j; }
};

inline FeatureTable build_features(const MaskedDataset& ds) {
  const Index m = ds.rows();
  const Index n = ds.cols();
  const Matrix& x = ds.observed;
  FeatureTable ft;
  ft.source_rows = m;
  ft.source_cols = n;
  ft.features.resize(m * n, m + n + 2);
  ft.targets.resize(m * n);
  ft.cell_index.reserve(static_cast<std::size_t>(m * n));
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < n; ++j) {
      const Index r = i * n + j;
      ft.features(r, 0) = static_cast<double>(i);
      ft.features(r, 1) = static_cast<double>(j);
      ft.features.block(r, 2, 1, n) = x.row(i);
      ft.features.block(r, 2 + n, 1, m) = x.col(j).transpose();
      ft.targets(r) = x(i, j);
      ft.cell_index.emplace_back(i, j);
      if (ds.mask.observed(i, j)) {
        ft.train_rows.push_back(r);
      } else {
        ft.test_rows.push_back(r);
      }
    }
  }
  return ft;
}

struct RidgePrediction {
  /// One prediction per entry of FeatureTable::test_rows.
  Vector test;
  /// In-sample fitted values, one per entry of FeatureTable::train_rows.
  Vector train_fitted;
};

namespace detail {

/// Regression design from a FeatureTable: sentinel context cells are filled
/// with the train-row column mean and flagged by an indicator column.
inline Matrix ridge_design(const FeatureTable& ft) {
  const Index context = ft.width() - 2;
  const Index rows = ft.features.rows();
  Matrix design(rows, 2 + 2 * context);
  design.leftCols(2) = ft.features.leftCols(2);
  for (Index c = 0; c < context; ++c) {
    const Index src = 2 + c;
    double sum = 0.0;
    Index cnt = 0;
    for (Index r : ft.train_rows) {
      const double v = ft.features(r, src);
      if (!is_missing(v)) {
        sum += v;
        ++cnt;
      }
    }
    const double fill = cnt > 0 ? sum / static_cast<double>(cnt) : 0.0;
    for (Index r = 0; r < rows; ++r) {
      const double v = ft.features(r, src);
      const bool miss = is_missing(v);
      design(r, 2 + c) = miss ? fill : v;
      design(r, 2 + context + c) = miss ? 1.0 : 0.0;
    }
  }
  return design;
}

}  // namespace detail

/// Closed-form ridge regression on the featurized table. Features are
/// z-scored on the train rows (constant ones dropped), the intercept is left
/// unpenalized. lambda = 0 raises SingularSystem when the train design is
/// rank deficient.
inline RidgePrediction ridge_on_features(const FeatureTable& ft, double lambda) {
  if (!(lambda >= 0.0)) throw InvalidArgument("ridge_on_features: lambda must be >= 0");
  if (ft.train_rows.empty()) throw InvalidArgument("ridge_on_features: no train rows");

  const Matrix design = detail::ridge_design(ft);
  const auto n_train = static_cast<Index>(ft.train_rows.size());

  std::vector<Index> keep;
  Vector mean(design.cols());
  Vector scale(design.cols());
  for (Index c = 0; c < design.cols(); ++c) {
    double mu = 0.0;
    for (Index r : ft.train_rows) mu += design(r, c);
    mu /= static_cast<double>(n_train);
    double var = 0.0;
    for (Index r : ft.train_rows) var += (design(r, c) - mu) * (design(r, c) - mu);
    var /= static_cast<double>(n_train);
    mean(c) = mu;
    scale(c) = std::sqrt(var);
    if (scale(c) > 1e-12) keep.push_back(c);
  }
  const auto p = static_cast<Index>(keep.size());

  auto standardized = [&](Index r) {
    Vector z(p);
    for (Index k = 0; k < p; ++k) {
      const Index c = keep[static_cast<std::size_t>(k)];
      z(k) = (design(r, c) - mean(c)) / scale(c);
    }
    return z;
  };

  Matrix z_train(n_train, p);
  Vector y(n_train);
  for (Index k = 0; k < n_train; ++k) {
    const Index r = ft.train_rows[static_cast<std::size_t>(k)];
    z_train.row(k) = standardized(r).transpose();
    y(k) = ft.targets(r);
  }
  const double y_mean = y.mean();
  const Vector yc = (y.array() - y_mean).matrix();

  Vector beta = Vector::Zero(p);
  if (p > 0) {
    if (lambda == 0.0) {
      Eigen::ColPivHouseholderQR<Matrix> qr(z_train);
      if (qr.rank() < p) {
        throw SingularSystem("ridge_on_features: singular system at lambda = 0; retry with lambda > 0");
      }
      beta = qr.solve(yc);
    } else {
      Eigen::BDCSVD<Matrix> svd(z_train, Eigen::ComputeThinU | Eigen::ComputeThinV);
      const Vector s = svd.singularValues();
      const Vector uty = svd.matrixU().transpose() * yc;
      Vector shrunk(s.size());
      for (Index k = 0; k < s.size(); ++k) shrunk(k) = s(k) / (s(k) * s(k) + lambda) * uty(k);
      beta = svd.matrixV() * shrunk;
    }
  }

  RidgePrediction out;
  out.train_fitted = (z_train * beta).array() + y_mean;
  out.test.resize(static_cast<Index>(ft.test_rows.size()));
  for (std::size_t k = 0; k < ft.test_rows.size(); ++k) {
    out.test(static_cast<Index>(k)) = y_mean + standardized(ft.test_rows[k]).dot(beta);
  }
  return out;
}

}  // namespace missbench
