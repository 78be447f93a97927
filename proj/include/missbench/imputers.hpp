#pragma once

// Baseline imputers behind one interface: column mean, row-wise kNN,
// SoftImpute, iterative chained equations and ridge regression on the
// entry-wise featurization.

#include <algorithm>
#include <array>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include "missbench/core.hpp"
#include "missbench/featurize.hpp"

namespace missbench {

struct Diagnostics {
  Index iterations = 0;
  double final_change = 0.0;
  bool converged = true;
  /// SoftImpute objective after each iteration.
  std::vector<double> objective;
  bool objective_monotone = true;
  std::optional<double> ensemble_weight;
  std::vector<std::string> warnings;
};

struct ImputationResult {
  DataMatrix completed;
  /// Predictions at every cell; only entries at observed cells are meaningful.
  std::optional<Matrix> fitted_observed;
  Diagnostics diagnostics;
};

enum class Method { ColMean, Knn, SoftImpute, Ice, FeaturizedRidge };

inline constexpr std::array<Method, 5> kAllMethods{Method::ColMean, Method::Knn, Method::SoftImpute,
                                                   Method::Ice, Method::FeaturizedRidge};

inline std::string_view method_key(Method m) {
  static constexpr std::array<std::string_view, 5> keys{"col-mean", "knn", "soft-impute", "ice",
                                                        "featurized-ridge"};
  return keys[static_cast<std::size_t>(m)];
}

inline Method parse_method(std::string_view name) {
  for (Method m : kAllMethods)
    if (name == method_key(m)) return m;
  throw InvalidArgument("unknown imputation method '" + std::string(name) + "'");
}

/// Method tag plus hyperparameters. Unused fields are ignored by a method.
struct Imputer {
  Method method = Method::ColMean;
  Index k = 5;
  /// SoftImpute penalty; defaults to 0.1 * sigma_1 of the mean-filled matrix.
  std::optional<double> soft_lambda;
  Index max_iter = 200;
  double tol = 1e-5;
  double ridge_lambda = 1e-3;
  double feature_lambda = 1e-3;
};

inline void validate(const Imputer& imp) {
  if (imp.k < 1) throw InvalidArgument("imputer: k must be >= 1");
  if (imp.max_iter < 1) throw InvalidArgument("imputer: max_iter must be >= 1");
  if (!(imp.tol >= 0.0)) throw InvalidArgument("imputer: tol must be >= 0");
  if (imp.soft_lambda && !(*imp.soft_lambda >= 0.0))
    throw InvalidArgument("imputer: SoftImpute lambda must be >= 0");
  if (!(imp.ridge_lambda >= 0.0) || !(imp.feature_lambda >= 0.0))
    throw InvalidArgument("imputer: ridge penalties must be >= 0");
}

// ---------------------------------------------------------------------------
// Shared helpers

/// Observed mean per column; 0 for a column with no observed entry.
inline Vector observed_column_means(const MaskedDataset& ds) {
  Vector means = Vector::Zero(ds.cols());
  for (Index j = 0; j < ds.cols(); ++j) {
    double s = 0.0;
    Index c = 0;
    for (Index i = 0; i < ds.rows(); ++i) {
      if (ds.mask.observed(i, j)) {
        s += ds.observed(i, j);
        ++c;
      }
    }
    if (c > 0) means(j) = s / static_cast<double>(c);
  }
  return means;
}

inline Matrix mean_filled(const MaskedDataset& ds) {
  const Vector means = observed_column_means(ds);
  Matrix z = ds.observed;
  for (Index i = 0; i < z.rows(); ++i)
    for (Index j = 0; j < z.cols(); ++j)
      if (!ds.mask.observed(i, j)) z(i, j) = means(j);
  return z;
}

/// Observed values copied over z, so observed entries are never altered.
inline DataMatrix overlay_observed(const MaskedDataset& ds, Matrix z) {
  for (Index i = 0; i < z.rows(); ++i)
    for (Index j = 0; j < z.cols(); ++j)
      if (ds.mask.observed(i, j)) z(i, j) = ds.observed(i, j);
  return DataMatrix(std::move(z));
}

// ---------------------------------------------------------------------------
// Column mean

inline ImputationResult impute_col_mean(const MaskedDataset& ds) {
  const Vector means = observed_column_means(ds);
  Matrix fitted(ds.rows(), ds.cols());
  fitted.rowwise() = means.transpose();
  ImputationResult out{overlay_observed(ds, fitted), fitted, {}};
  return out;
}

// ---------------------------------------------------------------------------
// kNN over rows

/// Euclidean distance over co-observed coordinates scaled by
/// sqrt(n / #co-observed); infinity when no coordinate is shared.
inline double masked_row_distance(const MaskedDataset& ds, Index a, Index b) {
  double s = 0.0;
  Index shared = 0;
  for (Index j = 0; j < ds.cols(); ++j) {
    if (ds.mask.observed(a, j) && ds.mask.observed(b, j)) {
      const double d = ds.observed(a, j) - ds.observed(b, j);
      s += d * d;
      ++shared;
    }
  }
  if (shared == 0) return std::numeric_limits<double>::infinity();
  return std::sqrt(s * static_cast<double>(ds.cols()) / static_cast<double>(shared));
}

inline ImputationResult impute_knn(const MaskedDataset& ds, Index k) {
  if (k < 1) throw InvalidArgument("kNN: k must be >= 1");
  const Index m = ds.rows();
  const Index n = ds.cols();
  Diagnostics diag;
  if (k > m) {
    diag.warnings.push_back("kNN: k=" + std::to_string(k) + " exceeds row count " +
                            std::to_string(m) + "; clamped");
    k = m;
  }
  Matrix dist = Matrix::Zero(m, m);
  for (Index a = 0; a < m; ++a)
    for (Index b = a + 1; b < m; ++b) dist(a, b) = dist(b, a) = masked_row_distance(ds, a, b);

  const Vector means = observed_column_means(ds);
  Matrix pred(m, n);
  std::vector<std::pair<double, Index>> cand;
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < n; ++j) {
      cand.clear();
      for (Index r = 0; r < m; ++r) {
        if (r == i || !ds.mask.observed(r, j) || !std::isfinite(dist(i, r))) continue;
        cand.emplace_back(dist(i, r), r);
      }
      if (cand.empty()) {
        pred(i, j) = means(j);
        continue;
      }
      const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), cand.size());
      std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end());
      double s = 0.0;
      for (std::size_t t = 0; t < take; ++t) s += ds.observed(cand[t].second, j);
      pred(i, j) = s / static_cast<double>(take);
    }
  }
  return ImputationResult{overlay_observed(ds, pred), pred, std::move(diag)};
}

// ---------------------------------------------------------------------------
// SoftImpute

inline double soft_impute_objective(const MaskedDataset& ds, const Matrix& z, double lambda,
                                    double nuclear_norm) {
  double loss = 0.0;
  for (Index i = 0; i < z.rows(); ++i)
    for (Index j = 0; j < z.cols(); ++j)
      if (ds.mask.observed(i, j)) {
        const double d = ds.observed(i, j) - z(i, j);
        loss += d * d;
      }
  return 0.5 * loss + lambda * nuclear_norm;
}

inline double default_soft_lambda(const MaskedDataset& ds) {
  Eigen::BDCSVD<Matrix> svd(mean_filled(ds));
  return 0.1 * svd.singularValues()(0);
}

/// Iterates Z <- S_lambda(P_obs(X) + P_miss(Z)) from the column-mean fill
/// until the relative Frobenius change drops below tol.
inline ImputationResult impute_soft(const MaskedDataset& ds, double lambda, Index max_iter,
                                    double tol) {
  if (!(lambda >= 0.0)) throw InvalidArgument("SoftImpute: lambda must be >= 0");
  if (max_iter < 1) throw InvalidArgument("SoftImpute: max_iter must be >= 1");
  Matrix z = mean_filled(ds);
  Diagnostics diag;
  diag.converged = false;
  Matrix w(z.rows(), z.cols());
  for (Index it = 1; it <= max_iter; ++it) {
    for (Index i = 0; i < z.rows(); ++i)
      for (Index j = 0; j < z.cols(); ++j)
        w(i, j) = ds.mask.observed(i, j) ? ds.observed(i, j) : z(i, j);
    Eigen::BDCSVD<Matrix> svd(w, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector s = (svd.singularValues().array() - lambda).max(0.0).matrix();
    Matrix next = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();

    const double num = (next - z).norm();
    const double den = z.norm();
    const double change = num == 0.0 ? 0.0 : (den > 0.0 ? num / den : num);
    const double obj = soft_impute_objective(ds, next, lambda, s.sum());
    if (!diag.objective.empty()) {
      const double prev = diag.objective.back();
      if (obj > prev + 1e-10 * std::max(1.0, std::abs(prev))) diag.objective_monotone = false;
    }
    diag.objective.push_back(obj);
    z = std::move(next);
    diag.iterations = it;
    diag.final_change = change;
    if (change < tol) {
      diag.converged = true;
      break;
    }
  }
  if (!diag.converged) diag.warnings.push_back("SoftImpute: reached max_iter before tolerance");
  return ImputationResult{overlay_observed(ds, z), z, std::move(diag)};
}

// ---------------------------------------------------------------------------
// Iterative chained equations

namespace detail {

/// Ridge fit of column `target` on all other columns of z over `rows`; the
/// intercept is unpenalized. Returns predictions for every row.
inline Vector ridge_column_predictions(const Matrix& z, Index target, const std::vector<Index>& rows,
                                       double lambda) {
  const Index n = z.cols();
  const auto cnt = static_cast<Index>(rows.size());
  Vector y(cnt);
  for (Index k = 0; k < cnt; ++k) y(k) = z(rows[static_cast<std::size_t>(k)], target);
  const double y_mean = y.mean();
  if (n == 1) return Vector::Constant(z.rows(), y_mean);

  Matrix feats(cnt, n - 1);
  for (Index k = 0; k < cnt; ++k) {
    Index c = 0;
    for (Index j = 0; j < n; ++j)
      if (j != target) feats(k, c++) = z(rows[static_cast<std::size_t>(k)], j);
  }
  const Vector x_mean = feats.colwise().mean();
  feats.rowwise() -= x_mean.transpose();
  Matrix gram = feats.transpose() * feats;
  gram.diagonal().array() += lambda;
  const Vector beta = gram.ldlt().solve(feats.transpose() * (y.array() - y_mean).matrix());

  Vector pred(z.rows());
  for (Index i = 0; i < z.rows(); ++i) {
    double v = y_mean;
    Index c = 0;
    for (Index j = 0; j < n; ++j)
      if (j != target) {
        v += (z(i, j) - x_mean(c)) * beta(c);
        ++c;
      }
    pred(i) = v;
  }
  return pred;
}

}  // namespace detail

/// Column-mean start, then repeated sweeps in a seed-fixed column order;
/// each incomplete column is ridge-regressed on all others and its missing
/// entries re-predicted, until the max absolute change drops below tol.
inline ImputationResult impute_ice(const MaskedDataset& ds, Index max_iter, double tol,
                                   double ridge_lambda, const SeedSpec& seed) {
  if (max_iter < 1) throw InvalidArgument("ICE: max_iter must be >= 1");
  if (!(ridge_lambda >= 0.0)) throw InvalidArgument("ICE: ridge lambda must be >= 0");
  const Index m = ds.rows();
  const Index n = ds.cols();
  Matrix z = mean_filled(ds);

  std::vector<std::vector<Index>> obs_rows(static_cast<std::size_t>(n));
  std::vector<std::vector<Index>> miss_rows(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < m; ++i)
      (ds.mask.observed(i, j) ? obs_rows : miss_rows)[static_cast<std::size_t>(j)].push_back(i);

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng = seed.child("ice-order").rng();
  std::shuffle(order.begin(), order.end(), rng);

  Diagnostics diag;
  diag.converged = false;
  for (Index it = 1; it <= max_iter; ++it) {
    double max_change = 0.0;
    for (Index j : order) {
      const auto& obs = obs_rows[static_cast<std::size_t>(j)];
      const auto& miss = miss_rows[static_cast<std::size_t>(j)];
      if (miss.empty() || obs.empty()) continue;
      const Vector pred = detail::ridge_column_predictions(z, j, obs, ridge_lambda);
      for (Index i : miss) {
        max_change = std::max(max_change, std::abs(pred(i) - z(i, j)));
        z(i, j) = pred(i);
      }
    }
    diag.iterations = it;
    diag.final_change = max_change;
    if (max_change < tol) {
      diag.converged = true;
      break;
    }
  }
  if (!diag.converged) diag.warnings.push_back("ICE: reached max_iter before tolerance");

  Matrix fitted = z;
  for (Index j = 0; j < n; ++j) {
    const auto& obs = obs_rows[static_cast<std::size_t>(j)];
    if (obs.empty()) continue;
    const Vector pred = detail::ridge_column_predictions(z, j, obs, ridge_lambda);
    for (Index i : obs) fitted(i, j) = pred(i);
  }
  return ImputationResult{overlay_observed(ds, z), std::move(fitted), std::move(diag)};
}

// ---------------------------------------------------------------------------
// Ridge on the entry-wise featurization

inline ImputationResult impute_featurized_ridge(const MaskedDataset& ds, double lambda) {
  const FeatureTable ft = build_features(ds);
  const RidgePrediction pred = ridge_on_features(ft, lambda);
  Matrix z = ds.observed;
  Matrix fitted = Matrix::Zero(ds.rows(), ds.cols());
  for (std::size_t k = 0; k < ft.test_rows.size(); ++k) {
    const auto [i, j] = ft.cell_index[static_cast<std::size_t>(ft.test_rows[k])];
    z(i, j) = pred.test(static_cast<Index>(k));
    fitted(i, j) = z(i, j);
  }
  for (std::size_t k = 0; k < ft.train_rows.size(); ++k) {
    const auto [i, j] = ft.cell_index[static_cast<std::size_t>(ft.train_rows[k])];
    fitted(i, j) = pred.train_fitted(static_cast<Index>(k));
  }
  return ImputationResult{overlay_observed(ds, std::move(z)), std::move(fitted), {}};
}

// ---------------------------------------------------------------------------

inline ImputationResult impute(const Imputer& imp, const MaskedDataset& ds, const SeedSpec& seed) {
  validate(imp);
  switch (imp.method) {
    case Method::ColMean:
      return impute_col_mean(ds);
    case Method::Knn:
      return impute_knn(ds, imp.k);
    case Method::SoftImpute:
      return impute_soft(ds, imp.soft_lambda ? *imp.soft_lambda : default_soft_lambda(ds),
                         imp.max_iter, imp.tol);
    case Method::Ice:
      return impute_ice(ds, imp.max_iter, imp.tol, imp.ridge_lambda, seed);
    case Method::FeaturizedRidge:
      return impute_featurized_ridge(ds, imp.feature_lambda);
  }
  throw InvalidArgument("impute: unknown method tag");
}

}  // namespace missbench
