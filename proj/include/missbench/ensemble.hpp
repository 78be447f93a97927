#pragma once

// Two-layer ensembling: averaging over random row/column permutations, then
// a closed-form adaptive convex combination of two imputers chosen to
// minimize squared error on the observed cells.

#include <algorithm>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "missbench/core.hpp"
#include "missbench/imputers.hpp"

namespace missbench {

using ImputeFn = std::function<ImputationResult(const MaskedDataset&, const SeedSpec&)>;

inline ImputeFn imputer_fn(Imputer imp) {
  return [imp](const MaskedDataset& ds, const SeedSpec& seed) { return impute(imp, ds, seed); };
}

struct Permutation {
  std::vector<Index> rows;
  std::vector<Index> cols;
};

inline std::vector<Index> identity_permutation(Index n) {
  std::vector<Index> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), Index{0});
  return p;
}

/// Dataset whose cell (a, b) is the source cell (perm.rows[a], perm.cols[b]).
inline MaskedDataset permute(const MaskedDataset& ds, const Permutation& perm) {
  const Index m = ds.rows();
  const Index n = ds.cols();
  Matrix truth(m, n);
  MaskBits bits(m, n);
  for (Index a = 0; a < m; ++a)
    for (Index b = 0; b < n; ++b) {
      const Index i = perm.rows[static_cast<std::size_t>(a)];
      const Index j = perm.cols[static_cast<std::size_t>(b)];
      truth(a, b) = ds.truth(i, j);
      bits(a, b) = ds.mask.bits()(i, j);
    }
  return apply_mask(DataMatrix(std::move(truth)), Mask(std::move(bits)));
}

/// Inverse of permute for a plain matrix.
inline Matrix unpermute(const Matrix& z, const Permutation& perm) {
  Matrix out(z.rows(), z.cols());
  for (Index a = 0; a < z.rows(); ++a)
    for (Index b = 0; b < z.cols(); ++b)
      out(perm.rows[static_cast<std::size_t>(a)], perm.cols[static_cast<std::size_t>(b)]) = z(a, b);
  return out;
}

/// Averages the base imputer over n_perms independent row/column
/// permutations. With identity_first the first permutation is the identity.
inline ImputationResult permutation_ensemble(const ImputeFn& base, const MaskedDataset& ds,
                                             Index n_perms, const SeedSpec& seed,
                                             bool identity_first = false) {
  if (n_perms < 1) throw InvalidArgument("permutation_ensemble: n_perms must be >= 1");
  Matrix completed_sum = Matrix::Zero(ds.rows(), ds.cols());
  Matrix fitted_sum = Matrix::Zero(ds.rows(), ds.cols());
  bool have_fitted = true;
  Diagnostics diag;
  for (Index k = 0; k < n_perms; ++k) {
    const std::string tag = std::to_string(k);
    Permutation perm{identity_permutation(ds.rows()), identity_permutation(ds.cols())};
    if (!(identity_first && k == 0)) {
      Rng rng = seed.child("perm-" + tag).rng();
      std::shuffle(perm.rows.begin(), perm.rows.end(), rng);
      std::shuffle(perm.cols.begin(), perm.cols.end(), rng);
    }
    const ImputationResult r = base(permute(ds, perm), seed.child("base-" + tag));
    completed_sum += unpermute(r.completed.values(), perm);
    if (r.fitted_observed) {
      fitted_sum += unpermute(*r.fitted_observed, perm);
    } else {
      have_fitted = false;
    }
    diag.iterations = std::max(diag.iterations, r.diagnostics.iterations);
    diag.converged = diag.converged && r.diagnostics.converged;
    diag.objective_monotone = diag.objective_monotone && r.diagnostics.objective_monotone;
    diag.warnings.insert(diag.warnings.end(), r.diagnostics.warnings.begin(),
                         r.diagnostics.warnings.end());
  }
  const double inv = 1.0 / static_cast<double>(n_perms);
  ImputationResult out{overlay_observed(ds, completed_sum * inv), std::nullopt, std::move(diag)};
  if (have_fitted) out.fitted_observed = fitted_sum * inv;
  return out;
}

/// w* = (x_obs - x2)^T (x1 - x2) / ||x1 - x2||^2, the unconstrained minimizer
/// of ||x_obs - (w x1 + (1 - w) x2)||^2; 0.5 when ||x1 - x2||^2 < degenerate_tol.
inline double adaptive_weight(std::span<const double> x1, std::span<const double> x2,
                              std::span<const double> x_obs, double degenerate_tol) {
  if (x1.size() != x2.size() || x1.size() != x_obs.size())
    throw InvalidArgument("adaptive_weight: vectors must have equal length");
  if (x1.empty()) throw InvalidArgument("adaptive_weight: no observed entries");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < x1.size(); ++k) {
    const double d = x1[k] - x2[k];
    num += (x_obs[k] - x2[k]) * d;
    den += d * d;
  }
  if (den < degenerate_tol) return 0.5;
  return num / den;
}

struct EnsembleSpec {
  Imputer base_a{Method::FeaturizedRidge};
  Imputer base_b{Method::SoftImpute};
  Index n_perms = 4;
  double degenerate_tol = 1e-12;
};

inline void validate(const EnsembleSpec& spec) {
  if (spec.n_perms < 1) throw InvalidArgument("ensemble: n_perms must be >= 1");
  if (!(spec.degenerate_tol > 0.0)) throw InvalidArgument("ensemble: degenerate_tol must be > 0");
  validate(spec.base_a);
  validate(spec.base_b);
}

/// Combines two finished imputations with the adaptive weight computed on
/// their observed-cell predictions.
inline ImputationResult blend_results(const MaskedDataset& ds, const ImputationResult& a,
                                      const ImputationResult& b, double degenerate_tol) {
  if (!a.fitted_observed || !b.fitted_observed)
    throw InvalidArgument("blend: both bases must provide observed-cell predictions");
  std::vector<double> xa;
  std::vector<double> xb;
  std::vector<double> xo;
  for (Index j = 0; j < ds.cols(); ++j)
    for (Index i = 0; i < ds.rows(); ++i)
      if (ds.mask.observed(i, j)) {
        xa.push_back((*a.fitted_observed)(i, j));
        xb.push_back((*b.fitted_observed)(i, j));
        xo.push_back(ds.observed(i, j));
      }
  const double w = adaptive_weight(xa, xb, xo, degenerate_tol);
  const Matrix mix = w * a.completed.values() + (1.0 - w) * b.completed.values();
  Diagnostics diag;
  diag.ensemble_weight = w;
  diag.iterations = std::max(a.diagnostics.iterations, b.diagnostics.iterations);
  diag.converged = a.diagnostics.converged && b.diagnostics.converged;
  diag.objective_monotone = a.diagnostics.objective_monotone && b.diagnostics.objective_monotone;
  for (const auto* r : {&a, &b})
    diag.warnings.insert(diag.warnings.end(), r->diagnostics.warnings.begin(),
                         r->diagnostics.warnings.end());
  if (w < 0.0 || w > 1.0) {
    diag.warnings.push_back("ensemble: weight " + std::to_string(w) + " extrapolates outside [0, 1]");
  }
  return ImputationResult{overlay_observed(ds, mix),
                          Matrix(w * *a.fitted_observed + (1.0 - w) * *b.fitted_observed),
                          std::move(diag)};
}

inline ImputationResult blend(const MaskedDataset& ds, const ImputeFn& base_a,
                              const ImputeFn& base_b, Index n_perms, double degenerate_tol,
                              const SeedSpec& seed) {
  const ImputationResult a = permutation_ensemble(base_a, ds, n_perms, seed.child("a"));
  const ImputationResult b = permutation_ensemble(base_b, ds, n_perms, seed.child("b"));
  return blend_results(ds, a, b, degenerate_tol);
}

inline ImputationResult blend(const MaskedDataset& ds, const EnsembleSpec& spec,
                              const SeedSpec& seed) {
  validate(spec);
  return blend(ds, imputer_fn(spec.base_a), imputer_fn(spec.base_b), spec.n_perms,
               spec.degenerate_tol, seed);
}

}  // namespace missbench
