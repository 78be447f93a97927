#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "missbench.hpp"

namespace mbtest {

using namespace missbench;

inline Matrix gaussian_matrix(Index m, Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix x(m, n);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) x(i, j) = g(rng);
  return x;
}

/// Mask with exactly `n_missing` zeros at random positions, never emptying the matrix.
inline Mask random_mask(Index m, Index n, Index n_missing, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Index> cells(static_cast<std::size_t>(m * n));
  for (std::size_t k = 0; k < cells.size(); ++k) cells[k] = static_cast<Index>(k);
  std::shuffle(cells.begin(), cells.end(), rng);
  MaskBits bits = MaskBits::Ones(m, n);
  for (Index k = 0; k < n_missing; ++k) {
    const Index c = cells[static_cast<std::size_t>(k)];
    bits(c / n, c % n) = 0;
  }
  return Mask(bits);
}

inline MaskedDataset random_dataset(Index m, Index n, Index n_missing, std::uint64_t seed) {
  return apply_mask(DataMatrix(gaussian_matrix(m, n, seed)), random_mask(m, n, n_missing, seed + 7));
}

inline MaskedDataset mcar_dataset(const Matrix& truth, double p_missing, std::uint64_t seed) {
  const DataMatrix x(truth);
  return apply_mask(x, generate(PatternSpec{params::Mcar{p_missing}, SeedSpec{seed, "test-mcar"}}, x));
}

/// Rank-1 matrix scaled so its only singular value is `sigma`.
inline Matrix rank_one(Index m, Index n, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Vector u(m);
  Vector v(n);
  for (Index i = 0; i < m; ++i) u(i) = g(rng);
  for (Index j = 0; j < n; ++j) v(j) = g(rng);
  u.normalize();
  v.normalize();
  return sigma * u * v.transpose();
}

/// Golden-section minimizer of a unimodal f on [lo, hi].
inline double golden_section(const std::function<double(double)>& f, double lo, double hi, double tol) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo;
  double b = hi;
  double c = b - r * (b - a);
  double d = a + r * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

/// Sort-based linear-interpolation quantile, written independently of the library.
inline double oracle_quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto below = static_cast<std::size_t>(pos);
  const auto above = std::min(below + 1, v.size() - 1);
  const double w = pos - static_cast<double>(below);
  return (1.0 - w) * v[below] + w * v[above];
}

/// Test-only method that returns the ground truth.
inline MethodSpec oracle_method() {
  return MethodSpec{"oracle",
                    [](const MaskedDataset& ds, const SeedSpec&) {
                      return ImputationResult{ds.truth, ds.truth.values(), {}};
                    },
                    Json::object()};
}

inline Matrix observed_as_zero(const MaskedDataset& ds) {
  Matrix z = ds.observed;
  for (Index i = 0; i < z.rows(); ++i)
    for (Index j = 0; j < z.cols(); ++j)
      if (!ds.mask.observed(i, j)) z(i, j) = 0.0;
  return z;
}

}  // namespace mbtest
