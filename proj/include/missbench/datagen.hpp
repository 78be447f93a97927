#pragma once

// Synthetic ground truth from linear factor models Y = U V^T with
// heterogeneous latent distributions.

#include <algorithm>
#include <array>
#include <random>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "missbench/core.hpp"

namespace missbench {

namespace latent {

struct Gaussian {
  double scale = 1.0;
};
struct Laplace {
  double scale = 1.0;
};
/// Student's t; dof >= 3 so the variance exists.
struct StudentT {
  double dof = 5.0;
};
/// Exact zero with probability spike_prob, otherwise N(0, slab_scale^2).
struct SpikeAndSlab {
  double spike_prob = 0.5;
  double slab_scale = 1.0;
};
/// Rows drawn from Dirichlet(alpha). A single-entry concentration vector is
/// broadcast to every column.
struct Dirichlet {
  std::vector<double> concentration{1.0};
};

}  // namespace latent

using LatentDistribution =
    std::variant<latent::Gaussian, latent::Laplace, latent::StudentT, latent::SpikeAndSlab,
                 latent::Dirichlet>;

inline std::string_view latent_name(const LatentDistribution& d) {
  static constexpr std::array<std::string_view, 5> names{"gaussian", "laplace", "student-t",
                                                         "spike-slab", "dirichlet"};
  return names[d.index()];
}

inline void validate(const LatentDistribution& dist) {
  std::visit(
      [](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, latent::Gaussian> || std::is_same_v<T, latent::Laplace>) {
          if (!(d.scale >= 0.0) || !std::isfinite(d.scale))
            throw InvalidArgument("latent distribution: scale must be finite and >= 0");
        } else if constexpr (std::is_same_v<T, latent::StudentT>) {
          if (!(d.dof >= 3.0) || !std::isfinite(d.dof))
            throw InvalidArgument("latent distribution: Student's t needs dof >= 3");
        } else if constexpr (std::is_same_v<T, latent::SpikeAndSlab>) {
          if (!(d.spike_prob >= 0.0 && d.spike_prob <= 1.0))
            throw InvalidArgument("latent distribution: spike probability must be in [0, 1]");
          if (!(d.slab_scale >= 0.0) || !std::isfinite(d.slab_scale))
            throw InvalidArgument("latent distribution: slab scale must be finite and >= 0");
        } else {
          if (d.concentration.empty())
            throw InvalidArgument("latent distribution: empty Dirichlet concentration");
          for (double a : d.concentration)
            if (!(a > 0.0) || !std::isfinite(a))
              throw InvalidArgument("latent distribution: Dirichlet concentration must be > 0");
        }
      },
      dist);
}

/// rows x cols matrix whose rows are i.i.d. draws from dist.
inline Matrix sample_latent(const LatentDistribution& dist, Index rows, Index cols,
                            const SeedSpec& seed) {
  validate(dist);
  if (rows < 0 || cols < 0) throw InvalidArgument("sample_latent: negative shape");
  Rng rng = seed.rng();
  Matrix out(rows, cols);
  std::visit(
      [&](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, latent::Gaussian>) {
          std::normal_distribution<double> g(0.0, 1.0);
          for (Index i = 0; i < rows; ++i)
            for (Index j = 0; j < cols; ++j) out(i, j) = d.scale * g(rng);
        } else if constexpr (std::is_same_v<T, latent::Laplace>) {
          std::exponential_distribution<double> e(1.0);
          std::bernoulli_distribution sign(0.5);
          for (Index i = 0; i < rows; ++i)
            for (Index j = 0; j < cols; ++j) {
              const double mag = e(rng);
              out(i, j) = d.scale * (sign(rng) ? mag : -mag);
            }
        } else if constexpr (std::is_same_v<T, latent::StudentT>) {
          std::student_t_distribution<double> t(d.dof);
          for (Index i = 0; i < rows; ++i)
            for (Index j = 0; j < cols; ++j) out(i, j) = t(rng);
        } else if constexpr (std::is_same_v<T, latent::SpikeAndSlab>) {
          std::uniform_real_distribution<double> u(0.0, 1.0);
          std::normal_distribution<double> g(0.0, 1.0);
          for (Index i = 0; i < rows; ++i)
            for (Index j = 0; j < cols; ++j) {
              const bool spike = u(rng) < d.spike_prob;
              const double slab = g(rng);
              out(i, j) = spike ? 0.0 : d.slab_scale * slab;
            }
        } else {
          const auto& a = d.concentration;
          if (a.size() != 1 && static_cast<Index>(a.size()) != cols)
            throw InvalidArgument("sample_latent: Dirichlet concentration length must be 1 or cols");
          for (Index i = 0; i < rows; ++i) {
            double total = 0.0;
            for (Index j = 0; j < cols; ++j) {
              std::gamma_distribution<double> gam(a.size() == 1 ? a[0] : a[static_cast<std::size_t>(j)],
                                                  1.0);
              out(i, j) = gam(rng);
              total += out(i, j);
            }
            if (total > 0.0) {
              out.row(i) /= total;
            } else {
              out.row(i).setConstant(1.0 / static_cast<double>(cols));
            }
          }
        }
      },
      dist);
  return out;
}

struct LfmSpec {
  Index rows = 100;
  Index cols = 20;
  Index rank = 2;
  LatentDistribution row_dist = latent::Gaussian{};
  LatentDistribution col_dist = latent::Gaussian{};
  double noise_scale = 0.0;
};

inline void validate(const LfmSpec& spec) {
  if (spec.rows < 1 || spec.cols < 1) throw InvalidArgument("LfmSpec: shape must be >= 1x1");
  if (spec.rank < 1 || spec.rank > std::min(spec.rows, spec.cols))
    throw InvalidArgument("LfmSpec: rank must satisfy 1 <= k <= min(m, n)");
  if (!(spec.noise_scale >= 0.0) || !std::isfinite(spec.noise_scale))
    throw InvalidArgument("LfmSpec: noise scale must be finite and >= 0");
  validate(spec.row_dist);
  validate(spec.col_dist);
}

/// Y = U V^T + noise_scale * G with U ~ row_dist (m x k), V ~ col_dist (n x k).
inline DataMatrix sample_lfm(const LfmSpec& spec, const SeedSpec& seed) {
  validate(spec);
  const Matrix u = sample_latent(spec.row_dist, spec.rows, spec.rank, seed.child("row-factors"));
  const Matrix v = sample_latent(spec.col_dist, spec.cols, spec.rank, seed.child("col-factors"));
  Matrix y = u * v.transpose();
  if (spec.noise_scale > 0.0) {
    Rng rng = seed.child("noise").rng();
    std::normal_distribution<double> g(0.0, 1.0);
    for (Index j = 0; j < y.cols(); ++j)
      for (Index i = 0; i < y.rows(); ++i) y(i, j) += spec.noise_scale * g(rng);
  }
  return DataMatrix(std::move(y));
}

/// One distribution from the supported family with randomized parameters.
inline LatentDistribution random_latent(Rng& rng) {
  std::uniform_int_distribution<int> pick(0, 4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  switch (pick(rng)) {
    case 0:
      return latent::Gaussian{0.5 + u(rng)};
    case 1:
      return latent::Laplace{0.5 + u(rng)};
    case 2:
      return latent::StudentT{3.0 + 7.0 * u(rng)};
    case 3:
      return latent::SpikeAndSlab{0.2 + 0.6 * u(rng), 0.5 + u(rng)};
    default:
      return latent::Dirichlet{{0.5 + 2.0 * u(rng)}};
  }
}

/// LfmSpec with row and column distributions drawn independently from the
/// supported family, or one shared draw when shared_distribution is set.
inline LfmSpec random_lfm_spec(Index rows, Index cols, Index rank, const SeedSpec& seed,
                               bool shared_distribution = false) {
  Rng rng = seed.child("lfm-spec").rng();
  LfmSpec spec;
  spec.rows = rows;
  spec.cols = cols;
  spec.rank = rank;
  spec.row_dist = random_latent(rng);
  spec.col_dist = shared_distribution ? spec.row_dist : random_latent(rng);
  return spec;
}

/// Parses "gaussian", "laplace", "student-t", "spike-slab", "dirichlet" with
/// default parameters.
inline LatentDistribution parse_latent(std::string_view name) {
  if (name == "gaussian") return latent::Gaussian{};
  if (name == "laplace") return latent::Laplace{};
  if (name == "student-t") return latent::StudentT{};
  if (name == "spike-slab") return latent::SpikeAndSlab{};
  if (name == "dirichlet") return latent::Dirichlet{};
  throw InvalidArgument("unknown latent distribution '" + std::string(name) + "'");
}

}  // namespace missbench
