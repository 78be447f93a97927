#pragma once

// Masked-matrix data model shared by every module: ground-truth matrices,
// observation masks, sentinel-bearing observed matrices and the seeded
// randomness contract.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace missbench {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
using MaskBits = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for malformed inputs and parameter values.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// The missing-value sentinel. Quiet NaN in memory, empty cell in files.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

inline double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

// ---------------------------------------------------------------------------
// Seeds

inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

using Rng = std::mt19937_64;

/// A (seed, label) pair naming one reproducible random stream. Equal pairs
/// always produce bit-identical streams; sub-streams are derived with child().
struct SeedSpec {
  std::uint64_t seed = 0;
  std::string label;

  SeedSpec() = default;
  SeedSpec(std::uint64_t s, std::string l = {}) : seed(s), label(std::move(l)) {}

  [[nodiscard]] SeedSpec child(std::string_view sub) const {
    std::string l = label;
    l += '/';
    l += sub;
    return {seed, std::move(l)};
  }

  [[nodiscard]] std::uint64_t key() const { return mix64(seed ^ mix64(fnv1a(label))); }

  [[nodiscard]] Rng rng() const {
    const std::uint64_t k = key();
    std::seed_seq seq{static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32),
                      static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    return Rng(seq);
  }

  friend bool operator==(const SeedSpec&, const SeedSpec&) = default;
};

// ---------------------------------------------------------------------------
// Matrices

/// Dense, finite, non-empty real matrix.
class DataMatrix {
 public:
  DataMatrix() = default;
  explicit DataMatrix(Matrix values) : values_(std::move(values)) {
    if (values_.rows() < 1 || values_.cols() < 1) {
      throw InvalidArgument("DataMatrix: shape must be at least 1x1");
    }
    if (!values_.allFinite()) {
      throw InvalidArgument("DataMatrix: all entries must be finite");
    }
  }

  [[nodiscard]] Index rows() const { return values_.rows(); }
  [[nodiscard]] Index cols() const { return values_.cols(); }
  [[nodiscard]] const Matrix& values() const { return values_; }
  [[nodiscard]] double operator()(Index i, Index j) const { return values_(i, j); }

 private:
  Matrix values_;
};

/// Binary observation indicator; 1 means observed. A fully-missing mask is
/// representable so generators can detect and resample it.
class Mask {
 public:
  Mask() = default;
  explicit Mask(MaskBits bits) : bits_(std::move(bits)) {
    for (Index k = 0; k < bits_.size(); ++k) {
      if (bits_.data()[k] > 1) {
        throw InvalidArgument("Mask: entries must be 0 or 1");
      }
    }
  }

  static Mask all_observed(Index rows, Index cols) {
    return Mask(MaskBits::Ones(rows, cols));
  }

  [[nodiscard]] Index rows() const { return bits_.rows(); }
  [[nodiscard]] Index cols() const { return bits_.cols(); }
  [[nodiscard]] const MaskBits& bits() const { return bits_; }
  [[nodiscard]] bool observed(Index i, Index j) const { return bits_(i, j) != 0; }

  [[nodiscard]] Index observed_count() const {
    Index c = 0;
    for (Index k = 0; k < bits_.size(); ++k) c += bits_.data()[k];
    return c;
  }
  [[nodiscard]] Index missing_count() const { return bits_.size() - observed_count(); }

  /// Missing cells (the set Omega) in row-major order.
  [[nodiscard]] std::vector<std::pair<Index, Index>> missing_cells() const {
    std::vector<std::pair<Index, Index>> out;
    for (Index i = 0; i < rows(); ++i)
      for (Index j = 0; j < cols(); ++j)
        if (!observed(i, j)) out.emplace_back(i, j);
    return out;
  }

  friend bool operator==(const Mask& a, const Mask& b) {
    return a.bits_.rows() == b.bits_.rows() && a.bits_.cols() == b.bits_.cols() &&
           a.bits_ == b.bits_;
  }

 private:
  MaskBits bits_;
};

/// Entrywise observation probabilities, each in [0, 1].
class PropensityMatrix {
 public:
  explicit PropensityMatrix(Matrix p) : p_(std::move(p)) {
    for (Index k = 0; k < p_.size(); ++k) {
      const double v = p_.data()[k];
      if (!(v >= 0.0 && v <= 1.0)) {
        throw InvalidArgument("PropensityMatrix: entries must lie in [0, 1]");
      }
    }
  }
  static PropensityMatrix constant(Index rows, Index cols, double p) {
    return PropensityMatrix(Matrix::Constant(rows, cols, p));
  }
  [[nodiscard]] const Matrix& values() const { return p_; }

 private:
  Matrix p_;
};

/// Ground truth, its mask, and the observed matrix carrying kMissing on Omega.
struct MaskedDataset {
  DataMatrix truth;
  Mask mask;
  Matrix observed;

  [[nodiscard]] Index rows() const { return truth.rows(); }
  [[nodiscard]] Index cols() const { return truth.cols(); }
};

inline MaskedDataset apply_mask(const DataMatrix& truth, const Mask& mask) {
  if (truth.rows() != mask.rows() || truth.cols() != mask.cols()) {
    throw InvalidArgument("apply_mask: mask shape does not match data shape");
  }
  if (mask.observed_count() == 0) {
    throw InvalidArgument("apply_mask: mask has no observed entries");
  }
  Matrix x = truth.values();
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j)
      if (!mask.observed(i, j)) x(i, j) = kMissing;
  return MaskedDataset{truth, mask, std::move(x)};
}

inline double missing_fraction(const Mask& mask) {
  if (mask.bits().size() == 0) return 0.0;
  return static_cast<double>(mask.missing_count()) / static_cast<double>(mask.bits().size());
}

/// Draws M_ij = 1 with probability p_ij, independently, in column-major order.
inline Mask sample_bernoulli_mask(const PropensityMatrix& p, const SeedSpec& seed) {
  Rng rng = seed.rng();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Matrix& pv = p.values();
  MaskBits bits(pv.rows(), pv.cols());
  for (Index j = 0; j < pv.cols(); ++j)
    for (Index i = 0; i < pv.rows(); ++i)
      bits(i, j) = unif(rng) < pv(i, j) ? 1 : 0;
  return Mask(std::move(bits));
}

/// Observed entries of column j, in row order.
inline std::vector<double> observed_column(const Matrix& x, Index j) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(x.rows()));
  for (Index i = 0; i < x.rows(); ++i)
    if (!is_missing(x(i, j))) out.push_back(x(i, j));
  return out;
}

}  // namespace missbench
