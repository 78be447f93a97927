#pragma once

// The thirteen missingness mechanisms. Every generator maps
// (ground truth, parameters, seed) to a Mask, where 1 means observed.
// Generators that expose a "design" (randomly drawn structure) split the
// draw from the propensity computation so the structure can be inspected.

#include <algorithm>
#include <array>
#include <concepts>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "missbench/core.hpp"

namespace missbench {

class CalibrationError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Intercept calibration

inline constexpr double kCalibrationLow = -30.0;
inline constexpr double kCalibrationHigh = 30.0;
inline constexpr double kCalibrationTolerance = 1e-6;

/// Finds b with |mean_propensity(b) - target| <= 1e-6 by bisection on
/// [-30, 30]. mean_propensity must be non-decreasing in b.
template <std::invocable<double> F>
double calibrate_intercept(F&& mean_propensity, double target) {
  if (!(target > 0.0 && target < 1.0)) {
    throw InvalidArgument("calibrate_intercept: target must lie in (0, 1)");
  }
  double lo = kCalibrationLow;
  double hi = kCalibrationHigh;
  const double f_lo = mean_propensity(lo);
  const double f_hi = mean_propensity(hi);
  if (target < f_lo - kCalibrationTolerance || target > f_hi + kCalibrationTolerance) {
    throw CalibrationError("calibrate_intercept: target " + std::to_string(target) +
                           " unreachable within [-30, 30]");
  }
  double best = std::abs(f_lo - target) < std::abs(f_hi - target) ? lo : hi;
  double best_err = std::min(std::abs(f_lo - target), std::abs(f_hi - target));
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double f = mean_propensity(mid);
    const double err = std::abs(f - target);
    if (err < best_err) {
      best_err = err;
      best = mid;
    }
    if (err <= 1e-13) break;
    if (f < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  if (best_err > kCalibrationTolerance) {
    throw CalibrationError("calibrate_intercept: bisection did not reach tolerance");
  }
  return best;
}

/// Calibrates b so that mean_k sigmoid(logits[k] + b) equals target. When all
/// logits coincide the closed form logit(target) - logit is returned.
inline double calibrate_intercept(std::span<const double> logits, double target) {
  if (logits.empty()) throw InvalidArgument("calibrate_intercept: no logits");
  if (!(target > 0.0 && target < 1.0)) {
    throw InvalidArgument("calibrate_intercept: target must lie in (0, 1)");
  }
  const bool constant = std::all_of(logits.begin(), logits.end(),
                                    [&](double l) { return l == logits.front(); });
  if (constant) {
    const double b = logit(target) - logits.front();
    if (b < kCalibrationLow || b > kCalibrationHigh) {
      throw CalibrationError("calibrate_intercept: target unreachable within [-30, 30]");
    }
    return b;
  }
  return calibrate_intercept(
      [&](double b) {
        double s = 0.0;
        for (double l : logits) s += sigmoid(l + b);
        return s / static_cast<double>(logits.size());
      },
      target);
}

// ---------------------------------------------------------------------------
// Shared helpers

/// Linear-interpolation quantile of an ascending-sorted sample.
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw InvalidArgument("quantile: empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

inline double column_quantile(const Matrix& x, Index j, double q) {
  std::vector<double> v = observed_column(x, j);
  std::sort(v.begin(), v.end());
  return quantile_sorted(v, q);
}

/// Mask drawn from per-cell missing probabilities.
inline Mask sample_from_missing_probability(const Matrix& p_missing, const SeedSpec& seed) {
  Matrix observe = (1.0 - p_missing.array()).matrix();
  observe = observe.cwiseMax(0.0).cwiseMin(1.0);
  return sample_bernoulli_mask(PropensityMatrix(std::move(observe)), seed);
}

/// Z-scores a vector (population std); a constant vector maps to zeros.
inline Vector zscore(const Vector& v) {
  if (v.size() == 0) return v;
  const double mean = v.mean();
  const double var = (v.array() - mean).square().mean();
  if (!(var > 1e-24)) return Vector::Zero(v.size());
  return ((v.array() - mean) / std::sqrt(var)).matrix();
}

/// k distinct indices from [0, n) in ascending order.
inline std::vector<Index> choose_subset(Index n, Index k, Rng& rng) {
  std::vector<Index> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), Index{0});
  for (Index t = 0; t < k; ++t) {
    std::uniform_int_distribution<Index> pick(t, n - 1);
    std::swap(all[static_cast<std::size_t>(t)], all[static_cast<std::size_t>(pick(rng))]);
  }
  all.resize(static_cast<std::size_t>(k));
  std::sort(all.begin(), all.end());
  return all;
}

inline void require_probability(double p, std::string_view what, bool allow_zero) {
  const bool ok = allow_zero ? (p >= 0.0 && p < 1.0) : (p > 0.0 && p < 1.0);
  if (!ok) {
    throw InvalidArgument(std::string(what) + ": missing probability must lie in " +
                          (allow_zero ? "[0, 1)" : "(0, 1)"));
  }
}

// ---------------------------------------------------------------------------
// Parameters

enum class Pattern {
  MCAR,
  ColMAR,
  NnMNAR,
  SelfMasking,
  Censoring,
  Panel,
  PolarizationHard,
  PolarizationSoft,
  LatentFactor,
  Cluster,
  TwoPhase,
  Block,
  Seq,
};

inline constexpr std::size_t kPatternCount = 13;

/// Report order: the layout of the published results tables.
inline constexpr std::array<Pattern, kPatternCount> kAllPatterns{
    Pattern::MCAR,         Pattern::NnMNAR,           Pattern::SelfMasking,
    Pattern::ColMAR,       Pattern::Block,            Pattern::Seq,
    Pattern::Panel,        Pattern::PolarizationHard, Pattern::PolarizationSoft,
    Pattern::LatentFactor, Pattern::Cluster,          Pattern::TwoPhase,
    Pattern::Censoring};

inline std::string_view pattern_key(Pattern p) {
  static constexpr std::array<std::string_view, kPatternCount> keys{
      "mcar",         "col-mar",      "nn-mnar",       "self-masking", "censoring",
      "panel",        "polarization", "soft-polarization", "latent-factor", "cluster",
      "two-phase",    "block",        "seq"};
  return keys[static_cast<std::size_t>(p)];
}

inline std::string_view pattern_display_name(Pattern p) {
  static constexpr std::array<std::string_view, kPatternCount> names{
      "MCAR",
      "Col-MAR",
      "NN-MNAR",
      "Self-Masking-MNAR",
      "Censoring-MNAR",
      "Panel-MNAR",
      "Polarization-MNAR",
      "Soft-Polarization-MNAR",
      "Latent-Factor-MNAR",
      "Cluster-MNAR",
      "Two-Phase-MNAR",
      "Block-MNAR",
      "Seq-MNAR"};
  return names[static_cast<std::size_t>(p)];
}

inline Pattern parse_pattern(std::string_view name) {
  for (std::size_t k = 0; k < kPatternCount; ++k) {
    const auto p = static_cast<Pattern>(k);
    if (name == pattern_key(p) || name == pattern_display_name(p)) return p;
  }
  if (name == "polarization-hard") return Pattern::PolarizationHard;
  if (name == "polarization-soft") return Pattern::PolarizationSoft;
  throw InvalidArgument("unknown missingness pattern '" + std::string(name) + "'");
}

struct IntRange {
  Index low = 1;
  Index high = 1;
};

enum class BanditAlgorithm { EpsilonGreedy, UCB, Thompson, GradientBandit };

inline std::string_view bandit_name(BanditAlgorithm a) {
  static constexpr std::array<std::string_view, 4> names{"epsilon-greedy", "ucb", "thompson",
                                                         "gradient"};
  return names[static_cast<std::size_t>(a)];
}

inline BanditAlgorithm parse_bandit(std::string_view name) {
  if (name == "epsilon-greedy" || name == "epsilon_greedy") return BanditAlgorithm::EpsilonGreedy;
  if (name == "ucb") return BanditAlgorithm::UCB;
  if (name == "thompson") return BanditAlgorithm::Thompson;
  if (name == "gradient") return BanditAlgorithm::GradientBandit;
  throw InvalidArgument("unknown bandit algorithm '" + std::string(name) + "'");
}

struct BanditConfig {
  BanditAlgorithm algorithm = BanditAlgorithm::EpsilonGreedy;
  double epsilon = 0.4;
  double epsilon_decay = 0.99;
  bool pooling = false;
  double reward_noise_scale = 1.0;
  double ucb_scale = 1.0;
  double gradient_step = 0.1;
};

enum class BlockConvolution { Mean };

namespace params {

struct Mcar {
  double p_missing = 0.4;
};
struct ColMar {
  double p_missing = 0.4;
  double predictor_fraction = 0.3;
};
struct NnMnar {
  double p_missing = 0.4;
  IntRange neighborhood{2, 8};
  IntRange layers{1, 3};
  IntRange width{4, 16};
};
struct SelfMasking {
  double p_missing = 0.4;
  /// Empty means every column.
  std::vector<Index> target_cols;
};
struct Censoring {
  double q_censor = 0.25;
};
struct Panel {};
struct PolarizationHard {
  double q_thresh = 0.25;
};
struct PolarizationSoft {
  double alpha = 2.5;
  double eps = 0.05;
};
struct LatentFactor {
  Index k_low = 1;
  Index k_high = 5;
};
struct Cluster {
  Index row_clusters = 5;
  Index col_clusters = 4;
  double tau_r = 1.0;
  double tau_c = 1.0;
  double eps_std = 0.5;
};
struct TwoPhase {
  double f_cheap = 0.4;
  double alpha = 0.0;
  double beta = 2.0;
};
struct Block {
  double p_missing = 0.4;
  Index row_blocks = 10;
  Index col_blocks = 10;
  BlockConvolution conv = BlockConvolution::Mean;
};
struct Seq {
  BanditConfig bandit;
  /// Probability that an exploration step picks the missing arm.
  double p_missing = 0.4;
};

}  // namespace params

/// Alternatives are in Pattern enum order.
using PatternParams =
    std::variant<params::Mcar, params::ColMar, params::NnMnar, params::SelfMasking,
                 params::Censoring, params::Panel, params::PolarizationHard,
                 params::PolarizationSoft, params::LatentFactor, params::Cluster,
                 params::TwoPhase, params::Block, params::Seq>;

inline constexpr std::uint64_t kDefaultPatternSeed = 42;

struct PatternSpec {
  PatternParams params;
  SeedSpec seed{kDefaultPatternSeed};

  [[nodiscard]] Pattern tag() const { return static_cast<Pattern>(params.index()); }
};

inline PatternParams default_params(Pattern p) {
  switch (p) {
    case Pattern::MCAR: return params::Mcar{};
    case Pattern::ColMAR: return params::ColMar{};
    case Pattern::NnMNAR: return params::NnMnar{};
    case Pattern::SelfMasking: return params::SelfMasking{};
    case Pattern::Censoring: return params::Censoring{};
    case Pattern::Panel: return params::Panel{};
    case Pattern::PolarizationHard: return params::PolarizationHard{};
    case Pattern::PolarizationSoft: return params::PolarizationSoft{};
    case Pattern::LatentFactor: return params::LatentFactor{};
    case Pattern::Cluster: return params::Cluster{};
    case Pattern::TwoPhase: return params::TwoPhase{};
    case Pattern::Block: return params::Block{};
    case Pattern::Seq: return params::Seq{};
  }
  throw InvalidArgument("unknown pattern tag");
}

inline PatternSpec default_spec(Pattern p, SeedSpec seed = SeedSpec{kDefaultPatternSeed}) {
  return PatternSpec{default_params(p), std::move(seed)};
}

// ---------------------------------------------------------------------------
// MCAR

inline Mask gen_mcar(const DataMatrix& x, double p_missing, const SeedSpec& seed) {
  require_probability(p_missing, "MCAR", true);
  return sample_bernoulli_mask(PropensityMatrix::constant(x.rows(), x.cols(), 1.0 - p_missing),
                               seed);
}

// ---------------------------------------------------------------------------
// Col-MAR: fully observed predictor columns drive a logistic missingness
// model on every other column.

struct ColMarDesign {
  std::vector<Index> predictors;
  std::vector<Index> targets;
  /// predictors.size() x targets.size().
  Matrix weights;
};

inline ColMarDesign draw_col_mar_design(Index n, double predictor_fraction, Rng& rng) {
  if (n < 2) throw InvalidArgument("Col-MAR: needs at least 2 columns");
  if (!(predictor_fraction > 0.0 && predictor_fraction < 1.0))
    throw InvalidArgument("Col-MAR: predictor fraction must lie in (0, 1)");
  const auto n_pred = static_cast<Index>(std::ceil(predictor_fraction * static_cast<double>(n)));
  if (n - n_pred < 1) throw InvalidArgument("Col-MAR: no non-predictor column left");
  ColMarDesign d;
  d.predictors = choose_subset(n, n_pred, rng);
  for (Index j = 0; j < n; ++j)
    if (!std::binary_search(d.predictors.begin(), d.predictors.end(), j)) d.targets.push_back(j);
  std::normal_distribution<double> g(0.0, 1.0);
  d.weights.resize(n_pred, static_cast<Index>(d.targets.size()));
  for (Index c = 0; c < d.weights.cols(); ++c)
    for (Index r = 0; r < d.weights.rows(); ++r) d.weights(r, c) = g(rng);
  return d;
}

/// Standardized predictor score w_j^T x_pred for every row and target column.
inline Matrix col_mar_scores(const Matrix& x, const ColMarDesign& d) {
  Matrix pred(x.rows(), static_cast<Index>(d.predictors.size()));
  for (std::size_t k = 0; k < d.predictors.size(); ++k)
    pred.col(static_cast<Index>(k)) = x.col(d.predictors[k]);
  Matrix scores = pred * d.weights;
  for (Index c = 0; c < scores.cols(); ++c) scores.col(c) = zscore(scores.col(c));
  return scores;
}

/// Per-cell missing probability; zero on predictor columns.
inline Matrix col_mar_missing_propensity(const Matrix& x, const ColMarDesign& d,
                                         double p_missing) {
  const Matrix scores = col_mar_scores(x, d);
  Matrix p = Matrix::Zero(x.rows(), x.cols());
  for (std::size_t k = 0; k < d.targets.size(); ++k) {
    const Vector s = scores.col(static_cast<Index>(k));
    const double b = calibrate_intercept(std::span<const double>(s.data(), s.size()), p_missing);
    for (Index i = 0; i < x.rows(); ++i) p(i, d.targets[k]) = sigmoid(s(i) + b);
  }
  return p;
}

inline Mask gen_col_mar(const DataMatrix& x, double p_missing, double predictor_fraction,
                        const SeedSpec& seed) {
  require_probability(p_missing, "Col-MAR", false);
  Rng rng = seed.child("design").rng();
  const ColMarDesign d = draw_col_mar_design(x.cols(), predictor_fraction, rng);
  return sample_from_missing_probability(col_mar_missing_propensity(x.values(), d, p_missing),
                                         seed.child("mask"));
}

// ---------------------------------------------------------------------------
// NN-MNAR: a random feed-forward network maps each cell's neighborhood to
// its observation propensity. One network per dataset; the neighborhood of
// (i, j) is row i restricted to row_context columns plus column j restricted
// to col_context rows.

struct NnMnarDesign {
  std::vector<Index> row_context;
  std::vector<Index> col_context;
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  [[nodiscard]] Index input_size() const {
    return static_cast<Index>(row_context.size() + col_context.size());
  }

  /// Whether cell (s, t) lies in the neighborhood of (i, j).
  [[nodiscard]] bool in_neighborhood(Index i, Index j, Index s, Index t) const {
    if (s == i && std::binary_search(row_context.begin(), row_context.end(), t)) return true;
    if (t == j && std::binary_search(col_context.begin(), col_context.end(), s)) return true;
    return false;
  }
};

inline Index uniform_in(const IntRange& r, Rng& rng) {
  std::uniform_int_distribution<Index> d(r.low, r.high);
  return d(rng);
}

inline void validate(const params::NnMnar& p) {
  require_probability(p.p_missing, "NN-MNAR", false);
  for (const IntRange* r : {&p.neighborhood, &p.layers, &p.width}) {
    if (r->low < 1 || r->high < r->low) throw InvalidArgument("NN-MNAR: invalid range");
  }
}

inline NnMnarDesign draw_nn_mnar_design(Index m, Index n, const params::NnMnar& p, Rng& rng) {
  validate(p);
  NnMnarDesign d;
  const Index size = std::min(uniform_in(p.neighborhood, rng), m + n);
  std::uniform_int_distribution<Index> split(std::max<Index>(0, size - m), std::min(size, n));
  const Index from_row = split(rng);
  d.row_context = choose_subset(n, from_row, rng);
  d.col_context = choose_subset(m, size - from_row, rng);

  const Index layers = uniform_in(p.layers, rng);
  const Index width = uniform_in(p.width, rng);
  std::normal_distribution<double> g(0.0, 1.0);
  Index fan_in = d.input_size();
  for (Index l = 0; l <= layers; ++l) {
    const Index fan_out = l == layers ? 1 : width;
    Matrix w(fan_out, fan_in);
    Vector b(fan_out);
    for (Index c = 0; c < fan_in; ++c)
      for (Index r = 0; r < fan_out; ++r) w(r, c) = g(rng);
    for (Index r = 0; r < fan_out; ++r) b(r) = g(rng);
    d.weights.push_back(std::move(w));
    d.biases.push_back(std::move(b));
    fan_in = fan_out;
  }
  return d;
}

/// Network output (pre-sigmoid, before the calibrated bias) for every cell.
inline Matrix nn_mnar_logits(const Matrix& x, const NnMnarDesign& d) {
  Matrix out(x.rows(), x.cols());
  Vector input(d.input_size());
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) {
      Index k = 0;
      for (Index t : d.row_context) input(k++) = x(i, t);
      for (Index s : d.col_context) input(k++) = x(s, j);
      Vector h = input;
      for (std::size_t l = 0; l < d.weights.size(); ++l) {
        Vector z = d.weights[l] * h + d.biases[l];
        if (l + 1 < d.weights.size()) z = z.array().tanh().matrix();
        h = std::move(z);
      }
      out(i, j) = h(0);
    }
  }
  return out;
}

/// Observation propensity with the output bias shifted so the mean
/// propensity equals 1 - p_missing.
inline Matrix nn_mnar_observe_propensity(const Matrix& x, const NnMnarDesign& d,
                                         double p_missing) {
  Matrix logits = nn_mnar_logits(x, d);
  const double b = calibrate_intercept(std::span<const double>(logits.data(), logits.size()),
                                       1.0 - p_missing);
  return logits.unaryExpr([b](double l) { return sigmoid(l + b); });
}

inline Mask gen_nn_mnar(const DataMatrix& x, const params::NnMnar& p, const SeedSpec& seed) {
  Rng rng = seed.child("design").rng();
  const NnMnarDesign d = draw_nn_mnar_design(x.rows(), x.cols(), p, rng);
  return sample_bernoulli_mask(
      PropensityMatrix(nn_mnar_observe_propensity(x.values(), d, p.p_missing)),
      seed.child("mask"));
}

// ---------------------------------------------------------------------------
// Self-masking: P(missing | x) = sigmoid(alpha * x + beta0) per target column.

inline constexpr std::array<double, 4> kSelfMaskingCoefficients{-2.0, -1.0, 1.0, 2.0};

inline Matrix self_masking_missing_propensity(const Matrix& x, std::span<const Index> cols,
                                              std::span<const double> alphas,
                                              double p_missing) {
  if (cols.size() != alphas.size())
    throw InvalidArgument("self-masking: one coefficient per target column required");
  Matrix p = Matrix::Zero(x.rows(), x.cols());
  std::vector<double> logits(static_cast<std::size_t>(x.rows()));
  for (std::size_t k = 0; k < cols.size(); ++k) {
    const Index j = cols[k];
    for (Index i = 0; i < x.rows(); ++i) logits[static_cast<std::size_t>(i)] = alphas[k] * x(i, j);
    const double b0 = calibrate_intercept(std::span<const double>(logits), p_missing);
    for (Index i = 0; i < x.rows(); ++i)
      p(i, j) = sigmoid(logits[static_cast<std::size_t>(i)] + b0);
  }
  return p;
}

inline Mask gen_self_masking(const DataMatrix& x, double p_missing,
                             std::span<const Index> target_cols, const SeedSpec& seed) {
  require_probability(p_missing, "self-masking", false);
  std::vector<Index> cols(target_cols.begin(), target_cols.end());
  if (cols.empty()) {
    cols.resize(static_cast<std::size_t>(x.cols()));
    std::iota(cols.begin(), cols.end(), Index{0});
  }
  for (Index j : cols)
    if (j < 0 || j >= x.cols()) throw InvalidArgument("self-masking: target column out of range");
  Rng rng = seed.child("coefficients").rng();
  std::uniform_int_distribution<std::size_t> pick(0, kSelfMaskingCoefficients.size() - 1);
  std::vector<double> alphas;
  for (std::size_t k = 0; k < cols.size(); ++k) alphas.push_back(kSelfMaskingCoefficients[pick(rng)]);
  return sample_from_missing_probability(
      self_masking_missing_propensity(x.values(), cols, alphas, p_missing), seed.child("mask"));
}

// ---------------------------------------------------------------------------
// Censoring: per column, mask the lower (left) or upper (right) tail beyond a
// quantile detection limit.

enum class CensorDirection { Left, Right };

inline Mask censoring_mask(const Matrix& x, double q_censor,
                           std::span<const CensorDirection> directions) {
  if (!(q_censor >= 0.0 && q_censor < 0.5))
    throw InvalidArgument("censoring: quantile must lie in [0, 0.5)");
  if (static_cast<Index>(directions.size()) != x.cols())
    throw InvalidArgument("censoring: one direction per column required");
  MaskBits bits = MaskBits::Ones(x.rows(), x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    const bool left = directions[static_cast<std::size_t>(j)] == CensorDirection::Left;
    const double cut = column_quantile(x, j, left ? q_censor : 1.0 - q_censor);
    for (Index i = 0; i < x.rows(); ++i) {
      const double v = x(i, j);
      if (left ? v < cut : v > cut) bits(i, j) = 0;
    }
  }
  return Mask(std::move(bits));
}

inline std::vector<CensorDirection> draw_censor_directions(Index n, const SeedSpec& seed) {
  Rng rng = seed.child("directions").rng();
  std::bernoulli_distribution right(0.5);
  std::vector<CensorDirection> dirs;
  for (Index j = 0; j < n; ++j)
    dirs.push_back(right(rng) ? CensorDirection::Right : CensorDirection::Left);
  return dirs;
}

inline Mask gen_censoring(const DataMatrix& x, double q_censor, const SeedSpec& seed) {
  return censoring_mask(x.values(), q_censor, draw_censor_directions(x.cols(), seed));
}

// ---------------------------------------------------------------------------
// Panel dropout: row i is missing from a uniform time t0 in {1..n-1} on.

inline Mask gen_panel(const DataMatrix& x, const SeedSpec& seed) {
  const Index n = x.cols();
  if (n < 2) throw InvalidArgument("panel: needs at least 2 columns");
  Rng rng = seed.rng();
  std::uniform_int_distribution<Index> dropout(1, n - 1);
  MaskBits bits = MaskBits::Ones(x.rows(), n);
  for (Index i = 0; i < x.rows(); ++i) {
    const Index t0 = dropout(rng);
    for (Index j = t0; j < n; ++j) bits(i, j) = 0;
  }
  return Mask(std::move(bits));
}

// ---------------------------------------------------------------------------
// Polarization

/// Masks entries strictly between the q and 1-q column quantiles.
inline Mask gen_polarization_hard(const DataMatrix& x, double q_thresh, const SeedSpec& /*seed*/) {
  if (!(q_thresh > 0.0 && q_thresh <= 0.5))
    throw InvalidArgument("polarization: threshold quantile must lie in (0, 0.5]");
  const Matrix& v = x.values();
  MaskBits bits = MaskBits::Ones(v.rows(), v.cols());
  for (Index j = 0; j < v.cols(); ++j) {
    std::vector<double> col = observed_column(v, j);
    std::sort(col.begin(), col.end());
    const double lo = quantile_sorted(col, q_thresh);
    const double hi = quantile_sorted(col, 1.0 - q_thresh);
    for (Index i = 0; i < v.rows(); ++i)
      if (lo < v(i, j) && v(i, j) < hi) bits(i, j) = 0;
  }
  return Mask(std::move(bits));
}

/// P(missing) = eps + (1 - 2 eps) |x - median|^alpha / max_k |x_k - median|^alpha,
/// eps everywhere on a constant column.
inline Matrix soft_polarization_missing_propensity(const Matrix& x, double alpha, double eps) {
  if (!(alpha > 0.0)) throw InvalidArgument("soft polarization: alpha must be > 0");
  if (!(eps > 0.0 && eps < 0.5)) throw InvalidArgument("soft polarization: eps must lie in (0, 0.5)");
  Matrix p(x.rows(), x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    const double median = column_quantile(x, j, 0.5);
    Vector dist = (x.col(j).array() - median).abs().pow(alpha).matrix();
    const double max_dist = dist.maxCoeff();
    for (Index i = 0; i < x.rows(); ++i) {
      const double r = max_dist > 0.0 ? dist(i) / max_dist : 0.0;
      // Convex form keeps both endpoints exact: r = 0 gives eps, r = 1 gives 1 - eps.
      p(i, j) = eps * (1.0 - r) + (1.0 - eps) * r;
    }
  }
  return p;
}

inline Mask gen_polarization_soft(const DataMatrix& x, double alpha, double eps,
                                  const SeedSpec& seed) {
  return sample_from_missing_probability(
      soft_polarization_missing_propensity(x.values(), alpha, eps), seed);
}

// ---------------------------------------------------------------------------
// Latent factor: P(observed) = sigmoid(u_i . v_j + b_i + c_j).

inline Matrix latent_factor_observe_propensity(const Matrix& u, const Matrix& v,
                                               const Vector& row_bias, const Vector& col_bias) {
  Matrix z = u * v.transpose();
  z.colwise() += row_bias;
  z.rowwise() += col_bias.transpose();
  return z.unaryExpr([](double l) { return sigmoid(l); });
}

inline Mask gen_latent_factor(const DataMatrix& x, Index k_low, Index k_high,
                              const SeedSpec& seed) {
  if (k_low < 1 || k_high < k_low) throw InvalidArgument("latent factor: need 1 <= k_low <= k_high");
  Rng rng = seed.child("factors").rng();
  std::uniform_int_distribution<Index> rank(k_low, k_high);
  const Index k = rank(rng);
  std::normal_distribution<double> g(0.0, 1.0);
  auto draw = [&](Index r, Index c) {
    Matrix out(r, c);
    for (Index j = 0; j < c; ++j)
      for (Index i = 0; i < r; ++i) out(i, j) = g(rng);
    return out;
  };
  const Matrix u = draw(x.rows(), k);
  const Matrix v = draw(x.cols(), k);
  const Vector b = draw(x.rows(), 1).col(0);
  const Vector c = draw(x.cols(), 1).col(0);
  return sample_bernoulli_mask(PropensityMatrix(latent_factor_observe_propensity(u, v, b, c)),
                               seed.child("mask"));
}

// ---------------------------------------------------------------------------
// Cluster random effects: P(observed) = sigmoid(g_{row cluster} + h_{col cluster} + e_ij).

struct ClusterDesign {
  std::vector<Index> row_cluster;
  std::vector<Index> col_cluster;
  Vector row_effect;
  Vector col_effect;
  Matrix noise;
};

inline ClusterDesign draw_cluster_design(Index m, Index n, const params::Cluster& p, Rng& rng) {
  if (p.row_clusters < 1 || p.col_clusters < 1)
    throw InvalidArgument("cluster: cluster counts must be >= 1");
  if (!(p.tau_r >= 0.0 && p.tau_c >= 0.0 && p.eps_std >= 0.0))
    throw InvalidArgument("cluster: scales must be >= 0");
  ClusterDesign d;
  std::uniform_int_distribution<Index> rc(0, p.row_clusters - 1);
  std::uniform_int_distribution<Index> cc(0, p.col_clusters - 1);
  for (Index i = 0; i < m; ++i) d.row_cluster.push_back(rc(rng));
  for (Index j = 0; j < n; ++j) d.col_cluster.push_back(cc(rng));
  std::normal_distribution<double> g(0.0, 1.0);
  d.row_effect.resize(p.row_clusters);
  d.col_effect.resize(p.col_clusters);
  for (Index k = 0; k < p.row_clusters; ++k) d.row_effect(k) = p.tau_r * g(rng);
  for (Index k = 0; k < p.col_clusters; ++k) d.col_effect(k) = p.tau_c * g(rng);
  d.noise.resize(m, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < m; ++i) d.noise(i, j) = p.eps_std * g(rng);
  return d;
}

inline Matrix cluster_observe_propensity(const ClusterDesign& d) {
  const auto m = static_cast<Index>(d.row_cluster.size());
  const auto n = static_cast<Index>(d.col_cluster.size());
  Matrix p(m, n);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j)
      p(i, j) = sigmoid(d.row_effect(d.row_cluster[static_cast<std::size_t>(i)]) +
                        d.col_effect(d.col_cluster[static_cast<std::size_t>(j)]) + d.noise(i, j));
  return p;
}

inline Mask gen_cluster(const DataMatrix& x, const params::Cluster& p, const SeedSpec& seed) {
  Rng rng = seed.child("design").rng();
  const ClusterDesign d = draw_cluster_design(x.rows(), x.cols(), p, rng);
  return sample_bernoulli_mask(PropensityMatrix(cluster_observe_propensity(d)), seed.child("mask"));
}

// ---------------------------------------------------------------------------
// Two-phase: cheap columns always observed; a row's expensive block is kept
// with probability sigmoid(alpha + beta * s_i), all or nothing.

struct TwoPhaseDesign {
  std::vector<Index> cheap;
  std::vector<Index> expensive;
  Vector weights;
};

inline TwoPhaseDesign draw_two_phase_design(Index n, double f_cheap, Rng& rng) {
  if (!(f_cheap > 0.0 && f_cheap < 1.0))
    throw InvalidArgument("two-phase: cheap fraction must lie in (0, 1)");
  const auto n_cheap = static_cast<Index>(std::lround(f_cheap * static_cast<double>(n)));
  if (n_cheap < 1 || n_cheap > n - 1)
    throw InvalidArgument("two-phase: column partition needs >= 1 cheap and >= 1 expensive column");
  TwoPhaseDesign d;
  d.cheap = choose_subset(n, n_cheap, rng);
  for (Index j = 0; j < n; ++j)
    if (!std::binary_search(d.cheap.begin(), d.cheap.end(), j)) d.expensive.push_back(j);
  std::normal_distribution<double> g(0.0, 1.0);
  d.weights.resize(n_cheap);
  for (Index k = 0; k < n_cheap; ++k) d.weights(k) = g(rng);
  return d;
}

/// Probability that row i's expensive block is observed.
inline Vector two_phase_followup_propensity(const Matrix& x, const TwoPhaseDesign& d, double alpha,
                                            double beta) {
  Vector score = Vector::Zero(x.rows());
  for (std::size_t k = 0; k < d.cheap.size(); ++k)
    score += d.weights(static_cast<Index>(k)) * x.col(d.cheap[k]);
  score = zscore(score);
  return score.unaryExpr([&](double s) { return sigmoid(alpha + beta * s); });
}

inline Mask gen_two_phase(const DataMatrix& x, double f_cheap, double alpha, double beta,
                          const SeedSpec& seed) {
  Rng rng = seed.child("design").rng();
  const TwoPhaseDesign d = draw_two_phase_design(x.cols(), f_cheap, rng);
  const Vector keep = two_phase_followup_propensity(x.values(), d, alpha, beta);
  Rng draw = seed.child("mask").rng();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MaskBits bits = MaskBits::Ones(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    if (u(draw) >= keep(i)) {
      for (Index j : d.expensive) bits(i, j) = 0;
    }
  }
  return Mask(std::move(bits));
}

// ---------------------------------------------------------------------------
// Block: contiguous row_blocks x col_blocks grid; whole blocks are masked
// with propensity sigmoid(z-scored block mean + b), b calibrated to p_missing.

struct BlockGrid {
  std::vector<Index> row_start;  // row_blocks + 1 boundaries
  std::vector<Index> col_start;  // col_blocks + 1 boundaries

  [[nodiscard]] Index row_block_of(Index i) const {
    return static_cast<Index>(std::upper_bound(row_start.begin(), row_start.end(), i) -
                              row_start.begin()) - 1;
  }
  [[nodiscard]] Index col_block_of(Index j) const {
    return static_cast<Index>(std::upper_bound(col_start.begin(), col_start.end(), j) -
                              col_start.begin()) - 1;
  }
};

inline BlockGrid make_block_grid(Index m, Index n, Index row_blocks, Index col_blocks) {
  if (row_blocks < 1 || col_blocks < 1) throw InvalidArgument("block: block counts must be >= 1");
  if (row_blocks > m || col_blocks > n) throw InvalidArgument("block: grid larger than matrix");
  BlockGrid g;
  for (Index r = 0; r <= row_blocks; ++r) g.row_start.push_back(r * m / row_blocks);
  for (Index c = 0; c <= col_blocks; ++c) g.col_start.push_back(c * n / col_blocks);
  return g;
}

/// Per-block missing probability (row_blocks x col_blocks).
inline Matrix block_missing_propensity(const Matrix& x, const BlockGrid& g, double p_missing) {
  const auto rb = static_cast<Index>(g.row_start.size()) - 1;
  const auto cb = static_cast<Index>(g.col_start.size()) - 1;
  Vector score(rb * cb);
  for (Index r = 0; r < rb; ++r)
    for (Index c = 0; c < cb; ++c)
      score(r * cb + c) = x.block(g.row_start[static_cast<std::size_t>(r)],
                                  g.col_start[static_cast<std::size_t>(c)],
                                  g.row_start[static_cast<std::size_t>(r + 1)] - g.row_start[static_cast<std::size_t>(r)],
                                  g.col_start[static_cast<std::size_t>(c + 1)] - g.col_start[static_cast<std::size_t>(c)])
                              .mean();
  score = zscore(score);
  // Calibrate over cells so the expected overall missing fraction is p_missing.
  std::vector<double> cell_logits;
  cell_logits.reserve(static_cast<std::size_t>(x.size()));
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j)
      cell_logits.push_back(score(g.row_block_of(i) * cb + g.col_block_of(j)));
  const double b = calibrate_intercept(std::span<const double>(cell_logits), p_missing);
  Matrix p(rb, cb);
  for (Index r = 0; r < rb; ++r)
    for (Index c = 0; c < cb; ++c) p(r, c) = sigmoid(score(r * cb + c) + b);
  return p;
}

inline Mask gen_block(const DataMatrix& x, const params::Block& p, const SeedSpec& seed) {
  require_probability(p.p_missing, "block", false);
  const BlockGrid g = make_block_grid(x.rows(), x.cols(), p.row_blocks, p.col_blocks);
  const Matrix miss = block_missing_propensity(x.values(), g, p.p_missing);
  Rng rng = seed.rng();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MaskBits bits = MaskBits::Ones(x.rows(), x.cols());
  for (Index r = 0; r < miss.rows(); ++r) {
    for (Index c = 0; c < miss.cols(); ++c) {
      if (u(rng) < miss(r, c)) {
        for (Index i = g.row_start[static_cast<std::size_t>(r)]; i < g.row_start[static_cast<std::size_t>(r + 1)]; ++i)
          for (Index j = g.col_start[static_cast<std::size_t>(c)]; j < g.col_start[static_cast<std::size_t>(c + 1)]; ++j)
            bits(i, j) = 0;
      }
    }
  }
  return Mask(std::move(bits));
}

// ---------------------------------------------------------------------------
// Seq-MNAR: columns are time steps, rows are agents, the mask value is the
// arm (1 = observe). Arm 0 pays X*_ij, arm 1 pays X*_ij plus Gaussian noise.
//
// Random stream order: the noise matrix (column-major), then one coin per
// agent for which arm it plays first during the two forced-exploration
// columns, then per column j >= 2 and per agent the algorithm's own draws.

inline void validate(const BanditConfig& c) {
  if (!(c.epsilon >= 0.0 && c.epsilon <= 1.0)) throw InvalidArgument("seq: epsilon must lie in [0, 1]");
  if (!(c.epsilon_decay > 0.0 && c.epsilon_decay <= 1.0))
    throw InvalidArgument("seq: epsilon decay must lie in (0, 1]");
  if (!(c.reward_noise_scale >= 0.0)) throw InvalidArgument("seq: reward noise scale must be >= 0");
  if (!(c.ucb_scale >= 0.0)) throw InvalidArgument("seq: UCB scale must be >= 0");
  if (!(c.gradient_step > 0.0)) throw InvalidArgument("seq: gradient step must be > 0");
}

inline Mask gen_seq(const DataMatrix& x, const BanditConfig& cfg, double p_missing,
                    const SeedSpec& seed) {
  validate(cfg);
  require_probability(p_missing, "seq", true);
  const Index m = x.rows();
  const Index n = x.cols();
  if (n < 2) throw InvalidArgument("seq: needs at least 2 columns");

  Rng rng = seed.rng();
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Matrix noise(m, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < m; ++i) noise(i, j) = cfg.reward_noise_scale * gauss(rng);
  auto reward = [&](Index i, Index j, int arm) {
    return arm == 1 ? x(i, j) + noise(i, j) : x(i, j);
  };

  // Per-agent sufficient statistics: [agent][arm].
  std::vector<std::array<double, 2>> sum(static_cast<std::size_t>(m), {0.0, 0.0});
  std::vector<std::array<double, 2>> count(static_cast<std::size_t>(m), {0.0, 0.0});
  std::vector<std::array<double, 2>> pref(static_cast<std::size_t>(m), {0.0, 0.0});
  std::vector<double> baseline(static_cast<std::size_t>(m), 0.0);
  std::vector<double> pulls(static_cast<std::size_t>(m), 0.0);

  MaskBits bits(m, n);
  auto record = [&](Index i, Index j, int arm) {
    const auto a = static_cast<std::size_t>(arm);
    const auto ui = static_cast<std::size_t>(i);
    const double r = reward(i, j, arm);
    if (cfg.algorithm == BanditAlgorithm::GradientBandit && pulls[ui] >= 2.0) {
      const double p1 = sigmoid(pref[ui][1] - pref[ui][0]);
      const std::array<double, 2> pi{1.0 - p1, p1};
      for (std::size_t b = 0; b < 2; ++b) {
        const double indicator = b == a ? 1.0 : 0.0;
        pref[ui][b] += cfg.gradient_step * (r - baseline[ui]) * (indicator - pi[b]);
      }
    }
    sum[ui][a] += r;
    count[ui][a] += 1.0;
    pulls[ui] += 1.0;
    baseline[ui] += (r - baseline[ui]) / pulls[ui];
    bits(i, j) = static_cast<std::uint8_t>(arm);
  };

  std::vector<int> first(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) first[static_cast<std::size_t>(i)] = unif(rng) < 0.5 ? 1 : 0;
  for (Index i = 0; i < m; ++i) record(i, 0, first[static_cast<std::size_t>(i)]);
  for (Index i = 0; i < m; ++i) record(i, 1, 1 - first[static_cast<std::size_t>(i)]);

  auto argmax = [](double v0, double v1) { return v1 >= v0 ? 1 : 0; };

  for (Index j = 2; j < n; ++j) {
    // Pooled per-arm means over every agent's history up to column j - 1.
    std::array<double, 2> pooled{0.0, 0.0};
    if (cfg.pooling) {
      std::array<double, 2> s{0.0, 0.0};
      std::array<double, 2> c{0.0, 0.0};
      for (Index i = 0; i < m; ++i)
        for (std::size_t a = 0; a < 2; ++a) {
          s[a] += sum[static_cast<std::size_t>(i)][a];
          c[a] += count[static_cast<std::size_t>(i)][a];
        }
      for (std::size_t a = 0; a < 2; ++a) pooled[a] = s[a] / c[a];
    }
    auto estimate = [&](Index i, std::size_t a) {
      const auto ui = static_cast<std::size_t>(i);
      const double own = sum[ui][a] / count[ui][a];
      return cfg.pooling ? 0.5 * (own + pooled[a]) : own;
    };

    const double eps_t = cfg.epsilon * std::pow(cfg.epsilon_decay, static_cast<double>(j - 2));
    std::vector<int> arms(static_cast<std::size_t>(m));
    for (Index i = 0; i < m; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      int arm = 1;
      switch (cfg.algorithm) {
        case BanditAlgorithm::EpsilonGreedy: {
          if (unif(rng) < eps_t) {
            arm = unif(rng) < p_missing ? 0 : 1;
          } else {
            arm = argmax(estimate(i, 0), estimate(i, 1));
          }
          break;
        }
        case BanditAlgorithm::UCB: {
          const double t = pulls[ui];
          std::array<double, 2> v{};
          for (std::size_t a = 0; a < 2; ++a)
            v[a] = estimate(i, a) + cfg.ucb_scale * std::sqrt(2.0 * std::log(t) / count[ui][a]);
          arm = argmax(v[0], v[1]);
          break;
        }
        case BanditAlgorithm::Thompson: {
          std::array<double, 2> v{};
          for (std::size_t a = 0; a < 2; ++a)
            v[a] = estimate(i, a) + gauss(rng) / std::sqrt(count[ui][a]);
          arm = argmax(v[0], v[1]);
          break;
        }
        case BanditAlgorithm::GradientBandit: {
          const double p1 = sigmoid(pref[ui][1] - pref[ui][0]);
          arm = unif(rng) < p1 ? 1 : 0;
          break;
        }
      }
      arms[ui] = arm;
    }
    for (Index i = 0; i < m; ++i) record(i, j, arms[static_cast<std::size_t>(i)]);
  }
  return Mask(std::move(bits));
}

// ---------------------------------------------------------------------------
// Dispatcher

inline constexpr int kMaxResampleAttempts = 16;

/// Adjusts shape-dependent parameters to the matrix: the block grid is
/// clamped to at most one block per row and column.
inline PatternSpec resolve_for_shape(PatternSpec spec, Index m, Index n) {
  if (auto* b = std::get_if<params::Block>(&spec.params)) {
    b->row_blocks = std::min(b->row_blocks, m);
    b->col_blocks = std::min(b->col_blocks, n);
  }
  return spec;
}

inline Mask dispatch_pattern(const PatternSpec& spec, const DataMatrix& x, const SeedSpec& seed) {
  return std::visit(
      [&](const auto& p) -> Mask {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, params::Mcar>) {
          return gen_mcar(x, p.p_missing, seed);
        } else if constexpr (std::is_same_v<T, params::ColMar>) {
          return gen_col_mar(x, p.p_missing, p.predictor_fraction, seed);
        } else if constexpr (std::is_same_v<T, params::NnMnar>) {
          return gen_nn_mnar(x, p, seed);
        } else if constexpr (std::is_same_v<T, params::SelfMasking>) {
          return gen_self_masking(x, p.p_missing, p.target_cols, seed);
        } else if constexpr (std::is_same_v<T, params::Censoring>) {
          return gen_censoring(x, p.q_censor, seed);
        } else if constexpr (std::is_same_v<T, params::Panel>) {
          return gen_panel(x, seed);
        } else if constexpr (std::is_same_v<T, params::PolarizationHard>) {
          return gen_polarization_hard(x, p.q_thresh, seed);
        } else if constexpr (std::is_same_v<T, params::PolarizationSoft>) {
          return gen_polarization_soft(x, p.alpha, p.eps, seed);
        } else if constexpr (std::is_same_v<T, params::LatentFactor>) {
          return gen_latent_factor(x, p.k_low, p.k_high, seed);
        } else if constexpr (std::is_same_v<T, params::Cluster>) {
          return gen_cluster(x, p, seed);
        } else if constexpr (std::is_same_v<T, params::TwoPhase>) {
          return gen_two_phase(x, p.f_cheap, p.alpha, p.beta, seed);
        } else if constexpr (std::is_same_v<T, params::Block>) {
          return gen_block(x, p, seed);
        } else {
          return gen_seq(x, p.bandit, p.p_missing, seed);
        }
      },
      spec.params);
}

/// Runs the generator named by spec, resampling (up to 16 attempts in
/// total) while the mask has no observed entry.
inline Mask generate(const PatternSpec& spec, const DataMatrix& x) {
  for (int attempt = 0; attempt < kMaxResampleAttempts; ++attempt) {
    const SeedSpec seed =
        attempt == 0 ? spec.seed : spec.seed.child("resample-" + std::to_string(attempt));
    Mask mask = dispatch_pattern(spec, x, seed);
    if (mask.observed_count() > 0) return mask;
  }
  throw Error("generate: " + std::string(pattern_key(spec.tag())) +
              " produced a fully-missing mask on every resample attempt");
}

}  // namespace missbench
