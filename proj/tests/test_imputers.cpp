#include <gtest/gtest.h>

#include "support.hpp"

using namespace missbench;

namespace {

MaskedDataset from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const auto m = static_cast<Index>(rows.size());
  const auto n = static_cast<Index>(rows.begin()->size());
  Matrix truth(m, n);
  MaskBits bits(m, n);
  Index i = 0;
  for (const auto& r : rows) {
    Index j = 0;
    for (double v : r) {
      bits(i, j) = is_missing(v) ? 0 : 1;
      truth(i, j) = is_missing(v) ? 0.0 : v;
      ++j;
    }
    ++i;
  }
  return apply_mask(DataMatrix(truth), Mask(bits));
}

std::vector<Imputer> every_imputer() {
  std::vector<Imputer> out;
  for (Method m : kAllMethods) {
    Imputer imp;
    imp.method = m;
    imp.k = 3;
    out.push_back(imp);
  }
  return out;
}

double masked_rmse(const MaskedDataset& ds, const Matrix& completed) {
  double s = 0.0;
  int cnt = 0;
  for (Index i = 0; i < ds.rows(); ++i)
    for (Index j = 0; j < ds.cols(); ++j)
      if (!ds.mask.observed(i, j)) {
        const double d = completed(i, j) - ds.truth(i, j);
        s += d * d;
        ++cnt;
      }
  return std::sqrt(s / cnt);
}

constexpr double M = kMissing;

}  // namespace

// ---------------------------------------------------------------------------
// Column mean

TEST(ColMean, Examples) {
  const MaskedDataset ds = from_rows({{1.0}, {M}, {3.0}});
  EXPECT_EQ(impute_col_mean(ds).completed(1, 0), 2.0);
  const MaskedDataset full = mbtest::random_dataset(4, 3, 0, 1);
  EXPECT_EQ(impute_col_mean(full).completed.values(), full.observed);
}

TEST(ColMean, MatchesLoopOracle) {
  const MaskedDataset ds = mbtest::random_dataset(8, 5, 12, 2);
  const Matrix got = impute_col_mean(ds).completed.values();
  for (Index j = 0; j < 5; ++j) {
    double s = 0.0;
    int c = 0;
    for (Index i = 0; i < 8; ++i)
      if (ds.mask.observed(i, j)) {
        s += ds.observed(i, j);
        ++c;
      }
    const double mean = c > 0 ? s / c : 0.0;
    for (Index i = 0; i < 8; ++i) EXPECT_EQ(got(i, j), ds.mask.observed(i, j) ? ds.observed(i, j) : mean);
  }
}

// ---------------------------------------------------------------------------
// kNN

TEST(Knn, DuplicateRow) {
  const MaskedDataset ds = from_rows({{1.0, 2.0}, {1.0, M}});
  EXPECT_EQ(impute_knn(ds, 1).completed(1, 1), 2.0);
}

TEST(Knn, SingleRowFallsBackToColumnMean) {
  const MaskedDataset ds = from_rows({{1.0, M, 3.0}});
  const ImputationResult r = impute_knn(ds, 2);
  EXPECT_EQ(r.completed(0, 1), 0.0);
  EXPECT_FALSE(r.diagnostics.warnings.empty());
}

TEST(Knn, MatchesBruteForce) {
  const MaskedDataset ds = mbtest::random_dataset(10, 4, 9, 3);
  const Matrix got = impute_knn(ds, 3).completed.values();
  for (Index i = 0; i < 10; ++i)
    for (Index j = 0; j < 4; ++j) {
      if (ds.mask.observed(i, j)) continue;
      std::vector<std::pair<double, Index>> all;
      for (Index r = 0; r < 10; ++r) {
        if (r == i || !ds.mask.observed(r, j)) continue;
        double s = 0.0;
        int shared = 0;
        for (Index c = 0; c < 4; ++c)
          if (ds.mask.observed(i, c) && ds.mask.observed(r, c)) {
            s += std::pow(ds.observed(i, c) - ds.observed(r, c), 2);
            ++shared;
          }
        if (shared > 0) all.emplace_back(std::sqrt(s * 4.0 / shared), r);
      }
      std::sort(all.begin(), all.end());
      ASSERT_GE(all.size(), 3u);
      const double expected = (ds.observed(all[0].second, j) + ds.observed(all[1].second, j) +
                               ds.observed(all[2].second, j)) / 3.0;
      EXPECT_NEAR(got(i, j), expected, 1e-14);
    }
}

// ---------------------------------------------------------------------------
// SoftImpute

TEST(SoftImpute, ZeroLambdaFullyObservedIsFixedPoint) {
  const MaskedDataset ds = mbtest::random_dataset(6, 4, 0, 4);
  const ImputationResult r = impute_soft(ds, 0.0, 50, 1e-8);
  EXPECT_EQ(r.completed.values(), ds.observed);
  EXPECT_TRUE(r.diagnostics.converged);
  EXPECT_EQ(r.diagnostics.iterations, 1);
}

TEST(SoftImpute, FullShrinkageGivesZeros) {
  const MaskedDataset ds = mbtest::random_dataset(6, 5, 8, 5);
  const double sigma1 = Eigen::BDCSVD<Matrix>(mean_filled(ds)).singularValues()(0);
  const ImputationResult r = impute_soft(ds, sigma1 * 1.0001, 50, 1e-8);
  EXPECT_TRUE(r.fitted_observed->isZero(0.0));
  for (Index i = 0; i < 6; ++i)
    for (Index j = 0; j < 5; ++j)
      EXPECT_EQ(r.completed(i, j), ds.mask.observed(i, j) ? ds.observed(i, j) : 0.0);
}

TEST(SoftImpute, RecoversRankOne) {
  const Matrix truth = mbtest::rank_one(50, 40, 20.0, 6);
  const MaskedDataset ds = mbtest::mcar_dataset(truth, 0.3, 6);
  const ImputationResult r = impute_soft(ds, 1.0, 500, 1e-7);
  EXPECT_LT(masked_rmse(ds, r.completed.values()), 0.05);
}

TEST(SoftImpute, ObjectiveNonIncreasing) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const MaskedDataset ds = mbtest::random_dataset(15, 10, 50, s);
    const ImputationResult r = impute_soft(ds, 0.5, 100, 1e-9);
    const auto& obj = r.diagnostics.objective;
    ASSERT_GE(obj.size(), 2u);
    for (std::size_t k = 1; k < obj.size(); ++k) EXPECT_LE(obj[k], obj[k - 1] + 1e-9 * std::abs(obj[k - 1]));
    EXPECT_TRUE(r.diagnostics.objective_monotone);
  }
}

TEST(SoftImpute, NonConvergenceIsFlagged) {
  const MaskedDataset ds = mbtest::random_dataset(15, 10, 50, 9);
  const ImputationResult r = impute_soft(ds, 0.1, 1, 0.0);
  EXPECT_FALSE(r.diagnostics.converged);
  EXPECT_FALSE(r.diagnostics.warnings.empty());
}

// ---------------------------------------------------------------------------
// ICE

TEST(Ice, SingleColumnIsColumnMean) {
  const MaskedDataset ds = from_rows({{1.0}, {M}, {4.0}, {M}});
  const ImputationResult r = impute_ice(ds, 10, 1e-8, 1e-3, SeedSpec{1});
  EXPECT_EQ(r.completed.values(), impute_col_mean(ds).completed.values());
}

TEST(Ice, ExactLinearRelation) {
  Matrix truth(8, 2);
  for (Index i = 0; i < 8; ++i) {
    truth(i, 0) = 0.5 * static_cast<double>(i) - 1.3 + 0.1 * static_cast<double>(i * i);
    truth(i, 1) = 2.0 * truth(i, 0);
  }
  MaskBits bits = MaskBits::Ones(8, 2);
  bits(5, 1) = 0;
  const MaskedDataset ds = apply_mask(DataMatrix(truth), Mask(bits));
  const ImputationResult r = impute_ice(ds, 50, 1e-10, 1e-8, SeedSpec{2});
  EXPECT_NEAR(r.completed(5, 1), 2.0 * truth(5, 0), 1e-4);
}

TEST(Ice, FullyObservedIsIdentity) {
  const MaskedDataset ds = mbtest::random_dataset(6, 3, 0, 7);
  EXPECT_EQ(impute_ice(ds, 10, 1e-6, 1e-3, SeedSpec{1}).completed.values(), ds.observed);
}

// ---------------------------------------------------------------------------
// Shared properties

TEST(AllImputers, PreserveObservedBitwise) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const MaskedDataset ds = mbtest::random_dataset(12, 6, 20, 100 + s);
    for (const Imputer& imp : every_imputer()) {
      const ImputationResult r = impute(imp, ds, SeedSpec{s});
      ASSERT_TRUE(r.completed.values().allFinite()) << method_key(imp.method);
      for (Index i = 0; i < 12; ++i)
        for (Index j = 0; j < 6; ++j)
          if (ds.mask.observed(i, j)) {
            const double a = r.completed(i, j);
            const double b = ds.observed(i, j);
            EXPECT_EQ(std::memcmp(&a, &b, sizeof(double)), 0) << method_key(imp.method);
          }
    }
  }
}

TEST(AllImputers, FullyObservedIdentity) {
  const MaskedDataset ds = mbtest::random_dataset(8, 4, 0, 11);
  for (const Imputer& imp : every_imputer())
    EXPECT_EQ(impute(imp, ds, SeedSpec{1}).completed.values(), ds.observed) << method_key(imp.method);
}

TEST(AllImputers, EdgeMasks) {
  // Column 2 fully missing; column 0 has a single observed entry.
  const MaskedDataset ds = from_rows({{1.0, 0.5, M, 2.0},
                                      {M, -0.3, M, 1.0},
                                      {M, 1.2, M, 0.1},
                                      {M, 0.7, M, -1.4},
                                      {M, -0.9, M, 0.6}});
  for (const Imputer& imp : every_imputer()) {
    const ImputationResult r = impute(imp, ds, SeedSpec{3});
    EXPECT_TRUE(r.completed.values().allFinite()) << method_key(imp.method);
  }
  EXPECT_EQ(impute_col_mean(ds).completed(3, 2), 0.0);
  EXPECT_EQ(impute_col_mean(ds).completed(3, 0), 1.0);
}

TEST(AllImputers, Deterministic) {
  const MaskedDataset ds = mbtest::random_dataset(10, 5, 15, 12);
  for (const Imputer& imp : every_imputer())
    EXPECT_EQ(impute(imp, ds, SeedSpec{4}).completed.values(), impute(imp, ds, SeedSpec{4}).completed.values())
        << method_key(imp.method);
}

TEST(AllImputers, NamesAndValidation) {
  for (Method m : kAllMethods) EXPECT_EQ(parse_method(method_key(m)), m);
  EXPECT_THROW(parse_method("missforest"), InvalidArgument);
  Imputer bad;
  bad.k = 0;
  EXPECT_THROW(impute(bad, mbtest::random_dataset(3, 3, 1, 1), SeedSpec{1}), InvalidArgument);
  EXPECT_THROW(impute_soft(mbtest::random_dataset(3, 3, 1, 1), -1.0, 10, 1e-5), InvalidArgument);
}
