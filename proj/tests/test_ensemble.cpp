#include <gtest/gtest.h>

#include "support.hpp"

using namespace missbench;

namespace {

std::vector<double> gaussian_vector(std::size_t k, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(k);
  for (double& x : v) x = g(rng);
  return v;
}

double observed_mse(const MaskedDataset& ds, const Matrix& fitted) {
  double s = 0.0;
  int c = 0;
  for (Index i = 0; i < ds.rows(); ++i)
    for (Index j = 0; j < ds.cols(); ++j)
      if (ds.mask.observed(i, j)) {
        s += std::pow(fitted(i, j) - ds.observed(i, j), 2);
        ++c;
      }
  return s / c;
}

ImputeFn perfect_on_observed() {
  return [](const MaskedDataset& ds, const SeedSpec&) {
    Matrix fitted = mbtest::observed_as_zero(ds);
    return ImputationResult{DataMatrix(fitted), fitted, {}};
  };
}

}  // namespace

TEST(PermutationEnsemble, ForcedIdentityEqualsBase) {
  const MaskedDataset ds = mbtest::random_dataset(9, 5, 12, 1);
  const ImputeFn knn = imputer_fn(Imputer{Method::Knn, 3});
  const ImputationResult a = permutation_ensemble(knn, ds, 1, SeedSpec{1}, true);
  const ImputationResult b = knn(ds, SeedSpec{1}.child("base-0"));
  EXPECT_EQ(a.completed.values(), b.completed.values());
  EXPECT_EQ(*a.fitted_observed, *b.fitted_observed);
}

TEST(PermutationEnsemble, EquivariantBaseIsUnchanged) {
  const MaskedDataset ds = mbtest::random_dataset(10, 6, 15, 2);
  const ImputeFn mean = imputer_fn(Imputer{Method::ColMean});
  const Matrix single = mean(ds, SeedSpec{0}).completed.values();
  for (Index perms : {1, 2, 4, 7}) {
    const Matrix ens = permutation_ensemble(mean, ds, perms, SeedSpec{3}).completed.values();
    EXPECT_LT((ens - single).cwiseAbs().maxCoeff(), 1e-12) << perms;
  }
}

TEST(PermutationEnsemble, PermuteRoundTrip) {
  const MaskedDataset ds = mbtest::random_dataset(5, 4, 6, 3);
  Permutation perm{{3, 0, 4, 1, 2}, {2, 3, 0, 1}};
  const MaskedDataset p = permute(ds, perm);
  EXPECT_EQ(p.truth(0, 0), ds.truth(3, 2));
  EXPECT_EQ(p.mask.observed(1, 3), ds.mask.observed(0, 1));
  EXPECT_EQ(unpermute(p.truth.values(), perm), ds.truth.values());
}

TEST(PermutationEnsemble, Defaults) {
  const EnsembleSpec spec;
  EXPECT_EQ(spec.n_perms, 4);
  EXPECT_EQ(spec.base_a.method, Method::FeaturizedRidge);
  EXPECT_EQ(spec.base_b.method, Method::SoftImpute);
  EXPECT_THROW(permutation_ensemble(imputer_fn(Imputer{}), mbtest::random_dataset(3, 3, 1, 1), 0, SeedSpec{1}),
               InvalidArgument);
}

TEST(AdaptiveWeight, Endpoints) {
  std::mt19937_64 rng(4);
  const auto obs = gaussian_vector(20, rng);
  const auto other = gaussian_vector(20, rng);
  EXPECT_NEAR(adaptive_weight(obs, other, obs, 1e-12), 1.0, 1e-14);
  EXPECT_NEAR(adaptive_weight(other, obs, obs, 1e-12), 0.0, 1e-14);
  EXPECT_EQ(adaptive_weight(obs, obs, other, 1e-12), 0.5);
}

TEST(AdaptiveWeight, MatchesGoldenSection) {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const auto x1 = gaussian_vector(50, rng);
    const auto x2 = gaussian_vector(50, rng);
    const auto xo = gaussian_vector(50, rng);
    auto loss = [&](double w) {
      double s = 0.0;
      for (std::size_t k = 0; k < 50; ++k) s += std::pow(xo[k] - (w * x1[k] + (1.0 - w) * x2[k]), 2);
      return s;
    };
    const double search = mbtest::golden_section(loss, -10.0, 10.0, 1e-10);
    EXPECT_NEAR(adaptive_weight(x1, x2, xo, 1e-12), search, 1e-6);
  }
}

TEST(AdaptiveWeight, CommonPermutationInvariant) {
  std::mt19937_64 rng(6);
  auto x1 = gaussian_vector(30, rng);
  auto x2 = gaussian_vector(30, rng);
  auto xo = gaussian_vector(30, rng);
  const double w = adaptive_weight(x1, x2, xo, 1e-12);
  std::vector<std::size_t> order(30);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<double> p1, p2, po;
  for (std::size_t k : order) {
    p1.push_back(x1[k]);
    p2.push_back(x2[k]);
    po.push_back(xo[k]);
  }
  EXPECT_NEAR(adaptive_weight(p1, p2, po, 1e-12), w, 1e-12);
}

TEST(AdaptiveWeight, NotClippedAndValidated) {
  const std::vector<double> x1{1.0, 1.0};
  const std::vector<double> x2{0.0, 0.0};
  const std::vector<double> xo{3.0, 3.0};
  EXPECT_NEAR(adaptive_weight(x1, x2, xo, 1e-12), 3.0, 1e-14);
  EXPECT_THROW(adaptive_weight(x1, std::vector<double>{0.0}, xo, 1e-12), InvalidArgument);
}

TEST(Blend, IdenticalBasesTakeDegeneratePath) {
  const MaskedDataset ds = mbtest::random_dataset(8, 5, 10, 7);
  const ImputeFn knn = imputer_fn(Imputer{Method::Knn, 2});
  const ImputationResult r = blend(ds, knn, knn, 1, 1e-12, SeedSpec{1});
  EXPECT_EQ(r.diagnostics.ensemble_weight, 0.5);
  const ImputationResult single = permutation_ensemble(knn, ds, 1, SeedSpec{1}.child("a"));
  EXPECT_LT((r.completed.values() - single.completed.values()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Blend, PerfectBaseGetsFullWeight) {
  const MaskedDataset ds = mbtest::random_dataset(8, 5, 10, 8);
  const ImputeFn other = imputer_fn(Imputer{Method::ColMean});
  const ImputationResult r = blend(ds, perfect_on_observed(), other, 1, 1e-12, SeedSpec{2});
  ASSERT_TRUE(r.diagnostics.ensemble_weight.has_value());
  EXPECT_NEAR(*r.diagnostics.ensemble_weight, 1.0, 1e-12);
  const Matrix a = perfect_on_observed()(ds, SeedSpec{0}).completed.values();
  EXPECT_LT((r.completed.values() - a).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Blend, ObservedErrorNeverWorseThanEitherBase) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const MaskedDataset ds = mbtest::random_dataset(12, 6, 20, 30 + s);
    const ImputationResult a = permutation_ensemble(imputer_fn(Imputer{Method::Knn, 3}), ds, 2, SeedSpec{s});
    const ImputationResult b = permutation_ensemble(imputer_fn(Imputer{Method::Ice}), ds, 2, SeedSpec{s});
    const ImputationResult r = blend_results(ds, a, b, 1e-12);
    const double best = std::min(observed_mse(ds, *a.fitted_observed), observed_mse(ds, *b.fitted_observed));
    EXPECT_LE(observed_mse(ds, *r.fitted_observed), best + 1e-9);
  }
}

TEST(Blend, PreservesObservedAndRequiresFitted) {
  const MaskedDataset ds = mbtest::random_dataset(10, 5, 12, 9);
  const ImputationResult r = blend(ds, EnsembleSpec{}, SeedSpec{3});
  for (Index i = 0; i < 10; ++i)
    for (Index j = 0; j < 5; ++j)
      if (ds.mask.observed(i, j)) EXPECT_EQ(r.completed(i, j), ds.observed(i, j));
  const ImputeFn no_fitted = [](const MaskedDataset& d, const SeedSpec&) {
    return ImputationResult{DataMatrix(mbtest::observed_as_zero(d)), std::nullopt, {}};
  };
  EXPECT_THROW(blend(ds, no_fitted, imputer_fn(Imputer{}), 1, 1e-12, SeedSpec{1}), InvalidArgument);
}
