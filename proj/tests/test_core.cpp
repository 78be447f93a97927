#include <gtest/gtest.h>

#include "support.hpp"

using namespace missbench;

namespace {

Matrix two_by_two() {
  Matrix x(2, 2);
  x << 1, 2, 3, 4;
  return x;
}

MaskBits bits_of(std::initializer_list<std::initializer_list<int>> rows) {
  MaskBits b(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index i = 0;
  for (const auto& r : rows) {
    Index j = 0;
    for (int v : r) b(i, j++) = static_cast<std::uint8_t>(v);
    ++i;
  }
  return b;
}

}  // namespace

TEST(ApplyMask, AllOnesIsIdentity) {
  const DataMatrix x(two_by_two());
  const MaskedDataset ds = apply_mask(x, Mask::all_observed(2, 2));
  EXPECT_EQ(ds.observed, x.values());
  EXPECT_TRUE(ds.mask.missing_cells().empty());
}

TEST(ApplyMask, DiagonalMask) {
  const MaskedDataset ds = apply_mask(DataMatrix(two_by_two()), Mask(bits_of({{1, 0}, {0, 1}})));
  EXPECT_EQ(ds.observed(0, 0), 1.0);
  EXPECT_TRUE(is_missing(ds.observed(0, 1)));
  EXPECT_TRUE(is_missing(ds.observed(1, 0)));
  EXPECT_EQ(ds.observed(1, 1), 4.0);
  const auto omega = ds.mask.missing_cells();
  ASSERT_EQ(omega.size(), 2u);
  EXPECT_EQ(omega[0], std::make_pair(Index{0}, Index{1}));
  EXPECT_EQ(omega[1], std::make_pair(Index{1}, Index{0}));
}

TEST(ApplyMask, RandomAgainstReferenceLoop) {
  const Matrix truth = mbtest::gaussian_matrix(5, 4, 11);
  const Mask mask = mbtest::random_mask(5, 4, 7, 12);
  const MaskedDataset ds = apply_mask(DataMatrix(truth), mask);
  int missing = 0;
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 4; ++j) {
      if (mask.bits()(i, j) == 0) {
        ++missing;
        EXPECT_TRUE(std::isnan(ds.observed(i, j)));
      } else {
        EXPECT_EQ(ds.observed(i, j), truth(i, j));
      }
    }
  EXPECT_EQ(missing, 7);
  EXPECT_EQ(ds.mask.missing_cells().size(), 7u);
}

TEST(ApplyMask, Errors) {
  EXPECT_THROW(apply_mask(DataMatrix(two_by_two()), Mask::all_observed(3, 2)), InvalidArgument);
  EXPECT_THROW(apply_mask(DataMatrix(two_by_two()), Mask(MaskBits::Zero(2, 2))), InvalidArgument);
}

TEST(MissingFraction, Examples) {
  EXPECT_EQ(missing_fraction(Mask::all_observed(4, 3)), 0.0);
  EXPECT_EQ(missing_fraction(Mask(MaskBits::Zero(3, 3))), 1.0);
  EXPECT_DOUBLE_EQ(missing_fraction(mbtest::random_mask(10, 10, 12, 3)), 0.12);
}

TEST(BernoulliMask, DegenerateProbabilities) {
  EXPECT_EQ(sample_bernoulli_mask(PropensityMatrix::constant(6, 5, 1.0), SeedSpec{1}),
            Mask::all_observed(6, 5));
  EXPECT_EQ(sample_bernoulli_mask(PropensityMatrix::constant(6, 5, 0.0), SeedSpec{1}).observed_count(), 0);
}

TEST(BernoulliMask, ObservedFractionConcentrates) {
  // 10^4 cells per draw: the sd of one draw is about 0.005, of the 30-draw mean about 0.001.
  double total = 0.0;
  for (std::uint64_t s = 0; s < 30; ++s) {
    const Mask m = sample_bernoulli_mask(PropensityMatrix::constant(200, 50, 0.6), SeedSpec{s, "conc"});
    total += 1.0 - missing_fraction(m);
  }
  const double mean = total / 30.0;
  EXPECT_GE(mean, 0.58);
  EXPECT_LE(mean, 0.62);
}

TEST(BernoulliMask, MissingFractionNearOneMinusPropensity) {
  for (double q : {0.1, 0.35, 0.5, 0.8, 0.95}) {
    const Mask m = sample_bernoulli_mask(PropensityMatrix::constant(100, 100, q), SeedSpec{9, "q"});
    EXPECT_NEAR(missing_fraction(m), 1.0 - q, 0.02) << "q = " << q;
  }
}

TEST(BernoulliMask, SeedDeterminism) {
  const auto p = PropensityMatrix::constant(20, 10, 0.5);
  EXPECT_EQ(sample_bernoulli_mask(p, SeedSpec{5, "a"}), sample_bernoulli_mask(p, SeedSpec{5, "a"}));
  EXPECT_FALSE(sample_bernoulli_mask(p, SeedSpec{5, "a"}) == sample_bernoulli_mask(p, SeedSpec{5, "b"}));
  EXPECT_FALSE(sample_bernoulli_mask(p, SeedSpec{5, "a"}) == sample_bernoulli_mask(p, SeedSpec{6, "a"}));
}

TEST(SeedSpec, ChildStreamsDiffer) {
  const SeedSpec s{42, "x"};
  EXPECT_EQ(s.child("a").key(), SeedSpec(42, "x").child("a").key());
  EXPECT_NE(s.child("a").key(), s.child("b").key());
  EXPECT_NE(s.key(), s.child("a").key());
  Rng r1 = s.rng();
  Rng r2 = s.rng();
  for (int k = 0; k < 10; ++k) EXPECT_EQ(r1(), r2());
}

TEST(Types, Validation) {
  Matrix bad = two_by_two();
  bad(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(DataMatrix{bad}, InvalidArgument);
  bad(0, 0) = kMissing;
  EXPECT_THROW(DataMatrix{bad}, InvalidArgument);
  EXPECT_THROW(DataMatrix{Matrix(0, 3)}, InvalidArgument);
  MaskBits two = MaskBits::Ones(2, 2);
  two(1, 1) = 2;
  EXPECT_THROW(Mask{two}, InvalidArgument);
  EXPECT_THROW(PropensityMatrix::constant(2, 2, 1.5), InvalidArgument);
  EXPECT_THROW(PropensityMatrix::constant(2, 2, -0.1), InvalidArgument);
}

TEST(Numerics, SigmoidAndLogit) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(logit(0.3)), 0.3, 1e-15);
  EXPECT_GT(sigmoid(-800.0), -1e-300);
  EXPECT_EQ(sigmoid(800.0), 1.0);
  EXPECT_FALSE(std::isnan(sigmoid(-800.0)));
}
