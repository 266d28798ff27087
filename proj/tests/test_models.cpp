#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "nmd/models.hpp"
#include "nmd/random.hpp"

using namespace nmd;

namespace {
const double kInf = std::numeric_limits<double>::infinity();
}

TEST(ApplyNonlinearity, Definitions) {
  EXPECT_EQ(apply_nonlinearity(Nonlinearity::relu(), DenseMatrix::from_rows({{-1, 2}})),
            DenseMatrix::from_rows({{0, 2}}));
  EXPECT_EQ(apply_nonlinearity(Nonlinearity::csf(), DenseMatrix::from_rows({{-3}})),
            DenseMatrix::from_rows({{9}}));
  EXPECT_EQ(apply_nonlinearity(Nonlinearity::minmax(0, 1),
                               DenseMatrix::from_rows({{-0.5, 0.3, 7}})),
            DenseMatrix::from_rows({{0, 0.3, 1}}));
  EXPECT_EQ(apply_nonlinearity(Nonlinearity::modulus(), DenseMatrix::from_rows({{-2, 3}})),
            DenseMatrix::from_rows({{2, 3}}));
}

TEST(ApplyNonlinearity, IdempotentExceptCsf) {
  Rng rng(1);
  DenseMatrix T(6, 5);
  for (double& v : T.values()) v = 3 * rng.normal();
  for (const Nonlinearity& f : {Nonlinearity::relu(), Nonlinearity::modulus(),
                                Nonlinearity::minmax(-0.5, 1.5)}) {
    const DenseMatrix once = apply_nonlinearity(f, T);
    EXPECT_EQ(apply_nonlinearity(f, once), once);
  }
  const DenseMatrix once = apply_nonlinearity(Nonlinearity::csf(), T);
  EXPECT_NE(apply_nonlinearity(Nonlinearity::csf(), once), once);
}

TEST(ApplyNonlinearity, RangeOfPredictions) {
  Rng rng(2);
  DenseMatrix T(8, 8);
  for (double& v : T.values()) v = 4 * rng.normal();
  const DenseMatrix clipped = apply_nonlinearity(Nonlinearity::minmax(0.2, 0.9), T);
  for (double v : clipped.values()) {
    EXPECT_GE(v, 0.2);
    EXPECT_LE(v, 0.9);
  }
  for (const Nonlinearity& f :
       {Nonlinearity::relu(), Nonlinearity::csf(), Nonlinearity::modulus()}) {
    const DenseMatrix P = apply_nonlinearity(f, T);
    for (double v : P.values()) EXPECT_GE(v, 0.0);
  }
}

TEST(KlScalar, Values) {
  EXPECT_EQ(kl_scalar(1, 1), 0.0);
  EXPECT_EQ(kl_scalar(0, 3), 3.0);
  EXPECT_NEAR(kl_scalar(2, 1), 0.3862943611198906, 1e-15);
  EXPECT_EQ(kl_scalar(2, 0), kInf);
  EXPECT_EQ(kl_scalar(0, 0), 0.0);
}

TEST(KlScalar, NegativeInputThrows) {
  EXPECT_THROW(kl_scalar(-1, 1), DomainError);
  EXPECT_THROW(kl_scalar(1, -1), DomainError);
}

TEST(KlScalar, MatchesBregmanIntegral) {
  // Bregman divergence of s log s: integral_y^x (x - s) / s ds.
  for (auto [x, y] : {std::pair{2.0, 1.0}, {0.5, 3.0}, {4.0, 0.25}}) {
    const int n = 200000;
    double sum = 0.0;
    const double h = (x - y) / n;
    for (int i = 0; i < n; ++i) {
      const double s = y + (i + 0.5) * h;
      sum += (x - s) / s * h;
    }
    EXPECT_NEAR(kl_scalar(x, y), sum, 1e-8);
  }
}

TEST(KlScalar, NonnegativeWithEqualityOnDiagonal) {
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    const double x = 10 * rng.uniform_open();
    const double y = 10 * rng.uniform_open();
    EXPECT_GT(kl_scalar(x, y), 0.0);
    EXPECT_EQ(kl_scalar(x, x), 0.0);
  }
}

TEST(LossValue, Values) {
  const DenseMatrix X = DenseMatrix::from_rows({{1, 2}});
  EXPECT_EQ(loss_value(Loss::frobenius, X, X), 0.0);
  EXPECT_EQ(loss_value(Loss::l1, X, DenseMatrix::from_rows({{0, 4}})), 3.0);
  EXPECT_EQ(loss_value(Loss::frobenius, X, DenseMatrix::from_rows({{0, 4}})), 5.0);
  EXPECT_EQ(loss_value(Loss::kl, DenseMatrix::from_rows({{1}, {0}}),
                       DenseMatrix::from_rows({{1}, {3}})),
            3.0);
}

TEST(LossValue, Errors) {
  EXPECT_THROW(loss_value(Loss::l1, DenseMatrix(1, 2), DenseMatrix(2, 1)), ShapeError);
  EXPECT_THROW(loss_value(Loss::kl, DenseMatrix::from_rows({{-1}}),
                          DenseMatrix::from_rows({{1}})),
               DomainError);
}

TEST(RelativeObjective, ExactFitIsZero) {
  const DenseMatrix WH = DenseMatrix::from_rows({{-1, 2}, {0.5, 3}});
  for (Loss l : kAllLosses) {
    const ModelSpec spec = make_spec(NonlinearityKind::relu, l);
    const DenseMatrix X = apply_nonlinearity(spec.nonlinearity, WH);
    EXPECT_EQ(relative_objective(spec, X, WH), 0.0);
  }
}

TEST(RelativeObjective, ZeroPredictorUnderFrobenius) {
  const ModelSpec spec = make_spec(NonlinearityKind::relu, Loss::frobenius);
  EXPECT_DOUBLE_EQ(relative_objective(spec, DenseMatrix::from_rows({{3, 4}}),
                                      DenseMatrix(1, 2)),
                   1.0);
}

TEST(RelativeObjective, MeanPredictorUnderKl) {
  const ModelSpec spec = make_spec(NonlinearityKind::relu, Loss::kl);
  EXPECT_DOUBLE_EQ(relative_objective(spec, DenseMatrix::from_rows({{1, 3}}),
                                      DenseMatrix::from_rows({{2, 2}})),
                   1.0);
}

TEST(RelativeObjective, DegenerateDenominators) {
  EXPECT_THROW(relative_objective(make_spec(NonlinearityKind::relu, Loss::frobenius),
                                  DenseMatrix(2, 2), DenseMatrix(2, 2)),
               DegenerateMetricError);
  EXPECT_THROW(relative_objective(make_spec(NonlinearityKind::relu, Loss::kl),
                                  DenseMatrix(2, 2, 3.0), DenseMatrix(2, 2)),
               DegenerateMetricError);
}

TEST(RelativeObjective, PermutationInvariant) {
  Rng rng(4);
  const std::size_t m = 5;
  const std::size_t n = 4;
  DenseMatrix X(m, n);
  DenseMatrix P(m, n);
  for (double& v : X.values()) v = rng.uniform();
  for (double& v : P.values()) v = rng.normal();
  const std::size_t row_perm[m] = {3, 0, 4, 1, 2};
  const std::size_t col_perm[n] = {2, 3, 1, 0};
  DenseMatrix Xp(m, n);
  DenseMatrix Pp(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      Xp(i, j) = X(row_perm[i], col_perm[j]);
      Pp(i, j) = P(row_perm[i], col_perm[j]);
    }
  for (Loss l : kAllLosses) {
    const ModelSpec spec = make_spec(NonlinearityKind::modulus, l);
    EXPECT_NEAR(relative_objective(spec, X, P), relative_objective(spec, Xp, Pp),
                1e-14);
  }
}

TEST(RelativeObjective, MaskRestrictsSums) {
  const ModelSpec spec = make_spec(NonlinearityKind::relu, Loss::l1);
  ObservationMask mask(1, 3, false);
  mask.set(0, 0, true);
  mask.set(0, 2, true);
  // Observed entries: X = {2, 4}, prediction = {1, 4}: 1 / 6.
  EXPECT_DOUBLE_EQ(relative_objective(spec, DenseMatrix::from_rows({{2, 100, 4}}),
                                      DenseMatrix::from_rows({{1, -5, 4}}), &mask),
                   1.0 / 6.0);
}

TEST(ModelSpec, ValidityRules) {
  EXPECT_THROW(make_spec(NonlinearityKind::minmax, Loss::frobenius), ConfigError);
  EXPECT_THROW(make_spec(NonlinearityKind::minmax, Loss::frobenius, Bounds{1, 0}),
               ConfigError);
  const ModelSpec mm = make_spec(NonlinearityKind::minmax, Loss::l1, Bounds{0, 1});
  EXPECT_FALSE(mm.invalid_reason(0.5));
  EXPECT_TRUE(mm.invalid_reason(1.5));
  const ModelSpec mmkl = make_spec(NonlinearityKind::minmax, Loss::kl, Bounds{0, 1});
  EXPECT_FALSE(mmkl.invalid_reason(0.0));
  EXPECT_TRUE(mmkl.invalid_reason(0.5));
  for (auto k : {NonlinearityKind::relu, NonlinearityKind::csf, NonlinearityKind::modulus}) {
    const ModelSpec spec = make_spec(k, Loss::frobenius);
    EXPECT_TRUE(spec.invalid_reason(-0.1));
    EXPECT_TRUE(spec.invalid_reason(std::nan("")));
    EXPECT_FALSE(spec.invalid_reason(0.0));
  }
}

TEST(ModelSpec, ValidateDataNamesEntry) {
  const ModelSpec spec = make_spec(NonlinearityKind::relu, Loss::kl);
  try {
    validate_data(spec, DenseMatrix::from_rows({{1, 2}, {3, -4}}));
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("(1, 1)"), std::string::npos);
  }
  ObservationMask mask(2, 2, true);
  mask.set(1, 1, false);
  EXPECT_NO_THROW(validate_data(spec, DenseMatrix::from_rows({{1, 2}, {3, -4}}), &mask));
}

TEST(ModelSpec, ParseNames) {
  EXPECT_EQ(parse_nonlinearity("relu"), NonlinearityKind::relu);
  EXPECT_EQ(parse_nonlinearity("minmax"), NonlinearityKind::minmax);
  EXPECT_EQ(parse_loss("fro"), Loss::frobenius);
  EXPECT_EQ(parse_loss("kl"), Loss::kl);
  EXPECT_FALSE(parse_loss("l2"));
  EXPECT_FALSE(parse_nonlinearity("tanh"));
}

TEST(ClipToBounds, CountsMovedEntries) {
  const ModelSpec spec = make_spec(NonlinearityKind::minmax, Loss::l1, Bounds{0.5, 1});
  DenseMatrix X = DenseMatrix::from_rows({{0.2, 0.7, 1.3}});
  EXPECT_EQ(clip_to_bounds(spec, X), 2u);
  EXPECT_EQ(X, DenseMatrix::from_rows({{0.5, 0.7, 1.0}}));
}
