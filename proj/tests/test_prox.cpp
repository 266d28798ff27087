// Scalar T-update solvers: hand and brute-force reference values, branch
// properties, and the entrywise update_T.

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <string>

#include "nmd/cubic.hpp"
#include "nmd/oracle.hpp"
#include "nmd/prox.hpp"

using namespace nmd;

namespace {

ScalarSubproblem sub(double x, double a, double lambda, double rho) {
  return {x, a, lambda, rho, std::nullopt};
}

ScalarSubproblem sub(double x, double a, double lambda, double rho, double lo,
                     double hi) {
  return {x, a, lambda, rho, Bounds{lo, hi}};
}

void expect_prox(ProxFn fn, const ScalarSubproblem& s, double t, double objective,
                 double tol = 1e-12) {
  const ProxResult r = fn(s);
  EXPECT_NEAR(r.t, t, tol) << "x=" << s.x << " a=" << s.a << " lambda=" << s.lambda
                           << " rho=" << s.rho;
  EXPECT_NEAR(r.objective, objective, tol) << "x=" << s.x << " a=" << s.a;
}

std::vector<ModelSpec> all_specs(Bounds minmax = {0.0, 1.0}) {
  std::vector<ModelSpec> out;
  for (auto k : kAllNonlinearities)
    for (auto l : kAllLosses)
      out.push_back(make_spec(k, l, k == NonlinearityKind::minmax
                                        ? std::optional<Bounds>(minmax)
                                        : std::nullopt));
  return out;
}

}  // namespace

// --- depressed cubic ---------------------------------------------------------

TEST(DepressedCubic, TripleZero) {
  const CubicRoots r = solve_depressed_cubic(0, 0);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0], 0.0);
}

TEST(DepressedCubic, DoubleRoot) {
  const CubicRoots r = solve_depressed_cubic(-3, -2);
  std::vector<double> roots(r.begin(), r.end());
  std::sort(roots.begin(), roots.end());
  ASSERT_EQ(roots.size(), 2u);
  EXPECT_NEAR(roots[0], -1.0, 1e-7);
  EXPECT_NEAR(roots[1], 2.0, 1e-12);
}

TEST(DepressedCubic, SingleRealRoot) {
  const CubicRoots r = solve_depressed_cubic(-0.5, 0.5);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_NEAR(r[0], -1.0, 1e-12);
}

TEST(DepressedCubic, ThreeRootsAndResidualBound) {
  // (t - 1)(t - 2)(t + 3) = t^3 - 7t + 6
  const CubicRoots r = solve_depressed_cubic(-7, 6);
  std::vector<double> roots(r.begin(), r.end());
  std::sort(roots.begin(), roots.end());
  ASSERT_EQ(roots.size(), 3u);
  EXPECT_NEAR(roots[0], -3.0, 1e-12);
  EXPECT_NEAR(roots[1], 1.0, 1e-12);
  EXPECT_NEAR(roots[2], 2.0, 1e-12);
}

TEST(DepressedCubic, RandomCoefficientsPolished) {
  Rng rng(5);
  for (int i = 0; i < 5000; ++i) {
    const double p = 10 * rng.normal();
    const double q = 10 * rng.normal();
    const CubicRoots r = solve_depressed_cubic(p, q);
    ASSERT_GE(r.size(), 1u);
    for (double t : r) {
      const double residual = t * t * t + p * t + q;
      EXPECT_LT(std::abs(residual), 1e-10 * std::max(1.0, std::abs(t * t * t)))
          << "p=" << p << " q=" << q << " t=" << t;
    }
    // Discriminant decides the real-root count away from degeneracy.
    const double disc = -(4 * p * p * p + 27 * q * q);
    if (disc > 1e-6) EXPECT_EQ(r.size(), 3u);
    if (disc < -1e-6) EXPECT_EQ(r.size(), 1u);
  }
}

// --- ReLU --------------------------------------------------------------------

TEST(ProxReluFrobenius, Examples) {
  expect_prox(prox_relu_frobenius, sub(1, 1, 0, 1), 1, 0);
  expect_prox(prox_relu_frobenius, sub(0, -1, 0, 1), -1, 0);
  // g2 = 0.375 at t = -0.5 beats g1 = 0.4375.
  expect_prox(prox_relu_frobenius, sub(1, 0, 0.5, 1), -0.5, 0.375);
}

TEST(ProxReluKl, Examples) {
  expect_prox(prox_relu_kl, sub(1, 0, 0, 1), 0.6180339887498949, 0.2902288194345509);
  expect_prox(prox_relu_kl, sub(0, -1, 0, 1), -1, 0);
  expect_prox(prox_relu_kl, sub(0, 2, 0, 1), 1, 1.5);
  expect_prox(prox_relu_kl, sub(0, 0.5, 0, 1), 0, 0.125);
}

TEST(ProxReluL1, Examples) {
  expect_prox(prox_relu_l1, sub(1, 1, 0, 2), 1, 0);
  expect_prox(prox_relu_l1, sub(1, 2, 0, 1), 1, 0.5);
  expect_prox(prox_relu_l1, sub(1, -0.2, 0, 1), 0.8, 0.7);
}

// --- CSF ---------------------------------------------------------------------

TEST(ProxCsfFrobenius, Examples) {
  expect_prox(prox_csf_frobenius, sub(1, 0, 0, 2), 0, 0.5);
  expect_prox(prox_csf_frobenius, sub(4, 2, 0, 2), 2, 0, 1e-10);
  // Single real root of t^3 - 0.5 t - 0.15.
  expect_prox(prox_csf_frobenius, sub(1, 0.4, 0.1, 1), 0.8256377741514762,
              0.2238120672894668);
}

TEST(ProxCsfKl, Examples) {
  expect_prox(prox_csf_kl, sub(4, 2, 0, 1), 2, 0);
  expect_prox(prox_csf_kl, sub(0, 1, 0, 2), 0.5, 0.5);
  const ProxResult r = prox_csf_kl(sub(2, 0.5, 0.3, 1));
  EXPECT_NEAR(r.t, 1.18851489674423, 1e-12);
  EXPECT_NEAR(r.objective, 0.7016247042003743, 1e-12);
  EXPECT_EQ(r.branch, branch::kPositiveRoot);
}

TEST(ProxCsfL1, Examples) {
  const ProxResult kink = prox_csf_l1(sub(1, 1, 0, 3));
  EXPECT_EQ(kink.t, 1.0);
  EXPECT_EQ(kink.objective, 0.0);
  EXPECT_EQ(kink.branch, branch::kKink);
  expect_prox(prox_csf_l1, sub(0, 1, 0, 2), 0.5, 0.5);
  const ProxResult outer = prox_csf_l1(sub(1, 0.1, 0, 6));
  EXPECT_NEAR(outer.t, 0.15, 1e-12);
  EXPECT_NEAR(outer.objective, 0.985, 1e-12);
  EXPECT_EQ(outer.branch, branch::kInner);
}

TEST(ProxCsfL1, RhoAtMostTwoUsesKinks) {
  // rho = 2 exactly: the inner piece is linear, its minimum sits at a kink.
  const ProxResult r = prox_csf_l1(sub(1, 0.3, 0, 2));
  EXPECT_EQ(r.branch, branch::kKink);
  EXPECT_EQ(r.t, 1.0);
}

// --- MinMax ------------------------------------------------------------------

TEST(ProxMinmaxFrobenius, Examples) {
  expect_prox(prox_minmax_frobenius, sub(0.5, 0.5, 0, 1, 0, 1), 0.5, 0);
  expect_prox(prox_minmax_frobenius, sub(1, 2, 0, 1, 0, 1), 2, 0);
  expect_prox(prox_minmax_frobenius, sub(0.8, 1.5, 0, 1, 0, 1), 1.5, 0.02);
}

TEST(ProxMinmaxFrobenius, MissingBoundsThrows) {
  EXPECT_THROW(prox_minmax_frobenius(sub(0.5, 0, 0, 1)), ConfigError);
  EXPECT_THROW(prox_minmax_l1(sub(0.5, 0, 0, 1)), ConfigError);
  EXPECT_THROW(prox_minmax_kl(sub(0.5, 0, 0, 1)), ConfigError);
}

TEST(ProxMinmaxKl, Examples) {
  expect_prox(prox_minmax_kl, sub(0.75, 0.75, 0, 1, 0.5, 1), 0.75, 0);
  expect_prox(prox_minmax_kl, sub(0, -0.5, 0, 1, 0, 1), -0.5, 0);
  // t = 0.2 clips to f = 0.5, so the objective is KL(0.8, 0.5) = 0.8 ln 1.6 - 0.3
  // with no penalty; the lower bound t = 0.5 pays an extra (0.3)^2.
  const ProxResult r = prox_minmax_kl(sub(0.8, 0.2, 0, 2, 0.5, 1));
  EXPECT_NEAR(r.t, 0.2, 1e-12);
  EXPECT_NEAR(r.objective, 0.07600290339658849, 1e-12);
  EXPECT_EQ(r.branch, branch::kBelow);
  const double at_lower = scalar_objective(
      make_spec(NonlinearityKind::minmax, Loss::kl, Bounds{0.5, 1}),
      sub(0.8, 0.2, 0, 2, 0.5, 1), 0.5);
  EXPECT_NEAR(at_lower - r.objective, 0.09, 1e-12);
}

TEST(ProxMinmaxKl, NonpositiveLowerBoundWithPositiveDataThrows) {
  EXPECT_THROW(prox_minmax_kl(sub(0.5, 0, 0, 1, 0, 1)), DomainError);
}

TEST(ProxMinmaxL1, Examples) {
  expect_prox(prox_minmax_l1, sub(0.5, 0.5, 0, 2, 0, 1), 0.5, 0);
  expect_prox(prox_minmax_l1, sub(1, 3, 0, 1, 0, 1), 3, 0);
  expect_prox(prox_minmax_l1, sub(0.3, -0.4, 0, 1, 0, 1), 0.3, 0.245);
}

// --- Modulus -----------------------------------------------------------------

TEST(ProxModulusFrobenius, Examples) {
  expect_prox(prox_modulus_frobenius, sub(1, -1, 0, 1), -1, 0);
  expect_prox(prox_modulus_frobenius, sub(1, 2, 0, 1), 1.5, 0.25);
}

TEST(ProxModulusFrobenius, TieGoesToLargerT) {
  const ScalarSubproblem s = sub(1, 0, 0, 1);
  const ModelSpec spec = make_spec(NonlinearityKind::modulus, Loss::frobenius);
  EXPECT_EQ(scalar_objective(spec, s, 0.5), scalar_objective(spec, s, -0.5));
  expect_prox(prox_modulus_frobenius, s, 0.5, 0.25);
}

TEST(ProxModulusKl, Examples) {
  const ProxResult r = prox_modulus_kl(sub(1, -1, 0, 1));
  EXPECT_NEAR(r.t, -1, 1e-12);
  EXPECT_NEAR(r.objective, 0, 1e-12);
  const ModelSpec spec = make_spec(NonlinearityKind::modulus, Loss::kl);
  // Positive candidate: root of t^2 + 2t - 1. KL(1, p) + (p + 1)^2 / 2 with
  // (p + 1)^2 = 2.
  const double positive = std::sqrt(2.0) - 1.0;
  const double candidate = -std::log(positive) - 1.0 + positive + 1.0;
  EXPECT_NEAR(scalar_objective(spec, sub(1, -1, 0, 1), positive), candidate, 1e-12);
  EXPECT_NEAR(candidate, 1.2955871493926381, 1e-15);
  expect_prox(prox_modulus_kl, sub(0, 0, 0, 1), 0, 0);
  expect_prox(prox_modulus_kl, sub(0, 2, 0, 1), 1, 1.5);
}

TEST(ProxModulusL1, Examples) {
  expect_prox(prox_modulus_l1, sub(1, 1, 0, 2), 1, 0);
  expect_prox(prox_modulus_l1, sub(1, -1, 0, 2), -1, 0);
  expect_prox(prox_modulus_l1, sub(1, 0.1, 0, 1), 1, 0.405);
}

// --- properties --------------------------------------------------------------

TEST(ProxProperties, ExactFitAbsorption) {
  Rng rng(21);
  for (const ModelSpec& spec : all_specs({0.5, 1.0})) {
    for (int i = 0; i < 300; ++i) {
      ScalarSubproblem s;
      s.a = rng.uniform(-3, 3);
      s.rho = std::array{0.1, 1.0, 10.0}[rng.index(3)];
      s.x = spec.nonlinearity(s.a);
      const ProxResult r = solve_prox(spec, s);
      EXPECT_LE(r.objective, 1e-12) << spec.name() << " a=" << s.a << " rho=" << s.rho;
    }
  }
}

TEST(ProxProperties, LargeRhoApproachesShiftedA) {
  // Stationarity gives rho |t - (a - lambda / rho)| <= L with L the largest
  // data-term slope on [a - 1, a + 1], once rho keeps t inside that interval.
  // Instances whose data term is infinite somewhere there (KL against a zero
  // prediction) have no finite L and are skipped.
  Rng rng(22);
  for (const ModelSpec& spec : all_specs({0.0, 1.0})) {
    int checked = 0;
    for (int i = 0; i < 200; ++i) {
      ScalarSubproblem s;
      s.bounds = spec.nonlinearity.bounds;
      s.a = rng.uniform(-5, 5);
      s.lambda = rng.uniform(-5, 5);
      s.x = spec.kind() == NonlinearityKind::minmax ? (spec.loss == Loss::kl ? 0.0 : rng.uniform())
                                                    : rng.uniform(0, 5);
      auto data = [&](double u) {
        return scalar_objective(spec, {s.x, u, 0.0, 1.0, s.bounds}, u);
      };
      const double h = 1e-4;
      double slope = 0.0;
      for (double u = s.a - 1; u < s.a + 1; u += h) {
        const double lo = data(u);
        const double hi = data(u + h);
        slope = std::isfinite(lo) && std::isfinite(hi)
                    ? std::max(slope, std::abs(hi - lo) / h)
                    : std::numeric_limits<double>::infinity();
      }
      if (!std::isfinite(slope)) continue;
      ++checked;
      for (double rho : {1e3, 1e6}) {
        s.rho = rho;
        const ProxResult r = solve_prox(spec, s);
        const double bound = 1.01 * slope + 1e-9 * rho;
        EXPECT_LE(rho * std::abs(r.t - missing_entry_update(s.a, s.lambda, rho)), bound)
            << spec.name() << " x=" << s.x << " a=" << s.a << " lambda=" << s.lambda;
        EXPECT_LE(rho * std::abs(r.t - s.a), std::abs(s.lambda) + bound) << spec.name();
      }
    }
    EXPECT_GE(checked, 50) << spec.name();
  }
}

namespace {

// Derivative of the smooth piece of d(x, f(t)) + lambda t + rho/2 (t - a)^2
// that contains t. Only valid away from kinks.
double branch_derivative(const ModelSpec& spec, const ScalarSubproblem& s, double t) {
  const Nonlinearity& f = spec.nonlinearity;
  const double y = f(t);
  double dy = 0.0;
  switch (spec.kind()) {
    case NonlinearityKind::relu: dy = t > 0 ? 1 : 0; break;
    case NonlinearityKind::csf: dy = 2 * t; break;
    case NonlinearityKind::minmax:
      dy = (t > f.bounds->lower && t < f.bounds->upper) ? 1 : 0;
      break;
    case NonlinearityKind::modulus: dy = t > 0 ? 1 : -1; break;
  }
  double dd = 0.0;
  switch (spec.loss) {
    case Loss::frobenius: dd = y - s.x; break;
    case Loss::l1: dd = y > s.x ? 1 : -1; break;
    case Loss::kl: dd = s.x == 0 ? 1 : 1 - s.x / y; break;
  }
  return dd * dy + s.lambda + s.rho * (t - s.a);
}

bool near_kink(const ModelSpec& spec, const ScalarSubproblem& s, double t) {
  const double tol = 1e-9 * (1 + std::abs(t));
  auto near = [&](double k) { return std::abs(t - k) <= tol; };
  if (near(0.0)) return true;
  if (std::abs(spec.nonlinearity(t) - s.x) <= tol && spec.loss == Loss::l1) return true;
  if (spec.kind() == NonlinearityKind::minmax)
    return near(spec.nonlinearity.bounds->lower) || near(spec.nonlinearity.bounds->upper);
  return false;
}

bool label_holds(const ModelSpec& spec, const ScalarSubproblem& s, const ProxResult& r) {
  const double t = r.t;
  const double tol = 1e-12 * (1 + std::abs(t));
  const std::string_view b = r.branch;
  if (b == branch::kPositive) return t > 0;
  if (b == branch::kNonpositive) return t <= 0;
  if (b == branch::kZero) return t == 0;
  if (b == branch::kStationary) return true;
  if (b == branch::kPositiveRoot) return t > 0;
  if (b == branch::kNegativeRoot) return t < 0;
  if (b == branch::kInner) return t * t <= s.x * (1 + 1e-12) + tol;
  if (b == branch::kOuter) return t * t >= s.x * (1 - 1e-12) - tol;
  if (b == branch::kKink) return std::abs(t * t - s.x) <= 1e-12 * (1 + s.x);
  const auto& bounds = spec.nonlinearity.bounds;
  if (b == branch::kBelow) return t < bounds->lower;
  if (b == branch::kAbove) return t > bounds->upper;
  if (b == branch::kInterior) return t >= bounds->lower && t <= bounds->upper;
  if (b == branch::kLowerBound) return t == bounds->lower;
  if (b == branch::kUpperBound) return t == bounds->upper;
  if (b == branch::kDataKink) return spec.nonlinearity(t) == s.x;
  return false;
}

}  // namespace

TEST(ProxProperties, StationaryOrKinkAndLabelFeasible) {
  for (const ModelSpec& base : all_specs()) {
    Rng rng(23);
    for (int i = 0; i < 2000; ++i) {
      ScalarSubproblem s = draw_subproblem(base, rng);
      ModelSpec spec = base;
      if (s.bounds) spec.nonlinearity.bounds = s.bounds;
      const ProxResult r = solve_prox(spec, s);
      ASSERT_TRUE(std::isfinite(r.t));
      ASSERT_TRUE(std::isfinite(r.objective));
      EXPECT_TRUE(label_holds(spec, s, r))
          << spec.name() << " branch=" << r.branch << " t=" << r.t << " x=" << s.x;
      const bool kink_label = r.branch == branch::kZero || r.branch == branch::kKink ||
                              r.branch == branch::kLowerBound ||
                              r.branch == branch::kUpperBound ||
                              r.branch == branch::kDataKink;
      if (kink_label || near_kink(spec, s, r.t)) continue;
      if (spec.kind() == NonlinearityKind::csf && spec.loss == Loss::l1 &&
          std::abs(r.t * r.t - s.x) <= 1e-9 * (1 + s.x))
        continue;
      const double scale = 1 + std::abs(s.lambda) + s.rho * (std::abs(r.t) + std::abs(s.a)) +
                           s.x + std::abs(r.t * r.t * r.t);
      EXPECT_LT(std::abs(branch_derivative(spec, s, r.t)), 1e-8 * scale)
          << spec.name() << " branch=" << r.branch << " t=" << r.t << " x=" << s.x
          << " a=" << s.a << " lambda=" << s.lambda << " rho=" << s.rho;
    }
  }
}

TEST(ProxProperties, KlNeverReturnsZeroPredictionForPositiveData) {
  Rng rng(24);
  for (auto kind : kAllNonlinearities) {
    const ModelSpec spec = make_spec(kind, Loss::kl,
                                     kind == NonlinearityKind::minmax
                                         ? std::optional<Bounds>(Bounds{0.5, 1})
                                         : std::nullopt);
    for (int i = 0; i < 500; ++i) {
      ScalarSubproblem s;
      s.x = kind == NonlinearityKind::minmax ? rng.uniform(0.5, 1) : rng.uniform(0.01, 5);
      s.a = rng.uniform(-5, 5);
      s.lambda = rng.uniform(-5, 5);
      s.rho = 1;
      EXPECT_GT(spec.nonlinearity(solve_prox(spec, s).t), 0.0);
    }
  }
}

TEST(ProxDispatch, TableMatchesNamedSolvers) {
  EXPECT_EQ(prox_solver(NonlinearityKind::relu, Loss::frobenius), &prox_relu_frobenius);
  EXPECT_EQ(prox_solver(NonlinearityKind::relu, Loss::kl), &prox_relu_kl);
  EXPECT_EQ(prox_solver(NonlinearityKind::csf, Loss::l1), &prox_csf_l1);
  EXPECT_EQ(prox_solver(NonlinearityKind::minmax, Loss::kl), &prox_minmax_kl);
  EXPECT_EQ(prox_solver(NonlinearityKind::modulus, Loss::l1), &prox_modulus_l1);
}

TEST(ProxDispatch, NonpositiveRhoThrows) {
  EXPECT_THROW(prox_relu_frobenius(sub(1, 0, 0, 0)), DomainError);
  EXPECT_THROW(missing_entry_update(1, 0, 0), DomainError);
}

// --- missing entries and update_T -------------------------------------------

TEST(MissingEntryUpdate, Examples) {
  EXPECT_EQ(missing_entry_update(3, 0, 1), 3.0);
  EXPECT_EQ(missing_entry_update(0, 2, 2), -1.0);
  EXPECT_EQ(missing_entry_update(1.5, -0.5, 4), 1.625);
}

TEST(UpdateT, FullMaskIsBitwiseIdentical) {
  Rng rng(31);
  for (const ModelSpec& spec : all_specs({0.5, 1.0})) {
    DenseMatrix X(5, 5), A(5, 5), L(5, 5);
    for (double& v : X.values()) v = spec.kind() == NonlinearityKind::minmax ? rng.uniform(0.5, 1) : rng.uniform(0, 3);
    for (double& v : A.values()) v = rng.normal();
    for (double& v : L.values()) v = rng.normal();
    const ObservationMask full(5, 5, true);
    EXPECT_EQ(update_T(spec, X, A, L, 0.7, &full), update_T(spec, X, A, L, 0.7));
  }
}

TEST(UpdateT, DiagonalReluExample) {
  const ModelSpec spec = make_spec(NonlinearityKind::relu, Loss::frobenius);
  const DenseMatrix X = DenseMatrix::from_rows({{1, 0}, {0, 1}});
  EXPECT_EQ(update_T(spec, X, X, DenseMatrix(2, 2), 1.0), X);
}

TEST(UpdateT, EntriesMatchScalarCalls) {
  Rng rng(32);
  for (const ModelSpec& spec : all_specs({0.5, 1.0})) {
    DenseMatrix X(5, 5), A(5, 5), L(5, 5);
    for (double& v : X.values()) v = spec.kind() == NonlinearityKind::minmax ? rng.uniform(0.5, 1) : rng.uniform(0, 3);
    for (double& v : A.values()) v = rng.normal();
    for (double& v : L.values()) v = rng.normal();
    ObservationMask mask(5, 5, true);
    for (std::size_t k = 0; k < 25; k += 3) mask.set(k, false);
    const DenseMatrix T = update_T(spec, X, A, L, 2.5, &mask);
    const ProxFn fn = prox_solver(spec.kind(), spec.loss);
    for (std::size_t k = 0; k < 25; ++k) {
      const double expected =
          mask.observed(k)
              ? fn({X[k], A[k], L[k], 2.5, spec.nonlinearity.bounds}).t
              : missing_entry_update(A[k], L[k], 2.5);
      EXPECT_EQ(T[k], expected) << spec.name() << " entry " << k;
    }
  }
}

TEST(UpdateT, ShapeMismatchThrows) {
  const ModelSpec spec = make_spec(NonlinearityKind::relu, Loss::frobenius);
  EXPECT_THROW(update_T(spec, DenseMatrix(2, 2), DenseMatrix(2, 3), DenseMatrix(2, 2), 1.0),
               ShapeError);
}
