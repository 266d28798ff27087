#include <gtest/gtest.h>

#include <sstream>

#include "nmd/oracle.hpp"

using namespace nmd;

namespace {

std::vector<ModelSpec> all_specs() {
  std::vector<ModelSpec> out;
  for (auto k : kAllNonlinearities)
    for (auto l : kAllLosses)
      out.push_back(make_spec(k, l, k == NonlinearityKind::minmax
                                        ? std::optional<Bounds>(Bounds{0, 1})
                                        : std::nullopt));
  return out;
}

}  // namespace

TEST(ScalarOracle, ExactFitRelu) {
  const ProxResult r = scalar_oracle(make_spec(NonlinearityKind::relu, Loss::frobenius),
                                     {1, 1, 0, 1, std::nullopt});
  EXPECT_NEAR(r.t, 1.0, 1e-6);
  EXPECT_LT(r.objective, 1e-10);
}

TEST(ScalarOracle, ModulusTieValue) {
  const ProxResult r = scalar_oracle(make_spec(NonlinearityKind::modulus, Loss::frobenius),
                                     {1, 0, 0, 1, std::nullopt});
  EXPECT_NEAR(r.objective, 0.25, 1e-9);
  EXPECT_NEAR(std::abs(r.t), 0.5, 1e-6);
}

TEST(ScalarOracle, ExactFitCsf) {
  const ProxResult r = scalar_oracle(make_spec(NonlinearityKind::csf, Loss::frobenius),
                                     {4, 2, 0, 2, std::nullopt});
  EXPECT_NEAR(r.t, 2.0, 1e-6);
}

TEST(ScalarOracle, InfiniteEverywhereThrows) {
  OracleSpec o;
  o.lo = -10;
  o.hi = -1;
  EXPECT_THROW(scalar_oracle(make_spec(NonlinearityKind::relu, Loss::kl),
                             {1, 0, 0, 1, std::nullopt}, o),
               DomainError);
}

TEST(ScalarOracle, SpecValidation) {
  OracleSpec o;
  o.grid_points = 999;
  EXPECT_THROW(o.validate(), ConfigError);
  o = {};
  o.lo = 1;
  o.hi = 1;
  EXPECT_THROW(o.validate(), ConfigError);
}

TEST(ScalarOracle, WindowCoversLargeInstances) {
  const ScalarSubproblem s{2, 30, -4, 0.1, std::nullopt};
  const OracleSpec w = oracle_window(s);
  EXPECT_LE(w.lo, -(30 + 5 / 0.1 + std::sqrt(2.0) + 5));
  EXPECT_GE(w.hi, 30 + 5 / 0.1 + std::sqrt(2.0) + 5);
  const OracleSpec small = oracle_window({0, 0, 0, 1, std::nullopt});
  EXPECT_EQ(small.lo, -20);
  EXPECT_EQ(small.hi, 20);
}

TEST(ScalarOracle, ObjectiveAgreesWithSolverObjective) {
  // Two independent evaluations of the same definition.
  Rng rng(3);
  for (const ModelSpec& spec : all_specs()) {
    for (int i = 0; i < 500; ++i) {
      ScalarSubproblem s = draw_subproblem(spec, rng);
      ModelSpec local = spec;
      if (s.bounds) local.nonlinearity.bounds = s.bounds;
      const detail::OracleObjective g{local.nonlinearity, local.loss, s};
      const double t = rng.uniform(-6, 6);
      const double a = g(t);
      const double b = scalar_objective(local, s, t);
      if (std::isinf(a) || std::isinf(b)) {
        EXPECT_EQ(a, b) << spec.name();
      } else {
        EXPECT_NEAR(a, b, 1e-12 * (1 + std::abs(a))) << spec.name();
      }
    }
  }
}

TEST(CheckProxBatch, AllModelsWithinTolerance) {
  for (const ModelSpec& spec : all_specs()) {
    const BatchReport rep = check_prox_batch(spec, 200, 99);
    EXPECT_TRUE(rep.passed()) << spec.name() << " max_gap=" << rep.max_gap;
    EXPECT_LE(rep.max_gap, 1e-6);
    EXPECT_EQ(rep.rows.size(), 200u);
  }
}

TEST(CheckProxBatch, ExactFitGapTiny) {
  for (const ModelSpec& spec : all_specs()) {
    ScalarSubproblem s{0, 0.75, 0, 1, spec.nonlinearity.bounds};
    if (spec.kind() == NonlinearityKind::minmax && spec.loss == Loss::kl)
      s.bounds = Bounds{0.5, 1};
    s.x = spec.kind() == NonlinearityKind::minmax ? 0.75 : spec.nonlinearity(0.75);
    const double gap = solve_prox(spec, s).objective -
                       scalar_oracle(spec, s, oracle_window(s)).objective;
    EXPECT_LE(gap, 1e-12) << spec.name();
  }
}

TEST(CheckProxBatch, Deterministic) {
  const ModelSpec spec = make_spec(NonlinearityKind::csf, Loss::l1);
  const BatchReport a = check_prox_batch(spec, 50, 4);
  const BatchReport b = check_prox_batch(spec, 50, 4);
  std::ostringstream ta, tb, ca, cb;
  write_report_text(ta, a);
  write_report_text(tb, b);
  write_report_csv(ca, a);
  write_report_csv(cb, b);
  EXPECT_EQ(ta.str(), tb.str());
  EXPECT_EQ(ca.str(), cb.str());
}

TEST(CheckProxBatch, ZeroInstancesRejected) {
  EXPECT_THROW(check_prox_batch(make_spec(NonlinearityKind::relu, Loss::l1), 0, 1),
               ConfigError);
}

TEST(CheckProxBatch, ReportFormats) {
  const BatchReport rep = check_prox_batch(
      make_spec(NonlinearityKind::minmax, Loss::l1, Bounds{0, 1}), 3, 2);
  std::ostringstream text, csv;
  write_report_text(text, rep);
  write_report_csv(csv, rep);
  EXPECT_EQ(text.str().rfind("minmax+l1: n=3 seed=2", 0), 0u);
  EXPECT_NE(text.str().find("PASS"), std::string::npos);
  std::string header;
  std::istringstream in(csv.str());
  std::getline(in, header);
  EXPECT_EQ(header,
            "model,instance,x,a,lambda,rho,lower,upper,t,objective,branch,oracle_t,"
            "oracle_objective,gap");
  int lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  EXPECT_EQ(lines, 3);
}

TEST(ScalarOracle, FinerGridDoesNotImproveMuch) {
  OracleSpec fine;
  fine.grid_points = 400000;
  for (const ModelSpec& spec : all_specs()) {
    Rng rng(17);
    for (int i = 0; i < 40; ++i) {
      const ScalarSubproblem s = draw_subproblem(spec, rng);
      const double coarse = scalar_oracle(spec, s, oracle_window(s)).objective;
      const double finer = scalar_oracle(spec, s, oracle_window(s, fine)).objective;
      EXPECT_GE(finer, coarse - 1e-6) << spec.name();
    }
  }
}
