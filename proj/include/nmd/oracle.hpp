#ifndef NMD_ORACLE_HPP_
#define NMD_ORACLE_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "nmd/admm.hpp"
#include "nmd/dense_matrix.hpp"
#include "nmd/error.hpp"
#include "nmd/linalg.hpp"
#include "nmd/models.hpp"
#include "nmd/prox.hpp"
#include "nmd/random.hpp"

namespace nmd {

/// Brute-force search window and resolution.
struct OracleSpec {
  double lo = -20.0;
  double hi = 20.0;
  std::size_t grid_points = 200000;
  double refine_tol = 1e-12;

  void validate() const {
    if (!(lo < hi)) throw ConfigError("oracle: need lo < hi");
    if (grid_points < 1000) throw ConfigError("oracle: grid_points < 1000");
    if (!(refine_tol > 0.0)) throw ConfigError("oracle: refine_tol must be > 0");
  }
};

namespace detail {

// The oracle evaluates the objective from the definitions only; it shares
// nothing with the closed-form solvers.
struct OracleObjective {
  Nonlinearity f;
  Loss loss;
  ScalarSubproblem s;

  double operator()(double t) const {
    const double y = f(t);
    double data = 0.0;
    switch (loss) {
      case Loss::frobenius: data = 0.5 * (s.x - y) * (s.x - y); break;
      case Loss::l1: data = std::abs(s.x - y); break;
      case Loss::kl:
        if (s.x == 0.0) {
          data = y;
        } else if (y <= 0.0) {
          return std::numeric_limits<double>::infinity();
        } else {
          data = s.x * std::log(s.x / y) - s.x + y;
        }
        break;
    }
    return data + s.lambda * t + 0.5 * s.rho * (t - s.a) * (t - s.a);
  }
};

inline ProxResult golden_section(const OracleObjective& g, double lo, double hi,
                                 double tol) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - inv_phi * (hi - lo);
  double d = lo + inv_phi * (hi - lo);
  double gc = g(c);
  double gd = g(d);
  for (int it = 0; it < 300 && hi - lo > tol; ++it) {
    if (gc <= gd) {
      hi = d;
      d = c;
      gd = gc;
      c = hi - inv_phi * (hi - lo);
      gc = g(c);
    } else {
      lo = c;
      c = d;
      gc = gd;
      d = lo + inv_phi * (hi - lo);
      gd = g(d);
    }
  }
  return gc <= gd ? ProxResult{c, gc, {}} : ProxResult{d, gd, {}};
}

}  // namespace detail

/// Widens the default window so that it contains every minimizer of the
/// subproblem (the objective is coercive; beyond this radius the penalty
/// dominates).
inline OracleSpec oracle_window(const ScalarSubproblem& s,
                                OracleSpec base = {}) {
  const double radius = std::abs(s.a) + (std::abs(s.lambda) + 1.0) / s.rho +
                        std::sqrt(std::max(s.x, 1.0)) + 5.0;
  base.lo = std::min(base.lo, -radius);
  base.hi = std::max(base.hi, radius);
  if (s.bounds) {
    base.lo = std::min(base.lo, s.bounds->lower - 5.0);
    base.hi = std::max(base.hi, s.bounds->upper + 5.0);
  }
  return base;
}

/// Uniform grid over [lo, hi] followed by golden-section refinement of the
/// best bracket. Returns the better of the grid point and the refined point.
inline ProxResult scalar_oracle(const ModelSpec& spec, ScalarSubproblem s,
                                const OracleSpec& o = {}) {
  o.validate();
  if (spec.kind() == NonlinearityKind::minmax && !s.bounds) {
    s.bounds = spec.nonlinearity.bounds;
  }
  Nonlinearity f = spec.nonlinearity;
  if (f.kind == NonlinearityKind::minmax) f.bounds = s.bounds;
  const detail::OracleObjective g{f, spec.loss, s};

  const std::size_t n = o.grid_points;
  const double step = (o.hi - o.lo) / static_cast<double>(n - 1);
  std::size_t best_k = n;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    const double t = o.lo + step * static_cast<double>(k);
    const double v = g(t);
    if (v < best) {
      best = v;
      best_k = k;
    }
  }
  if (best_k == n) {
    throw DomainError("scalar_oracle: objective infinite on the whole grid");
  }
  const double t_best = o.lo + step * static_cast<double>(best_k);
  const double left = best_k == 0 ? t_best : t_best - step;
  const double right = best_k + 1 == n ? t_best : t_best + step;
  ProxResult out{t_best, best, {}};
  const ProxResult refined =
      detail::golden_section(g, left, right, o.refine_tol);
  if (refined.objective < out.objective) out = refined;
  return out;
}

/// Draws a subproblem from the model's valid domain: a, lambda uniform on
/// [-5, 5], rho from {0.1, 1, 10}, x >= 0 with exact zeros one time in five.
/// MinMax bounds alternate between [0, 1] and [0.5, 1]; for MinMax+KL the
/// [0, 1] interval forces x = 0.
inline ScalarSubproblem draw_subproblem(const ModelSpec& spec, Rng& rng) {
  static constexpr double kRhos[] = {0.1, 1.0, 10.0};
  ScalarSubproblem s;
  s.a = rng.uniform(-5.0, 5.0);
  s.lambda = rng.uniform(-5.0, 5.0);
  s.rho = kRhos[rng.index(3)];
  if (spec.kind() == NonlinearityKind::minmax) {
    const bool zero_lower = rng.index(2) == 0;
    s.bounds = zero_lower ? Bounds{0.0, 1.0} : Bounds{0.5, 1.0};
    if (spec.loss == Loss::kl && zero_lower) {
      s.x = 0.0;
    } else {
      s.x = rng.uniform(s.bounds->lower, s.bounds->upper);
    }
  } else {
    s.x = rng.index(5) == 0 ? 0.0 : rng.uniform(0.0, 5.0);
  }
  return s;
}

struct BatchRow {
  std::size_t instance = 0;
  ScalarSubproblem problem;
  ProxResult closed_form;
  ProxResult oracle;
  double gap = 0.0;  // closed-form objective minus oracle objective
};

struct BatchReport {
  std::string model;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  double tolerance = 1e-6;
  double max_gap = -std::numeric_limits<double>::infinity();
  double mean_gap = 0.0;
  std::vector<BatchRow> rows;
  std::vector<std::size_t> violations;  // indices into rows

  bool passed() const { return violations.empty(); }
};

/// Runs the closed-form solver and the oracle on n seeded subproblems.
inline BatchReport check_prox_batch(const ModelSpec& spec, std::size_t n,
                                    std::uint64_t seed,
                                    const OracleSpec& base = {}) {
  if (n < 1) throw ConfigError("check_prox_batch: n must be >= 1");
  Rng rng(seed);
  BatchReport rep;
  rep.model = spec.name();
  rep.n = n;
  rep.seed = seed;
  rep.rows.reserve(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    BatchRow row;
    row.instance = i;
    row.problem = draw_subproblem(spec, rng);
    row.closed_form = solve_prox(spec, row.problem);
    row.oracle =
        scalar_oracle(spec, row.problem, oracle_window(row.problem, base));
    row.gap = row.closed_form.objective - row.oracle.objective;
    rep.max_gap = std::max(rep.max_gap, row.gap);
    sum += row.gap;
    if (!(row.gap <= rep.tolerance)) rep.violations.push_back(i);
    rep.rows.push_back(row);
  }
  rep.mean_gap = sum / static_cast<double>(n);
  return rep;
}

inline void write_report_text(std::ostream& os, const BatchReport& rep) {
  os.precision(6);
  os << rep.model << ": n=" << rep.n << " seed=" << rep.seed
     << " max_gap=" << std::scientific << rep.max_gap
     << " mean_gap=" << rep.mean_gap << std::defaultfloat
     << " violations=" << rep.violations.size()
     << (rep.passed() ? " PASS" : " FAIL") << '\n';
  os.precision(17);
  for (std::size_t v : rep.violations) {
    const BatchRow& r = rep.rows[v];
    os << "  instance " << r.instance << ": x=" << r.problem.x
       << " a=" << r.problem.a << " lambda=" << r.problem.lambda
       << " rho=" << r.problem.rho << " t=" << r.closed_form.t
       << " oracle_t=" << r.oracle.t << " gap=" << r.gap << '\n';
  }
}

inline void write_report_csv(std::ostream& os, const BatchReport& rep,
                             bool header = true) {
  if (header) {
    os << "model,instance,x,a,lambda,rho,lower,upper,t,objective,branch,"
          "oracle_t,oracle_objective,gap\n";
  }
  os.precision(17);
  for (const BatchRow& r : rep.rows) {
    const auto& p = r.problem;
    os << rep.model << ',' << r.instance << ',' << p.x << ',' << p.a << ','
       << p.lambda << ',' << p.rho << ',';
    if (p.bounds) {
      os << p.bounds->lower << ',' << p.bounds->upper;
    } else {
      os << ',';
    }
    os << ',' << r.closed_form.t << ',' << r.closed_form.objective << ','
       << r.closed_form.branch << ',' << r.oracle.t << ','
       << r.oracle.objective << ',' << r.gap << '\n';
  }
}

// ---------------------------------------------------------------------------
// Augmented-Lagrangian probes on small instances.

/// Largest decrease of the entry term d(x, f(t)) + lambda t + (rho/2)(t-a)^2
/// (a from the current W, H) obtained by moving `probes` random entries of T
/// by +-delta. A T that attains every scalar minimum gives <= 0.
inline double probe_T_optimality(const ModelSpec& spec, const DenseMatrix& X,
                                 const SolverState& s, std::size_t probes,
                                 double delta, Rng& rng,
                                 const ObservationMask* mask = nullptr) {
  const DenseMatrix A = matmul(s.W, s.H);
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < probes; ++p) {
    const std::size_t k = rng.index(X.size());
    ScalarSubproblem sub{X[k], A[k], s.Lambda[k], s.rho,
                         spec.nonlinearity.bounds};
    const detail::OracleObjective g{spec.nonlinearity, spec.loss, sub};
    const bool has_data = mask == nullptr || mask->observed(k);
    auto entry_term = [&](double t) {
      if (has_data) return g(t);
      return sub.lambda * t + 0.5 * sub.rho * (t - sub.a) * (t - sub.a);
    };
    const double base = entry_term(s.T[k]);
    worst = std::max({worst, base - entry_term(s.T[k] + delta),
                      base - entry_term(s.T[k] - delta)});
  }
  return worst;
}

/// Largest decrease of ||M - W H||_F^2 + eps ||F||_F^2, F the factor being
/// probed, over +-delta moves of every entry of F. M = T + Lambda/rho.
inline double probe_factor_optimality(const DenseMatrix& M,
                                      const DenseMatrix& W,
                                      const DenseMatrix& H, double eps,
                                      bool probe_W, double delta) {
  auto subobjective = [&](const DenseMatrix& Wc, const DenseMatrix& Hc) {
    const DenseMatrix R = M - matmul(Wc, Hc);
    const double nr = frobenius_norm(R);
    const double nf = frobenius_norm(probe_W ? Wc : Hc);
    return nr * nr + eps * nf * nf;
  };
  const double base = subobjective(W, H);
  double worst = -std::numeric_limits<double>::infinity();
  DenseMatrix Wc = W;
  DenseMatrix Hc = H;
  DenseMatrix& F = probe_W ? Wc : Hc;
  for (std::size_t k = 0; k < F.size(); ++k) {
    const double keep = F[k];
    for (double sign : {1.0, -1.0}) {
      F[k] = keep + sign * delta;
      worst = std::max(worst, base - subobjective(Wc, Hc));
    }
    F[k] = keep;
  }
  return worst;
}

}  // namespace nmd

#endif  // NMD_ORACLE_HPP_
