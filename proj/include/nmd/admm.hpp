#ifndef NMD_ADMM_HPP_
#define NMD_ADMM_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nmd/dense_matrix.hpp"
#include "nmd/error.hpp"
#include "nmd/linalg.hpp"
#include "nmd/mask.hpp"
#include "nmd/models.hpp"
#include "nmd/prox.hpp"
#include "nmd/random.hpp"

namespace nmd {

enum class InitMode { svd, random };

inline std::string_view to_string(InitMode m) {
  return m == InitMode::svd ? "svd" : "random";
}

inline std::optional<InitMode> parse_init_mode(std::string_view s) {
  if (s == "svd") return InitMode::svd;
  if (s == "random") return InitMode::random;
  return std::nullopt;
}

struct SolverConfig {
  std::size_t rank = 1;
  double rho0 = 1.0;
  bool adaptive = true;
  double mu = 10.0;
  double tau_incr = 2.0;
  double tau_decr = 2.0;
  double ridge_factor = 1e-6;  // eps_W = ridge_factor * ||H||_F^2
  double rho_min = 1e-6;
  double rho_max = 1e6;
  std::size_t max_iter = 100;
  double max_seconds = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 0;
  InitMode init_mode = InitMode::svd;

  /// Throws ConfigError on inconsistent constants; ShapeError when the rank
  /// does not fit an m x n problem.
  void validate(std::size_t m, std::size_t n) const {
    if (rank < 1 || rank > std::min(m, n)) {
      throw ShapeError("rank " + std::to_string(rank) + " out of range for " +
                       std::to_string(m) + "x" + std::to_string(n) + " data");
    }
    validate_constants();
  }

  void validate_constants() const {
    auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (!positive(rho_min) || !positive(rho_max) || rho_min > rho_max)
      throw ConfigError("need 0 < rho_min <= rho_max");
    if (!(rho0 >= rho_min && rho0 <= rho_max))
      throw ConfigError("rho0 must lie in [rho_min, rho_max]");
    if (!(mu > 1.0) || !std::isfinite(mu)) throw ConfigError("mu must be > 1");
    if (!(tau_incr > 1.0) || !(tau_decr > 1.0) || !std::isfinite(tau_incr) ||
        !std::isfinite(tau_decr))
      throw ConfigError("tau_incr and tau_decr must be > 1");
    if (!(ridge_factor >= 0.0) || !std::isfinite(ridge_factor))
      throw ConfigError("ridge_factor must be >= 0");
    if (!(max_seconds >= 0.0)) throw ConfigError("max_seconds must be >= 0");
  }
};

struct SolverState {
  DenseMatrix W;       // m x r
  DenseMatrix H;       // r x n
  DenseMatrix T;       // m x n
  DenseMatrix T_prev;  // T before the latest T-update
  DenseMatrix Lambda;  // m x n
  double rho = 1.0;
  std::size_t iter = 0;
  double elapsed = 0.0;
};

struct Residuals {
  double primal = 0.0;  // ||T - WH||_F
  double dual = 0.0;    // rho ||W^T (T - T_prev)||_F
};

struct IterationRecord {
  std::size_t iter = 0;
  double elapsed = 0.0;
  double objective = 0.0;
  double primal_res = 0.0;
  double dual_res = 0.0;
  double rho = 0.0;

  friend bool operator==(const IterationRecord&,
                         const IterationRecord&) = default;
};

using RecordSink = std::function<void(const IterationRecord&)>;

struct SolveResult {
  SolverState state;
  std::vector<IterationRecord> records;
  bool stopped_by_time = false;

  const DenseMatrix& W() const { return state.W; }
  const DenseMatrix& H() const { return state.H; }
};

namespace detail {

inline void check_mask_shape(const DenseMatrix& X, const ObservationMask* mask,
                             const char* where) {
  if (mask != nullptr &&
      (mask->rows() != X.rows() || mask->cols() != X.cols())) {
    throw ShapeError(std::string(where) + ": mask shape does not match data");
  }
}

inline double ridge_eps(double ridge_factor, const DenseMatrix& factor) {
  const double nrm = frobenius_norm(factor);
  if (nrm == 0.0) return 1e-12;
  return ridge_factor * nrm * nrm;
}

// T + Lambda / rho
inline DenseMatrix shifted_target(const SolverState& s) {
  DenseMatrix M = s.T;
  const double inv = 1.0 / s.rho;
  for (std::size_t k = 0; k < M.size(); ++k) M[k] += inv * s.Lambda[k];
  return M;
}

}  // namespace detail

/// Initial state: T = X (sqrt(X) for CSF), unobserved entries zeroed;
/// factors from the rank-r SVD of T (W = U sqrt(S), H = sqrt(S) V^T) or
/// seeded Gaussians rescaled so that ||WH||_F = ||T||_F; Lambda = 0.
inline SolverState init_state(const ModelSpec& spec, const DenseMatrix& X,
                              const SolverConfig& cfg,
                              const ObservationMask* mask = nullptr) {
  detail::check_mask_shape(X, mask, "init_state");
  cfg.validate(X.rows(), X.cols());
  const std::size_t m = X.rows();
  const std::size_t n = X.cols();
  const std::size_t r = cfg.rank;

  SolverState s;
  s.T = X;
  for (std::size_t k = 0; k < X.size(); ++k) {
    if (mask != nullptr && !mask->observed(k)) {
      s.T[k] = 0.0;
      continue;
    }
    if (spec.kind() == NonlinearityKind::csf) {
      if (X[k] < 0.0) throw DomainError("csf initialization needs X >= 0");
      s.T[k] = std::sqrt(X[k]);
    }
  }

  if (cfg.init_mode == InitMode::svd) {
    const SvdFactors f = truncated_svd(s.T, r, cfg.seed);
    s.W = DenseMatrix(m, r);
    s.H = DenseMatrix(r, n);
    for (std::size_t c = 0; c < r; ++c) {
      const double root = std::sqrt(f.S[c]);
      for (std::size_t i = 0; i < m; ++i) s.W(i, c) = f.U(i, c) * root;
      for (std::size_t j = 0; j < n; ++j) s.H(c, j) = root * f.V(j, c);
    }
  } else {
    Rng rng(cfg.seed);
    s.W = DenseMatrix(m, r);
    s.H = DenseMatrix(r, n);
    for (double& v : s.W.values()) v = rng.normal();
    for (double& v : s.H.values()) v = rng.normal();
    const double target = frobenius_norm(s.T);
    const double current = frobenius_norm(matmul(s.W, s.H));
    if (target > 0.0 && current > 0.0) {
      const double scale = std::sqrt(target / current);
      s.W *= scale;
      s.H *= scale;
    }
  }

  s.T_prev = s.T;
  s.Lambda = DenseMatrix(m, n, 0.0);
  s.rho = cfg.rho0;
  return s;
}

/// W = (T + Lambda/rho) H^T (H H^T + eps_W I)^-1.
inline DenseMatrix update_W(const SolverState& s, const SolverConfig& cfg) {
  return ridge_solve_right(detail::shifted_target(s), s.H,
                           detail::ridge_eps(cfg.ridge_factor, s.H));
}

/// H = (W^T W + eps_H I)^-1 W^T (T + Lambda/rho), using the current W.
inline DenseMatrix update_H(const SolverState& s, const SolverConfig& cfg) {
  return ridge_solve_left(s.W, detail::shifted_target(s),
                          detail::ridge_eps(cfg.ridge_factor, s.W));
}

/// Lambda + rho (T - WH).
inline DenseMatrix update_dual(const SolverState& s) {
  const DenseMatrix WH = matmul(s.W, s.H);
  DenseMatrix L = s.Lambda;
  for (std::size_t k = 0; k < L.size(); ++k) L[k] += s.rho * (s.T[k] - WH[k]);
  return L;
}

inline Residuals compute_residuals(const SolverState& s) {
  Residuals res;
  res.primal = frobenius_norm(s.T - matmul(s.W, s.H));
  res.dual = s.rho * frobenius_norm(matmul_tn(s.W, s.T - s.T_prev));
  return res;
}

inline double adapt_rho(const Residuals& res, double rho,
                        const SolverConfig& cfg) {
  if (!cfg.adaptive) return rho;
  double next = rho;
  if (res.primal > cfg.mu * res.dual) {
    next = rho * cfg.tau_incr;
  } else if (res.dual > cfg.mu * res.primal) {
    next = rho / cfg.tau_decr;
  }
  return std::clamp(next, cfg.rho_min, cfg.rho_max);
}

/// One full sweep W -> H -> T -> Lambda, followed by the residuals and the
/// penalty update. Increments s.iter.
inline Residuals admm_step(const ModelSpec& spec, const DenseMatrix& X,
                           const SolverConfig& cfg, SolverState& s,
                           const ObservationMask* mask = nullptr) {
  s.W = update_W(s, cfg);
  s.H = update_H(s, cfg);
  s.T_prev = s.T;
  s.T = update_T(spec, X, matmul(s.W, s.H), s.Lambda, s.rho, mask);
  s.Lambda = update_dual(s);
  const Residuals res = compute_residuals(s);
  s.rho = adapt_rho(res, s.rho, cfg);
  ++s.iter;
  return res;
}

namespace detail {

inline void check_finite(const SolverState& s, const Residuals& res) {
  auto fail = [&](const char* what) {
    throw DivergenceError(std::string("non-finite entry in ") + what, s.iter);
  };
  if (!s.W.all_finite()) fail("W");
  if (!s.H.all_finite()) fail("H");
  if (!s.T.all_finite()) fail("T");
  if (!s.Lambda.all_finite()) fail("Lambda");
  if (!std::isfinite(res.primal) || !std::isfinite(res.dual))
    fail("residuals");
}

}  // namespace detail

/// Runs ADMM from init_state until max_iter iterations or max_seconds of
/// wall time (checked once per iteration). In completion mode only masked-in
/// entries of X are used. Each record's objective is relative_objective of
/// WH, taken after the dual update.
inline SolveResult run(const ModelSpec& spec, const DenseMatrix& X,
                       const SolverConfig& cfg,
                       const ObservationMask* mask = nullptr,
                       const RecordSink& sink = {}) {
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  auto seconds_since_start = [&] {
    return std::chrono::duration<double>(Clock::now() - start).count();
  };

  detail::check_mask_shape(X, mask, "run");
  if (mask != nullptr) mask->require_nonempty("run");
  validate_data(spec, X, mask);

  SolveResult out;
  out.state = init_state(spec, X, cfg, mask);
  SolverState& s = out.state;
  out.records.reserve(std::min<std::size_t>(cfg.max_iter, 100000));

  while (s.iter < cfg.max_iter) {
    if (seconds_since_start() >= cfg.max_seconds) {
      out.stopped_by_time = true;
      break;
    }
    const Residuals res = admm_step(spec, X, cfg, s, mask);
    detail::check_finite(s, res);
    IterationRecord rec;
    rec.iter = s.iter;
    rec.objective = relative_objective(spec, X, matmul(s.W, s.H), mask);
    rec.primal_res = res.primal;
    rec.dual_res = res.dual;
    rec.rho = s.rho;
    // Under KL the objective of f(WH) is +inf while some f(WH)_ij = 0 < x_ij;
    // that is not divergence, T itself stays finite.
    rec.elapsed = seconds_since_start();
    s.elapsed = rec.elapsed;
    out.records.push_back(rec);
    if (sink) sink(rec);
  }
  s.elapsed = seconds_since_start();
  return out;
}

}  // namespace nmd

#endif  // NMD_ADMM_HPP_
