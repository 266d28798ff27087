#ifndef NMD_PROX_HPP_
#define NMD_PROX_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string_view>

#include "nmd/cubic.hpp"
#include "nmd/dense_matrix.hpp"
#include "nmd/error.hpp"
#include "nmd/mask.hpp"
#include "nmd/models.hpp"

namespace nmd {

/// One entrywise T-update:
///   minimize_t  d(x, f(t)) + lambda t + (rho/2)(t - a)^2
/// where x = X_ij, a = (WH)_ij, lambda = Lambda_ij. The Frobenius data term
/// is the halved square (x - f(t))^2 / 2.
struct ScalarSubproblem {
  double x = 0.0;
  double a = 0.0;
  double lambda = 0.0;
  double rho = 1.0;
  std::optional<Bounds> bounds;  // MinMax only

  /// rho a - lambda; every closed form is written in terms of it.
  double shift() const { return rho * a - lambda; }
};

struct ProxResult {
  double t = 0.0;
  double objective = 0.0;
  /// Region of the piecewise objective that contains t (see branch names
  /// below), used for diagnostics and tests.
  std::string_view branch;
};

namespace branch {
inline constexpr std::string_view kPositive = "positive";        // t > 0
inline constexpr std::string_view kNonpositive = "nonpositive";  // t <= 0
inline constexpr std::string_view kZero = "zero";                // t == 0
inline constexpr std::string_view kStationary = "stationary";    // smooth g
inline constexpr std::string_view kPositiveRoot = "positive-root";
inline constexpr std::string_view kNegativeRoot = "negative-root";
inline constexpr std::string_view kInner = "inner";  // t^2 <= x
inline constexpr std::string_view kOuter = "outer";  // t^2 >= x
inline constexpr std::string_view kKink = "kink";    // t == +-sqrt(x)
inline constexpr std::string_view kBelow = "below";  // t < lower
inline constexpr std::string_view kAbove = "above";  // t > upper
inline constexpr std::string_view kInterior = "interior";
inline constexpr std::string_view kLowerBound = "lower-bound";
inline constexpr std::string_view kUpperBound = "upper-bound";
inline constexpr std::string_view kDataKink = "data-kink";  // f(t) == x
}  // namespace branch

namespace detail {

inline double penalty(const ScalarSubproblem& s, double t) {
  const double d = t - s.a;
  return s.lambda * t + 0.5 * s.rho * d * d;
}

template <Loss L>
inline double data_term(double x, double y) {
  if constexpr (L == Loss::frobenius) {
    return 0.5 * (x - y) * (x - y);
  } else if constexpr (L == Loss::l1) {
    return std::abs(x - y);
  } else {
    return kl_unchecked(x, y);
  }
}

template <NonlinearityKind K>
inline double apply(const ScalarSubproblem& s, double t) {
  if constexpr (K == NonlinearityKind::relu) {
    return t > 0.0 ? t : 0.0;
  } else if constexpr (K == NonlinearityKind::csf) {
    return t * t;
  } else if constexpr (K == NonlinearityKind::minmax) {
    return std::min(s.bounds->upper, std::max(s.bounds->lower, t));
  } else {
    return std::abs(t);
  }
}

template <NonlinearityKind K, Loss L>
inline double objective(const ScalarSubproblem& s, double t) {
  return data_term<L>(s.x, apply<K>(s, t)) + penalty(s, t);
}

/// Positive root of rho t^2 + b t - c = 0 for c > 0, without cancellation.
inline double positive_root(double rho, double b, double c) {
  const double root = std::sqrt(b * b + 4.0 * rho * c);
  return b >= 0.0 ? 2.0 * c / (b + root) : (root - b) / (2.0 * rho);
}

/// Minimizer of |x - t| + lambda t + (rho/2)(t - a)^2 over all t.
inline double l1_prox(double x, double s, double rho) {
  return std::max(std::min((s + 1.0) / rho, x), (s - 1.0) / rho);
}

/// Up to eight candidate points; `select` returns the best one under the
/// true objective. Ties (relative 1e-12) go to the larger t.
class Candidates {
 public:
  void add(double t, std::string_view branch) {
    if (std::isfinite(t) && count_ < items_.size()) items_[count_++] = {t, branch};
  }
  void add_if(bool feasible, double t, std::string_view branch) {
    if (feasible) add(t, branch);
  }

  template <class Objective>
  ProxResult select(Objective&& g) const {
    ProxResult best{0.0, std::numeric_limits<double>::infinity(), {}};
    bool have = false;
    for (std::size_t i = 0; i < count_; ++i) {
      const auto& [t, label] = items_[i];
      const double v = g(t);
      if (!std::isfinite(v)) continue;
      if (!have) {
        best = {t, v, label};
        have = true;
        continue;
      }
      const double tol = 1e-12 * (1.0 + std::abs(best.objective));
      if (v < best.objective - tol) {
        best = {t, v, label};
      } else if (v <= best.objective + tol && t > best.t) {
        best = {t, std::min(v, best.objective), label};
      }
    }
    if (!have) throw DomainError("prox: no candidate with finite objective");
    return best;
  }

 private:
  struct Entry {
    double t;
    std::string_view branch;
  };
  std::array<Entry, 8> items_{};
  std::size_t count_ = 0;
};

inline const Bounds& require_bounds(const ScalarSubproblem& s) {
  if (!s.bounds) throw ConfigError("minmax prox requires bounds");
  if (!(s.bounds->lower < s.bounds->upper))
    throw ConfigError("minmax prox requires lower < upper");
  return *s.bounds;
}

inline void require_rho(const ScalarSubproblem& s) {
  if (!(s.rho > 0.0)) throw DomainError("prox: rho must be positive");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// ReLU: f(t) = max(0, t)

inline ProxResult prox_relu_frobenius(const ScalarSubproblem& s) {
  detail::require_rho(s);
  const double sh = s.shift();
  detail::Candidates c;
  const double t_pos = (s.x + sh) / (s.rho + 1.0);
  const double t_neg = sh / s.rho;
  c.add_if(t_pos > 0.0, t_pos, branch::kPositive);
  c.add_if(t_neg <= 0.0, t_neg, branch::kNonpositive);
  c.add(0.0, branch::kZero);
  return c.select([&](double t) {
    return detail::objective<NonlinearityKind::relu, Loss::frobenius>(s, t);
  });
}

inline ProxResult prox_relu_kl(const ScalarSubproblem& s) {
  detail::require_rho(s);
  const double sh = s.shift();
  detail::Candidates c;
  if (s.x > 0.0) {
    // Only t > 0 keeps the divergence finite.
    c.add(detail::positive_root(s.rho, 1.0 - sh, s.x), branch::kPositive);
  } else {
    const double t_pos = (sh - 1.0) / s.rho;
    const double t_neg = sh / s.rho;
    c.add_if(t_pos > 0.0, t_pos, branch::kPositive);
    c.add_if(t_neg <= 0.0, t_neg, branch::kNonpositive);
    c.add(0.0, branch::kZero);
  }
  return c.select([&](double t) {
    return detail::objective<NonlinearityKind::relu, Loss::kl>(s, t);
  });
}

inline ProxResult prox_relu_l1(const ScalarSubproblem& s) {
  detail::require_rho(s);
  const double sh = s.shift();
  detail::Candidates c;
  const double t_neg = sh / s.rho;
  const double t_pos = detail::l1_prox(s.x, sh, s.rho);
  c.add_if(t_neg <= 0.0, t_neg, branch::kNonpositive);
  c.add_if(t_pos > 0.0, t_pos,
           t_pos == s.x ? branch::kDataKink : branch::kPositive);
  c.add(0.0, branch::kZero);
  return c.select([&](double t) {
    return detail::objective<NonlinearityKind::relu, Loss::l1>(s, t);
  });
}

// ---------------------------------------------------------------------------
// CSF: f(t) = t^2

inline ProxResult prox_csf_frobenius(const ScalarSubproblem& s) {
  detail::require_rho(s);
  // g'(t) = 2t^3 + (rho - 2x) t + (lambda - rho a) = 0
  const double p = 0.5 * (s.rho - 2.0 * s.x);
  const double q = -0.5 * s.shift();
  detail::Candidates c;
  for (double t : solve_depressed_cubic(p, q)) c.add(t, branch::kStationary);
  return c.select([&](double t) {
    return detail::objective<NonlinearityKind::csf, Loss::frobenius>(s, t);
  });
}

inline ProxResult prox_csf_kl(const ScalarSubproblem& s) {
  detail::require_rho(s);
  const double sh = s.shift();
  const double k = s.rho + 2.0;
  detail::Candidates c;
  if (s.x > 0.0) {
    // (rho + 2) t^2 - sh t - 2x = 0; the roots multiply to -2x / (rho + 2).
    const double root = std::sqrt(sh * sh + 8.0 * s.x * k);
    const double big = sh >= 0.0 ? (sh + root) / (2.0 * k)
                                 : (sh - root) / (2.0 * k);
    const double other = -2.0 * s.x / (k * big);
    const double t_pos = std::max(big, other);
    const double t_neg = std::min(big, other);
    c.add(t_pos, branch::kPositiveRoot);
    c.add(t_neg, branch::kNegativeRoot);
  } else {
    c.add(sh / k, branch::kStationary);
  }
  return c.select([&](double t) {
    return detail::objective<NonlinearityKind::csf, Loss::kl>(s, t);
  });
}

inline ProxResult prox_csf_l1(const ScalarSubproblem& s) {
  detail::require_rho(s);
  const double sh = s.shift();
  const double r = std::sqrt(s.x);
  detail::Candidates c;
  const double t_outer = sh / (s.rho + 2.0);
  c.add_if(t_outer * t_outer >= s.x, t_outer, branch::kOuter);
  // The inner piece x - t^2 + ... is convex only for rho > 2; otherwise its
  // minimum over t^2 <= x sits on the kinks.
  if (s.rho > 2.0) {
    const double t_inner = sh / (s.rho - 2.0);
    c.add_if(t_inner * t_inner <= s.x, t_inner, branch::kInner);
  }
  c.add(r, branch::kKink);
  c.add(-r, branch::kKink);
  return c.select([&](double t) {
    return detail::objective<NonlinearityKind::csf, Loss::l1>(s, t);
  });
}

// ---------------------------------------------------------------------------
// MinMax: f(t) = min(upper, max(lower, t))

inline ProxResult prox_minmax_frobenius(const ScalarSubproblem& s) {
  detail::require_rho(s);
  const auto [lo, hi] = detail::require_bounds(s);
  const double sh = s.shift();
  detail::Candidates c;
  const double t_out = sh / s.rho;
  const double t_in = (s.x + sh) / (s.rho + 1.0);
  c.add_if(t_out < lo, t_out, branch::kBelow);
  c.add_if(t_out > hi, t_out, branch::kAbove);
  c.add_if(t_in >= lo && t_in <= hi, t_in, branch::kInterior);
  c.add(lo, branch::kLowerBound);
  c.add(hi, branch::kUpperBound);
  return c.select([&](double t) {
    return detail::objective<NonlinearityKind::minmax, Loss::frobenius>(s, t);
  });
}

inline ProxResult prox_minmax_kl(const ScalarSubproblem& s) {
  detail::require_rho(s);
  const auto [lo, hi] = detail::require_bounds(s);
  if (s.x > 0.0 && lo <= 0.0) {
    throw DomainError("minmax+kl: lower bound must be positive when x > 0");
  }
  const double sh = s.shift();
  detail::Candidates c;
  const double t_out = sh / s.rho;
  c.add_if(t_out < lo, t_out, branch::kBelow);
  c.add_if(t_out > hi, t_out, branch::kAbove);
  // Interior piece: t - x log t + ... for x > 0 (root of
  // rho t^2 + (1 - sh) t - x = 0), t + ... for x = 0.
  const double t_in = s.x > 0.0 ? detail::positive_root(s.rho, 1.0 - sh, s.x)
                                : (sh - 1.0) / s.rho;
  c.add_if(t_in >= lo && t_in <= hi, t_in, branch::kInterior);
  c.add(lo, branch::kLowerBound);
  c.add(hi, branch::kUpperBound);
  return c.select([&](double t) {
    return detail::objective<NonlinearityKind::minmax, Loss::kl>(s, t);
  });
}

inline ProxResult prox_minmax_l1(const ScalarSubproblem& s) {
  detail::require_rho(s);
  const auto [lo, hi] = detail::require_bounds(s);
  const double sh = s.shift();
  detail::Candidates c;
  const double t_out = sh / s.rho;
  const double t_in = detail::l1_prox(s.x, sh, s.rho);
  c.add_if(t_out < lo, t_out, branch::kBelow);
  c.add_if(t_out > hi, t_out, branch::kAbove);
  c.add_if(t_in >= lo && t_in <= hi, t_in,
           t_in == s.x ? branch::kDataKink : branch::kInterior);
  c.add(lo, branch::kLowerBound);
  c.add(hi, branch::kUpperBound);
  return c.select([&](double t) {
    return detail::objective<NonlinearityKind::minmax, Loss::l1>(s, t);
  });
}

// ---------------------------------------------------------------------------
// Modulus: f(t) = |t|

inline ProxResult prox_modulus_frobenius(const ScalarSubproblem& s) {
  detail::require_rho(s);
  const double sh = s.shift();
  detail::Candidates c;
  const double t_pos = (sh + s.x) / (s.rho + 1.0);
  const double t_neg = (sh - s.x) / (s.rho + 1.0);
  c.add_if(t_pos > 0.0, t_pos, branch::kPositive);
  c.add_if(t_neg <= 0.0, t_neg, branch::kNonpositive);
  c.add(0.0, branch::kZero);
  return c.select([&](double t) {
    return detail::objective<NonlinearityKind::modulus, Loss::frobenius>(s, t);
  });
}

inline ProxResult prox_modulus_kl(const ScalarSubproblem& s) {
  detail::require_rho(s);
  const double sh = s.shift();
  detail::Candidates c;
  if (s.x > 0.0) {
    // t > 0: rho t^2 + (1 - sh) t - x = 0. t < 0: substitute u = -t.
    c.add(detail::positive_root(s.rho, 1.0 - sh, s.x), branch::kPositive);
    c.add(-detail::positive_root(s.rho, 1.0 + sh, s.x), branch::kNonpositive);
  } else {
    const double t_pos = (sh - 1.0) / s.rho;
    const double t_neg = (sh + 1.0) / s.rho;
    c.add_if(t_pos > 0.0, t_pos, branch::kPositive);
    c.add_if(t_neg <= 0.0, t_neg, branch::kNonpositive);
    c.add(0.0, branch::kZero);
  }
  return c.select([&](double t) {
    return detail::objective<NonlinearityKind::modulus, Loss::kl>(s, t);
  });
}

inline ProxResult prox_modulus_l1(const ScalarSubproblem& s) {
  detail::require_rho(s);
  const double sh = s.shift();
  detail::Candidates c;
  const double t_pos = detail::l1_prox(s.x, sh, s.rho);
  const double t_neg = detail::l1_prox(-s.x, sh, s.rho);
  c.add_if(t_pos > 0.0, t_pos,
           t_pos == s.x ? branch::kDataKink : branch::kPositive);
  c.add_if(t_neg <= 0.0, t_neg,
           t_neg == -s.x && s.x > 0.0 ? branch::kDataKink
                                      : branch::kNonpositive);
  c.add(0.0, branch::kZero);
  return c.select([&](double t) {
    return detail::objective<NonlinearityKind::modulus, Loss::l1>(s, t);
  });
}

// ---------------------------------------------------------------------------

/// Update of an unobserved entry: the data term vanishes, leaving
/// a - lambda / rho.
inline double missing_entry_update(double a, double lambda, double rho) {
  if (!(rho > 0.0)) throw DomainError("missing_entry_update: rho must be > 0");
  return a - lambda / rho;
}

using ProxFn = ProxResult (*)(const ScalarSubproblem&);

/// The closed-form solver for a model.
inline ProxFn prox_solver(NonlinearityKind kind, Loss loss) {
  constexpr ProxFn table[4][3] = {
      {prox_relu_frobenius, prox_relu_l1, prox_relu_kl},
      {prox_csf_frobenius, prox_csf_l1, prox_csf_kl},
      {prox_minmax_frobenius, prox_minmax_l1, prox_minmax_kl},
      {prox_modulus_frobenius, prox_modulus_l1, prox_modulus_kl},
  };
  return table[static_cast<int>(kind)][static_cast<int>(loss)];
}

/// Calls `fn.template operator()<K, L>()` with the model's compile-time
/// nonlinearity and loss.
template <class Fn>
decltype(auto) dispatch_model(const ModelSpec& spec, Fn&& fn) {
  auto with_loss = [&]<NonlinearityKind K>() -> decltype(auto) {
    switch (spec.loss) {
      case Loss::frobenius: return fn.template operator()<K, Loss::frobenius>();
      case Loss::l1: return fn.template operator()<K, Loss::l1>();
      case Loss::kl: break;
    }
    return fn.template operator()<K, Loss::kl>();
  };
  switch (spec.kind()) {
    case NonlinearityKind::relu:
      return with_loss.template operator()<NonlinearityKind::relu>();
    case NonlinearityKind::csf:
      return with_loss.template operator()<NonlinearityKind::csf>();
    case NonlinearityKind::minmax:
      return with_loss.template operator()<NonlinearityKind::minmax>();
    case NonlinearityKind::modulus: break;
  }
  return with_loss.template operator()<NonlinearityKind::modulus>();
}

/// The exact scalar objective d(x, f(t)) + lambda t + (rho/2)(t - a)^2.
inline double scalar_objective(const ModelSpec& spec,
                               const ScalarSubproblem& s, double t) {
  return dispatch_model(spec, [&]<NonlinearityKind K, Loss L>() {
    return detail::objective<K, L>(s, t);
  });
}

/// Solves one subproblem for `spec`; MinMax bounds come from the spec when
/// the subproblem carries none.
inline ProxResult solve_prox(const ModelSpec& spec, ScalarSubproblem s) {
  if (spec.kind() == NonlinearityKind::minmax && !s.bounds) {
    s.bounds = spec.nonlinearity.bounds;
  }
  return prox_solver(spec.kind(), spec.loss)(s);
}

/// Entrywise T-update. Observed entries (all, without a mask) take the
/// model's prox; unobserved entries take missing_entry_update.
inline DenseMatrix update_T(const ModelSpec& spec, const DenseMatrix& X,
                            const DenseMatrix& A, const DenseMatrix& Lambda,
                            double rho, const ObservationMask* mask = nullptr) {
  if (!X.same_shape(A) || !X.same_shape(Lambda)) {
    throw ShapeError("update_T: X " + shape_string(X) + ", A " +
                     shape_string(A) + ", Lambda " + shape_string(Lambda));
  }
  if (mask != nullptr &&
      (mask->rows() != X.rows() || mask->cols() != X.cols())) {
    throw ShapeError("update_T: mask shape mismatch");
  }
  if (!(rho > 0.0)) throw DomainError("update_T: rho must be positive");
  spec.validate();
  const ProxFn solver = prox_solver(spec.kind(), spec.loss);
  ScalarSubproblem s;
  s.rho = rho;
  s.bounds = spec.nonlinearity.bounds;
  DenseMatrix T(X.rows(), X.cols());
  for (std::size_t k = 0; k < X.size(); ++k) {
    if (mask != nullptr && !mask->observed(k)) {
      T[k] = missing_entry_update(A[k], Lambda[k], rho);
      continue;
    }
    s.x = X[k];
    s.a = A[k];
    s.lambda = Lambda[k];
    T[k] = solver(s).t;
  }
  return T;
}

}  // namespace nmd

#endif  // NMD_PROX_HPP_
