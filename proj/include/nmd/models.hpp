#ifndef NMD_MODELS_HPP_
#define NMD_MODELS_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nmd/dense_matrix.hpp"
#include "nmd/error.hpp"
#include "nmd/mask.hpp"

namespace nmd {

/// Closed interval [lower, upper] of the MinMax nonlinearity.
struct Bounds {
  double lower = 0.0;
  double upper = 1.0;

  friend bool operator==(const Bounds&, const Bounds&) = default;
};

enum class NonlinearityKind { relu, csf, minmax, modulus };
enum class Loss { frobenius, l1, kl };

inline constexpr std::array<NonlinearityKind, 4> kAllNonlinearities = {
    NonlinearityKind::relu, NonlinearityKind::csf, NonlinearityKind::minmax,
    NonlinearityKind::modulus};
inline constexpr std::array<Loss, 3> kAllLosses = {Loss::frobenius, Loss::l1,
                                                   Loss::kl};

inline std::string_view to_string(NonlinearityKind k) {
  switch (k) {
    case NonlinearityKind::relu: return "relu";
    case NonlinearityKind::csf: return "csf";
    case NonlinearityKind::minmax: return "minmax";
    case NonlinearityKind::modulus: return "modulus";
  }
  return "?";
}

inline std::string_view to_string(Loss l) {
  switch (l) {
    case Loss::frobenius: return "fro";
    case Loss::l1: return "l1";
    case Loss::kl: return "kl";
  }
  return "?";
}

inline std::optional<NonlinearityKind> parse_nonlinearity(std::string_view s) {
  for (auto k : kAllNonlinearities)
    if (to_string(k) == s) return k;
  return std::nullopt;
}

inline std::optional<Loss> parse_loss(std::string_view s) {
  for (auto l : kAllLosses)
    if (to_string(l) == s) return l;
  if (s == "frobenius") return Loss::frobenius;
  return std::nullopt;
}

/// Entrywise nonlinearity f. Bounds are present iff kind == minmax.
struct Nonlinearity {
  NonlinearityKind kind = NonlinearityKind::relu;
  std::optional<Bounds> bounds;

  static Nonlinearity relu() { return {NonlinearityKind::relu, {}}; }
  static Nonlinearity csf() { return {NonlinearityKind::csf, {}}; }
  static Nonlinearity modulus() { return {NonlinearityKind::modulus, {}}; }
  static Nonlinearity minmax(double lower, double upper) {
    return {NonlinearityKind::minmax, Bounds{lower, upper}};
  }

  double operator()(double t) const {
    switch (kind) {
      case NonlinearityKind::relu: return t > 0.0 ? t : 0.0;
      case NonlinearityKind::csf: return t * t;
      case NonlinearityKind::minmax:
        return std::min(bounds->upper, std::max(bounds->lower, t));
      case NonlinearityKind::modulus: return std::abs(t);
    }
    return t;
  }

  friend bool operator==(const Nonlinearity&, const Nonlinearity&) = default;
};

/// One of the twelve nonlinearity x loss combinations.
struct ModelSpec {
  Nonlinearity nonlinearity;
  Loss loss = Loss::frobenius;

  NonlinearityKind kind() const { return nonlinearity.kind; }

  std::string name() const {
    return std::string(to_string(nonlinearity.kind)) + "+" +
           std::string(to_string(loss));
  }

  /// Checks the structural invariants (bounds present and ordered).
  void validate() const {
    const bool is_minmax = nonlinearity.kind == NonlinearityKind::minmax;
    if (is_minmax && !nonlinearity.bounds) {
      throw ConfigError("minmax nonlinearity requires bounds");
    }
    if (!is_minmax && nonlinearity.bounds) {
      throw ConfigError("bounds are only meaningful for minmax");
    }
    if (is_minmax) {
      const auto [p, q] = *nonlinearity.bounds;
      if (!(std::isfinite(p) && std::isfinite(q) && p < q)) {
        throw ConfigError("minmax bounds must satisfy lower < upper");
      }
    }
  }

  /// Checks that a single data value is admissible for this model.
  /// Returns an explanation when it is not.
  std::optional<std::string> invalid_reason(double x) const {
    if (!std::isfinite(x)) return "non-finite data value";
    if (nonlinearity.kind == NonlinearityKind::minmax) {
      const auto [p, q] = *nonlinearity.bounds;
      if (x < p || x > q) {
        return "value " + std::to_string(x) + " outside minmax bounds [" +
               std::to_string(p) + ", " + std::to_string(q) + "]";
      }
      if (loss == Loss::kl && x > 0.0 && p <= 0.0) {
        return "minmax+kl needs a positive lower bound when data is positive";
      }
      if (loss == Loss::kl && x < 0.0) return "kl requires nonnegative data";
      return std::nullopt;
    }
    if (x < 0.0) return "model requires nonnegative data";
    return std::nullopt;
  }
};

inline ModelSpec make_spec(NonlinearityKind kind, Loss loss,
                           std::optional<Bounds> bounds = std::nullopt) {
  ModelSpec spec{Nonlinearity{kind, {}}, loss};
  if (kind == NonlinearityKind::minmax) spec.nonlinearity.bounds = bounds;
  spec.validate();
  return spec;
}

inline DenseMatrix apply_nonlinearity(const Nonlinearity& f,
                                      const DenseMatrix& T) {
  return map(T, [&f](double t) { return f(t); });
}

/// Scalar KL divergence: x log(x/y) - x + y for x > 0, y for x = 0,
/// +inf for x > 0 and y = 0.
inline double kl_scalar(double x, double y) {
  if (x < 0.0 || y < 0.0) {
    throw DomainError("kl_scalar: arguments must be nonnegative");
  }
  if (x == 0.0) return y;
  if (y == 0.0) return std::numeric_limits<double>::infinity();
  return x * (std::log(x) - std::log(y)) - x + y;
}

// Unchecked variant used in hot loops where the domain is already known.
namespace detail {
inline double kl_unchecked(double x, double y) {
  if (x == 0.0) return y;
  if (y <= 0.0) return std::numeric_limits<double>::infinity();
  return x * (std::log(x) - std::log(y)) - x + y;
}
}  // namespace detail

/// Frobenius: squared norm; L1: sum of absolute errors; KL: sum of kl_scalar.
inline double loss_value(Loss d, const DenseMatrix& X, const DenseMatrix& Y) {
  if (!X.same_shape(Y)) {
    throw ShapeError("loss_value: " + shape_string(X) + " vs " +
                     shape_string(Y));
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < X.size(); ++k) {
    const double x = X[k];
    const double y = Y[k];
    switch (d) {
      case Loss::frobenius: sum += (x - y) * (x - y); break;
      case Loss::l1: sum += std::abs(x - y); break;
      case Loss::kl: sum += kl_scalar(x, y); break;
    }
  }
  return sum;
}

/// Relative metric of the prediction f(P) against X:
///   Frobenius  ||X - f(P)||_F / ||X||_F
///   L1         ||X - f(P)||_1 / ||X||_1
///   KL         KL(X, f(P)) / KL(X, mean(X))
/// `P` is the pre-nonlinearity matrix (T or WH). With a mask, every sum and
/// the grand mean run over observed entries only.
inline double relative_objective(const ModelSpec& spec, const DenseMatrix& X,
                                 const DenseMatrix& P,
                                 const ObservationMask* mask = nullptr) {
  if (!X.same_shape(P)) {
    throw ShapeError("relative_objective: " + shape_string(X) + " vs " +
                     shape_string(P));
  }
  if (mask != nullptr && (mask->rows() != X.rows() || mask->cols() != X.cols()))
    throw ShapeError("relative_objective: mask shape mismatch");
  auto observed = [mask](std::size_t k) {
    return mask == nullptr || mask->observed(k);
  };
  const Nonlinearity& f = spec.nonlinearity;

  double num = 0.0;
  double den = 0.0;
  switch (spec.loss) {
    case Loss::frobenius:
      for (std::size_t k = 0; k < X.size(); ++k) {
        if (!observed(k)) continue;
        const double e = X[k] - f(P[k]);
        num += e * e;
        den += X[k] * X[k];
      }
      num = std::sqrt(num);
      den = std::sqrt(den);
      break;
    case Loss::l1:
      for (std::size_t k = 0; k < X.size(); ++k) {
        if (!observed(k)) continue;
        num += std::abs(X[k] - f(P[k]));
        den += std::abs(X[k]);
      }
      break;
    case Loss::kl: {
      double total = 0.0;
      std::size_t count = 0;
      for (std::size_t k = 0; k < X.size(); ++k) {
        if (!observed(k)) continue;
        if (X[k] < 0.0) throw DomainError("relative_objective: kl needs X >= 0");
        total += X[k];
        ++count;
      }
      const double mean = count == 0 ? 0.0 : total / static_cast<double>(count);
      for (std::size_t k = 0; k < X.size(); ++k) {
        if (!observed(k)) continue;
        const double y = f(P[k]);
        if (y < 0.0) throw DomainError("relative_objective: kl needs f(P) >= 0");
        num += detail::kl_unchecked(X[k], y);
        den += detail::kl_unchecked(X[k], mean);
      }
      break;
    }
  }
  if (!(den > 0.0)) {
    throw DegenerateMetricError("relative_objective: zero normalizer for " +
                                spec.name());
  }
  return num / den;
}

/// Throws DomainError naming the first inadmissible entry (observed entries
/// only when a mask is given).
inline void validate_data(const ModelSpec& spec, const DenseMatrix& X,
                          const ObservationMask* mask = nullptr) {
  spec.validate();
  for (std::size_t i = 0; i < X.rows(); ++i) {
    for (std::size_t j = 0; j < X.cols(); ++j) {
      if (mask != nullptr && !mask->observed(i, j)) continue;
      if (auto why = spec.invalid_reason(X(i, j))) {
        throw DomainError(spec.name() + ": entry (" + std::to_string(i) +
                          ", " + std::to_string(j) + "): " + *why);
      }
    }
  }
}

/// Clips data into the MinMax interval and returns how many entries moved.
/// No-op for the other nonlinearities.
inline std::size_t clip_to_bounds(const ModelSpec& spec, DenseMatrix& X) {
  if (spec.kind() != NonlinearityKind::minmax) return 0;
  const auto [p, q] = *spec.nonlinearity.bounds;
  std::size_t moved = 0;
  for (double& v : X.values()) {
    const double c = std::min(q, std::max(p, v));
    if (c != v) {
      v = c;
      ++moved;
    }
  }
  return moved;
}

}  // namespace nmd

#endif  // NMD_MODELS_HPP_
