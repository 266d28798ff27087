#ifndef NMD_CUBIC_HPP_
#define NMD_CUBIC_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>

namespace nmd {

/// Up to three real roots, ascending.
class CubicRoots {
 public:
  void push(double t) { roots_[count_++] = t; }
  std::size_t size() const noexcept { return count_; }
  bool empty() const noexcept { return count_ == 0; }
  double operator[](std::size_t i) const { return roots_[i]; }
  double& operator[](std::size_t i) { return roots_[i]; }
  const double* begin() const noexcept { return roots_.data(); }
  const double* end() const noexcept { return roots_.data() + count_; }
  double* begin() noexcept { return roots_.data(); }
  double* end() noexcept { return roots_.data() + count_; }

 private:
  std::array<double, 3> roots_{};
  std::size_t count_ = 0;
};

namespace detail {

inline double cubic_residual(double t, double p, double q) {
  return (t * t + p) * t + q;
}

// Newton steps on t^3 + p t + q while the residual keeps shrinking.
inline double polish_cubic_root(double t, double p, double q) {
  double r = std::abs(cubic_residual(t, p, q));
  for (int step = 0; step < 4 && r > 0.0; ++step) {
    const double slope = 3.0 * t * t + p;
    if (slope == 0.0) break;
    const double next = t - cubic_residual(t, p, q) / slope;
    const double rn = std::abs(cubic_residual(next, p, q));
    if (!(rn < r)) break;
    t = next;
    r = rn;
  }
  return t;
}

inline bool cubic_root_accepted(double t, double p, double q) {
  const double scale = std::max(1.0, std::abs(t * t * t));
  return std::abs(cubic_residual(t, p, q)) < 1e-10 * scale;
}

}  // namespace detail

/// Real roots of t^3 + p t + q = 0, ascending and distinct.
///
/// The sign of the discriminant picks Cardano's radicals (one real root) or
/// the trigonometric form (three real roots). Each root is Newton-polished.
/// When the discriminant is barely positive the real part of the complex
/// pair is polished too and kept if it turns out to be a (near-double) root.
inline CubicRoots solve_depressed_cubic(double p, double q) {
  CubicRoots roots;
  if (p == 0.0 && q == 0.0) {
    roots.push(0.0);
    return roots;
  }

  const double half_q = 0.5 * q;
  const double third_p = p / 3.0;
  const double disc = half_q * half_q + third_p * third_p * third_p;

  if (disc > 0.0) {
    const double sq = std::sqrt(disc);
    // Choose the sign that avoids cancellation.
    const double u = std::cbrt(-half_q - std::copysign(sq, half_q));
    const double v = u == 0.0 ? 0.0 : -third_p / u;
    roots.push(u + v);
    roots.push(-0.5 * (u + v));
  } else if (disc == 0.0) {
    // p < 0 here (p = q = 0 handled above): simple root and double root.
    roots.push(3.0 * q / p);
    roots.push(-1.5 * q / p);
  } else {
    // Three distinct real roots; p < 0.
    const double radius = 2.0 * std::sqrt(-third_p);
    double arg = (3.0 * q / (2.0 * p)) * std::sqrt(-3.0 / p);
    arg = std::clamp(arg, -1.0, 1.0);
    const double phi = std::acos(arg) / 3.0;
    for (int k = 0; k < 3; ++k) {
      roots.push(radius *
                      std::cos(phi - 2.0 * std::numbers::pi * k / 3.0));
    }
  }

  CubicRoots accepted;
  for (std::size_t i = 0; i < roots.size(); ++i) {
    const double t = detail::polish_cubic_root(roots[i], p, q);
    // The first root is always real; later ones only when they check out.
    if (i == 0 || disc <= 0.0 || detail::cubic_root_accepted(t, p, q)) {
      accepted.push(t);
    }
  }
  std::sort(accepted.begin(), accepted.end());
  CubicRoots distinct;
  for (double t : accepted) {
    if (distinct.empty() ||
        std::abs(t - distinct[distinct.size() - 1]) >
            1e-12 * std::max(1.0, std::abs(t))) {
      distinct.push(t);
    }
  }
  return distinct;
}

}  // namespace nmd

#endif  // NMD_CUBIC_HPP_
