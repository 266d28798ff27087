#ifndef NMD_LINALG_HPP_
#define NMD_LINALG_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nmd/dense_matrix.hpp"
#include "nmd/error.hpp"
#include "nmd/random.hpp"

namespace nmd {

/// A * B.
inline DenseMatrix matmul(const DenseMatrix& A, const DenseMatrix& B) {
  if (A.cols() != B.rows()) {
    throw ShapeError("matmul: " + shape_string(A) + " * " + shape_string(B));
  }
  DenseMatrix C(A.rows(), B.cols());
  for (std::size_t i = 0; i < A.rows(); ++i) {
    auto c = C.row(i);
    for (std::size_t k = 0; k < A.cols(); ++k) {
      const double aik = A(i, k);
      if (aik == 0.0) continue;
      auto b = B.row(k);
      for (std::size_t j = 0; j < c.size(); ++j) c[j] += aik * b[j];
    }
  }
  return C;
}

/// A^T * B without forming the transpose.
inline DenseMatrix matmul_tn(const DenseMatrix& A, const DenseMatrix& B) {
  if (A.rows() != B.rows()) {
    throw ShapeError("matmul_tn: " + shape_string(A) + "^T * " +
                     shape_string(B));
  }
  DenseMatrix C(A.cols(), B.cols());
  for (std::size_t k = 0; k < A.rows(); ++k) {
    auto a = A.row(k);
    auto b = B.row(k);
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double aki = a[i];
      if (aki == 0.0) continue;
      auto c = C.row(i);
      for (std::size_t j = 0; j < b.size(); ++j) c[j] += aki * b[j];
    }
  }
  return C;
}

/// A * B^T without forming the transpose.
inline DenseMatrix matmul_nt(const DenseMatrix& A, const DenseMatrix& B) {
  if (A.cols() != B.cols()) {
    throw ShapeError("matmul_nt: " + shape_string(A) + " * " +
                     shape_string(B) + "^T");
  }
  DenseMatrix C(A.rows(), B.rows());
  for (std::size_t i = 0; i < A.rows(); ++i) {
    auto a = A.row(i);
    for (std::size_t j = 0; j < B.rows(); ++j) {
      auto b = B.row(j);
      double sum = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) sum += a[k] * b[k];
      C(i, j) = sum;
    }
  }
  return C;
}

namespace detail {

// Lower Cholesky factor of a small SPD matrix, stored dense.
class Cholesky {
 public:
  // Returns nullopt when a pivot falls to `pivot_floor` or below.
  static std::optional<Cholesky> factor(const DenseMatrix& G,
                                        double pivot_floor) {
    const std::size_t n = G.rows();
    Cholesky chol;
    chol.L_ = DenseMatrix(n, n);
    DenseMatrix& L = chol.L_;
    for (std::size_t j = 0; j < n; ++j) {
      double d = G(j, j);
      for (std::size_t k = 0; k < j; ++k) d -= L(j, k) * L(j, k);
      if (!(d > pivot_floor)) return std::nullopt;
      const double ljj = std::sqrt(d);
      L(j, j) = ljj;
      for (std::size_t i = j + 1; i < n; ++i) {
        double v = G(i, j);
        for (std::size_t k = 0; k < j; ++k) v -= L(i, k) * L(j, k);
        L(i, j) = v / ljj;
      }
    }
    return chol;
  }

  // Overwrites b with G^{-1} b.
  void solve_in_place(std::span<double> b) const {
    const std::size_t n = L_.rows();
    for (std::size_t i = 0; i < n; ++i) {
      double v = b[i];
      for (std::size_t k = 0; k < i; ++k) v -= L_(i, k) * b[k];
      b[i] = v / L_(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
      double v = b[i];
      for (std::size_t k = i + 1; k < n; ++k) v -= L_(k, i) * b[k];
      b[i] = v / L_(i, i);
    }
  }

 private:
  DenseMatrix L_;
};

// Factorizes G + eps*I. A pivot below 1e-13 of the largest diagonal entry
// counts as singular. With eps > 0 a failed factorization is retried once
// with 1e-12*trace/r added to the diagonal; with eps == 0 it is an error.
inline Cholesky factor_ridge_system(DenseMatrix G, double eps) {
  const std::size_t r = G.rows();
  double trace = 0.0;
  double max_diag = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    G(i, i) += eps;
    trace += G(i, i);
    max_diag = std::max(max_diag, G(i, i));
  }
  if (auto chol = Cholesky::factor(G, 1e-13 * max_diag)) return *chol;
  if (eps > 0.0 && trace > 0.0) {
    const double jitter = 1e-12 * trace / static_cast<double>(r);
    for (std::size_t i = 0; i < r; ++i) G(i, i) += jitter;
    if (auto chol = Cholesky::factor(G, 0.0)) return *chol;
  }
  throw SingularSystemError("ridge system is numerically singular (eps = " +
                            std::to_string(eps) + ")");
}

}  // namespace detail

/// W = M H^T (H H^T + eps I)^{-1}, the minimizer of
/// ||M - W H||_F^2 + eps ||W||_F^2.
inline DenseMatrix ridge_solve_right(const DenseMatrix& M, const DenseMatrix& H,
                                     double eps) {
  if (M.cols() != H.cols()) {
    throw ShapeError("ridge_solve_right: M is " + shape_string(M) +
                     ", H is " + shape_string(H));
  }
  if (!(eps >= 0.0)) throw DomainError("ridge_solve_right: eps must be >= 0");
  const auto chol = detail::factor_ridge_system(matmul_nt(H, H), eps);
  DenseMatrix W = matmul_nt(M, H);
  for (std::size_t i = 0; i < W.rows(); ++i) chol.solve_in_place(W.row(i));
  return W;
}

/// H = (W^T W + eps I)^{-1} W^T M, the minimizer of
/// ||M - W H||_F^2 + eps ||H||_F^2.
inline DenseMatrix ridge_solve_left(const DenseMatrix& W, const DenseMatrix& M,
                                    double eps) {
  if (W.rows() != M.rows()) {
    throw ShapeError("ridge_solve_left: W is " + shape_string(W) +
                     ", M is " + shape_string(M));
  }
  if (!(eps >= 0.0)) throw DomainError("ridge_solve_left: eps must be >= 0");
  const auto chol = detail::factor_ridge_system(matmul_tn(W, W), eps);
  // Solve on the transpose so each right-hand side is contiguous.
  DenseMatrix Ht = transpose(matmul_tn(W, M));
  for (std::size_t j = 0; j < Ht.rows(); ++j) chol.solve_in_place(Ht.row(j));
  return transpose(Ht);
}

/// Rank-r factors X ~ U diag(S) V^T.
struct SvdFactors {
  DenseMatrix U;          // m x r, orthonormal columns
  std::vector<double> S;  // nonincreasing, nonnegative
  DenseMatrix V;          // n x r, orthonormal columns
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

// Orthonormalizes the rows of Qt in place (Gram-Schmidt, applied twice).
// Rows that collapse numerically are replaced by random directions.
inline void orthonormalize_rows(DenseMatrix& Qt, Rng& rng) {
  const std::size_t k = Qt.rows();
  const std::size_t len = Qt.cols();
  for (std::size_t i = 0; i < k; ++i) {
    auto qi = Qt.row(i);
    const double original = std::sqrt(dot(qi, qi));
    for (int attempt = 0; attempt < 4; ++attempt) {
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t j = 0; j < i; ++j) {
          auto qj = Qt.row(j);
          const double proj = dot(qi, qj);
          for (std::size_t t = 0; t < len; ++t) qi[t] -= proj * qj[t];
        }
      }
      const double norm = std::sqrt(dot(qi, qi));
      if (norm > 1e-10 * std::max(original, 1e-300) && norm > 1e-300) {
        for (double& v : qi) v /= norm;
        break;
      }
      for (double& v : qi) v = rng.normal();
    }
  }
}

// Thin SVD of a tall matrix (rows >= cols) by one-sided Jacobi rotations.
inline SvdFactors jacobi_svd_tall(const DenseMatrix& A) {
  const std::size_t m = A.rows();
  const std::size_t n = A.cols();
  DenseMatrix At = transpose(A);  // row j is column j of A
  DenseMatrix Vt = DenseMatrix::identity(n);
  const double tol = 1e-15;
  for (int sweep = 0; sweep < 60; ++sweep) {
    bool rotated = false;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        auto ai = At.row(i);
        auto aj = At.row(j);
        const double alpha = dot(ai, ai);
        const double beta = dot(aj, aj);
        const double gamma = dot(ai, aj);
        if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta)) {
          continue;
        }
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t k = 0; k < m; ++k) {
          const double x = ai[k];
          const double y = aj[k];
          ai[k] = c * x - s * y;
          aj[k] = s * x + c * y;
        }
        auto vi = Vt.row(i);
        auto vj = Vt.row(j);
        for (std::size_t k = 0; k < n; ++k) {
          const double x = vi[k];
          const double y = vj[k];
          vi[k] = c * x - s * y;
          vj[k] = s * x + c * y;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) {
    sigma[j] = std::sqrt(dot(At.row(j), At.row(j)));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return sigma[a] > sigma[b];
                   });

  const double sigma_max = n == 0 ? 0.0 : sigma[order[0]];
  DenseMatrix Ut(n, m);
  SvdFactors out;
  out.S.resize(n);
  DenseMatrix Vsorted(n, n);
  std::size_t rank_deficient_from = n;
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t j = order[p];
    out.S[p] = sigma[j];
    auto src = At.row(j);
    auto dst = Ut.row(p);
    if (sigma[j] > 1e-14 * sigma_max && sigma[j] > 0.0) {
      for (std::size_t k = 0; k < m; ++k) dst[k] = src[k] / sigma[j];
    } else {
      rank_deficient_from = std::min(rank_deficient_from, p);
    }
    for (std::size_t k = 0; k < n; ++k) Vsorted(k, p) = Vt(j, k);
  }
  if (rank_deficient_from < n) {
    // Left vectors of (numerically) zero singular values are arbitrary;
    // complete them to an orthonormal set deterministically.
    Rng rng(0x5eed5eedULL);
    for (std::size_t p = rank_deficient_from; p < n; ++p) {
      for (double& v : Ut.row(p)) v = rng.normal();
    }
    orthonormalize_rows(Ut, rng);
  }
  out.U = transpose(Ut);
  out.V = std::move(Vsorted);
  return out;
}

inline SvdFactors jacobi_svd(const DenseMatrix& A) {
  if (A.rows() >= A.cols()) return jacobi_svd_tall(A);
  SvdFactors f = jacobi_svd_tall(transpose(A));
  std::swap(f.U, f.V);
  return f;
}

inline SvdFactors truncate(SvdFactors f, std::size_t r) {
  auto keep = [r](const DenseMatrix& M) {
    DenseMatrix out(M.rows(), r);
    for (std::size_t i = 0; i < M.rows(); ++i)
      for (std::size_t j = 0; j < r; ++j) out(i, j) = M(i, j);
    return out;
  };
  f.U = keep(f.U);
  f.V = keep(f.V);
  f.S.resize(r);
  return f;
}

}  // namespace detail

/// Matrices whose smaller side is at most this size are decomposed exactly
/// by one-sided Jacobi; larger ones use randomized subspace iteration.
inline constexpr std::size_t kExactSvdMaxSide = 128;

/// Rank-r truncated SVD, deterministic in (X, r, seed).
///
/// Small matrices get an exact Jacobi SVD. Otherwise a randomized range
/// finder is used: Gaussian test matrix with 10 columns of oversampling,
/// two power iterations with re-orthonormalization, then an exact SVD of the
/// projected (r+10) x n matrix.
inline SvdFactors truncated_svd(const DenseMatrix& X, std::size_t r,
                                std::uint64_t seed) {
  const std::size_t m = X.rows();
  const std::size_t n = X.cols();
  const std::size_t min_side = std::min(m, n);
  if (r < 1 || r > min_side) {
    throw ShapeError("truncated_svd: rank " + std::to_string(r) +
                     " out of range for " + shape_string(X));
  }
  const std::size_t k = std::min(r + 10, min_side);
  if (min_side <= kExactSvdMaxSide || k == min_side) {
    return detail::truncate(detail::jacobi_svd(X), r);
  }

  Rng rng(seed);
  DenseMatrix omega_t(k, n);  // test matrix, stored transposed
  for (double& v : omega_t.values()) v = rng.normal();

  // Qt rows span the range of X.
  DenseMatrix Qt = matmul_nt(omega_t, X);  // k x m, equals (X Omega)^T
  detail::orthonormalize_rows(Qt, rng);
  for (int power = 0; power < 2; ++power) {
    DenseMatrix Zt = matmul(Qt, X);  // k x n, equals (X^T Q)^T
    detail::orthonormalize_rows(Zt, rng);
    Qt = matmul_nt(Zt, X);  // k x m, equals (X Z)^T
    detail::orthonormalize_rows(Qt, rng);
  }

  const DenseMatrix B = matmul(Qt, X);  // k x n
  SvdFactors small = detail::jacobi_svd(B);
  SvdFactors out;
  out.U = matmul_tn(Qt, small.U);  // (m x k) * (k x k)
  out.S = std::move(small.S);
  out.V = std::move(small.V);
  return detail::truncate(std::move(out), r);
}

}  // namespace nmd

#endif  // NMD_LINALG_HPP_
