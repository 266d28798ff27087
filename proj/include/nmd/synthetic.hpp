#ifndef NMD_SYNTHETIC_HPP_
#define NMD_SYNTHETIC_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

#include "nmd/dense_matrix.hpp"
#include "nmd/linalg.hpp"
#include "nmd/models.hpp"
#include "nmd/random.hpp"

namespace nmd {

enum class FactorDistribution { gaussian, uniform };

inline std::string_view to_string(FactorDistribution d) {
  return d == FactorDistribution::gaussian ? "gaussian" : "uniform";
}

/// MinMax interval used for synthetic Gaussian data. Strictly positive so
/// that MinMax+KL is defined on every entry.
inline constexpr Bounds kSyntheticMinMaxBounds{0.5, 2.5};

struct SyntheticProblem {
  DenseMatrix X;  // f(W H)
  DenseMatrix W;  // m x r
  DenseMatrix H;  // r x n
};

/// X = f(W H) with W, H drawn entrywise from N(0, 1) or U[0, 1]. W is
/// filled first, row by row, then H.
inline SyntheticProblem make_synthetic(const Nonlinearity& f, std::size_t m,
                                       std::size_t n, std::size_t r,
                                       FactorDistribution dist,
                                       std::uint64_t seed) {
  Rng rng(seed);
  auto draw = [&] {
    return dist == FactorDistribution::gaussian ? rng.normal() : rng.uniform();
  };
  SyntheticProblem p;
  p.W = DenseMatrix(m, r);
  p.H = DenseMatrix(r, n);
  for (double& v : p.W.values()) v = draw();
  for (double& v : p.H.values()) v = draw();
  p.X = apply_nonlinearity(f, matmul(p.W, p.H));
  return p;
}

/// The model used for synthetic data of a given kind and loss; MinMax gets
/// `minmax_bounds`.
inline ModelSpec synthetic_spec(NonlinearityKind kind, Loss loss,
                                Bounds minmax_bounds = kSyntheticMinMaxBounds) {
  return make_spec(kind, loss,
                   kind == NonlinearityKind::minmax
                       ? std::optional<Bounds>(minmax_bounds)
                       : std::nullopt);
}

}  // namespace nmd

#endif  // NMD_SYNTHETIC_HPP_
