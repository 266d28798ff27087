#ifndef NMD_EXPERIMENTS_HPP_
#define NMD_EXPERIMENTS_HPP_

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "nmd/admm.hpp"
#include "nmd/dense_matrix.hpp"
#include "nmd/error.hpp"
#include "nmd/io.hpp"
#include "nmd/linalg.hpp"
#include "nmd/models.hpp"
#include "nmd/synthetic.hpp"

namespace nmd {

/// A preset needs a dataset file that is not present.
class MissingDatasetError : public Error {
 public:
  MissingDatasetError(const std::string& what, std::filesystem::path path)
      : Error(what), path_(std::move(path)) {}
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

struct ExperimentContext {
  std::filesystem::path data_dir = default_data_dir();
  double time_scale = 1.0;   // multiplies every wall-clock budget
  std::size_t parallel = 1;  // independent runs executed concurrently
  std::uint64_t seed = 1;

  static std::filesystem::path default_data_dir() {
    if (const char* env = std::getenv("NMD_DATA_DIR"); env && *env) return env;
    return "data";
  }
};

/// One solver run inside a preset.
struct RunOutcome {
  std::string label;
  ModelSpec spec;
  SolverConfig cfg;
  std::vector<IterationRecord> records;
  DenseMatrix prediction;  // f(WH)
  double seconds = 0.0;
};

namespace detail {

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Results land at
/// their own index, so the outcome does not depend on scheduling.
inline void parallel_for(std::size_t n, std::size_t threads,
                         const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

inline RunOutcome solve_labeled(std::string label, const ModelSpec& spec,
                                const DenseMatrix& X, const SolverConfig& cfg,
                                const ObservationMask* mask = nullptr) {
  RunOutcome out{std::move(label), spec, cfg, {}, {}, 0.0};
  SolveResult res = run(spec, X, cfg, mask);
  out.records = std::move(res.records);
  out.prediction =
      apply_nonlinearity(spec.nonlinearity, matmul(res.state.W, res.state.H));
  out.seconds = res.state.elapsed;
  return out;
}

inline std::filesystem::path require_dataset(const ExperimentContext& ctx,
                                             const char* file) {
  const auto path = ctx.data_dir / file;
  if (!std::filesystem::exists(path)) {
    throw MissingDatasetError(
        "dataset file " + path.string() +
            " not found; run tools/fetch_data.py (see README) and set "
            "NMD_DATA_DIR",
        path);
  }
  return path;
}

inline double relative_error_to(const DenseMatrix& clean,
                                 const DenseMatrix& recon) {
  const double den = frobenius_norm(clean);
  if (!(den > 0.0)) throw DegenerateMetricError("clean matrix is zero");
  return frobenius_norm(clean - recon) / den;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Synthetic presets

struct ModelCurve {
  ModelSpec spec;
  std::vector<double> mean_objective;  // per iteration, averaged over seeds
  std::vector<double> final_objective;  // per seed
  std::vector<RunOutcome> runs;

  double mean_final() const {
    double s = 0.0;
    for (double v : final_objective) s += v;
    return final_objective.empty() ? 0.0
                                   : s / static_cast<double>(final_objective.size());
  }
};

namespace detail {

inline ModelCurve average_runs(const ModelSpec& spec,
                               std::vector<RunOutcome> runs) {
  ModelCurve c{spec, {}, {}, {}};
  std::size_t len = 0;
  for (const auto& r : runs) len = std::max(len, r.records.size());
  c.mean_objective.assign(len, 0.0);
  for (const auto& r : runs) {
    for (std::size_t i = 0; i < len; ++i) {
      // Shorter runs (time budget) hold their last value.
      const double v = r.records.empty()
                           ? std::numeric_limits<double>::quiet_NaN()
                           : r.records[std::min(i, r.records.size() - 1)].objective;
      c.mean_objective[i] += v / static_cast<double>(runs.size());
    }
    c.final_objective.push_back(
        r.records.empty() ? std::numeric_limits<double>::quiet_NaN()
                          : r.records.back().objective);
  }
  c.runs = std::move(runs);
  return c;
}

}  // namespace detail

struct SyntheticOptions {
  std::size_t m = 100;
  std::size_t n = 80;
  std::size_t rank = 5;
  std::size_t seeds = 10;
  std::size_t iterations = 1000;
  FactorDistribution distribution = FactorDistribution::gaussian;
  Bounds minmax_bounds = kSyntheticMinMaxBounds;
};

/// X = f(WH) for seeds 1..seeds (solver seed equal to the data seed), one
/// averaged curve per model.
inline ModelCurve synthetic_curve(const ModelSpec& spec,
                                  const SyntheticOptions& opt,
                                  const ExperimentContext& ctx) {
  std::vector<RunOutcome> runs(opt.seeds);
  detail::parallel_for(opt.seeds, ctx.parallel, [&](std::size_t i) {
    const std::uint64_t seed = i + 1;
    const auto p = make_synthetic(spec.nonlinearity, opt.m, opt.n, opt.rank,
                                  opt.distribution, seed);
    SolverConfig cfg;
    cfg.rank = opt.rank;
    cfg.max_iter = opt.iterations;
    cfg.seed = seed;
    runs[i] = detail::solve_labeled(spec.name() + "_seed" + std::to_string(seed),
                                    spec, p.X, cfg);
  });
  return detail::average_runs(spec, std::move(runs));
}

/// Every nonlinearity x loss on Gaussian synthetic data.
inline std::vector<ModelCurve> synthetic_convergence(
    const ExperimentContext& ctx, SyntheticOptions opt = {}) {
  std::vector<ModelCurve> out;
  for (auto kind : kAllNonlinearities) {
    for (auto loss : kAllLosses) {
      out.push_back(
          synthetic_curve(synthetic_spec(kind, loss, opt.minmax_bounds), opt, ctx));
    }
  }
  return out;
}

struct CsfHardnessResult {
  ModelCurve uniform;         // 100 x 80, r = 5, W, H ~ U[0, 1]
  ModelCurve small_gaussian;  // 10 x 10, r = 2, W, H ~ N(0, 1)
};

inline CsfHardnessResult csf_hardness(const ExperimentContext& ctx,
                                      Loss loss = Loss::frobenius,
                                      std::size_t seeds = 10,
                                      std::size_t iterations = 15) {
  const ModelSpec spec = make_spec(NonlinearityKind::csf, loss);
  SyntheticOptions uni{100, 80, 5, seeds, iterations, FactorDistribution::uniform};
  SyntheticOptions small{10, 10, 2, seeds, iterations, FactorDistribution::gaussian};
  return {synthetic_curve(spec, uni, ctx), synthetic_curve(spec, small, ctx)};
}

// ---------------------------------------------------------------------------
// Dataset presets

inline constexpr const char* kMnistFile = "mnist_500.csv";
inline constexpr const char* kCbclFile = "cbcl.csv";
inline constexpr const char* kMitLogoFile = "mit_logo.pgm";

/// 500 x 784 (one image per row), divided by its maximum.
inline DenseMatrix load_mnist_subset(const ExperimentContext& ctx) {
  return normalize_max(load_matrix(detail::require_dataset(ctx, kMnistFile)));
}

/// 2429 x 361 (one face per row), divided by its maximum.
inline DenseMatrix load_cbcl(const ExperimentContext& ctx) {
  return normalize_max(load_matrix(detail::require_dataset(ctx, kCbclFile)));
}

/// The logo divided by its maximum and mapped affinely onto [0.5, 1].
inline DenseMatrix load_mit_logo(const ExperimentContext& ctx) {
  DenseMatrix X = normalize_max(load_matrix(detail::require_dataset(ctx, kMitLogoFile)));
  const double lo = *std::min_element(X.values().begin(), X.values().end());
  if (lo < 0.5) {
    for (double& v : X.values()) v = 0.5 + 0.5 * (v - lo) / (1.0 - lo);
  }
  return X;
}

struct MnistRow {
  double density = 0.0;
  double noisy_vs_clean = 0.0;
  double relu_fro = 0.0;
  double relu_l1 = 0.0;
  double minmax_l1 = 0.0;
};

struct MnistResult {
  std::vector<MnistRow> rows;
  std::vector<RunOutcome> runs;
};

/// Salt-and-pepper densities {0, 5, 10, 15, 20}%, rank 32, 30 s per run
/// (times time_scale). Errors are measured against the clean matrix.
inline MnistResult mnist_snp(const ExperimentContext& ctx,
                             std::vector<double> densities = {0.0, 0.05, 0.10,
                                                              0.15, 0.20}) {
  const DenseMatrix clean = load_mnist_subset(ctx);
  const ModelSpec specs[3] = {
      make_spec(NonlinearityKind::relu, Loss::frobenius),
      make_spec(NonlinearityKind::relu, Loss::l1),
      make_spec(NonlinearityKind::minmax, Loss::l1, Bounds{0.0, 1.0})};
  std::vector<DenseMatrix> noisy;
  for (std::size_t d = 0; d < densities.size(); ++d)
    noisy.push_back(add_salt_pepper(clean, densities[d], ctx.seed + d));

  MnistResult res;
  res.runs.resize(densities.size() * 3);
  detail::parallel_for(res.runs.size(), ctx.parallel, [&](std::size_t k) {
    const std::size_t d = k / 3;
    const ModelSpec& spec = specs[k % 3];
    SolverConfig cfg;
    cfg.rank = 32;
    cfg.max_iter = std::numeric_limits<std::size_t>::max();
    cfg.max_seconds = 30.0 * ctx.time_scale;
    cfg.seed = ctx.seed;
    const auto pct = static_cast<int>(std::lround(densities[d] * 100.0));
    res.runs[k] = detail::solve_labeled(
        spec.name() + "_d" + std::to_string(pct), spec, noisy[d], cfg);
  });
  for (std::size_t d = 0; d < densities.size(); ++d) {
    MnistRow row;
    row.density = densities[d];
    row.noisy_vs_clean = detail::relative_error_to(clean, noisy[d]);
    row.relu_fro = detail::relative_error_to(clean, res.runs[3 * d].prediction);
    row.relu_l1 = detail::relative_error_to(clean, res.runs[3 * d + 1].prediction);
    row.minmax_l1 = detail::relative_error_to(clean, res.runs[3 * d + 2].prediction);
    res.rows.push_back(row);
  }
  return res;
}

struct CompletionRow {
  double missing_ratio = 0.0;
  double rmse_train = 0.0;
  double rmse_test = 0.0;
  std::size_t train_count = 0;
  std::size_t test_count = 0;
  bool disjoint = false;
};

struct CompletionResult {
  std::vector<CompletionRow> rows;
  std::vector<RunOutcome> runs;
};

/// One completion run: keep `observed_fraction` of the entries, train on
/// `train_fraction` of those (held-out entries zeroed in the training data
/// and excluded from the mask), report RMSE of f(WH) on both sides.
inline CompletionRow complete_once(const ModelSpec& spec, const DenseMatrix& X,
                                   const SolverConfig& cfg,
                                   double observed_fraction,
                                   double train_fraction, std::uint64_t seed,
                                   RunOutcome* outcome = nullptr) {
  const ObservationMask observed =
      make_mask(X.rows(), X.cols(), observed_fraction, seed);
  const CompletionSplit split = split_train_test(observed, train_fraction, seed + 1);
  DenseMatrix train_data = X;
  for (std::size_t k = 0; k < X.size(); ++k)
    if (!split.train.observed(k)) train_data[k] = 0.0;

  RunOutcome run_out =
      detail::solve_labeled(spec.name(), spec, train_data, cfg, &split.train);
  CompletionRow row;
  row.missing_ratio = 1.0 - observed_fraction;
  row.rmse_train = rmse_on(X, run_out.prediction, split.train);
  row.rmse_test = rmse_on(X, run_out.prediction, split.test);
  row.train_count = split.train.count();
  row.test_count = split.test.count();
  row.disjoint = true;
  for (std::size_t k = 0; k < X.size(); ++k)
    if (split.train.observed(k) && split.test.observed(k)) row.disjoint = false;
  if (outcome != nullptr) *outcome = std::move(run_out);
  return row;
}

/// MinMax+Frobenius on [0, 1], rank 5, 100 iterations, missing ratios
/// {0, 5, 10, 20, 50, 80}%, 80/20 train/test split of the observed entries.
inline CompletionResult cbcl_complete(
    const ExperimentContext& ctx,
    std::vector<double> missing = {0.0, 0.05, 0.10, 0.20, 0.50, 0.80}) {
  const DenseMatrix X = load_cbcl(ctx);
  const ModelSpec spec =
      make_spec(NonlinearityKind::minmax, Loss::frobenius, Bounds{0.0, 1.0});
  CompletionResult res;
  res.rows.resize(missing.size());
  res.runs.resize(missing.size());
  detail::parallel_for(missing.size(), ctx.parallel, [&](std::size_t i) {
    SolverConfig cfg;
    cfg.rank = 5;
    cfg.max_iter = 100;
    cfg.seed = ctx.seed;
    res.rows[i] = complete_once(spec, X, cfg, 1.0 - missing[i], 0.8,
                                ctx.seed + 100 * i, &res.runs[i]);
    res.runs[i].label = "missing" +
                        std::to_string(std::lround(missing[i] * 100.0));
  });
  return res;
}

struct PoissonRow {
  std::string model;
  double relative_error = 0.0;
};

struct PoissonResult {
  double scale = 255.0;
  std::size_t clipped = 0;  // noisy entries moved into [0.5, 1]
  double noisy_vs_clean = 0.0;
  std::vector<PoissonRow> rows;
  std::vector<RunOutcome> runs;
};

/// Poisson(scale X)/scale noise on the logo, clipped into [0.5, 1]; rank 4,
/// 10 s per model (times time_scale).
inline PoissonResult mit_poisson(const ExperimentContext& ctx,
                                 double scale = 255.0) {
  const DenseMatrix clean = load_mit_logo(ctx);
  const ModelSpec specs[4] = {
      make_spec(NonlinearityKind::minmax, Loss::kl, Bounds{0.5, 1.0}),
      make_spec(NonlinearityKind::minmax, Loss::frobenius, Bounds{0.5, 1.0}),
      make_spec(NonlinearityKind::minmax, Loss::l1, Bounds{0.5, 1.0}),
      make_spec(NonlinearityKind::relu, Loss::kl)};
  PoissonResult res;
  res.scale = scale;
  DenseMatrix noisy = add_poisson(clean, scale, ctx.seed);
  res.clipped = clip_to_bounds(specs[0], noisy);
  res.noisy_vs_clean = detail::relative_error_to(clean, noisy);
  res.runs.resize(4);
  detail::parallel_for(4, ctx.parallel, [&](std::size_t i) {
    SolverConfig cfg;
    cfg.rank = 4;
    cfg.max_iter = std::numeric_limits<std::size_t>::max();
    cfg.max_seconds = 10.0 * ctx.time_scale;
    cfg.seed = ctx.seed;
    res.runs[i] = detail::solve_labeled(specs[i].name(), specs[i], noisy, cfg);
  });
  for (std::size_t i = 0; i < 4; ++i) {
    res.rows.push_back({specs[i].name(),
                        detail::relative_error_to(clean, res.runs[i].prediction)});
  }
  return res;
}

struct ReluCbclResult {
  double relative_error = 0.0;
  double seconds = 0.0;
  std::size_t iterations = 0;
  RunOutcome run;
};

/// ReLU+Frobenius, rank 10, 100 iterations from a scaled Gaussian start.
inline ReluCbclResult cbcl_relu(const ExperimentContext& ctx) {
  const DenseMatrix X = load_cbcl(ctx);
  const ModelSpec spec = make_spec(NonlinearityKind::relu, Loss::frobenius);
  SolverConfig cfg;
  cfg.rank = 10;
  cfg.max_iter = 100;
  cfg.seed = ctx.seed;
  cfg.init_mode = InitMode::random;
  ReluCbclResult res;
  res.run = detail::solve_labeled("relu+fro_rank10", spec, X, cfg);
  res.relative_error = detail::relative_error_to(X, res.run.prediction);
  res.seconds = res.run.seconds;
  res.iterations = res.run.records.size();
  return res;
}

}  // namespace nmd

#endif  // NMD_EXPERIMENTS_HPP_
