// nmd: command-line front end for nonlinear matrix decompositions X ~ f(WH).
//
// Exit codes: 0 success, 1 prox gap violation, 2 invalid flags,
// 3 data/model validity violation or unreadable data, 4 divergence,
// 5 missing dataset.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nmd/admm.hpp"
#include "nmd/experiments.hpp"
#include "nmd/io.hpp"
#include "nmd/models.hpp"
#include "nmd/oracle.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace nmd;

namespace {

enum ExitCode {
  kOk = 0,
  kGapViolation = 1,
  kInvalidFlags = 2,
  kInvalidData = 3,
  kDiverged = 4,
  kMissingDataset = 5,
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Run description; serialized as the manifest.

struct RunRequest {
  std::string command = "factorize";  // or "complete"
  ModelSpec spec;
  SolverConfig cfg;
  std::string input;
  bool normalize = false;
  double salt_pepper = 0.0;
  double poisson_scale = 0.0;  // 0 = no Poisson noise
  std::uint64_t noise_seed = 0;
  bool clip = false;
  std::string mask;
  std::optional<double> observed_fraction;
  double train_fraction = 0.8;
  std::string out_dir;
  std::string log;
  std::string out_w;
  std::string out_h;
};

json config_to_json(const SolverConfig& c) {
  return {{"rank", c.rank},
          {"rho0", c.rho0},
          {"adaptive", c.adaptive},
          {"mu", c.mu},
          {"tau_incr", c.tau_incr},
          {"tau_decr", c.tau_decr},
          {"ridge_factor", c.ridge_factor},
          {"rho_min", c.rho_min},
          {"rho_max", c.rho_max},
          {"max_iter", c.max_iter},
          {"max_seconds", std::isfinite(c.max_seconds) ? json(c.max_seconds)
                                                       : json(nullptr)},
          {"seed", c.seed},
          {"init_mode", std::string(to_string(c.init_mode))}};
}

SolverConfig config_from_json(const json& j) {
  SolverConfig c;
  c.rank = j.at("rank").get<std::size_t>();
  c.rho0 = j.at("rho0").get<double>();
  c.adaptive = j.at("adaptive").get<bool>();
  c.mu = j.at("mu").get<double>();
  c.tau_incr = j.at("tau_incr").get<double>();
  c.tau_decr = j.at("tau_decr").get<double>();
  c.ridge_factor = j.at("ridge_factor").get<double>();
  c.rho_min = j.at("rho_min").get<double>();
  c.rho_max = j.at("rho_max").get<double>();
  c.max_iter = j.at("max_iter").get<std::size_t>();
  c.max_seconds = j.at("max_seconds").is_null()
                      ? std::numeric_limits<double>::infinity()
                      : j.at("max_seconds").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto mode = parse_init_mode(j.at("init_mode").get<std::string>());
  if (!mode) throw UsageError("manifest: bad init_mode");
  c.init_mode = *mode;
  return c;
}

json spec_to_json(const ModelSpec& s) {
  json j = {{"nonlinearity", std::string(to_string(s.kind()))},
            {"loss", std::string(to_string(s.loss))}};
  if (s.nonlinearity.bounds) {
    j["bounds"] = {s.nonlinearity.bounds->lower, s.nonlinearity.bounds->upper};
  }
  return j;
}

ModelSpec spec_from_json(const json& j) {
  const auto kind = parse_nonlinearity(j.at("nonlinearity").get<std::string>());
  const auto loss = parse_loss(j.at("loss").get<std::string>());
  if (!kind || !loss) throw UsageError("manifest: bad model");
  std::optional<Bounds> b;
  if (j.contains("bounds")) {
    b = Bounds{j["bounds"].at(0).get<double>(), j["bounds"].at(1).get<double>()};
  }
  return make_spec(*kind, *loss, b);
}

json request_to_json(const RunRequest& r) {
  json j = {{"command", r.command},
            {"model", spec_to_json(r.spec)},
            {"solver", config_to_json(r.cfg)},
            {"input", r.input},
            {"normalize_max", r.normalize},
            {"noise",
             {{"salt_pepper_density", r.salt_pepper},
              {"poisson_scale", r.poisson_scale},
              {"seed", r.noise_seed}}},
            {"clip_to_bounds", r.clip},
            {"outputs",
             {{"out_dir", r.out_dir},
              {"log", r.log},
              {"w", r.out_w},
              {"h", r.out_h}}}};
  if (r.command == "complete") {
    j["completion"] = {{"mask", r.mask},
                       {"observed_fraction", r.observed_fraction
                                                 ? json(*r.observed_fraction)
                                                 : json(nullptr)},
                       {"train_fraction", r.train_fraction}};
  }
  return j;
}

RunRequest request_from_json(const json& j) {
  RunRequest r;
  r.command = j.at("command").get<std::string>();
  if (r.command != "factorize" && r.command != "complete")
    throw UsageError("manifest: unknown command '" + r.command + "'");
  r.spec = spec_from_json(j.at("model"));
  r.cfg = config_from_json(j.at("solver"));
  r.input = j.at("input").get<std::string>();
  r.normalize = j.at("normalize_max").get<bool>();
  r.salt_pepper = j.at("noise").at("salt_pepper_density").get<double>();
  r.poisson_scale = j.at("noise").at("poisson_scale").get<double>();
  r.noise_seed = j.at("noise").at("seed").get<std::uint64_t>();
  r.clip = j.at("clip_to_bounds").get<bool>();
  if (r.command == "complete") {
    const json& c = j.at("completion");
    r.mask = c.at("mask").get<std::string>();
    if (!c.at("observed_fraction").is_null())
      r.observed_fraction = c.at("observed_fraction").get<double>();
    r.train_fraction = c.at("train_fraction").get<double>();
  }
  return r;
}

// ---------------------------------------------------------------------------
// factorize / complete

void fill_output_paths(RunRequest& r) {
  if (r.out_dir.empty()) r.out_dir = "nmd_out";
  const fs::path dir(r.out_dir);
  if (r.log.empty()) r.log = (dir / "log.csv").string();
  if (r.out_w.empty()) r.out_w = (dir / "W.csv").string();
  if (r.out_h.empty()) r.out_h = (dir / "H.csv").string();
}

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

DenseMatrix prepare_data(const RunRequest& r) {
  DenseMatrix X = load_matrix(r.input);
  if (r.normalize) X = normalize_max(X);
  if (r.salt_pepper > 0.0) X = add_salt_pepper(X, r.salt_pepper, r.noise_seed);
  if (r.poisson_scale > 0.0) X = add_poisson(X, r.poisson_scale, r.noise_seed);
  if (r.clip) {
    const std::size_t moved = clip_to_bounds(r.spec, X);
    if (moved > 0) {
      std::cerr << "warning: clipped " << moved
                << " entries into the minmax bounds\n";
    }
  }
  return X;
}

int execute(RunRequest r) {
  fill_output_paths(r);
  fs::create_directories(r.out_dir);
  const DenseMatrix X = prepare_data(r);
  r.cfg.validate(X.rows(), X.cols());

  std::optional<CompletionSplit> split;
  DenseMatrix train_data = X;
  if (r.command == "complete") {
    ObservationMask observed(X.rows(), X.cols(), true);
    if (!r.mask.empty()) {
      observed = load_mask(r.mask, X.rows(), X.cols());
    } else if (r.observed_fraction) {
      observed = make_mask(X.rows(), X.cols(), *r.observed_fraction, r.cfg.seed);
    }
    observed.require_nonempty("complete");
    split = split_train_test(observed, r.train_fraction, r.cfg.seed + 1);
    for (std::size_t k = 0; k < X.size(); ++k)
      if (!split->train.observed(k)) train_data[k] = 0.0;
    save_mask(fs::path(r.out_dir) / "train_mask.csv", split->train);
    save_mask(fs::path(r.out_dir) / "test_mask.csv", split->test);
  }

  ensure_parent(r.log);
  std::ofstream log(r.log);
  if (!log) throw Error("cannot write " + r.log);
  write_iteration_log_header(log);
  const ObservationMask* mask = split ? &split->train : nullptr;
  const SolveResult res = run(r.spec, train_data, r.cfg, mask,
                              [&log](const IterationRecord& rec) {
                                write_iteration_row(log, rec);
                              });
  log.close();
  ensure_parent(r.out_w);
  ensure_parent(r.out_h);
  save_matrix(r.out_w, res.W());
  save_matrix(r.out_h, res.H());

  const DenseMatrix WH = matmul(res.W(), res.H());
  json manifest = request_to_json(r);
  if (split) {
    const DenseMatrix P = apply_nonlinearity(r.spec.nonlinearity, WH);
    const double rmse_train = rmse_on(X, P, split->train);
    const double rmse_test = rmse_on(X, P, split->test);
    bool disjoint = true;
    for (std::size_t k = 0; k < X.size(); ++k)
      if (split->train.observed(k) && split->test.observed(k)) disjoint = false;
    manifest["result"] = {{"rmse_train", rmse_train},
                          {"rmse_test", rmse_test},
                          {"train_entries", split->train.count()},
                          {"test_entries", split->test.count()},
                          {"train_test_disjoint", disjoint}};
    std::cout << "rmse_train=" << fmt(rmse_train)
              << " rmse_test=" << fmt(rmse_test) << '\n';
  } else {
    const double final_objective =
        res.records.empty() ? relative_objective(r.spec, X, WH)
                            : res.records.back().objective;
    manifest["result"] = {{"final_objective", final_objective},
                          {"iterations", res.records.size()}};
    std::cout << "final_objective=" << fmt(final_objective)
              << " iters=" << res.records.size()
              << " seconds=" << fmt(res.state.elapsed) << '\n';
  }
  std::ofstream(fs::path(r.out_dir) / "manifest.json") << manifest.dump(2) << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// Flag plumbing

struct ModelFlags {
  std::string model;
  std::string loss;
  std::vector<double> bounds;

  void add(CLI::App* app, bool required = true) {
    auto* m = app->add_option("--model", model, "relu | csf | minmax | modulus");
    auto* l = app->add_option("--loss", loss, "fro | l1 | kl");
    if (required) {
      m->required();
      l->required();
    }
    app->add_option("--bounds", bounds, "MinMax interval P Q")->expected(2);
  }

  ModelSpec resolve() const {
    const auto kind = parse_nonlinearity(model);
    if (!kind) throw UsageError("--model: unknown nonlinearity '" + model + "'");
    const auto l = parse_loss(loss);
    if (!l) throw UsageError("--loss: unknown loss '" + loss + "'");
    if (*kind == NonlinearityKind::minmax && bounds.empty())
      throw UsageError("--bounds P Q is required with --model minmax");
    if (*kind != NonlinearityKind::minmax && !bounds.empty())
      throw UsageError("--bounds is only valid with --model minmax");
    std::optional<Bounds> b;
    if (!bounds.empty()) {
      if (!(bounds[0] < bounds[1]))
        throw UsageError("--bounds: need P < Q");
      b = Bounds{bounds[0], bounds[1]};
    }
    return make_spec(*kind, *l, b);
  }
};

struct RunFlags {
  ModelFlags model;
  RunRequest req;
  std::string init = "svd";
  bool no_adaptive = false;
  std::optional<double> max_seconds;

  void add(CLI::App* app) {
    model.add(app);
    app->add_option("--rank", req.cfg.rank, "Target rank")->required()
        ->check(CLI::PositiveNumber);
    app->add_option("--input", req.input, "Data matrix (.csv, .mtx, .pgm)")
        ->required();
    app->add_option("--rho0", req.cfg.rho0, "Initial penalty")
        ->check(CLI::PositiveNumber);
    app->add_flag("--no-adaptive-rho", no_adaptive, "Keep rho fixed");
    app->add_option("--mu", req.cfg.mu, "Residual balance factor");
    app->add_option("--tau-incr", req.cfg.tau_incr, "Penalty increase factor");
    app->add_option("--tau-decr", req.cfg.tau_decr, "Penalty decrease factor");
    app->add_option("--ridge-factor", req.cfg.ridge_factor,
                    "Ridge coefficient of the W/H solves")
        ->check(CLI::NonNegativeNumber);
    app->add_option("--max-iter", req.cfg.max_iter, "Iteration budget");
    app->add_option("--max-seconds", max_seconds, "Wall-clock budget")
        ->check(CLI::NonNegativeNumber);
    app->add_option("--seed", req.cfg.seed, "Seed for init, masks and splits");
    app->add_option("--init", init, "svd | random")
        ->check(CLI::IsMember({"svd", "random"}));
    app->add_option("--log", req.log, "Iteration log CSV");
    app->add_option("--out-w", req.out_w, "Output path for W");
    app->add_option("--out-h", req.out_h, "Output path for H");
    app->add_option("--out-dir", req.out_dir, "Run directory (default nmd_out)");
    app->add_flag("--normalize-max", req.normalize, "Divide X by its maximum");
    app->add_option("--salt-pepper", req.salt_pepper,
                    "Salt-and-pepper density applied to X")
        ->check(CLI::Range(0.0, 1.0));
    app->add_option("--poisson-scale", req.poisson_scale,
                    "Apply Poisson(scale X)/scale noise")
        ->check(CLI::NonNegativeNumber);
    app->add_option("--noise-seed", req.noise_seed, "Seed for the noise");
    app->add_flag("--clip-to-bounds", req.clip,
                  "Clip data into the MinMax bounds (with a warning)");
  }

  RunRequest resolve() {
    req.spec = model.resolve();
    req.cfg.adaptive = !no_adaptive;
    req.cfg.init_mode = *parse_init_mode(init);
    if (max_seconds) req.cfg.max_seconds = *max_seconds;
    try {
      req.cfg.validate_constants();
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
    return req;
  }
};

// ---------------------------------------------------------------------------
// prox-check

int prox_check(const ModelFlags& flags, bool all, std::size_t n,
               std::uint64_t seed, const std::string& csv) {
  if (n < 1) throw UsageError("--n must be at least 1");
  std::vector<ModelSpec> specs;
  if (all) {
    for (auto k : kAllNonlinearities)
      for (auto l : kAllLosses)
        specs.push_back(make_spec(k, l,
                                  k == NonlinearityKind::minmax
                                      ? std::optional<Bounds>(Bounds{0.0, 1.0})
                                      : std::nullopt));
  } else {
    if (flags.model.empty() || flags.loss.empty())
      throw UsageError("prox-check needs --model and --loss, or --all");
    ModelFlags f = flags;
    // Subproblem bounds are drawn per instance; these only satisfy the spec.
    if (f.model == "minmax" && f.bounds.empty()) f.bounds = {0.0, 1.0};
    specs.push_back(f.resolve());
  }
  std::ofstream csv_out;
  if (!csv.empty()) {
    ensure_parent(csv);
    csv_out.open(csv);
    if (!csv_out) throw Error("cannot write " + csv);
  }
  bool ok = true;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const BatchReport rep = check_prox_batch(specs[i], n, seed);
    write_report_text(std::cout, rep);
    if (csv_out.is_open()) write_report_csv(csv_out, rep, i == 0);
    ok = ok && rep.passed();
  }
  return ok ? kOk : kGapViolation;
}

// ---------------------------------------------------------------------------
// experiment presets

void write_log(const fs::path& path, const std::vector<IterationRecord>& recs) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  write_iteration_log(out, recs);
}

std::string file_label(std::string s) {
  for (char& c : s)
    if (c == '+') c = '_';
  return s;
}

void write_curves(const fs::path& path, const std::vector<std::string>& names,
                  const std::vector<const std::vector<double>*>& curves) {
  std::ofstream out(path);
  out << "iter";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  std::size_t len = 0;
  for (auto* c : curves) len = std::max(len, c->size());
  for (std::size_t i = 0; i < len; ++i) {
    out << i + 1;
    for (auto* c : curves) out << ',' << (i < c->size() ? fmt((*c)[i]) : "");
    out << '\n';
  }
}

int experiment(const std::string& preset, ExperimentContext ctx,
               const fs::path& out_dir, std::size_t seeds,
               std::optional<std::size_t> iterations) {
  fs::create_directories(out_dir);
  const fs::path logs = out_dir / "logs";
  json manifest = {{"command", "experiment"},
                   {"preset", preset},
                   {"time_scale", ctx.time_scale},
                   {"parallel", ctx.parallel},
                   {"seed", ctx.seed},
                   {"data_dir", ctx.data_dir.string()}};

  if (preset == "synthetic-convergence") {
    SyntheticOptions opt;
    opt.seeds = seeds;
    if (iterations) opt.iterations = *iterations;
    const auto curves = synthetic_convergence(ctx, opt);
    std::vector<std::string> names;
    std::vector<const std::vector<double>*> cols;
    std::ofstream fin(out_dir / "summary.csv");
    fin << "model,mean_final_objective\n";
    for (const auto& c : curves) {
      names.push_back(c.spec.name());
      cols.push_back(&c.mean_objective);
      fin << c.spec.name() << ',' << fmt(c.mean_final()) << '\n';
      std::cout << c.spec.name() << " mean_final_objective=" << fmt(c.mean_final())
                << '\n';
      for (const auto& r : c.runs)
        write_log(logs / (file_label(r.label) + ".csv"), r.records);
    }
    write_curves(out_dir / "curves.csv", names, cols);
    manifest["seeds"] = opt.seeds;
    manifest["iterations"] = opt.iterations;
  } else if (preset == "csf-hardness") {
    const auto res = csf_hardness(ctx, Loss::frobenius, seeds,
                                  iterations.value_or(15));
    write_curves(out_dir / "curves.csv", {"uniform_100x80_r5", "gaussian_10x10_r2"},
                 {&res.uniform.mean_objective, &res.small_gaussian.mean_objective});
    std::ofstream fin(out_dir / "summary.csv");
    fin << "regime,mean_final_objective\n"
        << "uniform_100x80_r5," << fmt(res.uniform.mean_final()) << '\n'
        << "gaussian_10x10_r2," << fmt(res.small_gaussian.mean_final()) << '\n';
    std::cout << "uniform_100x80_r5 mean_final_objective="
              << fmt(res.uniform.mean_final()) << '\n'
              << "gaussian_10x10_r2 mean_final_objective="
              << fmt(res.small_gaussian.mean_final()) << '\n';
    for (const auto* c : {&res.uniform, &res.small_gaussian})
      for (const auto& r : c->runs)
        write_log(logs / (std::string(c == &res.uniform ? "uniform_" : "gaussian_") +
                          file_label(r.label) + ".csv"),
                  r.records);
  } else if (preset == "mnist-snp") {
    const auto res = mnist_snp(ctx);
    std::ofstream out(out_dir / "summary.csv");
    out << "noise_pct,noisy_vs_gt,relu_fro,relu_l1,minmax_l1\n";
    for (const auto& row : res.rows) {
      out << fmt(row.density * 100) << ',' << fmt(row.noisy_vs_clean) << ','
          << fmt(row.relu_fro) << ',' << fmt(row.relu_l1) << ','
          << fmt(row.minmax_l1) << '\n';
      std::cout << "d=" << fmt(row.density * 100) << "% relu_fro="
                << fmt(row.relu_fro) << " relu_l1=" << fmt(row.relu_l1)
                << " minmax_l1=" << fmt(row.minmax_l1) << '\n';
    }
    for (const auto& r : res.runs)
      write_log(logs / (file_label(r.label) + ".csv"), r.records);
  } else if (preset == "cbcl-complete") {
    const auto res = cbcl_complete(ctx);
    std::ofstream out(out_dir / "summary.csv");
    out << "missing_pct,rmse_train,rmse_test,train_entries,test_entries,disjoint\n";
    for (const auto& row : res.rows) {
      out << fmt(row.missing_ratio * 100) << ',' << fmt(row.rmse_train) << ','
          << fmt(row.rmse_test) << ',' << row.train_count << ','
          << row.test_count << ',' << (row.disjoint ? "true" : "false") << '\n';
      std::cout << "missing=" << fmt(row.missing_ratio * 100)
                << "% rmse_train=" << fmt(row.rmse_train)
                << " rmse_test=" << fmt(row.rmse_test) << '\n';
    }
    for (const auto& r : res.runs)
      write_log(logs / (file_label(r.label) + ".csv"), r.records);
  } else if (preset == "mit-poisson") {
    const auto res = mit_poisson(ctx);
    std::ofstream out(out_dir / "summary.csv");
    out << "model,relative_error_pct\n";
    if (res.clipped > 0)
      std::cerr << "warning: clipped " << res.clipped
                << " noisy entries into [0.5, 1]\n";
    for (const auto& row : res.rows) {
      out << row.model << ',' << fmt(row.relative_error * 100) << '\n';
      std::cout << row.model << " relative_error=" << fmt(row.relative_error * 100)
                << "%\n";
    }
    for (const auto& r : res.runs)
      write_log(logs / (file_label(r.label) + ".csv"), r.records);
    manifest["poisson_scale"] = res.scale;
    manifest["clipped_entries"] = res.clipped;
  } else if (preset == "cbcl-relu") {
    const auto res = cbcl_relu(ctx);
    std::ofstream out(out_dir / "summary.csv");
    out << "method,final_relative_error,time_s,iterations\n"
        << "ADMM," << fmt(res.relative_error) << ',' << fmt(res.seconds) << ','
        << res.iterations << '\n';
    std::cout << "final_relative_error=" << fmt(res.relative_error)
              << " seconds=" << fmt(res.seconds) << " iters=" << res.iterations
              << '\n';
    write_log(logs / "relu_fro_rank10.csv", res.run.records);
  } else {
    throw UsageError("unknown preset '" + preset + "'");
  }
  std::ofstream(out_dir / "manifest.json") << manifest.dump(2) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonlinear matrix decompositions X ~ f(WH) by ADMM"};
  app.require_subcommand(1);

  RunFlags fact;
  auto* factorize = app.add_subcommand("factorize", "Factorize a data matrix");
  fact.add(factorize);

  RunFlags comp;
  double observed_fraction = 1.0;
  auto* complete =
      app.add_subcommand("complete", "Matrix completion with a train/test split");
  comp.add(complete);
  auto* mask_opt = complete->add_option("--mask", comp.req.mask,
                                        "Observed-entry mask (0/1 CSV or 'i j' list)");
  complete
      ->add_option("--observed-fraction", observed_fraction,
                   "Fraction of entries kept as observed")
      ->check(CLI::Range(0.0, 1.0))
      ->excludes(mask_opt);
  complete
      ->add_option("--train-fraction", comp.req.train_fraction,
                   "Share of observed entries used for training")
      ->check(CLI::Range(0.0, 1.0));

  ModelFlags prox_flags;
  bool prox_all = false;
  std::size_t prox_n = 1000;
  std::uint64_t prox_seed = 0;
  std::string prox_csv;
  auto* prox = app.add_subcommand("prox-check",
                                  "Compare closed-form T-updates with a brute-force oracle");
  prox_flags.add(prox, false);
  prox->add_flag("--all", prox_all, "All twelve models");
  prox->add_option("--n", prox_n, "Subproblems per model");
  prox->add_option("--seed", prox_seed, "Seed");
  prox->add_option("--csv", prox_csv, "Write every instance to this CSV");

  std::string preset;
  std::string exp_out = "nmd_experiment";
  std::string data_dir;
  ExperimentContext ctx;
  std::size_t exp_seeds = 10;
  std::optional<std::size_t> exp_iters;
  auto* exp = app.add_subcommand("experiment", "Run an experiment preset");
  exp->add_option("preset", preset,
                  "synthetic-convergence | csf-hardness | mnist-snp | "
                  "cbcl-complete | mit-poisson | cbcl-relu")
      ->required();
  exp->add_option("--out-dir", exp_out, "Output directory");
  exp->add_option("--data-dir", data_dir, "Dataset directory (default $NMD_DATA_DIR)");
  exp->add_option("--time-scale", ctx.time_scale, "Multiplier for time budgets")
      ->check(CLI::PositiveNumber);
  exp->add_option("--parallel", ctx.parallel, "Concurrent independent runs")
      ->check(CLI::PositiveNumber);
  exp->add_option("--seed", ctx.seed, "Seed for noise, masks and inits");
  exp->add_option("--seeds", exp_seeds, "Seeds for synthetic presets")
      ->check(CLI::PositiveNumber);
  exp->add_option("--iterations", exp_iters, "Iterations for synthetic presets")
      ->check(CLI::PositiveNumber);

  std::string manifest_path;
  std::string rerun_out;
  auto* rerun = app.add_subcommand("rerun", "Repeat a run from its manifest");
  rerun->add_option("--manifest", manifest_path, "manifest.json of a previous run")
      ->required()
      ->check(CLI::ExistingFile);
  rerun->add_option("--out-dir", rerun_out, "Run directory for the repeat")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInvalidFlags;
  }

  try {
    if (*factorize) {
      fact.req.command = "factorize";
      return execute(fact.resolve());
    }
    if (*complete) {
      comp.req.command = "complete";
      if (comp.req.mask.empty()) comp.req.observed_fraction = observed_fraction;
      if (!(comp.req.train_fraction > 0.0 && comp.req.train_fraction < 1.0))
        throw UsageError("--train-fraction must lie strictly between 0 and 1");
      return execute(comp.resolve());
    }
    if (*prox) return prox_check(prox_flags, prox_all, prox_n, prox_seed, prox_csv);
    if (*exp) {
      if (!data_dir.empty()) ctx.data_dir = data_dir;
      return experiment(preset, ctx, exp_out, exp_seeds, exp_iters);
    }
    if (*rerun) {
      std::ifstream in(manifest_path);
      json j;
      try {
        j = json::parse(in);
      } catch (const json::exception& e) {
        throw UsageError(std::string("manifest: ") + e.what());
      }
      RunRequest r;
      try {
        r = request_from_json(j);
      } catch (const json::exception& e) {
        throw UsageError(std::string("manifest: ") + e.what());
      }
      r.out_dir = rerun_out;
      r.log.clear();
      r.out_w.clear();
      r.out_h.clear();
      return execute(r);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalidFlags;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalidFlags;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalidFlags;
  } catch (const MissingDatasetError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kMissingDataset;
  } catch (const DivergenceError& e) {
    std::cerr << "error: diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const Error& e) {
    // Domain violations, parse errors, unreadable files.
    std::cerr << "error: " << e.what() << '\n';
    return kInvalidData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalidData;
  }
  return kInvalidFlags;
}
