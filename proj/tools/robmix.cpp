// robmix: simulate benchmark data, fit robust mixtures of regressions, and run
// Monte-Carlo bias/MSE benchmarks.
//
// Exit codes: 0 success, 2 usage, 3 fit failure, 4 I/O or input format.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "robmix/errors.hpp"
#include "robmix/evaluate.hpp"
#include "robmix/io.hpp"
#include "robmix/mixture.hpp"
#include "robmix/simulate.hpp"

namespace fs = std::filesystem;
using namespace robmix;
using io::Json;

namespace {

constexpr int kUsage = 2;
constexpr int kFitFailure = 3;
constexpr int kIo = 4;

struct FitFlags {
  int k = 2;
  std::string solver = "cat";
  int starts = 20;
  int max_iter = 200;
  double tol = 1e-8;
  Index init_size = 0;
  double cutoff = 2.5;
  Index lts_subsets = 500;
};

struct SpecFlags {
  int model = 1;
  int scenario = 1;
  Index n = 200;
  bool unbalanced = false;
  std::vector<double> priors;
};

void add_fit_flags(CLI::App* cmd, FitFlags& f, bool with_k) {
  if (with_k) cmd->add_option("--k", f.k, "number of components")->check(CLI::PositiveNumber);
  cmd->add_option("--solver", f.solver, "mle, cem, cat or fast-cat")
      ->check([](const std::string& s) {
        return parse_solver(s) ? std::string() : "unknown solver '" + s + "'";
      });
  cmd->add_option("--starts", f.starts, "random starts")->check(CLI::PositiveNumber);
  cmd->add_option("--max-iter", f.max_iter, "iteration cap per start")->check(CLI::PositiveNumber);
  cmd->add_option("--tol", f.tol, "relative objective change for convergence")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--init-size", f.init_size, "initialization sample size (0: max(P+2, 10))")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--cutoff", f.cutoff, "outlier cutoff in robust scale units")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--lts-subsets", f.lts_subsets, "elemental subsets per LTS fit")
      ->check(CLI::PositiveNumber);
}

void add_spec_flags(CLI::App* cmd, SpecFlags& s) {
  cmd->add_option("--model", s.model, "design model (1 or 2)")->check(CLI::Range(1, 2));
  cmd->add_option("--scenario", s.scenario, "error scenario (1-5)")->check(CLI::Range(1, 5));
  cmd->add_option("--n", s.n, "sample size")->check(CLI::Range(Index{50}, Index{100000000}));
  auto* unb = cmd->add_flag("--unbalanced", s.unbalanced, "use the unbalanced priors");
  cmd->add_option("--priors", s.priors, "explicit priors, comma separated")
      ->delimiter(',')
      ->excludes(unb);
}

FitConfig make_config(const FitFlags& f, std::uint64_t seed) {
  FitConfig cfg;
  cfg.k = f.k;
  cfg.solver = *parse_solver(f.solver);
  cfg.n_starts = f.starts;
  cfg.max_iter = f.max_iter;
  cfg.tol = f.tol;
  cfg.init_sample_size = f.init_size;
  cfg.outlier_cutoff = f.cutoff;
  cfg.lts_subsets = f.lts_subsets;
  cfg.seed = seed;
  return cfg;
}

ScenarioSpec make_spec(const SpecFlags& s, std::uint64_t seed) {
  ScenarioSpec spec;
  spec.model = *model_from_int(s.model);
  spec.scenario = *scenario_from_int(s.scenario);
  spec.n = s.n;
  if (s.unbalanced) spec.priors = ScenarioSpec::unbalanced_priors(spec.model);
  if (!s.priors.empty()) spec.priors = s.priors;
  spec.seed = seed;
  spec.validate();
  return spec;
}

fs::path sibling(const fs::path& p, const std::string& suffix) {
  fs::path out = p;
  out.replace_extension();
  out += suffix;
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  if (dir.empty()) return;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

Json path_list(const std::vector<fs::path>& paths) {
  Json a = Json::array();
  for (const auto& p : paths) a.push_back(p.string());
  return a;
}

Json manifest(const std::string& command, const std::vector<fs::path>& inputs,
              const std::vector<fs::path>& outputs, double seconds) {
  return {{"schema", io::kManifestSchema},
          {"command", command},
          {"version", ROBMIX_VERSION},
          {"inputs", path_list(inputs)},
          {"outputs", path_list(outputs)},
          {"wall_time_seconds", seconds}};
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_simulate(const SpecFlags& s, std::uint64_t seed, const fs::path& out, fs::path truth) {
  const auto t0 = std::chrono::steady_clock::now();
  const ScenarioSpec spec = make_spec(s, seed);
  const SimulatedData sim = generate(spec);
  if (truth.empty()) truth = sibling(out, ".truth.json");
  ensure_dir(out.parent_path());
  io::write_text(out, io::dataset_to_csv(sim.data));
  io::write_text(truth, io::truth_to_json(sim, spec).dump(2) + "\n");
  const fs::path man = sibling(out, ".manifest.json");
  Json m = manifest("simulate", {}, {out, truth}, elapsed(t0));
  m["spec"] = io::spec_to_json(spec);
  io::write_text(man, m.dump(2) + "\n");
  std::printf("wrote %s (%ld rows), %s\n", out.string().c_str(), static_cast<long>(sim.data.size()),
              truth.string().c_str());
  return 0;
}

int cmd_fit(const FitFlags& f, std::uint64_t seed, const fs::path& input, const fs::path& dir,
            const std::string& prefix) {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset data = io::read_dataset(input);
  const FitConfig cfg = make_config(f, seed);
  const FitResult res = fit(data, cfg);

  ensure_dir(dir);
  const fs::path model_path = dir / (prefix + ".model.json");
  const fs::path assign_path = dir / (prefix + ".assign.csv");
  const fs::path trace_path = dir / (prefix + ".trace.csv");
  const fs::path resid_path = dir / (prefix + ".residuals.csv");
  io::write_text(model_path, io::fit_to_json(res, cfg).dump(2) + "\n");
  io::write_text(assign_path, io::assignments_csv(res));
  io::write_text(trace_path, io::trace_csv(res));
  io::write_text(resid_path, io::residuals_csv(data, res));
  Json m = manifest("fit", {input}, {model_path, assign_path, trace_path, resid_path}, elapsed(t0));
  m["config"] = io::config_to_json(cfg);
  io::write_text(dir / (prefix + ".manifest.json"), m.dump(2) + "\n");

  std::printf("%s fit, K=%d, N=%ld: objective %.6f, %d iterations%s, %zu outliers\n",
              std::string(to_string(cfg.solver)).c_str(), cfg.k, static_cast<long>(data.size()),
              res.objective(), res.iterations, res.converged ? "" : " (not converged)",
              res.outliers.size());
  for (int j = 0; j < res.model.k(); ++j) {
    std::printf("  component %d: pi %.4f sigma2 %.4f beta", j + 1, res.model[j].pi,
                res.model[j].sigma2);
    for (double b : res.model[j].beta) std::printf(" %.4f", b);
    std::printf("\n");
  }
  return 0;
}

int cmd_benchmark(const SpecFlags& s, const FitFlags& f, std::uint64_t seed, Index reps,
                  unsigned threads, const fs::path& dir, const std::string& prefix) {
  const auto t0 = std::chrono::steady_clock::now();
  const ScenarioSpec spec = make_spec(s, seed);
  FitConfig cfg = make_config(f, seed);
  cfg.k = spec.k();
  const BenchmarkReport report = run_benchmark(spec, cfg, reps, threads);

  ensure_dir(dir);
  const fs::path csv_path = dir / (prefix + ".report.csv");
  const fs::path json_path = dir / (prefix + ".report.json");
  io::write_text(csv_path, io::report_csv(report));
  io::write_text(json_path, io::report_to_json(report).dump(2) + "\n");
  Json m = manifest("benchmark", {}, {csv_path, json_path}, elapsed(t0));
  m["spec"] = io::spec_to_json(spec);
  m["config"] = io::config_to_json(cfg);
  m["reps"] = reps;
  m["threads"] = threads;
  io::write_text(dir / (prefix + ".manifest.json"), m.dump(2) + "\n");

  std::printf("model %d scenario %d n %ld solver %s reps %ld (failed %ld)\n", s.model, s.scenario,
              static_cast<long>(spec.n), std::string(to_string(cfg.solver)).c_str(),
              static_cast<long>(reps), static_cast<long>(report.n_failed));
  std::printf("%-10s %10s %10s %10s\n", "parameter", "truth", "bias", "mse");
  for (const auto& r : report.rows)
    std::printf("%-10s %10.4f %10.4f %10.4f\n", r.name.c_str(), r.truth, r.bias, r.mse);
  std::printf("outlier precision %.4f recall %.4f\n", report.outlier_precision,
              report.outlier_recall);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust mixture-of-regressions fitting and benchmarks"};
  app.set_version_flag("--version", ROBMIX_VERSION);
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  const auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "base seed")->envname("ROBMIX_SEED");
  };

  SpecFlags sim_spec;
  fs::path sim_out = "simulated.csv";
  fs::path sim_truth;
  auto* sim = app.add_subcommand("simulate", "write a simulated dataset and its truth sidecar");
  add_spec_flags(sim, sim_spec);
  add_seed(sim);
  sim->add_option("--out", sim_out, "dataset CSV path");
  sim->add_option("--truth", sim_truth, "truth JSON path (default: <out>.truth.json)");

  FitFlags fit_flags;
  fs::path fit_input;
  fs::path fit_dir = ".";
  std::string fit_prefix = "fit";
  auto* fitc = app.add_subcommand("fit", "fit a mixture of regressions to a CSV dataset");
  fitc->add_option("input,--input", fit_input, "dataset CSV (header y,x1,...)")->required();
  add_fit_flags(fitc, fit_flags, true);
  add_seed(fitc);
  fitc->add_option("--out-dir", fit_dir, "output directory");
  fitc->add_option("--prefix", fit_prefix, "output file prefix");

  SpecFlags bench_spec;
  FitFlags bench_flags;
  Index reps = 100;
  unsigned threads = 0;
  fs::path bench_dir = ".";
  std::string bench_prefix = "benchmark";
  auto* bench = app.add_subcommand("benchmark", "Monte-Carlo bias and MSE of a solver");
  add_spec_flags(bench, bench_spec);
  add_fit_flags(bench, bench_flags, false);
  add_seed(bench);
  bench->add_option("--reps", reps, "repetitions")->check(CLI::PositiveNumber);
  bench->add_option("--threads", threads, "worker threads (0: all cores)");
  bench->add_option("--out-dir", bench_dir, "output directory");
  bench->add_option("--prefix", bench_prefix, "output file prefix");

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
    return kUsage;
  }

  try {
    if (*sim) return cmd_simulate(sim_spec, seed, sim_out, sim_truth);
    if (*fitc) return cmd_fit(fit_flags, seed, fit_input, fit_dir, fit_prefix);
    return cmd_benchmark(bench_spec, bench_flags, seed, reps, threads, bench_dir, bench_prefix);
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const FitFailure& e) {
    std::cerr << "fit failed: " << e.what() << "\n";
    for (const auto& d : e.diagnostics()) std::cerr << "  " << d << "\n";
    return kFitFailure;
  } catch (const BenchmarkFailure& e) {
    std::cerr << "benchmark failed: " << e.what() << "\n";
    return kFitFailure;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
