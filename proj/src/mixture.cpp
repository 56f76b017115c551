#include "robmix/mixture.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>

#include "robmix/random.hpp"

namespace robmix {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double relative_change(double previous, double current) {
  return std::abs(current - previous) / (1.0 + std::abs(previous));
}

void require_sizes(const Partition& part, Index minimum) {
  const auto n = part.counts();
  for (int j = 0; j < part.k; ++j)
    if (n[static_cast<std::size_t>(j)] < minimum)
      throw UndersizedComponentError(j, n[static_cast<std::size_t>(j)], minimum);
}

std::vector<Index> draw_without_replacement(Index n, Index m, Rng& rng) {
  std::vector<Index> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), Index{0});
  for (Index i = 0; i < m; ++i) {
    std::uniform_int_distribution<Index> pick(i, n - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
  }
  pool.resize(static_cast<std::size_t>(m));
  std::sort(pool.begin(), pool.end());
  return pool;
}

struct StartOutcome {
  MixtureModel model;
  Partition partition;
  std::vector<double> trace;
  std::vector<Index> outliers;
  std::vector<double> robust_sigma2;
  bool converged = false;
  int iterations = 0;
};

bool is_robust(Solver s) { return s == Solver::CAT || s == Solver::FAST_CAT; }

MixtureModel initialize(const Dataset& data, const FitConfig& cfg, double floor, Rng& rng) {
  const Index n0 = cfg.resolved_init_size(data.covariates());
  MixtureModel model;
  for (int j = 0; j < cfg.k; ++j) {
    const auto rows = draw_without_replacement(data.size(), n0, rng);
    const Dataset sample = data.rows(rows);
    RegressionFit f;
    if (is_robust(cfg.solver)) {
      LtsOptions opt;
      opt.n_subsets = cfg.lts_subsets;
      opt.seed = rng();
      f = lts_fit(sample.y, sample.x, opt);
    } else {
      f = ols_fit(sample.y, sample.x);
    }
    model.components.push_back({1.0 / cfg.k, f.beta, std::max(f.sigma2, floor)});
  }
  return model;
}

StartOutcome run_cem(const Dataset& data, const FitConfig& cfg, MixtureModel model) {
  const Index minimum = data.covariates() + 2;
  StartOutcome out;
  std::optional<Partition> previous;
  Partition part;
  for (int it = 0; it < cfg.max_iter; ++it) {
    part = c_step(e_step(data, model));
    require_sizes(part, minimum);
    out.trace.push_back(complete_log_likelihood(data, model, part));
    out.iterations = it + 1;
    if (previous && part == *previous) {
      out.converged = true;
      break;
    }
    const auto m = out.trace.size();
    if (m >= 2 && relative_change(out.trace[m - 2], out.trace[m - 1]) < cfg.tol) {
      out.converged = true;
      break;
    }
    model = m_step_ols(data, part, cfg.k);
    previous = part;
  }
  if (!out.converged) {
    part = c_step(e_step(data, model));
    require_sizes(part, minimum);
    out.trace.push_back(complete_log_likelihood(data, model, part));
  }
  out.model = std::move(model);
  out.partition = std::move(part);
  return out;
}

// Algorithm with exact coordinate ascent on the trimmed objective: the M-step
// maximizes it for the current partition, and the arg-max reassignment is
// accepted only when it does not lower the objective at the new parameters.
StartOutcome run_cat(const Dataset& data, const FitConfig& cfg, MixtureModel model, Rng& rng) {
  const Index minimum = 2 * (data.covariates() + 1);
  StartOutcome out;
  Partition part = c_step(e_step(data, model));
  require_sizes(part, minimum);
  out.trace.push_back(trimmed_complete_log_likelihood(data, model, part));
  for (int it = 0; it < cfg.max_iter; ++it) {
    LtsStep step = m_step_lts(data, part, cfg.k, cfg, model, rng());
    model = std::move(step.model);
    out.iterations = it + 1;

    Partition next = c_step(e_step(data, model));
    bool accept = !(next == part);
    double value = 0;
    if (accept) {
      require_sizes(next, minimum);
      value = trimmed_complete_log_likelihood(data, model, next);
      accept = value >= trimmed_complete_log_likelihood(data, model, part);
    }
    if (!accept) {
      out.trace.push_back(trimmed_complete_log_likelihood(data, model, part));
      out.converged = true;
      break;
    }
    const double change = relative_change(out.trace.back(), value);
    part = std::move(next);
    out.trace.push_back(value);
    if (change < cfg.tol) {
      out.converged = true;
      break;
    }
  }
  // Final per-component stage: trimmed fit warm-started at the converged
  // coefficients, then reweighted least squares for the reported model.
  LtsStep last = m_step_lts(data, part, cfg.k, cfg, model, rng());
  model = std::move(last.reweighted);
  out.outliers = std::move(last.outliers);
  out.robust_sigma2 = std::move(last.robust_sigma2);
  out.model = std::move(model);
  out.partition = std::move(part);
  return out;
}

StartOutcome run_fast_cat(const Dataset& data, const FitConfig& cfg, MixtureModel model,
                          double floor, Rng& rng) {
  const Index minimum = 2 * (data.covariates() + 1);
  StartOutcome out;
  Partition part = c_step(e_step(data, model));
  require_sizes(part, minimum);
  out.trace.push_back(trimmed_complete_log_likelihood(data, model, part));
  for (int it = 0; it < cfg.max_iter; ++it) {
    LtsStep step = m_step_lts(data, part, cfg.k, cfg, model, rng());
    out.outliers = step.outliers;
    out.robust_sigma2 = step.robust_sigma2;
    out.iterations = it + 1;

    // Refit: EM on the non-flagged samples, warm-started at the reweighted fit.
    MixtureModel warm = step.reweighted;
    std::vector<Index> kept;
    kept.reserve(static_cast<std::size_t>(data.size()));
    std::size_t u = 0;
    for (Index i = 0; i < data.size(); ++i) {
      if (u < step.outliers.size() && step.outliers[u] == i) {
        ++u;
        continue;
      }
      kept.push_back(i);
    }
    try {
      model = run_em(data.rows(kept), warm, cfg.refit_max_iter, cfg.tol, floor).model;
    } catch (const UndersizedComponentError&) {
      model = std::move(warm);
    } catch (const DegenerateDesignError&) {
      model = std::move(warm);
    }

    Partition next = c_step(e_step(data, model));
    require_sizes(next, minimum);
    const double value = trimmed_complete_log_likelihood(data, model, next);
    const double change = relative_change(out.trace.back(), value);
    out.trace.push_back(value);
    const bool fixed = next == part;
    part = std::move(next);
    if (fixed || change < cfg.tol) {
      out.converged = true;
      break;
    }
  }
  out.model = std::move(model);
  out.partition = std::move(part);
  return out;
}

StartOutcome run_em_start(const Dataset& data, const FitConfig& cfg, const MixtureModel& init,
                          double floor) {
  EmRun em = run_em(data, init, cfg.max_iter, cfg.tol, floor);
  StartOutcome out;
  out.partition = c_step(e_step(data, em.model));
  out.model = std::move(em.model);
  out.trace = std::move(em.trace);
  out.converged = em.converged;
  out.iterations = em.iterations;
  return out;
}

}  // namespace

std::string_view to_string(Solver s) {
  switch (s) {
    case Solver::EM_MLE: return "mle";
    case Solver::CEM: return "cem";
    case Solver::CAT: return "cat";
    case Solver::FAST_CAT: return "fast-cat";
  }
  return "unknown";
}

std::optional<Solver> parse_solver(std::string_view name) {
  std::string s;
  for (char c : name) s.push_back(c == '_' ? '-' : static_cast<char>(std::tolower(c)));
  if (s == "mle" || s == "em" || s == "em-mle") return Solver::EM_MLE;
  if (s == "cem") return Solver::CEM;
  if (s == "cat") return Solver::CAT;
  if (s == "fast-cat" || s == "fastcat") return Solver::FAST_CAT;
  return std::nullopt;
}

void FitConfig::validate(Index covariates) const {
  if (k < 1) throw ParameterError("k must be >= 1");
  if (n_starts < 1) throw ParameterError("n_starts must be >= 1");
  if (max_iter < 1) throw ParameterError("max_iter must be >= 1");
  if (!(tol >= 0)) throw ParameterError("tol must be non-negative");
  if (!(outlier_cutoff > 0)) throw ParameterError("outlier_cutoff must be positive");
  if (lts_subsets < 1) throw ParameterError("lts_subsets must be positive");
  if (init_sample_size != 0 && init_sample_size < covariates + 1)
    throw ParameterError("init_sample_size must be at least P + 1");
}

PosteriorMatrix e_step(const Dataset& data, const MixtureModel& model) {
  MatrixXd l = component_log_densities(data, model);
  for (int j = 0; j < model.k(); ++j) l.col(j).array() += std::log(model[j].pi);
  for (Index i = 0; i < l.rows(); ++i) {
    const double norm = log_sum_exp(l.row(i));
    l.row(i) = (l.row(i).array() - norm).exp();
  }
  return {std::move(l)};
}

Partition c_step(const PosteriorMatrix& posterior) {
  const auto& w = posterior.w;
  Partition part;
  part.k = static_cast<int>(w.cols());
  part.z.resize(w.rows());
  for (Index i = 0; i < w.rows(); ++i) {
    int best = 0;
    for (int j = 1; j < part.k; ++j)
      if (w(i, j) > w(i, best)) best = j;
    part.z(i) = best;
  }
  return part;
}

MixtureModel m_step_ols(const Dataset& data, const Partition& part, int k) {
  part.validate(data.size());
  if (part.k != k) throw ParameterError("m_step_ols: partition has a different K");
  require_sizes(part, data.covariates() + 2);
  const double floor = sigma_floor(data);
  const auto counts = part.counts();
  MixtureModel model;
  for (int j = 0; j < k; ++j) {
    const Dataset sub = data.rows(part.members(j));
    const RegressionFit f = ols_fit(sub.y, sub.x);
    model.components.push_back(
        {static_cast<double>(counts[static_cast<std::size_t>(j)]) / static_cast<double>(data.size()),
         f.beta, std::max(f.sigma2, floor)});
  }
  return model;
}

namespace {

LtsStep m_step_lts_impl(const Dataset& data, const Partition& part, int k, const FitConfig& cfg,
                        const MixtureModel* warm, std::uint64_t stream) {
  part.validate(data.size());
  if (part.k != k) throw ParameterError("m_step_lts: partition has a different K");
  if (warm && warm->k() != k) throw ParameterError("m_step_lts: warm start has a different K");
  require_sizes(part, 2 * (data.covariates() + 1));
  const double floor = sigma_floor(data);

  LtsStep step;
  std::vector<Index> coverage;
  for (int j = 0; j < k; ++j) {
    const auto members = part.members(j);
    const Dataset sub = data.rows(members);
    LtsOptions opt;
    opt.n_subsets = cfg.lts_subsets;
    opt.seed = derive_seed(derive_seed(cfg.seed, stream), static_cast<std::uint64_t>(j));
    if (warm) opt.warm_start = (*warm)[j].beta;
    RegressionFit f = lts_fit(sub.y, sub.x, opt);

    f.sigma2 = std::max(f.sigma2, floor);
    RegressionFit g = reweighted_fit(f, sub.y, sub.x, cfg.outlier_cutoff);
    g.sigma2 = std::max(g.sigma2, floor);
    const Mask flags = flag_outliers(g, sub.y, sub.x, cfg.outlier_cutoff);
    for (Index r = 0; r < flags.size(); ++r)
      if (flags(r)) step.outliers.push_back(members[static_cast<std::size_t>(r)]);
    const double share = static_cast<double>(members.size()) / static_cast<double>(data.size());
    coverage.push_back(f.h);
    step.robust_sigma2.push_back(g.sigma2);
    step.model.components.push_back({share, f.beta, std::max(f.trimmed_sigma2, floor)});
    step.reweighted.components.push_back({share, std::move(g.beta), g.sigma2});
  }
  const auto total = static_cast<double>(std::accumulate(coverage.begin(), coverage.end(), Index{0}));
  for (int j = 0; j < k; ++j)
    step.model[j].pi = static_cast<double>(coverage[static_cast<std::size_t>(j)]) / total;
  std::sort(step.outliers.begin(), step.outliers.end());
  return step;
}

}  // namespace

LtsStep m_step_lts(const Dataset& data, const Partition& part, int k, const FitConfig& cfg,
                   std::uint64_t stream) {
  return m_step_lts_impl(data, part, k, cfg, nullptr, stream);
}

LtsStep m_step_lts(const Dataset& data, const Partition& part, int k, const FitConfig& cfg,
                   const MixtureModel& warm_start, std::uint64_t stream) {
  return m_step_lts_impl(data, part, k, cfg, &warm_start, stream);
}

MixtureModel m_step_weighted(const Dataset& data, const PosteriorMatrix& posterior,
                             double variance_floor) {
  const auto& w = posterior.w;
  if (w.rows() != data.size()) throw ParameterError("m_step_weighted: posterior has wrong rows");
  const Index p = data.dims();
  MixtureModel model;
  MatrixXd xs(data.size(), p);
  VectorXd ys(data.size());
  for (int j = 0; j < w.cols(); ++j) {
    const double mass = w.col(j).sum();
    if (mass < static_cast<double>(p + 1))
      throw UndersizedComponentError(j, static_cast<long>(std::floor(mass)), p + 1);
    const Eigen::ArrayXd root = w.col(j).array().sqrt();
    xs = data.x.array().colwise() * root;
    ys = (data.y.array() * root).matrix();
    Eigen::ColPivHouseholderQR<MatrixXd> qr(xs);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) throw DegenerateDesignError("m_step_weighted: weighted design is singular");
    VectorXd beta = qr.solve(ys);
    const double rss = (w.col(j).array() * (data.y - data.x * beta).array().square()).sum();
    model.components.push_back({mass / static_cast<double>(data.size()), std::move(beta),
                                std::max(rss / mass, variance_floor)});
  }
  return model;
}

EmRun run_em(const Dataset& data, const MixtureModel& init, int max_iter, double tol,
             double variance_floor) {
  EmRun run;
  run.model = init;
  for (int it = 0; it < max_iter; ++it) {
    run.trace.push_back(observed_log_likelihood(data, run.model));
    run.iterations = it + 1;
    const auto m = run.trace.size();
    if (m >= 2 && relative_change(run.trace[m - 2], run.trace[m - 1]) < tol) {
      run.converged = true;
      break;
    }
    run.model = m_step_weighted(data, e_step(data, run.model), variance_floor);
  }
  if (!run.converged) run.trace.push_back(observed_log_likelihood(data, run.model));
  return run;
}

Index selection_coverage(Index n, std::span<const double> flagged_per_start) {
  if (n < 1) throw ParameterError("selection_coverage: n must be positive");
  if (flagged_per_start.empty()) return n;
  std::vector<double> v(flagged_per_start.begin(), flagged_per_start.end());
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  const double median = v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
  const double alpha = std::min(0.5, 1.25 * median / static_cast<double>(n));
  return n - static_cast<Index>(std::floor(alpha * static_cast<double>(n)));
}

FitResult fit(const Dataset& data, const FitConfig& cfg) {
  data.validate();
  cfg.validate(data.covariates());
  const Index n0 = cfg.resolved_init_size(data.covariates());
  const Index per_component = std::max<Index>(2 * (data.covariates() + 1), n0);
  if (data.size() < cfg.k * per_component)
    throw FitFailure("fit: N=" + std::to_string(data.size()) + " is below K * " +
                         std::to_string(per_component) + " = " +
                         std::to_string(cfg.k * per_component),
                     {});

  const double floor = sigma_floor(data);
  std::vector<StartOutcome> outcomes;
  std::vector<int> indices;
  std::vector<std::string> diagnostics;
  int failed = 0;
  int attempts = 0;
  for (int start = 0; start < cfg.n_starts + std::min(failed, cfg.bonus_retries); ++start) {
    ++attempts;
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(start)));
    try {
      MixtureModel init = initialize(data, cfg, floor, rng);
      switch (cfg.solver) {
        case Solver::EM_MLE: outcomes.push_back(run_em_start(data, cfg, init, floor)); break;
        case Solver::CEM: outcomes.push_back(run_cem(data, cfg, std::move(init))); break;
        case Solver::CAT: outcomes.push_back(run_cat(data, cfg, std::move(init), rng)); break;
        case Solver::FAST_CAT:
          outcomes.push_back(run_fast_cat(data, cfg, std::move(init), floor, rng));
          break;
      }
      indices.push_back(start);
    } catch (const UndersizedComponentError& e) {
      ++failed;
      diagnostics.push_back("start " + std::to_string(start) + ": " + e.what());
    } catch (const DegenerateDesignError& e) {
      ++failed;
      diagnostics.push_back("start " + std::to_string(start) + ": " + e.what());
    }
  }
  if (outcomes.empty())
    throw FitFailure("fit: all " + std::to_string(attempts) + " starts failed", diagnostics);

  std::vector<double> scores;
  if (is_robust(cfg.solver)) {
    std::vector<double> flagged;
    for (const auto& o : outcomes) flagged.push_back(static_cast<double>(o.outliers.size()));
    const Index h = selection_coverage(data.size(), flagged);
    for (const auto& o : outcomes) scores.push_back(trimmed_observed_log_likelihood(data, o.model, h));
  } else {
    for (const auto& o : outcomes) scores.push_back(o.trace.back());
  }
  const auto pick = static_cast<std::size_t>(std::distance(
      scores.begin(), std::max_element(scores.begin(), scores.end())));
  StartOutcome* best = &outcomes[pick];

  FitResult result;
  result.posterior = e_step(data, best->model);
  result.model = std::move(best->model);
  result.partition = std::move(best->partition);
  result.outliers = std::move(best->outliers);
  result.trace = std::move(best->trace);
  result.converged = best->converged;
  result.iterations = best->iterations;
  result.robust_sigma2 = std::move(best->robust_sigma2);
  result.selection_score = scores[pick];
  result.best_start = indices[pick];
  result.starts_attempted = attempts;
  result.starts_failed = failed;
  return result;
}

}  // namespace robmix
