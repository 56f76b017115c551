#pragma once

// Mixture-of-regressions solvers sharing one E/C/M skeleton:
//
//   EM_MLE    soft EM on the observed log-likelihood
//   CEM       classification EM on the complete-data log-likelihood
//   CAT       CEM with component-wise LTS in the M-step (trimmed objective)
//   FAST_CAT  CAT plus a per-iteration EM refit on the non-flagged samples

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "robmix/core.hpp"
#include "robmix/linreg.hpp"

namespace robmix {

enum class Solver { EM_MLE, CEM, CAT, FAST_CAT };

std::string_view to_string(Solver s);
/// Accepts "mle", "em", "cem", "cat", "fast-cat" (case-insensitive, '_' or '-').
std::optional<Solver> parse_solver(std::string_view name);

struct FitConfig {
  int k = 2;
  int n_starts = 20;
  int max_iter = 200;
  double tol = 1e-8;
  /// 0 selects max(P + 2, 10).
  Index init_sample_size = 0;
  double outlier_cutoff = 2.5;
  std::uint64_t seed = 0;
  Solver solver = Solver::CAT;
  Index lts_subsets = 500;
  int refit_max_iter = 50;
  /// Extra attempts granted when starts are abandoned for undersized components.
  int bonus_retries = 3;

  Index resolved_init_size(Index covariates) const {
    return init_sample_size > 0 ? init_sample_size : std::max<Index>(covariates + 2, 10);
  }
  void validate(Index covariates) const;
};

struct FitResult {
  MixtureModel model;
  Partition partition;
  PosteriorMatrix posterior;
  /// Sorted 0-based indices of flagged observations; empty for EM_MLE.
  std::vector<Index> outliers;
  /// Monitored objective per iteration (observed, complete, or trimmed
  /// log-likelihood depending on the solver).
  std::vector<double> trace;
  bool converged = false;
  int iterations = 0;
  /// Consistency-corrected LTS scale per component (robust solvers only).
  std::vector<double> robust_sigma2;
  /// Score used to rank starts: the final objective for EM_MLE and CEM, the
  /// trimmed observed log-likelihood at selection_coverage for robust solvers.
  double selection_score = 0;
  int best_start = -1;
  int starts_attempted = 0;
  int starts_failed = 0;

  double objective() const { return trace.empty() ? 0.0 : trace.back(); }
};

/// Posterior membership probabilities, normalized in log space.
PosteriorMatrix e_step(const Dataset& data, const MixtureModel& model);

/// Hard assignment to the most probable component; ties go to the lowest index.
Partition c_step(const PosteriorMatrix& posterior);

/// pi_k = n_k / N and per-component least squares (variance floored at
/// sigma_floor). Throws UndersizedComponentError when n_k < P + 2.
MixtureModel m_step_ols(const Dataset& data, const Partition& part, int k);

struct LtsStep {
  /// Maximizer of the trimmed complete-data log-likelihood for the partition.
  MixtureModel model;
  /// Reweighted least squares per component with pi_k = n_k / N.
  MixtureModel reweighted;
  /// Union of per-component flags against the reweighted scale, sorted, 0-based.
  std::vector<Index> outliers;
  /// Reweighted, consistency-corrected scale per component.
  std::vector<double> robust_sigma2;
};

/// Component-wise LTS with h_k = floor(n_k/2) + 1. The returned model is the
/// maximizer of the trimmed complete-data log-likelihood for this partition:
/// beta_k from LTS, sigma2_k = trimmed RSS / h_k, pi_k = h_k / sum_j h_j.
/// Each component is also refit by reweighted least squares, which supplies
/// the outlier flags and robust scale.
/// Throws UndersizedComponentError when n_k < 2(P + 1).
LtsStep m_step_lts(const Dataset& data, const Partition& part, int k, const FitConfig& cfg,
                   std::uint64_t stream = 0);

/// As above, additionally seeding each component's LTS with the coefficients
/// of `warm_start`, so the trimmed objective cannot decrease relative to them.
LtsStep m_step_lts(const Dataset& data, const Partition& part, int k, const FitConfig& cfg,
                   const MixtureModel& warm_start, std::uint64_t stream = 0);

/// Soft-assignment M-step: weighted least squares per component.
MixtureModel m_step_weighted(const Dataset& data, const PosteriorMatrix& posterior,
                             double variance_floor);

struct EmRun {
  MixtureModel model;
  std::vector<double> trace;
  bool converged = false;
  int iterations = 0;
};

/// EM iterations on the observed log-likelihood starting at `init`.
EmRun run_em(const Dataset& data, const MixtureModel& init, int max_iter, double tol,
             double variance_floor);

/// Coverage used to rank the starts of a robust fit: N minus
/// floor(alpha N), where alpha is 1.25 times the median flagged fraction
/// across starts, capped at one half.
Index selection_coverage(Index n, std::span<const double> flagged_per_start);

/// Multi-start fit dispatched on cfg.solver; returns the start with the
/// largest selection score. Throws FitFailure when no start completes.
FitResult fit(const Dataset& data, const FitConfig& cfg);

}  // namespace robmix
