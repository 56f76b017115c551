#pragma once

#include <span>
#include <string>
#include <vector>

#include "robmix/mixture.hpp"
#include "robmix/simulate.hpp"

namespace robmix {

/// perm[k] is the estimated component matched to true component k; chosen to
/// minimize sum_k ||(beta, pi)_est[perm[k]] - (beta, pi)_true[k]||^2 by
/// exhaustive search (K <= 6). Ties keep the lexicographically first permutation.
std::vector<int> align_labels(const MixtureModel& estimate, const MixtureModel& truth);

/// Squared distance between aligned parameter matrices (variances excluded).
double alignment_distance(const MixtureModel& estimate, const MixtureModel& truth,
                          std::span<const int> perm);

/// Reorders components so that component k corresponds to truth component k.
MixtureModel permute(const MixtureModel& model, std::span<const int> perm);

struct BiasMse {
  double bias = 0;
  double mse = 0;
};

BiasMse bias_mse(std::span<const double> estimates, double truth);

struct ParameterRow {
  std::string name;  // beta<k>_<j> or pi<k>, 1-based component
  double truth = 0;
  double bias = 0;
  double mse = 0;
};

struct BenchmarkReport {
  ScenarioSpec spec;
  FitConfig config;
  /// beta entries component by component, then the mixing proportions.
  std::vector<ParameterRow> rows;
  /// Pooled over repetitions; 1 when the denominator is empty.
  double outlier_precision = 1;
  double outlier_recall = 1;
  /// Per-repetition scores (successful repetitions, in repetition order).
  std::vector<double> rep_precision;
  std::vector<double> rep_recall;
  Index n_reps = 0;
  Index n_failed = 0;

  double summed_abs_bias() const;
  double max_abs_bias() const;
  double max_mse() const;
};

/// Ordered rows of truth values in table layout.
std::vector<ParameterRow> parameter_rows(const MixtureModel& truth);

/// Repetition r uses data seed derive_seed(spec.seed, 2r) and fit seed
/// derive_seed(spec.seed, 2r + 1). threads = 0 uses all hardware threads.
/// Aggregation is in repetition order, independent of scheduling.
BenchmarkReport run_benchmark(const ScenarioSpec& spec, const FitConfig& cfg, Index reps,
                              unsigned threads = 0);

}  // namespace robmix
