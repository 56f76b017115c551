#pragma once

// Single-component regression engines: ordinary least squares and least
// trimmed squares (FAST-LTS with concentration steps), plus residual-based
// outlier flagging.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>

#include "robmix/core.hpp"

namespace robmix {

struct RegressionFit {
  Eigen::VectorXd beta;
  /// Scale estimate. OLS: RSS/n. LTS: trimmed_sigma2 times the
  /// truncated-normal consistency factor.
  double sigma2 = 0;
  /// Objective / h: the likelihood-maximizing variance over the retained set.
  double trimmed_sigma2 = 0;
  Eigen::VectorXd residuals;
  Mask inlier_mask;
  /// Sum of squared residuals over the retained set.
  double objective = 0;
  Index h = 0;
};

/// Least squares fit. Throws DegenerateDesignError when the smallest singular
/// value of x is below 1e-10 times the largest.
RegressionFit ols_fit(const Eigen::Ref<const Eigen::VectorXd>& y,
                      const Eigen::Ref<const Eigen::MatrixXd>& x);

/// floor(n/2) + 1, the maximal-breakdown coverage.
inline Index default_coverage(Index n) { return n / 2 + 1; }

struct LtsOptions {
  Index h = 0;  // 0 selects default_coverage(n)
  Index n_subsets = 500;
  int warm_steps = 2;
  Index n_refine = 10;
  int max_refine_steps = 100;
  std::uint64_t seed = 0;
  /// Extra starting coefficient vector, concentrated alongside the random
  /// elemental starts. The result's objective never exceeds the trimmed sum of
  /// squares at this vector.
  std::optional<Eigen::VectorXd> warm_start;
};

/// Least trimmed squares by FAST-LTS: random (P+1)-point elemental starts
/// (all of them when C(n, P+1) <= n_subsets), two concentration steps each,
/// then the best n_refine candidates are concentrated to a fixed point.
/// Bit-reproducible for a given (y, x, options).
RegressionFit lts_fit(const Eigen::Ref<const Eigen::VectorXd>& y,
                      const Eigen::Ref<const Eigen::MatrixXd>& x, const LtsOptions& options);

RegressionFit lts_fit(const Eigen::Ref<const Eigen::VectorXd>& y,
                      const Eigen::Ref<const Eigen::MatrixXd>& x, Index h, Index n_subsets,
                      std::uint64_t seed);

/// Sum of the h smallest squared residuals at beta.
double trimmed_sum_of_squares(const Eigen::Ref<const Eigen::VectorXd>& y,
                              const Eigen::Ref<const Eigen::MatrixXd>& x,
                              const Eigen::Ref<const Eigen::VectorXd>& beta, Index h);

/// Indices of the h smallest squared residuals; ties go to the lower index.
std::vector<Index> smallest_residuals(const Eigen::Ref<const Eigen::VectorXd>& residuals, Index h);

struct ConcentrationStep {
  Eigen::VectorXd beta;
  double objective_before = 0;
  double objective_after = 0;
};

/// One C-step: least squares on the h observations with the smallest
/// squared residuals at beta.
ConcentrationStep concentration_step(const Eigen::Ref<const Eigen::VectorXd>& y,
                                     const Eigen::Ref<const Eigen::MatrixXd>& x,
                                     const Eigen::Ref<const Eigen::VectorXd>& beta, Index h);

/// true where |y_i - x_i'beta| / sqrt(fit.sigma2) > cutoff. With a zero
/// scale every non-zero residual is flagged.
Mask flag_outliers(const RegressionFit& fit, const Eigen::Ref<const Eigen::VectorXd>& y,
                   const Eigen::Ref<const Eigen::MatrixXd>& x, double cutoff = 2.5);

/// Reweighted least squares after a robust fit: least squares on the
/// observations with |residual| / sqrt(sigma2) <= cutoff, with sigma2 the
/// residual variance of that fit (divided by kept - P - 1) rescaled for
/// truncation at the cutoff. Repeated until the kept set is stable or
/// max_steps is reached; inlier_mask marks the final kept set. Throws
/// DegenerateDesignError when the kept rows cannot support a fit.
RegressionFit reweighted_fit(const RegressionFit& fit, const Eigen::Ref<const Eigen::VectorXd>& y,
                             const Eigen::Ref<const Eigen::MatrixXd>& x, double cutoff = 2.5,
                             int max_steps = 20);

/// E[Z^2 | |Z| <= c] for standard normal Z.
double truncated_normal_variance(double c);

/// Squared consistency factor for the LTS scale at coverage h of n under
/// normal errors: a / P(chi2_3 <= q^2), q = Phi^{-1}((1 + a) / 2), a = h/n.
double lts_consistency_factor(Index h, Index n);

/// Inverse standard normal CDF.
double normal_quantile(double p);

}  // namespace robmix
