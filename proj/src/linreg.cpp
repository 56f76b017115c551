#include "robmix/linreg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace robmix {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kRankTolerance = 1e-10;

// Reusable buffers for the inner loops of FAST-LTS.
class Workspace {
 public:
  Workspace(const Eigen::Ref<const VectorXd>& y, const Eigen::Ref<const MatrixXd>& x, Index h)
      : y_(y), x_(x), h_(h), residual_(y.size()), squared_(y.size()), order_(y.size()) {
    std::iota(order_.begin(), order_.end(), Index{0});
    qr_.setThreshold(kRankTolerance);
  }

  Index n() const { return y_.size(); }
  Index p() const { return x_.cols(); }

  // Least squares on the given rows; false when they are rank deficient.
  bool solve(std::span<const Index> rows, VectorXd& beta) {
    const auto m = static_cast<Index>(rows.size());
    xs_.resize(m, p());
    ys_.resize(m);
    for (Index r = 0; r < m; ++r) {
      xs_.row(r) = x_.row(rows[r]);
      ys_(r) = y_(rows[r]);
    }
    qr_.compute(xs_);
    if (qr_.rank() < p()) return false;
    beta = qr_.solve(ys_);
    return beta.allFinite();
  }

  // Selects the h smallest squared residuals at beta, leaving their indices
  // (ascending) in the first h slots of order_. Returns their sum.
  double select(const VectorXd& beta) {
    residual_.noalias() = x_ * beta;
    residual_ = y_ - residual_;
    squared_ = residual_.array().square();
    const auto cmp = [this](Index a, Index b) {
      return squared_(a) < squared_(b) || (squared_(a) == squared_(b) && a < b);
    };
    const auto mid = order_.begin() + h_;
    if (h_ < n()) std::nth_element(order_.begin(), mid, order_.end(), cmp);
    std::sort(order_.begin(), mid);
    double sum = 0;
    for (auto it = order_.begin(); it != mid; ++it) sum += squared_(*it);
    return sum;
  }

  std::span<const Index> selected() const {
    return {order_.data(), static_cast<std::size_t>(h_)};
  }

  const VectorXd& residuals() const { return residual_; }

 private:
  Eigen::Ref<const VectorXd> y_;
  Eigen::Ref<const MatrixXd> x_;
  Index h_;
  VectorXd residual_;
  Eigen::ArrayXd squared_;
  std::vector<Index> order_;
  MatrixXd xs_;
  VectorXd ys_;
  Eigen::ColPivHouseholderQR<MatrixXd> qr_;
};

struct Candidate {
  VectorXd beta;
  double objective = std::numeric_limits<double>::infinity();
};

// Applies up to `steps` C-steps starting at beta. Stops early at a fixed point
// (objective no longer decreasing) or when the retained rows are singular.
Candidate concentrate(Workspace& ws, VectorXd beta, int steps) {
  double objective = ws.select(beta);
  std::vector<Index> rows;
  VectorXd next;
  for (int s = 0; s < steps; ++s) {
    rows.assign(ws.selected().begin(), ws.selected().end());
    if (!ws.solve(rows, next)) break;
    const double updated = ws.select(next);
    if (!(updated < objective)) {
      objective = ws.select(beta);
      break;
    }
    beta = next;
    objective = updated;
  }
  return {std::move(beta), objective};
}

// C(n, k), saturating at `cap`.
Index binomial_capped(Index n, Index k, Index cap) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  double c = 1;
  for (Index i = 1; i <= k; ++i) {
    c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
    if (c > static_cast<double>(cap)) return cap + 1;
  }
  return static_cast<Index>(std::llround(c));
}

bool next_combination(std::vector<Index>& c, Index n) {
  const auto k = static_cast<Index>(c.size());
  for (Index i = k - 1; i >= 0; --i) {
    if (c[i] < n - k + i) {
      ++c[i];
      for (Index j = i + 1; j < k; ++j) c[j] = c[j - 1] + 1;
      return true;
    }
  }
  return false;
}

void check_shapes(const Eigen::Ref<const VectorXd>& y, const Eigen::Ref<const MatrixXd>& x) {
  if (x.rows() != y.size()) throw ParameterError("x rows do not match y length");
  if (x.cols() < 1) throw ParameterError("design matrix has no columns");
}

}  // namespace

RegressionFit ols_fit(const Eigen::Ref<const VectorXd>& y, const Eigen::Ref<const MatrixXd>& x) {
  check_shapes(y, x);
  const Index n = y.size();
  const Index p = x.cols();
  if (n < p)
    throw DegenerateDesignError("ols_fit: " + std::to_string(n) + " observations for " +
                                std::to_string(p) + " coefficients");
  Eigen::JacobiSVD<MatrixXd> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  if (!(s(p - 1) >= kRankTolerance * s(0)) || s(0) == 0)
    throw DegenerateDesignError("ols_fit: design matrix is rank deficient");

  RegressionFit fit;
  fit.beta = svd.solve(y);
  fit.residuals = y - x * fit.beta;
  fit.objective = fit.residuals.squaredNorm();
  fit.sigma2 = fit.objective / static_cast<double>(n);
  fit.trimmed_sigma2 = fit.sigma2;
  fit.inlier_mask = Mask::Constant(n, true);
  fit.h = n;
  return fit;
}

RegressionFit lts_fit(const Eigen::Ref<const VectorXd>& y, const Eigen::Ref<const MatrixXd>& x,
                      Index h, Index n_subsets, std::uint64_t seed) {
  LtsOptions options;
  options.h = h;
  options.n_subsets = n_subsets;
  options.seed = seed;
  return lts_fit(y, x, options);
}

RegressionFit lts_fit(const Eigen::Ref<const VectorXd>& y, const Eigen::Ref<const MatrixXd>& x,
                      const LtsOptions& options) {
  check_shapes(y, x);
  const Index n = y.size();
  const Index p = x.cols();
  const Index h = options.h > 0 ? options.h : default_coverage(n);
  if (h < p)
    throw ParameterError("lts_fit: coverage h=" + std::to_string(h) + " below " +
                         std::to_string(p) + " coefficients");
  if (h > n) throw ParameterError("lts_fit: coverage h exceeds sample size");
  if (options.n_subsets < 1) throw ParameterError("lts_fit: n_subsets must be positive");

  Workspace ws(y, x, h);
  std::mt19937_64 rng(options.seed);
  std::vector<Candidate> candidates;
  candidates.reserve(static_cast<std::size_t>(options.n_subsets) + 1);

  std::vector<Index> subset(static_cast<std::size_t>(p));
  VectorXd beta;
  const auto add_elemental = [&]() {
    if (!ws.solve(subset, beta)) return false;
    candidates.push_back(concentrate(ws, beta, options.warm_steps));
    return true;
  };

  if (binomial_capped(n, p, options.n_subsets) <= options.n_subsets) {
    std::iota(subset.begin(), subset.end(), Index{0});
    do {
      add_elemental();
    } while (next_combination(subset, n));
  } else {
    std::uniform_int_distribution<Index> pick(0, n - 1);
    const Index max_draws = 20 * options.n_subsets;
    Index accepted = 0;
    for (Index draw = 0; draw < max_draws && accepted < options.n_subsets; ++draw) {
      for (std::size_t j = 0; j < subset.size(); ++j) {
        Index candidate;
        do {
          candidate = pick(rng);
        } while (std::find(subset.begin(), subset.begin() + static_cast<std::ptrdiff_t>(j),
                           candidate) != subset.begin() + static_cast<std::ptrdiff_t>(j));
        subset[j] = candidate;
      }
      std::sort(subset.begin(), subset.end());
      if (add_elemental()) ++accepted;
    }
  }

  std::optional<Candidate> warm;
  if (options.warm_start) {
    if (options.warm_start->size() != p) throw ParameterError("lts_fit: warm start has wrong length");
    if (options.warm_start->allFinite())
      warm = concentrate(ws, *options.warm_start, options.warm_steps);
  }
  if (candidates.empty() && !warm)
    throw DegenerateDesignError("lts_fit: every elemental subset is rank deficient");

  // Keep the best n_refine distinct candidates, then concentrate them fully.
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) { return a.objective < b.objective; });
  std::vector<Candidate> finalists;
  for (auto& c : candidates) {
    if (static_cast<Index>(finalists.size()) >= options.n_refine) break;
    const bool duplicate =
        !finalists.empty() &&
        std::abs(finalists.back().objective - c.objective) <=
            1e-12 * (1.0 + std::abs(c.objective)) &&
        (finalists.back().beta - c.beta).cwiseAbs().maxCoeff() <=
            1e-10 * (1.0 + c.beta.cwiseAbs().maxCoeff());
    if (!duplicate) finalists.push_back(std::move(c));
  }
  if (warm) finalists.push_back(std::move(*warm));

  Candidate best;
  for (auto& c : finalists) {
    Candidate refined = concentrate(ws, std::move(c.beta), options.max_refine_steps);
    if (refined.objective < best.objective) best = std::move(refined);
  }

  RegressionFit fit;
  fit.objective = ws.select(best.beta);
  fit.beta = std::move(best.beta);
  fit.residuals = ws.residuals();
  fit.inlier_mask = Mask::Constant(n, false);
  for (Index i : ws.selected()) fit.inlier_mask(i) = true;
  fit.h = h;
  fit.trimmed_sigma2 = fit.objective / static_cast<double>(h);
  fit.sigma2 = fit.trimmed_sigma2 * lts_consistency_factor(h, n);
  return fit;
}

double trimmed_sum_of_squares(const Eigen::Ref<const VectorXd>& y,
                              const Eigen::Ref<const MatrixXd>& x,
                              const Eigen::Ref<const VectorXd>& beta, Index h) {
  check_shapes(y, x);
  if (h < 1 || h > y.size()) throw ParameterError("trimmed_sum_of_squares: h out of range");
  Workspace ws(y, x, h);
  return ws.select(beta);
}

std::vector<Index> smallest_residuals(const Eigen::Ref<const VectorXd>& residuals, Index h) {
  const Index n = residuals.size();
  if (h < 0 || h > n) throw ParameterError("smallest_residuals: h out of range");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  const Eigen::ArrayXd sq = residuals.array().square();
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return sq(a) < sq(b); });
  order.resize(static_cast<std::size_t>(h));
  std::sort(order.begin(), order.end());
  return order;
}

ConcentrationStep concentration_step(const Eigen::Ref<const VectorXd>& y,
                                     const Eigen::Ref<const MatrixXd>& x,
                                     const Eigen::Ref<const VectorXd>& beta, Index h) {
  check_shapes(y, x);
  if (h < x.cols() || h > y.size()) throw ParameterError("concentration_step: h out of range");
  Workspace ws(y, x, h);
  ConcentrationStep step;
  step.objective_before = ws.select(beta);
  const std::vector<Index> rows(ws.selected().begin(), ws.selected().end());
  if (!ws.solve(rows, step.beta))
    throw DegenerateDesignError("concentration_step: retained rows are rank deficient");
  step.objective_after = ws.select(step.beta);
  return step;
}

Mask flag_outliers(const RegressionFit& fit, const Eigen::Ref<const VectorXd>& y,
                   const Eigen::Ref<const MatrixXd>& x, double cutoff) {
  check_shapes(y, x);
  const Eigen::ArrayXd r = (y - x * fit.beta).array().abs();
  if (!(fit.sigma2 > 0)) return r > 0.0;
  return r / std::sqrt(fit.sigma2) > cutoff;
}

namespace {

RegressionFit reweight_once(const RegressionFit& fit, const Eigen::Ref<const VectorXd>& y,
                            const Eigen::Ref<const MatrixXd>& x, double cutoff) {
  const Mask keep = !flag_outliers(fit, y, x, cutoff);
  std::vector<Index> rows;
  for (Index i = 0; i < keep.size(); ++i)
    if (keep(i)) rows.push_back(i);
  const auto kept = static_cast<Index>(rows.size());
  if (kept <= x.cols())
    throw DegenerateDesignError("reweighted_fit: too few observations within the cutoff");
  MatrixXd xs(kept, x.cols());
  VectorXd ys(kept);
  for (Index r = 0; r < kept; ++r) {
    xs.row(r) = x.row(rows[static_cast<std::size_t>(r)]);
    ys(r) = y(rows[static_cast<std::size_t>(r)]);
  }
  RegressionFit out = ols_fit(ys, xs);
  out.residuals = y - x * out.beta;
  out.inlier_mask = keep;
  out.h = kept;
  out.objective = out.sigma2 * static_cast<double>(kept);
  out.trimmed_sigma2 = out.sigma2;
  out.sigma2 = out.objective / static_cast<double>(kept - x.cols()) /
               truncated_normal_variance(cutoff);
  return out;
}

}  // namespace

RegressionFit reweighted_fit(const RegressionFit& fit, const Eigen::Ref<const VectorXd>& y,
                             const Eigen::Ref<const MatrixXd>& x, double cutoff, int max_steps) {
  check_shapes(y, x);
  if (max_steps < 1) throw ParameterError("reweighted_fit: max_steps must be positive");
  RegressionFit current = reweight_once(fit, y, x, cutoff);
  for (int step = 1; step < max_steps; ++step) {
    RegressionFit next = reweight_once(current, y, x, cutoff);
    const bool stable = (next.inlier_mask == current.inlier_mask).all();
    current = std::move(next);
    if (stable) break;
  }
  return current;
}

double truncated_normal_variance(double c) {
  if (!(c > 0)) throw DomainError("truncated_normal_variance: cutoff must be positive");
  const double density = std::exp(-c * c / 2) / std::sqrt(2 * std::numbers::pi);
  const double mass = std::erf(c / std::numbers::sqrt2);
  return 1 - 2 * c * density / mass;
}

double normal_quantile(double p) {
  if (!(p > 0 && p < 1)) {
    if (p == 0) return -std::numeric_limits<double>::infinity();
    if (p == 1) return std::numeric_limits<double>::infinity();
    throw DomainError("normal_quantile: probability outside [0, 1]");
  }
  // Acklam's rational approximation, polished with one Halley step.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double low = 0.02425;
  double q;
  if (p < low) {
    const double t = std::sqrt(-2 * std::log(p));
    q = (((((c[0] * t + c[1]) * t + c[2]) * t + c[3]) * t + c[4]) * t + c[5]) /
        ((((d[0] * t + d[1]) * t + d[2]) * t + d[3]) * t + 1);
  } else if (p <= 1 - low) {
    const double t = p - 0.5;
    const double r = t * t;
    q = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * t /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    const double t = std::sqrt(-2 * std::log1p(-p));
    q = -(((((c[0] * t + c[1]) * t + c[2]) * t + c[3]) * t + c[4]) * t + c[5]) /
        ((((d[0] * t + d[1]) * t + d[2]) * t + d[3]) * t + 1);
  }
  const double e = 0.5 * std::erfc(-q / std::numbers::sqrt2) - p;
  const double u = e * std::sqrt(2 * std::numbers::pi) * std::exp(q * q / 2);
  return q - u / (1 + q * u / 2);
}

double lts_consistency_factor(Index h, Index n) {
  if (n < 1 || h < 1 || h > n) throw ParameterError("lts_consistency_factor: need 1 <= h <= n");
  if (h == n) return 1.0;
  const double alpha = static_cast<double>(h) / static_cast<double>(n);
  const double q = normal_quantile((1 + alpha) / 2);
  const double density = std::exp(-q * q / 2) / std::sqrt(2 * std::numbers::pi);
  // E[Z^2 1{|Z| <= q}] = P(chi2_3 <= q^2) = alpha - 2 q phi(q)
  const double truncated_second_moment = alpha - 2 * q * density;
  return alpha / truncated_second_moment;
}

}  // namespace robmix
