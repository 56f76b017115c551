#include "robmix/simulate.hpp"

#include <cmath>
#include <numeric>

namespace robmix {
namespace {

struct Line {
  double intercept, slope1, slope2;
};

std::vector<Line> lines(DesignModel m) {
  if (m == DesignModel::MODEL1) return {{1.0, -1.0, 1.0}, {1.0, 3.0, 1.0}};
  return {{1.0, -1.0, 0.0}, {1.0, 3.0, 0.0}, {-1.0, 0.1, 0.0}};
}

}  // namespace

std::vector<double> ScenarioSpec::balanced_priors(DesignModel m) {
  if (m == DesignModel::MODEL1) return {0.43, 0.57};
  return {0.3, 0.4, 0.3};
}

std::vector<double> ScenarioSpec::unbalanced_priors(DesignModel m) {
  if (m == DesignModel::MODEL1) return {0.38, 0.62};
  return {0.2, 0.32, 0.48};
}

void ScenarioSpec::validate() const {
  if (n < 50) throw ParameterError("scenario: n must be >= 50");
  const auto p = resolved_priors();
  if (static_cast<int>(p.size()) != k())
    throw ParameterError("scenario: expected " + std::to_string(k()) + " priors");
  double total = 0;
  for (double v : p) {
    if (!(v > 0)) throw ParameterError("scenario: priors must be positive");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-10) throw ParameterError("scenario: priors must sum to one");
}

double contamination_rate(Scenario s) {
  switch (s) {
    case Scenario::S4: return 0.05;
    case Scenario::S5: return 0.10;
    default: return 0.0;
  }
}

std::optional<Scenario> scenario_from_int(int s) {
  if (s < 1 || s > 5) return std::nullopt;
  return static_cast<Scenario>(s);
}

std::optional<DesignModel> model_from_int(int m) {
  if (m == 1) return DesignModel::MODEL1;
  if (m == 2) return DesignModel::MODEL2;
  return std::nullopt;
}

double sample_student_t(double df, Rng& rng) {
  if (!(df > 0)) throw DomainError("sample_student_t: df must be positive");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::chi_squared_distribution<double> chi2(df);
  const double z = normal(rng);
  const double v = chi2(rng);
  return z / std::sqrt(v / df);
}

MixtureModel true_model(const ScenarioSpec& spec) {
  const auto priors = spec.resolved_priors();
  const auto ls = lines(spec.model);
  // Error scale: unit for the normal scenarios and t_1 (no finite variance),
  // df / (df - 2) for t_3.
  const double variance = spec.scenario == Scenario::S3 ? 3.0 : 1.0;
  MixtureModel m;
  for (std::size_t j = 0; j < ls.size(); ++j) {
    Eigen::VectorXd beta(spec.covariates() + 1);
    beta(0) = ls[j].intercept;
    beta(1) = ls[j].slope1;
    if (spec.covariates() > 1) beta(2) = ls[j].slope2;
    m.components.push_back({priors[j], std::move(beta), variance});
  }
  return m;
}

SimulatedData generate(const ScenarioSpec& spec) {
  spec.validate();
  const auto priors = spec.resolved_priors();
  const Index n = spec.n;
  const Index p = spec.covariates();
  Rng rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::discrete_distribution<int> component(priors.begin(), priors.end());
  std::bernoulli_distribution shifted(contamination_rate(spec.scenario));
  std::uniform_real_distribution<double> shift(4.0, 6.0);

  SimulatedData out;
  out.true_model = true_model(spec);
  out.true_z.resize(n);
  out.true_outlier = Mask::Constant(n, false);
  Eigen::MatrixXd covariates(n, p);
  Eigen::VectorXd y(n);

  for (Index i = 0; i < n; ++i) {
    for (Index c = 0; c < p; ++c) covariates(i, c) = normal(rng);
    const int z = component(rng);
    double eps = 0;
    switch (spec.scenario) {
      case Scenario::S2: eps = sample_student_t(1.0, rng); break;
      case Scenario::S3: eps = sample_student_t(3.0, rng); break;
      default: eps = normal(rng); break;
    }
    double gamma = 0;
    if (contamination_rate(spec.scenario) > 0 && shifted(rng)) {
      gamma = shift(rng);
      out.true_outlier(i) = true;
    }
    const auto& beta = out.true_model[z].beta;
    y(i) = beta(0) + covariates.row(i).dot(beta.tail(p)) + gamma + eps;
    out.true_z(i) = z;
  }
  out.data = Dataset::from_covariates(std::move(y), covariates);
  return out;
}

}  // namespace robmix
