#pragma once

// Synthetic benchmark data: two mixture-of-regressions designs under five
// error/contamination scenarios.
//
//   MODEL1 (K=2, P=2)  y = 1 - x1 + x2 | 1 + 3 x1 + x2
//   MODEL2 (K=3, P=1)  y = 1 - x1 | 1 + 3 x1 | -1 + 0.1 x1
//
//   S1 N(0,1)   S2 t_1   S3 t_3   S4 N(0,1) + 5% shifts   S5 N(0,1) + 10% shifts
//
// Shifted observations get gamma ~ Uniform(4, 6) added to the response.

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "robmix/core.hpp"
#include "robmix/random.hpp"

namespace robmix {

enum class DesignModel { MODEL1 = 1, MODEL2 = 2 };
enum class Scenario { S1 = 1, S2, S3, S4, S5 };

struct ScenarioSpec {
  DesignModel model = DesignModel::MODEL1;
  Scenario scenario = Scenario::S1;
  Index n = 200;
  /// Empty selects the balanced default for the model.
  std::vector<double> priors;
  std::uint64_t seed = 0;

  static std::vector<double> balanced_priors(DesignModel m);
  static std::vector<double> unbalanced_priors(DesignModel m);

  std::vector<double> resolved_priors() const {
    return priors.empty() ? balanced_priors(model) : priors;
  }
  int k() const { return model == DesignModel::MODEL1 ? 2 : 3; }
  Index covariates() const { return model == DesignModel::MODEL1 ? 2 : 1; }
  void validate() const;
};

struct SimulatedData {
  Dataset data;
  Eigen::VectorXi true_z;  // 0-based
  Mask true_outlier;
  MixtureModel true_model;
};

/// Generating coefficients, priors, and unit variances for a spec.
MixtureModel true_model(const ScenarioSpec& spec);

/// Deterministic in (spec, seed).
SimulatedData generate(const ScenarioSpec& spec);

/// Student t draw as Z / sqrt(V / df), V ~ chi2(df).
double sample_student_t(double df, Rng& rng);

double contamination_rate(Scenario s);

std::optional<Scenario> scenario_from_int(int s);
std::optional<DesignModel> model_from_int(int m);

}  // namespace robmix
