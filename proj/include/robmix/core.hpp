#pragma once

// Shared types for finite mixtures of Gaussian linear regressions and the
// three likelihood objectives evaluated on them:
//
//   observed   sum_i log sum_k pi_k N(y_i; x_i'b_k, s_k^2)
//   complete   sum_k { sum_{i in C_k} log N(y_i; x_i'b_k, s_k^2) + n_k log pi_k }
//   trimmed    sum_k sum_{r=1..h_k} { (l_k)_{r:n_k} + log pi_k },  h_k = floor(n_k/2) + 1
//
// where (l_k)_{r:n_k} is the r-th largest member log-density of component k.
// Everything is templated on the scalar so tests can re-evaluate in long double.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "robmix/errors.hpp"

namespace robmix {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// Response plus design matrix with an explicit leading intercept column.
template <typename Scalar>
struct BasicDataset {
  Vector<Scalar> y;
  Matrix<Scalar> x;  // N x (P+1); column 0 is all ones

  Index size() const { return y.size(); }
  Index covariates() const { return x.cols() - 1; }
  Index dims() const { return x.cols(); }

  /// Builds a dataset from raw covariates (N x P), prepending the intercept.
  static BasicDataset from_covariates(Vector<Scalar> response, const Matrix<Scalar>& covariates) {
    if (covariates.rows() != response.size())
      throw ParameterError("covariate rows (" + std::to_string(covariates.rows()) +
                           ") do not match response length (" +
                           std::to_string(response.size()) + ")");
    BasicDataset d;
    d.y = std::move(response);
    d.x.resize(covariates.rows(), covariates.cols() + 1);
    d.x.col(0).setOnes();
    d.x.rightCols(covariates.cols()) = covariates;
    d.validate();
    return d;
  }

  void validate() const {
    if (size() < 1) throw ParameterError("dataset must contain at least one observation");
    if (x.rows() != size() || x.cols() < 1)
      throw ParameterError("design matrix shape does not match response");
    if (!(x.col(0).array() == Scalar(1)).all())
      throw ParameterError("design matrix column 0 must be the intercept (all ones)");
    if (!y.allFinite() || !x.allFinite()) throw ParameterError("dataset contains non-finite values");
  }

  BasicDataset rows(std::span<const Index> idx) const {
    BasicDataset d;
    d.y.resize(static_cast<Index>(idx.size()));
    d.x.resize(static_cast<Index>(idx.size()), x.cols());
    for (Index r = 0; r < static_cast<Index>(idx.size()); ++r) {
      d.y(r) = y(idx[r]);
      d.x.row(r) = x.row(idx[r]);
    }
    return d;
  }
};

using Dataset = BasicDataset<double>;

template <typename Scalar>
struct BasicComponent {
  Scalar pi{1};
  Vector<Scalar> beta;  // element 0 is the intercept
  Scalar sigma2{1};
};

template <typename Scalar>
struct BasicMixtureModel {
  std::vector<BasicComponent<Scalar>> components;

  int k() const { return static_cast<int>(components.size()); }
  const BasicComponent<Scalar>& operator[](int j) const { return components[j]; }
  BasicComponent<Scalar>& operator[](int j) { return components[j]; }

  void validate(Index dims) const {
    if (components.empty()) throw ParameterError("mixture model needs at least one component");
    Scalar total = 0;
    for (const auto& c : components) {
      if (!(c.pi > 0 && c.pi <= 1)) throw DomainError("mixing proportion outside (0, 1]");
      if (!(c.sigma2 > 0)) throw DomainError("component variance must be positive");
      if (c.beta.size() != dims) throw ParameterError("coefficient length does not match design");
      total += c.pi;
    }
    using std::abs;
    if (abs(total - Scalar(1)) > Scalar(1e-10))
      throw DomainError("mixing proportions do not sum to one");
  }
};

using Component = BasicComponent<double>;
using MixtureModel = BasicMixtureModel<double>;

/// Hard assignment of observations to components. Labels are 0-based
/// internally; file formats write them 1-based.
struct Partition {
  Eigen::VectorXi z;
  int k{1};

  Index size() const { return z.size(); }

  std::vector<Index> counts() const {
    std::vector<Index> n(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < z.size(); ++i) ++n[static_cast<std::size_t>(z(i))];
    return n;
  }

  std::vector<Index> members(int component) const {
    std::vector<Index> out;
    for (Index i = 0; i < z.size(); ++i)
      if (z(i) == component) out.push_back(i);
    return out;
  }

  void validate(Index n) const {
    if (z.size() != n) throw ParameterError("partition length does not match dataset");
    if (k < 1) throw ParameterError("partition needs k >= 1");
    if (n > 0 && (z.minCoeff() < 0 || z.maxCoeff() >= k))
      throw ParameterError("partition label out of range");
  }

  friend bool operator==(const Partition& a, const Partition& b) {
    return a.k == b.k && a.z.size() == b.z.size() && a.z == b.z;
  }
};

/// N x K matrix of posterior membership probabilities p(z_i = k | x_i, y_i).
template <typename Scalar>
struct BasicPosteriorMatrix {
  Matrix<Scalar> w;
};

using PosteriorMatrix = BasicPosteriorMatrix<double>;

/// log N(y; mu, sigma2).
template <typename Scalar>
Scalar gaussian_log_density(Scalar y, Scalar mu, Scalar sigma2) {
  if (!(sigma2 > 0)) throw DomainError("gaussian_log_density: sigma2 must be positive");
  using std::log;
  const Scalar r = y - mu;
  return Scalar(-0.5) * log(Scalar(2) * std::numbers::pi_v<Scalar> * sigma2) -
         r * r / (Scalar(2) * sigma2);
}

/// l_ik = log N(y_i; x_i'beta_k, sigma_k^2), as an N x K matrix.
template <typename Scalar>
Matrix<Scalar> component_log_densities(const BasicDataset<Scalar>& data,
                                       const BasicMixtureModel<Scalar>& model) {
  Matrix<Scalar> l(data.size(), model.k());
  for (int j = 0; j < model.k(); ++j) {
    const auto& c = model[j];
    if (!(c.sigma2 > 0)) throw DomainError("component variance must be positive");
    using std::log;
    const Scalar norm = Scalar(-0.5) * log(Scalar(2) * std::numbers::pi_v<Scalar> * c.sigma2);
    const Vector<Scalar> r = data.y - data.x * c.beta;
    l.col(j) = (norm - r.array().square() / (Scalar(2) * c.sigma2)).matrix();
  }
  return l;
}

/// log(sum_j exp(v_j)) without overflow or underflow.
template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  const Scalar m = v.maxCoeff();
  if (!std::isfinite(static_cast<double>(m))) return m;
  using std::exp;
  using std::log;
  return m + log((v.array() - m).exp().sum());
}

template <typename Scalar>
Scalar observed_log_likelihood(const BasicDataset<Scalar>& data,
                               const BasicMixtureModel<Scalar>& model) {
  const Matrix<Scalar> l = component_log_densities(data, model);
  Vector<Scalar> log_pi(model.k());
  using std::log;
  for (int j = 0; j < model.k(); ++j) log_pi(j) = log(model[j].pi);
  Scalar total = 0;
  for (Index i = 0; i < data.size(); ++i)
    total += log_sum_exp((l.row(i).transpose() + log_pi).eval());
  return total;
}

template <typename Scalar>
Scalar complete_log_likelihood(const BasicDataset<Scalar>& data,
                               const BasicMixtureModel<Scalar>& model, const Partition& part) {
  part.validate(data.size());
  if (part.k != model.k()) throw ParameterError("partition and model disagree on K");
  for (const auto& c : model.components)
    if (!(c.pi > 0)) throw DomainError("complete_log_likelihood: mixing proportion must be > 0");
  const Matrix<Scalar> l = component_log_densities(data, model);
  using std::log;
  Scalar total = 0;
  for (Index i = 0; i < data.size(); ++i) {
    const int j = part.z(i);
    total += l(i, j) + log(model[j].pi);
  }
  return total;
}

/// Sum of the h largest per-observation mixture log-densities.
template <typename Scalar>
Scalar trimmed_observed_log_likelihood(const BasicDataset<Scalar>& data,
                                       const BasicMixtureModel<Scalar>& model, Index h) {
  if (h < 1 || h > data.size())
    throw ParameterError("trimmed_observed_log_likelihood: h must lie in [1, N]");
  const Matrix<Scalar> l = component_log_densities(data, model);
  Vector<Scalar> log_pi(model.k());
  using std::log;
  for (int j = 0; j < model.k(); ++j) log_pi(j) = log(model[j].pi);
  std::vector<Scalar> terms(static_cast<std::size_t>(data.size()));
  for (Index i = 0; i < data.size(); ++i)
    terms[static_cast<std::size_t>(i)] = log_sum_exp((l.row(i).transpose() + log_pi).eval());
  std::partial_sort(terms.begin(), terms.begin() + static_cast<std::ptrdiff_t>(h), terms.end(),
                    std::greater<Scalar>());
  Scalar total = 0;
  for (Index r = 0; r < h; ++r) total += terms[static_cast<std::size_t>(r)];
  return total;
}

/// Number of retained terms for a component of size n: floor(n/2) + 1.
inline Index trimmed_size(Index n) { return n / 2 + 1; }

template <typename Scalar>
Scalar trimmed_complete_log_likelihood(const BasicDataset<Scalar>& data,
                                       const BasicMixtureModel<Scalar>& model,
                                       const Partition& part) {
  part.validate(data.size());
  if (part.k != model.k()) throw ParameterError("partition and model disagree on K");
  const Matrix<Scalar> l = component_log_densities(data, model);
  using std::log;
  Scalar total = 0;
  std::vector<Scalar> terms;
  for (int j = 0; j < model.k(); ++j) {
    terms.clear();
    for (Index i = 0; i < data.size(); ++i)
      if (part.z(i) == j) terms.push_back(l(i, j));
    if (terms.empty())
      throw DomainError("trimmed_complete_log_likelihood: component " + std::to_string(j + 1) +
                        " is empty");
    if (!(model[j].pi > 0)) throw DomainError("mixing proportion must be > 0");
    const auto h = static_cast<std::size_t>(trimmed_size(static_cast<Index>(terms.size())));
    std::partial_sort(terms.begin(), terms.begin() + static_cast<std::ptrdiff_t>(h), terms.end(),
                      std::greater<Scalar>());
    Scalar sum = 0;
    for (std::size_t r = 0; r < h; ++r) sum += terms[r];
    total += sum + static_cast<Scalar>(h) * log(model[j].pi);
  }
  return total;
}

/// Lower bound for component variances: 1e-6 times the sample variance of y.
template <typename Scalar>
Scalar sigma_floor(const BasicDataset<Scalar>& data) {
  const Index n = data.size();
  if (n < 2) return Scalar(1e-12);
  const Scalar mean = data.y.mean();
  const Scalar var = (data.y.array() - mean).square().sum() / Scalar(n - 1);
  return std::max(Scalar(1e-6) * var, Scalar(1e-300));
}

}  // namespace robmix
