#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "robmix/linreg.hpp"

using namespace robmix;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// n points on y = a + b x with standard normal noise scaled by `noise`.
struct Line {
  VectorXd y;
  MatrixXd x;
};

Line line(Index n, double a, double b, double noise, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0, 1);
  Line l{VectorXd(n), MatrixXd(n, 2)};
  for (Index i = 0; i < n; ++i) {
    const double t = g(rng);
    l.x(i, 0) = 1;
    l.x(i, 1) = t;
    l.y(i) = a + b * t + noise * g(rng);
  }
  return l;
}

}  // namespace

TEST_CASE("ols exact interpolation") {
  VectorXd y(2);
  y << 1, 3;
  MatrixXd x(2, 2);
  x << 1, 0, 1, 1;
  const auto f = ols_fit(y, x);
  CHECK(f.beta(0) == doctest::Approx(1.0));
  CHECK(f.beta(1) == doctest::Approx(2.0));
  CHECK(f.sigma2 == doctest::Approx(0.0));
  CHECK(f.inlier_mask.all());
  CHECK(f.h == 2);
}

TEST_CASE("ols with intercept only gives mean and population variance") {
  VectorXd y(5);
  y << 2, 4, 4, 5, 10;
  const auto f = ols_fit(y, MatrixXd::Ones(5, 1));
  CHECK(f.beta(0) == doctest::Approx(5.0));
  CHECK(f.sigma2 == doctest::Approx(36.0 / 5.0));
  CHECK(f.objective == doctest::Approx(36.0));
}

TEST_CASE("ols matches an extended-precision normal-equation solve") {
  std::mt19937_64 rng(15);
  for (int t = 0; t < 50; ++t) {
    const auto d = oracle::random_dataset(15, 2, rng);
    const auto f = ols_fit(d.y, d.x);
    std::vector<Index> all(15);
    for (Index i = 0; i < 15; ++i) all[static_cast<std::size_t>(i)] = i;
    const auto b = oracle::normal_equations(all, d.y, d.x);
    REQUIRE(b);
    for (Index c = 0; c < 3; ++c)
      CHECK(std::abs(f.beta(c) - static_cast<double>((*b)[static_cast<std::size_t>(c)])) < 1e-9);
  }
}

TEST_CASE("ols rejects rank-deficient designs") {
  MatrixXd x(4, 3);
  x << 1, 1, 2, 1, 2, 4, 1, 3, 6, 1, 4, 8;
  CHECK_THROWS_AS(ols_fit(VectorXd::Ones(4), x), DegenerateDesignError);
  CHECK_THROWS_AS(ols_fit(VectorXd::Ones(1), MatrixXd::Ones(1, 2)), DegenerateDesignError);
  CHECK_THROWS_AS(ols_fit(VectorXd::Ones(3), MatrixXd::Ones(4, 1)), ParameterError);
}

TEST_CASE("lts exact fit with gross outliers") {
  VectorXd y(10);
  MatrixXd x(10, 2);
  for (Index i = 0; i < 10; ++i) {
    x(i, 0) = 1;
    x(i, 1) = static_cast<double>(i);
    y(i) = 1 + 2 * static_cast<double>(i);
  }
  y(2) += 150;
  y(5) -= 300;
  y(9) += 1000;
  const auto f = lts_fit(y, x, 6, 500, 1);
  CHECK(f.beta(0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(f.beta(1) == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(f.objective < 1e-18);
  CHECK(f.inlier_mask.count() == 6);
  CHECK(!f.inlier_mask(2));
  CHECK(!f.inlier_mask(5));
  CHECK(!f.inlier_mask(9));
}

TEST_CASE("lts matches exhaustive enumeration on n=10, h=6") {
  std::mt19937_64 rng(10);
  for (int t = 0; t < 20; ++t) {
    const auto d = oracle::random_dataset(10, 1, rng, 2.0);
    const auto f = lts_fit(d.y, d.x, 6, 500, static_cast<std::uint64_t>(t));
    const auto best = static_cast<double>(oracle::exhaustive_lts(d.y, d.x, 6));
    CHECK(f.objective == doctest::Approx(best).epsilon(1e-8));
  }
}

TEST_CASE("property: lts never beats the enumerated optimum") {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 40; ++t) {
    const Index n = 6 + static_cast<Index>(rng() % 6);
    const auto d = oracle::random_dataset(n, 1 + static_cast<Index>(rng() % 2), rng);
    const Index h = n / 2 + 1;
    if (h < d.dims()) continue;
    const auto f = lts_fit(d.y, d.x, h, 500, 3);
    CHECK(f.objective >= static_cast<double>(oracle::exhaustive_lts(d.y, d.x, h)) - 1e-8);
  }
}

TEST_CASE("lts on clean data stays close to ols on average") {
  // Half-coverage LTS is inefficient (per-fit gap sd near 0.25 at n=200), so
  // the distortion check is on the Monte-Carlo mean of the gap.
  std::mt19937_64 rng(200);
  VectorXd gap = VectorXd::Zero(2);
  for (int rep = 0; rep < 50; ++rep) {
    const auto l = line(200, 1.0, -2.0, 1.0, rng);
    const auto o = ols_fit(l.y, l.x);
    const auto f = lts_fit(l.y, l.x, 0, 500, static_cast<std::uint64_t>(rep));
    gap += (f.beta - o.beta) / 50.0;
  }
  CHECK(gap.cwiseAbs().maxCoeff() < 0.15);
}

TEST_CASE("lts parameter validation") {
  std::mt19937_64 rng(1);
  const auto l = line(10, 0, 1, 1, rng);
  CHECK_THROWS_AS(lts_fit(l.y, l.x, 1, 500, 0), ParameterError);
  CHECK_THROWS_AS(lts_fit(l.y, l.x, 11, 500, 0), ParameterError);
  CHECK_THROWS_AS(lts_fit(l.y, l.x, 6, 0, 0), ParameterError);
  MatrixXd flat(10, 2);
  flat.col(0).setOnes();
  flat.col(1).setConstant(3.0);
  CHECK_THROWS_AS(lts_fit(l.y, flat, 6, 50, 0), DegenerateDesignError);
}

TEST_CASE("lts is reproducible for a seed") {
  std::mt19937_64 rng(4);
  const auto l = line(80, 0.5, 1.5, 1.0, rng);
  const auto a = lts_fit(l.y, l.x, 0, 100, 9);
  const auto b = lts_fit(l.y, l.x, 0, 100, 9);
  CHECK(a.beta == b.beta);
  CHECK(a.objective == b.objective);
  CHECK((a.inlier_mask == b.inlier_mask).all());
}

TEST_CASE("lts warm start bounds the objective") {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 30; ++t) {
    const auto l = line(60, 0.0, 1.0, 1.0, rng);
    LtsOptions opt;
    opt.n_subsets = 3;
    opt.seed = static_cast<std::uint64_t>(t);
    const VectorXd start = ols_fit(l.y, l.x).beta;
    opt.warm_start = start;
    const auto f = lts_fit(l.y, l.x, opt);
    CHECK(f.objective <= trimmed_sum_of_squares(l.y, l.x, start, f.h) * (1 + 1e-12));
  }
}

TEST_CASE("property: a concentration step never increases the trimmed objective") {
  std::mt19937_64 rng(1000);
  std::normal_distribution<double> g(0, 3);
  int increases = 0;
  for (int t = 0; t < 1000; ++t) {
    const Index n = 8 + static_cast<Index>(rng() % 40);
    const auto d = oracle::random_dataset(n, 1 + static_cast<Index>(rng() % 3), rng, 1.5);
    VectorXd beta(d.dims());
    for (auto& b : beta) b = g(rng);
    const Index h = std::max(d.dims() + 1, n / 2 + 1);
    const auto step = concentration_step(d.y, d.x, beta, h);
    CHECK(step.objective_before == doctest::Approx(trimmed_sum_of_squares(d.y, d.x, beta, h)));
    if (step.objective_after > step.objective_before * (1 + 1e-12) + 1e-12) ++increases;
  }
  CHECK(increases == 0);
}

TEST_CASE("property: exact fit on a hyperplane") {
  std::mt19937_64 rng(101);
  std::normal_distribution<double> g(0, 1);
  std::uniform_real_distribution<double> big(50, 500);
  for (int t = 0; t < 100; ++t) {
    const Index n = 20 + static_cast<Index>(rng() % 30);
    const Index h = n / 2 + 1;
    VectorXd truth(3);
    truth << g(rng), g(rng), g(rng);
    MatrixXd x(n, 3);
    VectorXd y(n);
    for (Index i = 0; i < n; ++i) {
      x.row(i) << 1, g(rng), g(rng);
      y(i) = x.row(i).dot(truth);
      if (i >= h) y(i) += (i % 2 ? 1 : -1) * big(rng);
    }
    const auto f = lts_fit(y, x, h, 500, static_cast<std::uint64_t>(t));
    CHECK(f.objective < 1e-10);
    CHECK((f.beta - truth).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("property: breakdown stress at 40% contamination") {
  std::mt19937_64 rng(40);
  for (double magnitude : {1e3, 1e6}) {
    int lts_ok = 0;
    int ols_broken = 0;
    for (int rep = 0; rep < 20; ++rep) {
      const auto c = oracle::contaminated_line(100, 40, magnitude, rng);
      const auto o = ols_fit(c.y, c.x);
      const auto f = lts_fit(c.y, c.x, 0, 500, static_cast<std::uint64_t>(rep));
      lts_ok += std::abs(f.beta(1) - 2.0) < 0.1;
      ols_broken += std::abs(o.beta(1) - 2.0) > 1.0;
    }
    CHECK(lts_ok == 20);
    CHECK(ols_broken == 20);
  }
}

TEST_CASE("property: scale equivariance") {
  std::mt19937_64 rng(33);
  for (double c : {0.01, 3.0, -2.5, 1e4}) {
    const auto l = line(60, 1.0, 1.0, 1.0, rng);
    const auto a = lts_fit(l.y, l.x, 0, 200, 5);
    const VectorXd scaled = c * l.y;
    const auto b = lts_fit(scaled, l.x, 0, 200, 5);
    for (Index j = 0; j < 2; ++j) CHECK(std::abs(b.beta(j) - c * a.beta(j)) < 1e-9 * (1 + std::abs(c)));
    CHECK(std::sqrt(b.sigma2) == doctest::Approx(std::abs(c) * std::sqrt(a.sigma2)).epsilon(1e-9));
    const auto oa = ols_fit(l.y, l.x);
    const auto ob = ols_fit(scaled, l.x);
    CHECK(std::sqrt(ob.sigma2) == doctest::Approx(std::abs(c) * std::sqrt(oa.sigma2)).epsilon(1e-9));
  }
}

TEST_CASE("smallest residuals breaks ties by index") {
  VectorXd r(6);
  r << 1, -1, 0.5, 1, -0.5, 2;
  CHECK(smallest_residuals(r, 3) == std::vector<Index>{0, 2, 4});
  CHECK(smallest_residuals(r, 4) == std::vector<Index>{0, 1, 2, 4});
  CHECK_THROWS_AS(smallest_residuals(r, 7), ParameterError);
}

TEST_CASE("outlier flagging") {
  std::mt19937_64 rng(2);
  SUBCASE("zero residuals flag nothing") {
    VectorXd y(4);
    y << 1, 3, 5, 7;
    MatrixXd x(4, 2);
    x << 1, 0, 1, 1, 1, 2, 1, 3;
    RegressionFit f;
    f.beta = Eigen::Vector2d(1, 2);
    f.sigma2 = 1;
    CHECK(!flag_outliers(f, y, x).any());
    f.sigma2 = 0;
    CHECK(!flag_outliers(f, y, x).any());
  }
  SUBCASE("a ten-sigma residual is the only flag") {
    RegressionFit f;
    f.beta = Eigen::Vector2d(0, 1);
    f.sigma2 = 4;
    VectorXd y(5);
    MatrixXd x(5, 2);
    x << 1, 0, 1, 1, 1, 2, 1, 3, 1, 4;
    y << 0.5, 1, 22, 3.2, 4;
    const auto m = flag_outliers(f, y, x, 2.5);
    CHECK(m.count() == 1);
    CHECK(m(2));
  }
  SUBCASE("recall of injected 5% shifts") {
    std::uniform_real_distribution<double> shift(4, 6);
    std::bernoulli_distribution hit(0.05);
    long tp = 0;
    long total = 0;
    for (int rep = 0; rep < 50; ++rep) {
      auto l = line(200, 1.0, -1.0, 1.0, rng);
      Mask injected = Mask::Constant(200, false);
      for (Index i = 0; i < 200; ++i)
        if (hit(rng)) {
          injected(i) = true;
          l.y(i) += shift(rng);
        }
      const auto f = lts_fit(l.y, l.x, 0, 500, static_cast<std::uint64_t>(rep));
      const auto flags = flag_outliers(f, l.y, l.x, 2.5);
      tp += (flags && injected).count();
      total += injected.count();
    }
    CHECK(static_cast<double>(tp) / static_cast<double>(total) >= 0.9);
  }
}

TEST_CASE("reweighting recovers the full-sample scale on clean data") {
  std::mt19937_64 rng(71);
  double mean_ratio = 0;
  for (int rep = 0; rep < 40; ++rep) {
    const auto l = line(200, 0.0, 1.0, 2.0, rng);
    const auto f = lts_fit(l.y, l.x, 0, 500, static_cast<std::uint64_t>(rep));
    const auto r = reweighted_fit(f, l.y, l.x, 2.5);
    CHECK(r.h == r.inlier_mask.count());
    CHECK(r.h >= 180);
    mean_ratio += r.sigma2 / 4.0 / 40.0;
  }
  CHECK(mean_ratio == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("reweighting drops gross outliers") {
  std::mt19937_64 rng(72);
  auto l = line(100, 1.0, 1.0, 1.0, rng);
  for (Index i = 0; i < 10; ++i) l.y(i) += 30;
  const auto f = lts_fit(l.y, l.x, 0, 500, 1);
  const auto r = reweighted_fit(f, l.y, l.x, 2.5);
  for (Index i = 0; i < 10; ++i) CHECK(!r.inlier_mask(i));
  CHECK(std::abs(r.beta(1) - 1.0) < 0.3);
  CHECK_THROWS_AS(reweighted_fit(f, l.y, l.x, 2.5, 0), ParameterError);
}

TEST_CASE("normal quantile and consistency constants") {
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(normal_quantile(0.975) == doctest::Approx(1.95996398454005424).epsilon(1e-13));
  CHECK(normal_quantile(1e-9) == doctest::Approx(-5.99780701500768687).epsilon(1e-12));
  CHECK(normal_quantile(0.0) == -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(normal_quantile(1.5), DomainError);
  // Reference values from high-precision quadrature of z^2 phi(z).
  CHECK(lts_consistency_factor(101, 200) == doctest::Approx(6.85887058118862063).epsilon(1e-10));
  CHECK(lts_consistency_factor(150, 200) == doctest::Approx(2.71352710177552027).epsilon(1e-10));
  CHECK(lts_consistency_factor(200, 200) == 1.0);
  CHECK(truncated_normal_variance(2.5) == doctest::Approx(0.911256360935391935).epsilon(1e-12));
  CHECK_THROWS_AS(lts_consistency_factor(0, 10), ParameterError);
}
