#include <doctest.h>

#include <cmath>
#include <numbers>

#include "fksteer/metrics.hpp"
#include "fksteer/reference.hpp"

using namespace fksteer;

namespace {

double normal_pdf(double x, double m, double v) {
  return std::exp(-0.5 * (x - m) * (x - m) / v) / std::sqrt(2.0 * std::numbers::pi * v);
}

// Composite Simpson on [lo, hi].
template <class F>
double simpson(F f, double lo, double hi, int n = 20000) {
  const double h = (hi - lo) / n;
  double s = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(lo + i * h);
  return s * h / 3.0;
}

}  // namespace

TEST_CASE("rejection: gamma = 1 accepts every proposal") {
  GmmSpec g = GmmSpec::uniform_means(5, 3, 10.0, 4.0, 2);
  RejectionStats st;
  sample_annealed_gmm(g, 1.0, 5000, 1, nullptr, &st);
  CHECK(st.accepted == st.proposed);
  CHECK(st.acceptance_rate() == 1.0);
}

TEST_CASE("rejection: annealed single Gaussian moments") {
  Vector mu(3);
  mu << 1.0, -2.0, 0.5;
  const GmmSpec g = GmmSpec::single(mu, 50.0);
  const double gamma = 3.0;
  const std::size_t n = 200000;
  const RowMatrix x = sample_annealed_gmm(g, gamma, n, 4);
  const auto s = WeightedSamples::uniform(x);
  const Vector m = weighted_mean(s);
  const Eigen::MatrixXd c = weighted_covariance(s);
  const double var = 50.0 / gamma;
  for (int j = 0; j < 3; ++j) {
    CHECK(std::abs(m[j] - mu[j]) <= 3.0 * std::sqrt(var / n));
    CHECK(std::abs(c(j, j) / var - 1.0) <= 0.01);
  }
}

TEST_CASE("rejection: annealed Gaussian times reward is the product Gaussian") {
  Vector mu(2), c(2);
  mu << 3.0, 0.0;
  c << -1.0, 2.0;
  const GmmSpec g = GmmSpec::single(mu, 10.0);
  QuadraticReward r{c, 5.0};
  const double gamma = 2.0;
  const double prec = gamma / 10.0 + 1.0 / 5.0;
  const Vector mean = ((gamma / 10.0) * mu + (1.0 / 5.0) * c) / prec;
  const std::size_t n = 100000;
  RejectionStats st;
  const auto s = WeightedSamples::uniform(sample_annealed_gmm(g, gamma, n, 8, &r, &st));
  const Vector m = weighted_mean(s);
  const Eigen::MatrixXd cov = weighted_covariance(s);
  for (int j = 0; j < 2; ++j) {
    CHECK(std::abs(m[j] - mean[j]) <= 4.0 * std::sqrt(1.0 / prec / n));
    CHECK(std::abs(cov(j, j) * prec - 1.0) <= 0.02);
  }
  CHECK(st.max_log_ratio <= 1e-12);
}

TEST_CASE("rejection: two-component mass split matches quadrature") {
  GmmSpec g;
  g.means = RowMatrix(2, 1);
  g.means << -3.0, 3.0;
  g.weights = {0.3, 0.7};
  g.component_variance = 4.0;
  const double gamma = 2.0;
  auto p_gamma = [&](double x) {
    return std::pow(0.3 * normal_pdf(x, -3, 4) + 0.7 * normal_pdf(x, 3, 4), gamma);
  };
  const double left = simpson(p_gamma, -40.0, 0.0);
  const double total = left + simpson(p_gamma, 0.0, 40.0);
  const double expect = left / total;

  const std::size_t n = 200000;
  RejectionStats st;
  const RowMatrix x = sample_annealed_gmm(g, gamma, n, 12, nullptr, &st);
  double frac = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) frac += x(i, 0) < 0.0;
  frac /= static_cast<double>(n);
  CHECK(std::abs(frac - expect) <= 4.0 * std::sqrt(expect * (1 - expect) / n));
  CHECK(st.max_log_ratio <= 1e-12);
  CHECK(st.acceptance_rate() > 0.0);
}

TEST_CASE("rejection envelope holds on a lopsided mixture with a reward") {
  GmmSpec g = GmmSpec::uniform_means(6, 2, 15.0, 8.0, 21);
  g.weights = {0.4, 0.05, 0.2, 0.05, 0.1, 0.2};
  Vector c(2);
  c << 4.0, -4.0;
  QuadraticReward r{c, 30.0};
  RejectionStats st;
  sample_annealed_gmm(g, 4.0, 20000, 5, &r, &st);
  CHECK(st.max_log_ratio <= 1e-12);
  CHECK(st.accepted == 20000);
}

TEST_CASE("posterior GMM closed form") {
  Vector mu(2), c(2);
  mu << 4.0, -2.0;
  c << 0.0, 6.0;
  const GmmSpec g = GmmSpec::single(mu, 50.0);
  const GmmSpec post = posterior_gmm(g, QuadraticReward{c, 50.0});
  CHECK(post.component_variance == doctest::Approx(25.0));
  CHECK(post.means(0, 0) == doctest::Approx(2.0));
  CHECK(post.means(0, 1) == doctest::Approx(2.0));
  CHECK(post.weights[0] == doctest::Approx(1.0));

  const GmmSpec mix = GmmSpec::uniform_means(7, 3, 20.0, 50.0, 3);
  const GmmSpec flat = posterior_gmm(mix, QuadraticReward{Vector::Zero(3), 1e12});
  CHECK(flat.component_variance == doctest::Approx(50.0).epsilon(1e-9));
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(flat.weights[i] == doctest::Approx(mix.weights[i]).epsilon(1e-6));
    for (Eigen::Index j = 0; j < 3; ++j)
      CHECK(flat.means(static_cast<Eigen::Index>(i), j) ==
            doctest::Approx(mix.means(static_cast<Eigen::Index>(i), j)).epsilon(1e-8));
  }
  const GmmSpec tilted = posterior_gmm(mix, QuadraticReward{Vector::Constant(3, 5.0), 20.0});
  double sum = 0.0;
  for (double w : tilted.weights) sum += w;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("posterior GMM agrees with self-normalised importance sampling") {
  const GmmSpec mix = GmmSpec::uniform_means(4, 2, 20.0, 50.0, 17);
  Vector c(2);
  c << 5.0, -3.0;
  const QuadraticReward r{c, 100.0};
  const GmmSpec post = posterior_gmm(mix, r);
  Vector exact = Vector::Zero(2);
  for (std::size_t i = 0; i < 4; ++i) exact += post.weights[i] * post.means.row(static_cast<Eigen::Index>(i)).transpose();

  const std::size_t n = 200000;
  const RowMatrix x = sample_gmm(mix, n, 31);
  std::vector<double> logw(n);
  double mx = -1e300;
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, logw[i] = r.value(row_span(x, static_cast<Eigen::Index>(i))));
  WeightedSamples s{x, std::vector<double>(n)};
  double tot = 0.0;
  for (std::size_t i = 0; i < n; ++i) tot += s.weights[i] = std::exp(logw[i] - mx);
  double sq = 0.0;
  for (double& w : s.weights) sq += (w /= tot) * w;
  const double ess = 1.0 / sq;
  const Vector m = weighted_mean(s);
  const Eigen::MatrixXd cov = weighted_covariance(s);
  for (int j = 0; j < 2; ++j) CHECK(std::abs(m[j] - exact[j]) <= 3.0 * std::sqrt(cov(j, j) / ess));
}

TEST_CASE("direct GMM sampling respects the weights") {
  GmmSpec g;
  g.means = RowMatrix(2, 1);
  g.means << -50.0, 50.0;
  g.weights = {0.25, 0.75};
  g.component_variance = 1.0;
  const std::size_t n = 100000;
  const RowMatrix x = sample_gmm(g, n, 2);
  double left = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) left += x(i, 0) < 0.0;
  CHECK(std::abs(left / n - 0.25) <= 4.0 * std::sqrt(0.25 * 0.75 / n));
}

TEST_CASE("BAOAB: free particle velocity variance equals the temperature") {
  LangevinConfig c;
  c.dt = 0.01;
  c.friction = 10.0;
  c.temperature = 1.5;
  c.burn_in = 1000;
  c.thin = 50;
  RowMatrix v;
  baoab_sample(free_langevin(3), c, 100000, &v);
  double var = 0.0;
  for (Eigen::Index j = 0; j < 3; ++j) var += v.col(j).squaredNorm() / v.rows();
  CHECK(std::abs(var / 3.0 / 1.5 - 1.0) <= 0.01);
}

TEST_CASE("BAOAB: harmonic position variance") {
  LangevinConfig c;
  c.dt = 0.1;
  c.friction = 1.0;
  c.burn_in = 1000;
  c.thin = 20;
  c.seed = 4;
  const RowMatrix x = baoab_sample(harmonic_langevin(4), c, 100000);
  double var = 0.0;
  for (Eigen::Index j = 0; j < 4; ++j) var += x.col(j).squaredNorm() / x.rows();
  CHECK(std::abs(var / 4.0 - 1.0) <= 0.02);
}

TEST_CASE("BAOAB keeps the DW-4 centre of mass fixed") {
  LangevinConfig c;
  c.burn_in = 2000;
  c.thin = 10;
  c.seed = 1;
  const DoubleWellSpec spec;
  const RowMatrix x = baoab_sample(dw4_langevin(spec), c, 500);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index a = 0; a < 2; ++a) {
      const double m = (x(i, a) + x(i, 2 + a) + x(i, 4 + a) + x(i, 6 + a)) / 4.0;
      worst = std::max(worst, std::abs(m));
    }
  CHECK(worst <= 1e-10);
  CHECK(x.allFinite());
}

TEST_CASE("Langevin configuration validation") {
  LangevinConfig c;
  c.dt = -1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = LangevinConfig{};
  c.thin = 0;
  CHECK_THROWS(c.validate());
}
