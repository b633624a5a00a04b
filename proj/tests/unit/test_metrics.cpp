#include <doctest.h>

#include <cmath>

#include "fksteer/metrics.hpp"
#include "fksteer/rng.hpp"

using namespace fksteer;

namespace {

RowMatrix gaussian(std::size_t n, std::size_t d, double shift, std::uint64_t seed) {
  StreamRng rng(seed, StreamPurpose::Problem);
  RowMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = shift + rng.normal();
  return x;
}

double exact_mmd2(const WeightedSamples& a, const WeightedSamples& b, double bw) {
  auto k = [&](const WeightedSamples& p, std::size_t i, const WeightedSamples& q, std::size_t j) {
    const double d2 = (p.points.row(static_cast<Eigen::Index>(i)) - q.points.row(static_cast<Eigen::Index>(j))).squaredNorm();
    return std::exp(-d2 / (2.0 * bw * bw));
  };
  auto block = [&](const WeightedSamples& p, const WeightedSamples& q) {
    long double s = 0.0L;
    for (std::size_t i = 0; i < p.size(); ++i)
      for (std::size_t j = 0; j < q.size(); ++j) s += p.weights[i] * q.weights[j] * k(p, i, q, j);
    return static_cast<double>(s);
  };
  return block(a, a) + block(b, b) - 2.0 * block(a, b);
}

WeightedSamples line(std::vector<double> v) {
  RowMatrix x(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = v[i];
  return WeightedSamples::uniform(x);
}

}  // namespace

TEST_CASE("delta NLL") {
  const auto logq = [](std::span<const double> x) { return -0.5 * x[0] * x[0]; };
  CHECK(delta_nll(line({1.0}), line({0.0}), logq) == doctest::Approx(0.5));
  CHECK(delta_nll(line({0.0, 2.0}), line({0.0}), logq) == doctest::Approx(1.0));
  const auto same = line({0.3, -1.2, 2.0});
  CHECK(delta_nll(same, same, logq) == 0.0);
}

TEST_CASE("RFF MMD matches the exact kernel double sum") {
  const auto a = WeightedSamples::uniform(gaussian(1000, 2, 0.0, 1));
  const auto b = WeightedSamples::uniform(gaussian(1000, 2, 0.7, 2));
  for (double bw : {1.0, 2.0, 5.0}) {
    const double exact = exact_mmd2(a, b, bw);
    const double approx = mmd_rff(a, b, bw, 2048, 7);
    CHECK(std::abs(approx - exact) <= 5e-3);
  }
  CHECK(mmd_rff(a, a, 1.0, 2048, 7) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("RFF MMD invariances") {
  const auto a = WeightedSamples::uniform(gaussian(50, 3, 0.0, 3));
  const auto b = WeightedSamples::uniform(gaussian(60, 3, 0.5, 4));
  const double base = mmd_rff(a, b, 2.0, 256, 9);

  WeightedSamples perm = a;
  perm.points = a.points.colwise().reverse();
  CHECK(mmd_rff(perm, b, 2.0, 256, 9) == doctest::Approx(base).epsilon(1e-12));

  WeightedSamples split;
  split.points = RowMatrix(51, 3);
  split.points.topRows(50) = a.points;
  split.points.row(50) = a.points.row(0);
  split.weights = a.weights;
  split.weights[0] *= 0.5;
  split.weights.push_back(split.weights[0]);
  CHECK(mmd_rff(split, b, 2.0, 256, 9) == doctest::Approx(base).epsilon(1e-12));
  CHECK_THROWS_AS(mmd_rff(a, b, 2.0, 255, 9), Error);
}

TEST_CASE("1-D Wasserstein fixtures") {
  const std::vector<double> one{1.0};
  const std::vector<double> p0{0.0}, p3{3.0};
  CHECK(w1_1d(p0, one, p3, one) == doctest::Approx(3.0));
  CHECK(w2_squared_1d(p0, one, p3, one) == doctest::Approx(9.0));
  const std::vector<double> two{0.0, 1.0}, half{0.5, 0.5};
  CHECK(w1_1d(two, half, p0, one) == doctest::Approx(0.5));
  CHECK(w2_squared_1d(two, half, p0, one) == doctest::Approx(0.5));
  const std::vector<double> v{0.3, -1.0, 2.5, 0.1};
  const std::vector<double> w{0.1, 0.2, 0.3, 0.4};
  CHECK(w1_1d(v, w, v, w) == 0.0);
  CHECK(w2_squared_1d(v, w, v, w) == 0.0);
}

TEST_CASE("uniform shift oracle") {
  StreamRng rng(5, StreamPurpose::Problem);
  const std::size_t n = 100000;
  std::vector<double> a(n), b(n), w(n, 1.0 / n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = rng.uniform();
    b[i] = rng.uniform() + 0.5;
  }
  CHECK(std::abs(w1_1d(a, w, b, w) - 0.5) <= 0.01);
  CHECK(std::abs(std::sqrt(w2_squared_1d(a, w, b, w)) - 0.5) <= 0.01);
}

TEST_CASE("sliced Wasserstein") {
  CHECK(sliced_wasserstein(line({0.0}), line({3.0}), 10, 1) == doctest::Approx(3.0));
  const auto a = WeightedSamples::uniform(gaussian(200, 3, 0.0, 6));
  CHECK(sliced_wasserstein(a, a, 10, 1) == 0.0);
  // One dimension: every direction is +-1, so SWD is W2 of the shift.
  const auto g0 = WeightedSamples::uniform(gaussian(20000, 1, 0.0, 7));
  const auto g1 = WeightedSamples::uniform(gaussian(20000, 1, 1.0, 8));
  CHECK(std::abs(sliced_wasserstein(g0, g1, 4, 2) - 1.0) <= 0.05);
}

TEST_CASE("triangle inequality") {
  StreamRng rng(10, StreamPurpose::Problem);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<WeightedSamples> s;
    for (int k = 0; k < 3; ++k) {
      const std::size_t n = 3 + static_cast<std::size_t>(rng.uniform() * 6);
      WeightedSamples x;
      x.points = RowMatrix(static_cast<Eigen::Index>(n), 2);
      double tot = 0.0;
      for (Eigen::Index i = 0; i < x.points.size(); ++i) x.points.data()[i] = 3.0 * rng.normal();
      x.weights.resize(n);
      for (double& w : x.weights) tot += (w = 0.1 + rng.uniform());
      for (double& w : x.weights) w /= tot;
      s.push_back(std::move(x));
    }
    auto sw = [&](int i, int j) { return sliced_wasserstein(s[i], s[j], 8, 3); };
    CHECK(sw(0, 2) <= sw(0, 1) + sw(1, 2) + 1e-9);
    auto col = [&](int i) {
      std::vector<double> v(s[i].size());
      for (std::size_t r = 0; r < v.size(); ++r) v[r] = s[i].points(static_cast<Eigen::Index>(r), 0);
      return v;
    };
    const auto c0 = col(0), c1 = col(1), c2 = col(2);
    const double d02 = w1_1d(c0, s[0].weights, c2, s[2].weights);
    const double d01 = w1_1d(c0, s[0].weights, c1, s[1].weights);
    const double d12 = w1_1d(c1, s[1].weights, c2, s[2].weights);
    CHECK(d02 <= d01 + d12 + 1e-9);
  }
}

TEST_CASE("pair distance distribution") {
  RowMatrix two(1, 4);
  two << 0.0, 0.0, 3.0, 0.0;
  const Rdf r2 = rdf(WeightedSamples::uniform(two), 2, 2);
  REQUIRE(r2.distances.size() == 1);
  CHECK(r2.distances[0] == doctest::Approx(3.0));
  CHECK(r2.weights[0] == doctest::Approx(1.0));

  RowMatrix sq(1, 8);
  sq << 0, 0, 1, 0, 1, 1, 0, 1;
  const Rdf r4 = rdf(WeightedSamples::uniform(sq), 4, 2);
  double at1 = 0.0, at_root2 = 0.0;
  for (std::size_t k = 0; k < r4.distances.size(); ++k) {
    if (std::abs(r4.distances[k] - 1.0) < 1e-12) at1 += r4.weights[k];
    if (std::abs(r4.distances[k] - std::sqrt(2.0)) < 1e-12) at_root2 += r4.weights[k];
  }
  CHECK(at1 == doctest::Approx(2.0 / 3.0));
  CHECK(at_root2 == doctest::Approx(1.0 / 3.0));
  REQUIRE(r4.histogram.size() == 256);
  double hist = 0.0;
  for (double h : r4.histogram) hist += h;
  CHECK(hist == doctest::Approx(1.0));
  CHECK(r4.bin_edges.back() == doctest::Approx(std::sqrt(2.0)));
  CHECK_THROWS_AS(rdf(WeightedSamples::uniform(sq), 3, 2), Error);
}

TEST_CASE("summary statistics") {
  const auto a = WeightedSamples::uniform(gaussian(500, 3, 0.0, 12));
  const SummaryStats self = summary_stats(a, a);
  CHECK(self.mean_l2 == 0.0);
  CHECK(self.cov_frobenius == 0.0);
  WeightedSamples b = a;
  b.points.col(0).array() += 3.0;
  b.points.col(1).array() += 4.0;
  const SummaryStats shifted = summary_stats(b, a);
  CHECK(shifted.mean_l2 == doctest::Approx(5.0));
  CHECK(shifted.cov_frobenius <= 1e-10);

  WeightedSamples w;
  w.points = RowMatrix(2, 1);
  w.points << -1.0, 1.0;
  w.weights = {0.5, 0.5};
  CHECK(weighted_covariance(w)(0, 0) == doctest::Approx(1.0));
  w.weights = {0.5, 0.6};
  CHECK_THROWS_AS(w.validate(), Error);
}
