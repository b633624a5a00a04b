#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "fksteer/control.hpp"
#include "fksteer/rng.hpp"

using namespace fksteer;

namespace {

struct Sample {
  std::vector<double> w, g;
  RowMatrix h;
};

Sample synthetic(std::size_t N, std::size_t n, std::uint64_t seed) {
  StreamRng rng(seed, StreamPurpose::Problem, 5);
  Sample s;
  s.w.resize(N);
  s.g.resize(N);
  s.h.resize(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(n));
  double total = 0.0;
  for (std::size_t p = 0; p < N; ++p) {
    s.w[p] = 0.1 + rng.uniform();
    total += s.w[p];
    for (std::size_t i = 0; i < n; ++i) s.h(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(i)) = rng.normal() * (1.0 + i);
    s.g[p] = 2.0 * rng.normal() + 0.5 * s.h(static_cast<Eigen::Index>(p), 0) * s.h(static_cast<Eigen::Index>(p), 0);
  }
  for (double& w : s.w) w /= total;
  return s;
}

// Weighted least squares through a QR of the sqrt(w)-scaled centred design.
Vector least_squares_oracle(const Sample& s) {
  const auto N = static_cast<Eigen::Index>(s.w.size());
  const Eigen::Index n = s.h.cols();
  double mg = 0.0;
  Vector mh = Vector::Zero(n);
  for (Eigen::Index p = 0; p < N; ++p) {
    mg += s.w[p] * s.g[p];
    mh += s.w[p] * s.h.row(p).transpose();
  }
  Eigen::MatrixXd X(N, n);
  Vector y(N);
  for (Eigen::Index p = 0; p < N; ++p) {
    const double sw = std::sqrt(s.w[p]);
    X.row(p) = sw * (s.h.row(p).transpose() - mh).transpose();
    y[p] = -sw * (s.g[p] - mg);
  }
  return X.colPivHouseholderQr().solve(y);
}

}  // namespace

TEST_CASE("VCG: constant g gives zero control") {
  Sample s = synthetic(50, 2, 1);
  std::fill(s.g.begin(), s.g.end(), 3.7);
  ControlSystem sys = assemble_vcg(s.w, s.g, s.h);
  CHECK(sys.c.norm() < 1e-14);
  const SolveResult r = solve_regularized(sys);
  CHECK(r.theta.norm() < 1e-12);
}

TEST_CASE("VCG: scalar normal equation") {
  const Sample s = synthetic(80, 1, 2);
  ControlSystem sys = assemble_vcg(s.w, s.g, s.h);
  sys.ridge = 0.0;
  const SolveResult r = solve_regularized(sys);
  double mg = 0, mh = 0;
  for (std::size_t p = 0; p < 80; ++p) {
    mg += s.w[p] * s.g[p];
    mh += s.w[p] * s.h(static_cast<Eigen::Index>(p), 0);
  }
  double cov = 0, var = 0;
  for (std::size_t p = 0; p < 80; ++p) {
    const double dh = s.h(static_cast<Eigen::Index>(p), 0) - mh;
    cov += s.w[p] * (s.g[p] - mg) * dh;
    var += s.w[p] * dh * dh;
  }
  CHECK(r.theta[0] == doctest::Approx(-cov / var).epsilon(1e-12));
}

TEST_CASE("VCG matches a weighted least-squares oracle") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Sample s = synthetic(100, 3, 10 + seed);
    ControlSystem sys = assemble_vcg(s.w, s.g, s.h);
    sys.ridge = 0.0;
    CHECK((sys.A - sys.A.transpose()).norm() <= 1e-10 * sys.A.norm());
    CHECK(sys.A.selfadjointView<Eigen::Lower>().eigenvalues().minCoeff() >= -1e-12);
    const Vector theta = solve_regularized(sys).theta;
    const Vector oracle = least_squares_oracle(s);
    CHECK((theta - oracle).norm() <= 1e-8 * std::max(1.0, oracle.norm()));
  }
}

TEST_CASE("VCG invariants over random instances") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Sample s = synthetic(60 + seed, 1 + seed % 3, 100 + seed);
    ControlSystem sys = assemble_vcg(s.w, s.g, s.h);
    const Vector theta = solve_regularized(sys).theta;
    const double before = weighted_residual_variance(s.w, s.g, s.h, Vector());
    const double after = weighted_residual_variance(s.w, s.g, s.h, theta);
    CHECK(after <= before + 1e-12);

    // Scale equivariance with ridge = 0.
    ControlSystem base = assemble_vcg(s.w, s.g, s.h);
    base.ridge = 0.0;
    const Vector t0 = solve_regularized(base).theta;
    const double alpha = 3.5;
    RowMatrix scaled = s.h;
    scaled.col(0) *= alpha;
    ControlSystem sc = assemble_vcg(s.w, s.g, scaled);
    sc.ridge = 0.0;
    const Vector t1 = solve_regularized(sc).theta;
    CHECK(t1[0] == doctest::Approx(t0[0] / alpha).epsilon(1e-10));
    for (Eigen::Index i = 1; i < t0.size(); ++i) CHECK(t1[i] == doctest::Approx(t0[i]).epsilon(1e-10));
    CHECK(weighted_residual_variance(s.w, s.g, scaled, t1) ==
          doctest::Approx(weighted_residual_variance(s.w, s.g, s.h, t0)).epsilon(1e-10));

    // Exact cancellation when g is in the span of h.
    Sample e = s;
    for (std::size_t p = 0; p < e.g.size(); ++p) {
      e.g[p] = 4.0;
      for (Eigen::Index i = 0; i < e.h.cols(); ++i) e.g[p] += (1.5 - i) * e.h(static_cast<Eigen::Index>(p), i);
    }
    ControlSystem ex = assemble_vcg(e.w, e.g, e.h);
    ex.ridge = 0.0;
    const Vector te = solve_regularized(ex).theta;
    CHECK(weighted_residual_variance(e.w, e.g, e.h, te) <=
          1e-16 * weighted_residual_variance(e.w, e.g, e.h, Vector()) + 1e-30);
  }
}

TEST_CASE("ECG small systems") {
  Sample s = synthetic(40, 2, 3);
  RowMatrix grads(40, 2 * 3);
  StreamRng rng(4, StreamPurpose::Problem);
  for (Eigen::Index p = 0; p < 40; ++p)
    for (Eigen::Index j = 0; j < 6; ++j) grads(p, j) = rng.normal();

  std::vector<double> zero(40, 0.0);
  ControlSystem sys = assemble_ecg(s.w, zero, s.h, grads);
  CHECK(solve_regularized(sys).theta.norm() == 0.0);

  // One basis with a constant unit gradient.
  RowMatrix unit = RowMatrix::Zero(40, 3);
  unit.col(1).setOnes();
  RowMatrix one = s.h.leftCols(1);
  ControlSystem one_sys = assemble_ecg(s.w, s.g, one, unit);
  one_sys.ridge = 0.0;
  double mg = 0.0, num = 0.0;
  for (std::size_t p = 0; p < 40; ++p) mg += s.w[p] * s.g[p];
  for (std::size_t p = 0; p < 40; ++p) num += s.w[p] * (s.g[p] - mg) * one(static_cast<Eigen::Index>(p), 0);
  CHECK(solve_regularized(one_sys).theta[0] == doctest::Approx(num).epsilon(1e-12));
}

TEST_CASE("ECG agrees with a grid-quadrature Ritz minimisation") {
  // q = N(0, 1), g = x - E[x], basis s(x) = x, grad s = 1.
  const int n = 4001;
  std::vector<double> w(n), g(n);
  RowMatrix s(n, 1), grad(n, 1);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = -10.0 + 20.0 * i / (n - 1);
    w[i] = std::exp(-0.5 * x * x);
    total += w[i];
    s(i, 0) = x;
    grad(i, 0) = 1.0;
    g[i] = x;
  }
  for (double& v : w) v /= total;
  ControlSystem sys = assemble_ecg(w, g, s, grad);
  sys.ridge = 0.0;
  const double theta = solve_regularized(sys).theta[0];

  // Discretised energy J(theta) = sum q (theta^2 / 2 - theta (g - m) x), minimised by golden section.
  auto J = [&](double th) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += w[i] * (0.5 * th * th - th * g[i] * s(i, 0));
    return acc;
  };
  double a = -5.0, b = 5.0;
  const double phi = (std::sqrt(5.0) - 1) / 2;
  for (int it = 0; it < 200; ++it) {
    const double c = b - phi * (b - a), d = a + phi * (b - a);
    if (J(c) < J(d)) b = d; else a = c;
  }
  // Golden section on a quadratic only resolves the minimiser to about sqrt(eps).
  CHECK(theta == doctest::Approx(0.5 * (a + b)).epsilon(1e-6));
  CHECK(theta == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("regularised solve edge cases") {
  ControlSystem id;
  id.A = Eigen::MatrixXd::Identity(3, 3);
  id.c = (Vector(3) << 1.0, -2.0, 0.5).finished();
  id.ridge = 0.0;
  CHECK((solve_regularized(id).theta - id.c).norm() == 0.0);

  // Duplicate basis column: singular A.
  Sample s = synthetic(100, 1, 9);
  RowMatrix dup(100, 2);
  dup.col(0) = s.h.col(0);
  dup.col(1) = s.h.col(0);
  ControlSystem sing = assemble_vcg(s.w, s.g, dup);
  const SolveResult r = solve_regularized(sing);
  CHECK(r.theta.allFinite());
  CHECK(weighted_residual_variance(s.w, s.g, dup, r.theta) <=
        weighted_residual_variance(s.w, s.g, dup, Vector()));

  ControlSystem zero;
  zero.A = Eigen::MatrixXd::Zero(2, 2);
  zero.c = Vector::Ones(2);
  const SolveResult z = solve_regularized(zero);
  CHECK(z.fallback);
  CHECK(z.theta.norm() == 0.0);
  CHECK_FALSE(z.warning.empty());
}

TEST_CASE("assembly rejects non-finite input") {
  Sample s = synthetic(10, 2, 1);
  s.g[3] = std::numeric_limits<double>::quiet_NaN();
  try {
    assemble_vcg(s.w, s.g, s.h);
    FAIL("expected non-finite-input");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonFiniteInput);
  }
}

TEST_CASE("control state accumulates rounds") {
  ControlState st(2);
  st.round[0] = (Vector(2) << 1.0, 2.0).finished();
  st.round[1] = (Vector(2) << -1.0, 0.5).finished();
  st.absorb();
  st.round[0] = (Vector(2) << 0.5, 0.5).finished();
  st.round[1] = (Vector(2) << 0.0, 0.0).finished();
  st.absorb();
  CHECK(st.cumulative[0][0] == 1.5);
  CHECK(st.cumulative[0][1] == 2.5);
  CHECK(st.cumulative[1][0] == -1.0);
}
