#include "fksteer/control.hpp"

#include <cmath>

namespace fksteer {

namespace {

void check_inputs(std::span<const double> weights, std::span<const double> g,
                  const RowMatrix& m, const char* what) {
  const auto N = static_cast<Eigen::Index>(weights.size());
  if (static_cast<Eigen::Index>(g.size()) != N || m.rows() != N)
    throw Error(ErrorKind::DimensionMismatch, std::string(what) + ": particle counts differ");
  for (std::size_t p = 0; p < weights.size(); ++p)
    if (!std::isfinite(weights[p]) || !std::isfinite(g[p]))
      throw Error(ErrorKind::NonFiniteInput,
                  std::string(what) + ": non-finite weight or potential at particle " +
                      std::to_string(p));
  if (!m.allFinite())
    throw Error(ErrorKind::NonFiniteInput, std::string(what) + ": non-finite basis values");
}

double weighted_mean(std::span<const double> w, std::span<const double> v) {
  double m = 0.0;
  for (std::size_t p = 0; p < w.size(); ++p) m += w[p] * v[p];
  return m;
}

}  // namespace

ControlSystem assemble_vcg(std::span<const double> weights, std::span<const double> g,
                           const RowMatrix& h) {
  check_inputs(weights, g, h, "assemble_vcg");
  const Eigen::Index n = h.cols();
  const std::size_t N = weights.size();

  const double mg = weighted_mean(weights, g);
  Vector mh = Vector::Zero(n);
  for (std::size_t p = 0; p < N; ++p)
    for (Eigen::Index i = 0; i < n; ++i) mh[i] += weights[p] * h(p, i);

  ControlSystem sys;
  sys.mode = ControlMode::VCG;
  sys.A = Eigen::MatrixXd::Zero(n, n);
  sys.c = Vector::Zero(n);
  Vector dh(n);
  for (std::size_t p = 0; p < N; ++p) {
    const double w = weights[p];
    if (w == 0.0) continue;
    for (Eigen::Index i = 0; i < n; ++i) dh[i] = h(p, i) - mh[i];
    const double dg = g[p] - mg;
    for (Eigen::Index i = 0; i < n; ++i) {
      sys.c[i] -= w * dg * dh[i];
      for (Eigen::Index j = 0; j <= i; ++j) sys.A(i, j) += w * dh[i] * dh[j];
    }
  }
  sys.A.triangularView<Eigen::StrictlyUpper>() = sys.A.transpose();
  return sys;
}

ControlSystem assemble_ecg(std::span<const double> weights, std::span<const double> g,
                           const RowMatrix& s, const RowMatrix& grad_s) {
  check_inputs(weights, g, s, "assemble_ecg");
  const Eigen::Index n = s.cols();
  if (grad_s.rows() != s.rows() || (n > 0 && grad_s.cols() % n != 0))
    throw Error(ErrorKind::DimensionMismatch, "assemble_ecg: gradient block has wrong shape");
  if (!grad_s.allFinite())
    throw Error(ErrorKind::NonFiniteInput, "assemble_ecg: non-finite basis gradients");
  const Eigen::Index d = n > 0 ? grad_s.cols() / n : 0;
  const std::size_t N = weights.size();

  const double mg = weighted_mean(weights, g);
  ControlSystem sys;
  sys.mode = ControlMode::ECG;
  sys.A = Eigen::MatrixXd::Zero(n, n);
  sys.c = Vector::Zero(n);
  for (std::size_t p = 0; p < N; ++p) {
    const double w = weights[p];
    if (w == 0.0) continue;
    const double* row = grad_s.data() + static_cast<Eigen::Index>(p) * grad_s.cols();
    const double dg = g[p] - mg;
    for (Eigen::Index i = 0; i < n; ++i) {
      sys.c[i] += w * dg * s(p, i);
      for (Eigen::Index j = 0; j <= i; ++j) {
        double gg = 0.0;
        for (Eigen::Index k = 0; k < d; ++k) gg += row[i * d + k] * row[j * d + k];
        sys.A(i, j) += w * gg;
      }
    }
  }
  sys.A.triangularView<Eigen::StrictlyUpper>() = sys.A.transpose();
  return sys;
}

SolveResult solve_regularized(ControlSystem& sys) {
  const Eigen::Index n = sys.c.size();
  SolveResult out;
  out.theta = Vector::Zero(n);
  if (n == 0) {
    sys.theta = out.theta;
    return out;
  }
  const double trace = sys.A.trace();
  if (!std::isfinite(trace) || !(trace > 0.0)) {
    out.fallback = true;
    out.warning = "control system has non-positive trace; using zero control";
    sys.theta = out.theta;
    return out;
  }
  Eigen::MatrixXd reg = sys.A;
  reg.diagonal().array() += sys.ridge * trace / static_cast<double>(n);
  Eigen::LLT<Eigen::MatrixXd> llt(reg);
  if (llt.info() != Eigen::Success) {
    out.fallback = true;
    out.warning = "control system is not positive definite; using zero control";
    sys.theta = out.theta;
    return out;
  }
  Vector theta = llt.solve(sys.c);
  if (!theta.allFinite()) {
    out.fallback = true;
    out.warning = "control solve produced non-finite coefficients; using zero control";
    sys.theta = out.theta;
    return out;
  }
  out.theta = theta;
  sys.theta = theta;
  return out;
}

double weighted_residual_variance(std::span<const double> weights, std::span<const double> g,
                                  const RowMatrix& h, const Vector& theta) {
  const std::size_t N = weights.size();
  std::vector<double> phi(g.begin(), g.end());
  if (theta.size() > 0)
    for (std::size_t p = 0; p < N; ++p)
      for (Eigen::Index i = 0; i < theta.size(); ++i) phi[p] += theta[i] * h(p, i);
  const double m = weighted_mean(weights, phi);
  double v = 0.0;
  for (std::size_t p = 0; p < N; ++p) v += weights[p] * (phi[p] - m) * (phi[p] - m);
  return v;
}

void ControlState::absorb() {
  for (std::size_t k = 0; k < round.size(); ++k) {
    if (round[k].size() == 0) continue;
    if (cumulative[k].size() == 0)
      cumulative[k] = round[k];
    else
      cumulative[k] += round[k];
  }
}

}  // namespace fksteer
