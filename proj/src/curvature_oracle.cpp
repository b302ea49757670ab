#include "ricci_lab/curvature_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "ricci_lab/errors.hpp"

namespace ricci_lab::geometry {

namespace {

// Riemann tensor storage R[a][b][c][d], flattened.
struct Tensor4 {
  int d;
  std::vector<double> v;
  explicit Tensor4(int dim) : d(dim), v(static_cast<std::size_t>(dim) * dim * dim * dim, 0.0) {}
  double& operator()(int a, int b, int c, int e) { return v[((a * d + b) * d + c) * d + e]; }
  double operator()(int a, int b, int c, int e) const { return v[((a * d + b) * d + c) * d + e]; }
};

// Gamma[a](b,c) = Gamma^a_{bc}
using Christoffel = std::vector<Eigen::MatrixXd>;

Eigen::MatrixXd checked_metric(const MetricFn& metric, const Eigen::VectorXd& x,
                               const OracleOptions& opts) {
  Eigen::MatrixXd g = metric(x);
  const int d = static_cast<int>(x.size());
  if (g.rows() != d || g.cols() != d) throw InvalidArgument("metric has wrong shape");
  const double scale = std::max(1.0, g.cwiseAbs().maxCoeff());
  if ((g - g.transpose()).cwiseAbs().maxCoeff() > opts.symmetry_tol * scale) {
    throw InvalidArgument("metric input is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g, Eigen::EigenvaluesOnly);
  if (!(es.eigenvalues().minCoeff() > opts.degeneracy_tol)) {
    throw SingularPointError("metric degenerates on the stencil (singular stratum)");
  }
  return g;
}

Christoffel christoffel(const MetricFn& metric, const Eigen::VectorXd& x, const OracleOptions& opts) {
  const int d = static_cast<int>(x.size());
  const double h = opts.spacing;
  std::vector<Eigen::MatrixXd> dg(d);  // dg[c](a,b) = d_c g_ab
  for (int c = 0; c < d; ++c) {
    Eigen::VectorXd xp = x, xm = x;
    xp[c] += h;
    xm[c] -= h;
    dg[c] = (checked_metric(metric, xp, opts) - checked_metric(metric, xm, opts)) / (2 * h);
  }
  const Eigen::MatrixXd ginv = checked_metric(metric, x, opts).inverse();
  Christoffel G(d, Eigen::MatrixXd::Zero(d, d));
  for (int a = 0; a < d; ++a) {
    for (int b = 0; b < d; ++b) {
      for (int c = b; c < d; ++c) {
        double s = 0.0;
        for (int e = 0; e < d; ++e) s += ginv(a, e) * (dg[b](e, c) + dg[c](e, b) - dg[e](b, c));
        G[a](b, c) = G[a](c, b) = 0.5 * s;
      }
    }
  }
  return G;
}

// Lowered Riemann tensor R_{abcd} with <R(d_c, d_d) d_b, d_a> = R_{abcd}, in an
// orthonormal frame, projected onto the algebraic curvature-tensor symmetries.
Tensor4 frame_riemann(const MetricFn& metric, const Eigen::VectorXd& x, const OracleOptions& opts) {
  const int d = static_cast<int>(x.size());
  const double h = opts.spacing;
  const Eigen::MatrixXd g = checked_metric(metric, x, opts);
  const Christoffel G = christoffel(metric, x, opts);
  std::vector<Christoffel> dG(d);  // dG[c][a](b,e) = d_c Gamma^a_{be}
  for (int c = 0; c < d; ++c) {
    Eigen::VectorXd xp = x, xm = x;
    xp[c] += h;
    xm[c] -= h;
    const Christoffel Gp = christoffel(metric, xp, opts);
    const Christoffel Gm = christoffel(metric, xm, opts);
    dG[c].resize(d);
    for (int a = 0; a < d; ++a) dG[c][a] = (Gp[a] - Gm[a]) / (2 * h);
  }
  // R^a_{bcd} = d_c G^a_{db} - d_d G^a_{cb} + G^a_{ce} G^e_{db} - G^a_{de} G^e_{cb}
  Tensor4 Rup(d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b)
      for (int c = 0; c < d; ++c)
        for (int e = 0; e < d; ++e) {
          double s = dG[c][a](e, b) - dG[e][a](c, b);
          for (int f = 0; f < d; ++f) s += G[a](c, f) * G[f](e, b) - G[a](e, f) * G[f](c, b);
          Rup(a, b, c, e) = s;
        }
  Tensor4 Rlow(d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b)
      for (int c = 0; c < d; ++c)
        for (int e = 0; e < d; ++e) {
          double s = 0.0;
          for (int f = 0; f < d; ++f) s += g(a, f) * Rup(f, b, c, e);
          Rlow(a, b, c, e) = s;
        }
  // Orthonormal frame E with E^T g E = I.
  const Eigen::LLT<Eigen::MatrixXd> llt(g);
  const Eigen::MatrixXd E =
      llt.matrixL().solve(Eigen::MatrixXd::Identity(d, d)).transpose();
  // Transform one index at a time.
  Tensor4 T = Rlow;
  for (int slot = 0; slot < 4; ++slot) {
    Tensor4 U(d);
    int idx[4];
    for (idx[0] = 0; idx[0] < d; ++idx[0])
      for (idx[1] = 0; idx[1] < d; ++idx[1])
        for (idx[2] = 0; idx[2] < d; ++idx[2])
          for (idx[3] = 0; idx[3] < d; ++idx[3]) {
            double s = 0.0;
            int j[4] = {idx[0], idx[1], idx[2], idx[3]};
            for (int f = 0; f < d; ++f) {
              j[slot] = f;
              s += T(j[0], j[1], j[2], j[3]) * E(f, idx[slot]);
            }
            U(idx[0], idx[1], idx[2], idx[3]) = s;
          }
    T = std::move(U);
  }
  Tensor4 S(d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b)
      for (int c = 0; c < d; ++c)
        for (int e = 0; e < d; ++e) {
          const double A1 = 0.25 * (T(a, b, c, e) - T(b, a, c, e) - T(a, b, e, c) + T(b, a, e, c));
          const double A2 = 0.25 * (T(c, e, a, b) - T(e, c, a, b) - T(c, e, b, a) + T(e, c, b, a));
          S(a, b, c, e) = 0.5 * (A1 + A2);
        }
  return S;
}

Eigen::MatrixXd operator_from(const Tensor4& S) {
  const int d = S.d;
  std::vector<std::pair<int, int>> pairs;
  for (int a = 0; a < d; ++a)
    for (int b = a + 1; b < d; ++b) pairs.emplace_back(a, b);
  const int p = static_cast<int>(pairs.size());
  Eigen::MatrixXd op(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j)
      op(i, j) = S(pairs[i].first, pairs[i].second, pairs[j].first, pairs[j].second);
  return 0.5 * (op + op.transpose());
}

}  // namespace

Eigen::MatrixXd curvature_operator_fd(const MetricFn& metric, const Eigen::VectorXd& point,
                                      const OracleOptions& opts) {
  return operator_from(frame_riemann(metric, point, opts));
}

CurvatureReport curvature_oracle(const MetricFn& metric, const Eigen::VectorXd& point,
                                 const OracleOptions& opts) {
  if (!(opts.spacing > 0.0)) throw InvalidArgument("oracle spacing must be positive");
  const Tensor4 S = frame_riemann(metric, point, opts);
  const int d = S.d;
  const Eigen::MatrixXd op = operator_from(S);

  CurvatureReport r;
  r.point.assign(point.data(), point.data() + point.size());
  r.sectional_min = op.diagonal().minCoeff();
  r.sectional_max = op.diagonal().maxCoeff();
  if (op.rows() > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(op, Eigen::EigenvaluesOnly);
    r.rm_operator_min_eig = es.eigenvalues().minCoeff();
  }
  Eigen::MatrixXd ric = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < d; ++k)
      for (int j = 0; j < d; ++j) ric(i, k) += S(j, i, j, k);
  ric = 0.5 * (ric + ric.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ric, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd ev = es.eigenvalues();
  r.ricci_eigs.assign(ev.data(), ev.data() + ev.size());
  r.scalar = ric.trace();
  return r;
}

std::vector<CurvatureReport> curvature_oracle(const MetricFn& metric,
                                              const std::vector<Eigen::VectorXd>& points,
                                              const OracleOptions& opts) {
  std::vector<CurvatureReport> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(curvature_oracle(metric, p, opts));
  return out;
}

MetricFn suspension_metric(const SuspensionChain& chain) {
  return [chain](const Eigen::VectorXd& x) {
    const auto diag = chain.metric_diagonal(std::span<const double>(x.data(), x.size()));
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(x.size(), x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) g(k, k) = diag[k];
    return g;
  };
}

MetricFn layer_metric(double beta, int fiber_dim, double fiber_curvature) {
  if (!(fiber_curvature > 0.0)) throw InvalidArgument("layer_metric needs positive fiber curvature");
  return [=](const Eigen::VectorXd& x) {
    const int d = fiber_dim + 1;
    if (x.size() != d) throw InvalidArgument("layer_metric: wrong point dimension");
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(d, d);
    const double b2 = beta * beta;
    g(0, 0) = b2;
    double w = b2 * std::sin(x[0]) * std::sin(x[0]) / fiber_curvature;
    for (int a = 1; a < d; ++a) {
      g(a, a) = w;
      const double s = std::sin(x[a]);
      w *= s * s;
    }
    return g;
  };
}

}  // namespace ricci_lab::geometry
