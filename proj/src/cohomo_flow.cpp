#include "ricci_lab/cohomo_flow.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "ricci_lab/errors.hpp"
#include "ricci_lab/io.hpp"

namespace ricci_lab::flow {

using std::numbers::pi;

namespace {

constexpr double kGamma = 1.0 + 0.70710678118654752440;  // ROS2

// The solver evolves w = phi / (rho sin x), which is even about both tips
// with w = 1 there. The two tip cells are slaved to that condition through
// the quadratic in d^2 (d = distance to the tip) matching the next two cells.
struct Solver {
  const MetricGrid1D& nodes;
  std::size_t m;
  int q;
  double h;
  std::vector<double> xp, xpp, sn, ct;

  explicit Solver(const MetricGrid1D& g)
      : nodes(g), m(g.size()), q(g.fiber_dim()), h(g.du()), xp(m), xpp(m), sn(m), ct(m) {
    for (std::size_t i = 0; i < m; ++i) {
      xp[i] = stretch_map_d1(g.u[i], g.stretch);
      xpp[i] = stretch_map_d2(g.u[i], g.stretch);
      sn[i] = std::sin(g.x[i]);
      ct[i] = std::cos(g.x[i]) / sn[i];
    }
  }

  void close(std::vector<double>& w) const {
    for (int tip : {0, 1}) {
      auto idx = [&](std::size_t j) { return tip == 0 ? j : m - 1 - j; };
      auto z = [&](std::size_t j) {
        const double d = tip == 0 ? nodes.x[idx(j)] : pi - nodes.x[idx(j)];
        return d * d;
      };
      const double z0 = z(0), z1 = z(1), z2 = z(2);
      w[idx(0)] = (z0 - z1) * (z0 - z2) / (z1 * z2) +
                  w[idx(1)] * z0 * (z0 - z2) / (z1 * (z1 - z2)) +
                  w[idx(2)] * z0 * (z0 - z1) / (z2 * (z2 - z1));
    }
  }

  // Radial curvature K_rad at the nodes for a closed w.
  std::vector<double> k_rad(const std::vector<double>& w, double L, std::vector<double>* wx_out = nullptr,
                            std::vector<double>* wxx_out = nullptr) const {
    const double rho = L / pi;
    const auto wu = diff_u(w, h, +1);
    const auto wuu = diff_uu(w, h, +1);
    std::vector<double> k(m), wx(m), wxx(m);
    for (std::size_t i = 0; i < m; ++i) {
      wx[i] = wu[i] / xp[i];
      wxx[i] = (wuu[i] - xpp[i] * wx[i]) / (xp[i] * xp[i]);
      k[i] = (w[i] - 2.0 * ct[i] * wx[i] - wxx[i]) / (rho * rho * w[i]);
    }
    if (wx_out) *wx_out = std::move(wx);
    if (wxx_out) *wxx_out = std::move(wxx);
    return k;
  }

  // xi and L'/L for a closed w.
  void gauge(const std::vector<double>& w, double L, std::vector<double>& xi, double& lrate) const {
    const auto k = k_rad(w, L);
    double total = 0.0;
    const auto I = cumulative_integral(nodes, k, &total);
    xi.resize(m);
    for (std::size_t i = 0; i < m; ++i) xi[i] = q * (I[i] - nodes.x[i] / pi * total);
    lrate = -q * total / pi;
  }

  // w_t with xi and L'/L supplied; w is closed in place. Tip rows are zero.
  void rate(std::vector<double>& w, double L, const std::vector<double>& xi, double lrate,
            std::vector<double>& out) const {
    close(w);
    const double rho2 = (L / pi) * (L / pi);
    std::vector<double> wx, wxx;
    k_rad(w, L, &wx, &wxx);
    out.assign(m, 0.0);
    for (std::size_t i = 1; i + 1 < m; ++i) {
      const double c = ct[i];
      const double fib = (1.0 - wx[i] * wx[i]) + c * c * (1.0 - w[i] * w[i]) - 2.0 * c * w[i] * wx[i];
      out[i] = (-w[i] + 2.0 * c * wx[i] + wxx[i]) / rho2 - (q - 1) * fib / (rho2 * w[i]) +
               xi[i] * (c * w[i] + wx[i]) - lrate * w[i];
    }
  }

  std::vector<double> to_w(const std::vector<double>& phi, double L) const {
    std::vector<double> w(m);
    for (std::size_t i = 0; i < m; ++i) w[i] = phi[i] / (L / pi * sn[i]);
    close(w);
    return w;
  }
  std::vector<double> to_phi(const std::vector<double>& w, double L) const {
    std::vector<double> phi(m);
    for (std::size_t i = 0; i < m; ++i) phi[i] = L / pi * sn[i] * w[i];
    return phi;
  }
};

// Stage matrix of the W-method on the unknowns (dw, dK, a_0..a_M): dK is the
// linearised radial curvature and a the running integral of dK in the
// cumulative rule, so that the nonlocal gauge terms stay sparse.
void assemble_stage_matrix(const Solver& sv, const std::vector<double>& w, double L,
                           const std::vector<double>& xi, double lrate, const std::vector<double>& f0,
                           double gh, std::vector<Eigen::Triplet<double>>& trip) {
  const std::size_t m = sv.m;
  const double h = sv.h;
  const int q = sv.q;
  const std::size_t K0 = m, A0 = 2 * m;
  trip.clear();
  std::vector<double> pert, fp, wc = w;
  sv.close(wc);
  const auto k0 = sv.k_rad(wc, L);
  std::vector<double> wx;
  sv.k_rad(wc, L, &wx);
  for (std::size_t c = 0; c < 5; ++c) {
    pert = w;
    for (std::size_t j = c; j < m; j += 5) pert[j] += 1e-7 * std::max(std::abs(w[j]), 1e-3);
    sv.rate(pert, L, xi, lrate, fp);  // closes pert
    const auto kp = sv.k_rad(pert, L);
    for (std::size_t j = c; j < m; j += 5) {
      const double dj = 1e-7 * std::max(std::abs(w[j]), 1e-3);
      const std::size_t lo = j >= 2 ? j - 2 : 0, hi = std::min(m - 1, j + 2);
      for (std::size_t i = lo; i <= hi; ++i) {
        const double v = (fp[i] - f0[i]) / dj;
        if (v != 0.0) trip.emplace_back(i, j, -gh * v);
        const double bk = (kp[i] - k0[i]) / dj;
        if (bk != 0.0) trip.emplace_back(K0 + i, j, -bk);
      }
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    trip.emplace_back(i, i, 1.0);
    trip.emplace_back(K0 + i, K0 + i, 1.0);
  }
  // Weights of dK in the cumulative rule, with even ghosts.
  auto add_w = [&](std::size_t row, long k, double coef) {
    const long mm = static_cast<long>(m);
    const long kk = k < 0 ? -k - 1 : (k >= mm ? 2 * mm - 1 - k : k);
    trip.emplace_back(row, K0 + kk, coef * stretch_map_d1(sv.nodes.u[kk], sv.nodes.stretch));
  };
  trip.emplace_back(A0, A0, 1.0);
  for (std::size_t i = 0; i < m; ++i) {
    const long li = static_cast<long>(i);
    const std::size_t row = A0 + 1 + i;
    trip.emplace_back(row, A0 + 1 + i, 1.0);
    trip.emplace_back(row, A0 + i, -1.0);
    add_w(row, li, -h * (1.0 - 2.0 / 24));
    add_w(row, li + 1, -h / 24);
    add_w(row, li - 1, -h / 24);
  }
  // Gauge coupling in the dw rows: F_i depends on xi_i and on L'/L.
  for (std::size_t i = 1; i + 1 < m; ++i) {
    const long li = static_cast<long>(i);
    const double d = q * (sv.ct[i] * wc[i] + wx[i]);
    const double xr = sv.nodes.x[i] / pi;
    // xi_i = q (a_i + local_i - (x_i/pi) a_M)
    trip.emplace_back(i, A0 + i, -gh * d);
    add_w(i, li, -gh * d * (0.5 * h - 2.0 * h / 48));
    add_w(i, li + 1, -gh * d * (-h / 16 + h / 48));
    add_w(i, li - 1, -gh * d * (h / 16 + h / 48));
    // -(L'/L) w_i with L'/L = -(q/pi) a_M, and the xi term's a_M part
    trip.emplace_back(i, A0 + m, -gh * (-d * xr + q / pi * wc[i]));
  }
}

bool positive(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double a) { return a > 0.0 && std::isfinite(a); });
}

bool has_neck(const std::vector<double>& phi, double ratio) {
  const double mx = *std::max_element(phi.begin(), phi.end());
  for (std::size_t i = 3; i + 3 < phi.size(); ++i) {
    if (phi[i] <= phi[i - 1] && phi[i] <= phi[i + 1] && phi[i] < ratio * mx) return true;
  }
  return false;
}

std::vector<double> record_times(const FlowOptions& o) {
  std::vector<double> t;
  for (double v = o.t_min; v < o.T * (1 - 1e-12); v *= o.t_ratio) t.push_back(v);
  t.push_back(o.T);
  for (double e : o.extra_times)
    if (e > 0.0 && e <= o.T) t.push_back(e);
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end(), [](double a, double b) { return std::abs(a - b) <= 1e-15 * b; }),
          t.end());
  return t;
}

}  // namespace

void FlowOptions::validate() const {
  if (!(T > 0.0)) throw InvalidArgument("final time T must be positive");
  if (!(t_min > 0.0 && t_min <= T)) throw InvalidArgument("t_min must lie in (0, T]");
  if (!(t_ratio > 1.0)) throw InvalidArgument("t_ratio must exceed 1");
  if (!(rtol > 0.0 && atol > 0.0)) throw InvalidArgument("tolerances must be positive");
  if (!(dt_init > 0.0 && dt_min > 0.0)) throw InvalidArgument("time steps must be positive");
  if (dt_fixed < 0.0) throw InvalidArgument("dt_fixed must be >= 0");
}

const char* to_string(Scheme s) { return s == Scheme::Rosenbrock ? "ros2" : "explicit-heun"; }

FlowRhs flow_rhs(const MetricGrid1D& nodes, const std::vector<double>& phi, double L) {
  const Solver sv(nodes);
  auto w = sv.to_w(phi, L);
  FlowRhs r;
  sv.gauge(w, L, r.xi, r.L_t);
  std::vector<double> wt;
  sv.rate(w, L, r.xi, r.L_t, wt);
  r.phi_t.resize(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) r.phi_t[i] = L / pi * sv.sn[i] * wt[i] + r.L_t * phi[i];
  r.L_t *= L;
  return r;
}


double value_at(const MetricGrid1D& g, const std::vector<double>& field, int parity, double x, int points) {
  if (!(x >= 0.0 && x <= pi)) throw InvalidArgument("x outside [0, pi]");
  if (points < 2 || points % 2 != 0 || points > static_cast<int>(g.size())) {
    throw InvalidArgument("interpolation stencil must be even and fit the grid");
  }
  // invert x = u - a sin 2u by Newton (monotone for a < 1/2)
  double u = x;
  for (int it = 0; it < 50; ++it) {
    const double du = (stretch_map(u, g.stretch) - x) / stretch_map_d1(u, g.stretch);
    u -= du;
    if (std::abs(du) < 1e-15) break;
  }
  const double h = g.du();
  const long m = static_cast<long>(g.size());
  const long k = static_cast<long>(std::floor(u / h - 0.5));
  double out = 0.0;
  const long lo = k - points / 2 + 1, hi = k + points / 2;
  for (long a = lo; a <= hi; ++a) {
    double w = 1.0;
    for (long b = lo; b <= hi; ++b)
      if (b != a) w *= (u - (b + 0.5) * h) / ((a - b) * h);
    double v;
    if (a < 0) v = parity * field[-a - 1];
    else if (a >= m) v = parity * field[2 * m - 1 - a];
    else v = field[a];
    out += w * v;
  }
  return out;
}

double explicit_step_bound(const MetricGrid1D& g) {
  double ds = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < g.size(); ++i) {
    ds = std::min(ds, g.du() * stretch_map_d1(g.u[i], g.stretch) * g.rho[i]);
  }
  // Heun is stable for |z| <= 2 on the negative axis; the 4th-order second
  // difference contributes 16/(3 ds^2) and the tip term 2(q-1)/ds^2.
  const double lam = (16.0 / 3.0 + 2.0 * (g.fiber_dim() - 1)) / (ds * ds);
  return 1.8 / lam;
}


FlowTrajectory evolve_ricci_flow(const MetricGrid1D& grid, const FlowOptions& opts) {
  grid.validate();
  opts.validate();
  for (int tip : {0, 1}) {
    const double sl = closure_slope(grid, tip);
    if (std::abs(sl - 1.0) > opts.slope_tolerance) {
      throw InvalidArgument("grid is not smoothly closed at tip " + std::to_string(tip) +
                            " (closure slope " + std::to_string(sl) + ")");
    }
  }
  bool uniform = true;
  for (double r : grid.rho) uniform = uniform && std::abs(r - grid.rho[0]) <= 1e-14 * grid.rho[0];
  const MetricGrid1D nodes =
      uniform ? grid : to_arclength_gauge(grid, static_cast<int>(grid.size()), grid.stretch);
  const Solver sv(nodes);
  const std::size_t m = nodes.size();

  FlowTrajectory tr;
  tr.scheme = opts.scheme;
  double L = nodes.rho[0] * pi;
  std::vector<double> w = sv.to_w(nodes.phi, L);
  tr.initial = nodes;
  tr.initial.phi = sv.to_phi(w, L);
  double t = 0.0;
  double dt = opts.dt_init;
  const auto records = record_times(opts);
  std::size_t next = 0;
  tr.inj_estimate = std::numeric_limits<double>::infinity();

  auto state = [&]() {
    MetricGrid1D s = nodes;
    s.phi = sv.to_phi(w, L);
    s.rho.assign(m, L / pi);
    return s;
  };

  if (opts.scheme == Scheme::Explicit && opts.dt_fixed > 0.0) {
    const double bound = explicit_step_bound(nodes);
    if (opts.dt_fixed > bound) {
      throw SolverError("CFL violation: fixed step " + std::to_string(opts.dt_fixed) +
                        " exceeds the explicit stability bound " + std::to_string(bound));
    }
    dt = opts.dt_fixed;
  }

  auto record = [&](double time) {
    MetricGrid1D s = state();
    const GridCurvature c = grid_curvature(s);
    const double rabs = *std::max_element(c.rm_abs.begin(), c.rm_abs.end());
    const double kmax = *std::max_element(c.rm_max.begin(), c.rm_max.end());
    tr.times.push_back(time);
    tr.rm_min.push_back(*std::min_element(c.rm_min.begin(), c.rm_min.end()));
    tr.rm_abs_max.push_back(rabs);
    tr.scalar_max.push_back(*std::max_element(c.scalar.begin(), c.scalar.end()));
    tr.alpha_estimate = std::max(tr.alpha_estimate, time * rabs);
    const double inj = std::min(kmax > 0.0 ? pi / std::sqrt(kmax) : L, L);
    tr.inj_estimate = std::min(tr.inj_estimate, inj / std::sqrt(time));
    tr.states.push_back(std::move(s));
  };

  auto err_of = [&](const std::vector<double>& e, const std::vector<double>& a,
                    const std::vector<double>& b) {
    double err = 0.0;
    for (std::size_t i = 1; i + 1 < m; ++i) {
      err = std::max(err, std::abs(e[i]) / (opts.atol + opts.rtol * std::max(std::abs(a[i]), std::abs(b[i]))));
    }
    return err;
  };

  const auto mi = static_cast<Eigen::Index>(m);
  const Eigen::Index na = 3 * mi + 1;
  Eigen::SparseMatrix<double> A(na, na);
  std::vector<Eigen::Triplet<double>> trip;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  bool pattern_ready = false;
  std::vector<double> xi, xi1, f0, f1, fp, pert, y1(m), ynew(m), e(m);
  Eigen::VectorXd rhs(na), k1(na), k2(na);

  while (next < records.size()) {
    if (tr.steps + tr.rejected >= opts.max_steps) {
      tr.stop_reason = "step limit reached at t=" + io::format_double(t);
      break;
    }
    const double target = records[next];
    const double h = std::min(dt, target - t);
    const bool hits = h == target - t;
    double lr0 = 0.0, lr1 = 0.0, Lnew = L, err = 0.0;
    sv.gauge(w, L, xi, lr0);
    sv.rate(w, L, xi, lr0, f0);
    bool ok = true;

    if (opts.scheme == Scheme::Rosenbrock) {
      assemble_stage_matrix(sv, w, L, xi, lr0, f0, kGamma * h, trip);
      A.setFromTriplets(trip.begin(), trip.end());
      if (!pattern_ready) {
        lu.analyzePattern(A);
        pattern_ready = true;
      }
      lu.factorize(A);
      ok = lu.info() == Eigen::Success;
      if (ok) {
        rhs.setZero();
        for (std::size_t i = 0; i < m; ++i) rhs[i] = f0[i];
        k1 = lu.solve(rhs);
        const double kL1 = lr0 * L;
        for (std::size_t i = 0; i < m; ++i) y1[i] = w[i] + h * k1[i];
        const double L1 = L + h * kL1;
        ok = positive(y1) && L1 > 0.0;
        if (ok) {
          sv.close(y1);
          sv.gauge(y1, L1, xi1, lr1);
          sv.rate(y1, L1, xi1, lr1, f1);
          rhs.setZero();
          for (std::size_t i = 0; i < m; ++i) rhs[i] = f1[i] - 2.0 * k1[i];
          k2 = lu.solve(rhs);
          const double kL2 = lr1 * L1 - 2.0 * kL1;
          for (std::size_t i = 0; i < m; ++i) {
            ynew[i] = w[i] + h * (1.5 * k1[i] + 0.5 * k2[i]);
            e[i] = 0.5 * h * (k1[i] + k2[i]);
          }
          err = err_of(e, w, ynew);
          Lnew = L + h * (1.5 * kL1 + 0.5 * kL2);
          err = std::max(err, std::abs(0.5 * h * (kL1 + kL2)) / (opts.atol + opts.rtol * L));
        }
      }
    } else {
      for (std::size_t i = 0; i < m; ++i) y1[i] = w[i] + h * f0[i];
      const double L1 = L + h * lr0 * L;
      ok = positive(y1) && L1 > 0.0;
      if (ok) {
        sv.close(y1);
        sv.gauge(y1, L1, xi1, lr1);
        sv.rate(y1, L1, xi1, lr1, f1);
        for (std::size_t i = 0; i < m; ++i) {
          ynew[i] = w[i] + 0.5 * h * (f0[i] + f1[i]);
          e[i] = 0.5 * h * (f1[i] - f0[i]);
        }
        err = opts.dt_fixed > 0.0 ? 0.0 : err_of(e, w, ynew);
        Lnew = L + 0.5 * h * (lr0 * L + lr1 * L1);
      }
    }

    if (ok) {
      sv.close(ynew);
      ok = positive(ynew) && Lnew > 0.0;
    }
    if (ok && std::isfinite(err) && err <= 1.0) {
      t = hits ? target : t + h;
      w.swap(ynew);
      L = Lnew;
      ++tr.steps;
      if (!(opts.scheme == Scheme::Explicit && opts.dt_fixed > 0.0)) {
        const double fac = err > 0.0 ? std::clamp(0.8 / std::sqrt(err), 0.2, 2.0) : 2.0;
        if (!hits || fac < 1.0) dt = h * fac;
        if (opts.scheme == Scheme::Explicit) {
          MetricGrid1D s = nodes;
          s.rho.assign(m, L / pi);
          dt = std::min(dt, explicit_step_bound(s));
        }
      }
      if (hits) {
        record(t);
        ++next;
      }
      if (tr.steps % 25 == 0 || hits) {
        if (has_neck(sv.to_phi(w, L), opts.neck_ratio)) {
          tr.neck_detected = true;
          tr.stop_reason = "neck pinch detected at t=" + io::format_double(t);
          break;
        }
      }
    } else {
      ++tr.rejected;
      if (opts.scheme == Scheme::Explicit && opts.dt_fixed > 0.0) {
        tr.stop_reason = "fixed explicit step lost positivity at t=" + io::format_double(t);
        break;
      }
      const double fac = (ok && std::isfinite(err)) ? std::clamp(0.9 / std::sqrt(err), 0.1, 0.5) : 0.25;
      dt = h * fac;
      if (dt < opts.dt_min) {
        tr.stop_reason = "step size underflow at t=" + io::format_double(t) + " (resolution failure)";
        break;
      }
    }
  }
  tr.S = t;
  tr.completed = next == records.size();
  if (tr.completed) tr.stop_reason = "reached T";
  if (tr.times.empty()) tr.inj_estimate = 0.0;
  return tr;
}


nlohmann::json FlowTrajectory::metadata() const {
  return {{"scheme", to_string(scheme)},
          {"gauge", "arclength-proportional x via tangential field"},
          {"records", times.size()},
          {"S", S},
          {"completed", completed},
          {"stop_reason", stop_reason},
          {"neck_detected", neck_detected},
          {"alpha_estimate", alpha_estimate},
          {"inj_estimate", inj_estimate},
          {"steps", steps},
          {"rejected", rejected},
          {"n", initial.n},
          {"resolution", initial.size()}};
}

void write_trajectory_csv(const FlowTrajectory& tr, const std::string& path) {
  io::Table t;
  std::vector<double> ct, cx, cr, cp, cR, cm;
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    const auto& s = tr.states[k];
    const GridCurvature c = grid_curvature(s);
    for (std::size_t i = 0; i < s.size(); ++i) {
      ct.push_back(tr.times[k]);
      cx.push_back(s.x[i]);
      cr.push_back(s.rho[i]);
      cp.push_back(s.phi[i]);
      cR.push_back(c.scalar[i]);
      cm.push_back(c.rm_min[i]);
    }
  }
  t.add("t", ct);
  t.add("x", cx);
  t.add("rho", cr);
  t.add("phi", cp);
  t.add("R", cR);
  t.add("rm_min", cm);
  io::write_csv(t, path);
}

SmoothingRun glued_initial_data(const SmoothingSetup& setup, GlueDiagnostics* diag) {
  SmoothingRun run;
  run.singular = suspension_to_grid(setup.beta1, setup.n, setup.resolution, setup.stretch);
  GlueParams gp;
  gp.s = setup.s;
  const double sigma = std::sqrt(setup.s);
  const double r_max = std::max(10.0, 1.3 * gp.ramp_outer * std::pow(setup.s, 0.25) / sigma + 2.0);
  const int samples = static_cast<int>(r_max * setup.expander_samples_per_unit) + 1;
  const int m = setup.n - 1;
  if (setup.beta1 >= 1.0) {
    run.expander = gaussian_expander(m, r_max, samples);
  } else {
    soliton::ShootOptions so;
    so.samples = samples;
    run.expander = soliton::expander_shoot(m, setup.beta1, r_max, so);
  }
  run.glued = glue_expander(run.singular, run.expander, gp, diag);
  return run;
}

SmoothingRun smoothing_run(const SmoothingSetup& setup, const FlowOptions& opts) {
  SmoothingRun run = glued_initial_data(setup);
  const MetricGrid1D gauge = to_arclength_gauge(run.glued, setup.resolution, setup.stretch);
  run.trajectory = evolve_ricci_flow(gauge, opts);
  return run;
}

}  // namespace ricci_lab::flow
