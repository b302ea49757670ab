#include "ricci_lab/metric_grid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "ricci_lab/errors.hpp"

namespace ricci_lab::flow {

using std::numbers::pi;

namespace {

// Ghost-extended access: v_{-1} = p v_0, v_{-2} = p v_1, v_M = p v_{M-1}, ...
inline double ghost(const std::vector<double>& v, long i, int parity) {
  const long m = static_cast<long>(v.size());
  if (i < 0) return parity * v[-i - 1];
  if (i >= m) return parity * v[2 * m - 1 - i];
  return v[i];
}

// Cubic Hermite interpolation on a uniform grid r_k = k h.
struct Hermite {
  const std::vector<double>& r;
  const std::vector<double>& v;
  const std::vector<double>& dv;

  double h() const { return r[1] - r[0]; }
  std::size_t cell(double x) const {
    const double k = std::floor(x / h());
    return static_cast<std::size_t>(std::clamp(k, 0.0, static_cast<double>(r.size() - 2)));
  }
  double value(double x) const {
    const std::size_t k = cell(x);
    const double hh = h(), t = (x - r[k]) / hh;
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * v[k] + (t3 - 2 * t2 + t) * hh * dv[k] + (-2 * t3 + 3 * t2) * v[k + 1] +
           (t3 - t2) * hh * dv[k + 1];
  }
  double deriv(double x) const {
    const std::size_t k = cell(x);
    const double hh = h(), t = (x - r[k]) / hh;
    const double t2 = t * t;
    return ((6 * t2 - 6 * t) * v[k] + (-6 * t2 + 6 * t) * v[k + 1]) / hh +
           (3 * t2 - 4 * t + 1) * dv[k] + (3 * t2 - 2 * t) * dv[k + 1];
  }
};

double lagrange4(const double* xs, const double* ys, double x) {
  double out = 0.0;
  for (int i = 0; i < 4; ++i) {
    double w = 1.0;
    for (int j = 0; j < 4; ++j)
      if (j != i) w *= (x - xs[j]) / (xs[i] - xs[j]);
    out += w * ys[i];
  }
  return out;
}

std::vector<double> d_dx(const MetricGrid1D& g, const std::vector<double>& v, int parity) {
  std::vector<double> d = diff_u(v, g.du(), parity);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] /= stretch_map_d1(g.u[i], g.stretch);
  return d;
}

}  // namespace

double stretch_map(double u, double a) { return u - a * std::sin(2 * u); }
double stretch_map_d1(double u, double a) { return 1.0 - 2 * a * std::cos(2 * u); }
double stretch_map_d2(double u, double a) { return 4 * a * std::sin(2 * u); }

double MetricGrid1D::du() const { return pi / static_cast<double>(u.size()); }

void MetricGrid1D::validate() const {
  if (n < 3) throw InvalidArgument("cohomogeneity-one grids need n >= 3");
  if (!(stretch >= 0.0 && stretch < 0.5)) throw InvalidArgument("stretch must lie in [0, 1/2)");
  const std::size_t m = u.size();
  if (m < 8 || x.size() != m || rho.size() != m || phi.size() != m) {
    throw InvalidArgument("grid arrays must share a length >= 8");
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (!(rho[i] > 0.0) || !std::isfinite(rho[i])) throw InvalidArgument("rho must be positive");
    if (!(phi[i] > 0.0) || !std::isfinite(phi[i])) throw InvalidArgument("phi must be positive inside");
  }
}

MetricGrid1D make_nodes(int n, int resolution, double stretch) {
  if (resolution < 8) throw InvalidArgument("resolution must be >= 8");
  if (!(stretch >= 0.0 && stretch < 0.5)) throw InvalidArgument("stretch must lie in [0, 1/2)");
  MetricGrid1D g;
  g.n = n;
  g.stretch = stretch;
  g.u.resize(resolution);
  g.x.resize(resolution);
  for (int i = 0; i < resolution; ++i) {
    g.u[i] = (i + 0.5) * pi / resolution;
    g.x[i] = stretch_map(g.u[i], stretch);
  }
  return g;
}

std::vector<double> diff_u(const std::vector<double>& v, double h, int parity) {
  const long m = static_cast<long>(v.size());
  std::vector<double> d(m);
  for (long i = 0; i < m; ++i) {
    d[i] = (ghost(v, i - 2, parity) - 8 * ghost(v, i - 1, parity) + 8 * ghost(v, i + 1, parity) -
            ghost(v, i + 2, parity)) /
           (12 * h);
  }
  return d;
}

std::vector<double> diff_uu(const std::vector<double>& v, double h, int parity) {
  const long m = static_cast<long>(v.size());
  std::vector<double> d(m);
  for (long i = 0; i < m; ++i) {
    d[i] = (-ghost(v, i - 2, parity) + 16 * ghost(v, i - 1, parity) - 30 * v[i] +
            16 * ghost(v, i + 1, parity) - ghost(v, i + 2, parity)) /
           (12 * h * h);
  }
  return d;
}

std::vector<double> cumulative_integral(const MetricGrid1D& g, const std::vector<double>& v,
                                        double* total) {
  const long m = static_cast<long>(g.size());
  const double h = g.du();
  std::vector<double> w(m);
  for (long i = 0; i < m; ++i) w[i] = v[i] * stretch_map_d1(g.u[i], g.stretch);
  std::vector<double> out(m);
  double acc = 0.0;
  for (long i = 0; i < m; ++i) {
    const double wm = ghost(w, i - 1, 1), wp = ghost(w, i + 1, 1);
    const double d1 = (wp - wm) / (2 * h), d2 = (wp - 2 * w[i] + wm) / (h * h);
    out[i] = acc + 0.5 * h * w[i] - h * h / 8 * d1 + h * h * h / 48 * d2;
    acc += h * (w[i] + (wp - 2 * w[i] + wm) / 24);
  }
  if (total) *total = acc;
  return out;
}

GridCurvature grid_curvature(const MetricGrid1D& g) {
  g.validate();
  const std::size_t m = g.size();
  const double h = g.du();
  const int q = g.fiber_dim();
  const auto phi_u = diff_u(g.phi, h, -1);
  const auto phi_uu = diff_uu(g.phi, h, -1);
  const auto rho_u = diff_u(g.rho, h, +1);
  GridCurvature c;
  c.k_rad.resize(m);
  if (q >= 2) c.k_fib.resize(m);
  c.rm_min.resize(m);
  c.rm_max.resize(m);
  c.rm_abs.resize(m);
  c.scalar.resize(m);
  c.phi_s.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double xp = stretch_map_d1(g.u[i], g.stretch), xpp = stretch_map_d2(g.u[i], g.stretch);
    const double phi_x = phi_u[i] / xp;
    const double phi_xx = (phi_uu[i] - xpp * phi_x) / (xp * xp);
    const double rho_x = rho_u[i] / xp;
    const double r = g.rho[i], p = g.phi[i];
    const double phi_s = phi_x / r;
    const double phi_ss = (phi_xx - rho_x * phi_x / r) / (r * r);
    c.phi_s[i] = phi_s;
    c.k_rad[i] = -phi_ss / p;
    double kmin = c.k_rad[i], kmax = c.k_rad[i];
    double scal = 2.0 * q * c.k_rad[i];
    if (q >= 2) {
      c.k_fib[i] = (1.0 - phi_s * phi_s) / (p * p);
      kmin = std::min(kmin, c.k_fib[i]);
      kmax = std::max(kmax, c.k_fib[i]);
      scal += q * (q - 1.0) * c.k_fib[i];
    }
    c.rm_min[i] = kmin;
    c.rm_max[i] = kmax;
    c.rm_abs[i] = std::max(std::abs(kmin), std::abs(kmax));
    c.scalar[i] = scal;
  }
  return c;
}

double closure_slope(const MetricGrid1D& g, int tip) {
  g.validate();
  const auto phi_x = d_dx(g, g.phi, -1);
  const std::size_t m = g.size();
  const std::size_t i0 = tip == 0 ? 0 : m - 1, i1 = tip == 0 ? 1 : m - 2;
  const double d0 = tip == 0 ? g.x[i0] : pi - g.x[i0];
  const double d1 = tip == 0 ? g.x[i1] : pi - g.x[i1];
  const double sign = tip == 0 ? 1.0 : -1.0;
  const double v0 = sign * phi_x[i0] / g.rho[i0], v1 = sign * phi_x[i1] / g.rho[i1];
  return (d1 * d1 * v0 - d0 * d0 * v1) / (d1 * d1 - d0 * d0);
}

double axis_length(const MetricGrid1D& g) {
  double total = 0.0;
  cumulative_integral(g, g.rho, &total);
  return total;
}

MetricGrid1D suspension_slice(double scale, double slope, int n, int resolution, double stretch) {
  if (!(scale > 0.0)) throw InvalidArgument("scale must be positive");
  if (!(slope > 0.0 && slope <= 1.0)) throw InvalidArgument("cone slope must lie in (0,1]");
  if (resolution < 64) throw InvalidArgument("resolution must be >= 64");
  MetricGrid1D g = make_nodes(n, resolution, stretch);
  g.rho.assign(resolution, scale);
  g.phi.resize(resolution);
  for (int i = 0; i < resolution; ++i) g.phi[i] = scale * slope * std::sin(g.x[i]);
  g.validate();
  return g;
}

MetricGrid1D suspension_to_grid(double beta1, int n, int resolution, double stretch) {
  if (!(beta1 > 0.0 && beta1 <= 1.0)) throw InvalidArgument("beta1 must lie in (0,1]");
  return suspension_slice(beta1, beta1, n, resolution, stretch);
}

MetricGrid1D round_sphere_grid(double radius, int n, int resolution, double stretch) {
  return suspension_slice(radius, 1.0, n, resolution, stretch);
}

MetricGrid1D to_arclength_gauge(const MetricGrid1D& g, int resolution, double stretch) {
  g.validate();
  double L = 0.0;
  const auto S = cumulative_integral(g, g.rho, &L);
  MetricGrid1D out = make_nodes(g.n, resolution, stretch);
  out.rho.assign(resolution, L / pi);
  out.phi.resize(resolution);
  const long m = static_cast<long>(g.size());
  auto sx = [&](long i) { return i < 0 ? -S[-i - 1] : (i >= m ? 2 * L - S[2 * m - 1 - i] : S[i]); };
  auto px = [&](long i) { return ghost(g.phi, i, -1); };
  long k = 0;
  for (int j = 0; j < resolution; ++j) {
    const double target = L * out.x[j] / pi;
    while (k < m - 1 && S[k + 1] <= target) ++k;
    long lo = (S[k] <= target) ? k : k - 1;  // S[lo] <= target < S[lo+1]
    const double xs[4] = {sx(lo - 1), sx(lo), sx(lo + 1), sx(lo + 2)};
    const double ys[4] = {px(lo - 1), px(lo), px(lo + 1), px(lo + 2)};
    out.phi[j] = lagrange4(xs, ys, target);
  }
  out.validate();
  return out;
}

void GlueParams::validate() const {
  if (!(s > 0.0 && s < 1.0)) throw InvalidArgument("gluing scale s must lie in (0,1)");
  if (!(ramp_inner > 0.0 && ramp_outer > ramp_inner)) throw InvalidArgument("bad cutoff ramp");
}

double GlueParams::band_inner() const { return std::pow(s, 0.25); }
double GlueParams::band_outer() const { return 3.0 * std::pow(s, 0.25); }

double cutoff_ramp(double t, double a, double b) {
  if (t <= a) return 1.0;
  if (t >= b) return 0.0;
  auto psi = [](double y) { return y > 0.0 ? std::exp(-1.0 / y) : 0.0; };
  const double y = (t - a) / (b - a);
  return psi(1.0 - y) / (psi(1.0 - y) + psi(y));
}

soliton::SolitonProfile gaussian_expander(int m, double r_max, int samples) {
  soliton::SolitonProfile p;
  p.kind = soliton::Kind::Expanding;
  p.dim = m;
  p.soliton_constant = 1.0;
  p.beta = 1.0;
  p.closed_form = true;
  p.tip_parameter = 1.0;
  p.r.resize(samples);
  for (int i = 0; i < samples; ++i) p.r[i] = r_max * i / (samples - 1);
  p.phi = p.r;
  p.dphi.assign(samples, 1.0);
  p.ddphi.assign(samples, 0.0);
  p.df = p.r;
  p.ddf.assign(samples, 1.0);
  p.f.resize(samples);
  for (int i = 0; i < samples; ++i) p.f[i] = 0.5 * p.r[i] * p.r[i];
  p.R.assign(samples, 0.0);
  p.ric_radial.assign(samples, 0.0);
  p.ric_fiber.assign(samples, 0.0);
  return p;
}

MetricGrid1D glue_expander(const MetricGrid1D& grid, const soliton::SolitonProfile& expander,
                           const GlueParams& params, GlueDiagnostics* diag) {
  grid.validate();
  params.validate();
  if (expander.kind != soliton::Kind::Expanding || !expander.beta) {
    throw InvalidArgument("glue_expander needs an expanding profile with a cone slope");
  }
  if (expander.dim != grid.manifold_dim() || expander.flat_factor_dim != 0) {
    throw InvalidArgument("expander dimension does not match the grid");
  }
  const double beta = *expander.beta;
  for (int tip : {0, 1}) {
    const double sl = closure_slope(grid, tip);
    if (std::abs(sl - beta) > params.slope_tolerance) {
      throw InvalidArgument("cone slope mismatch at tip " + std::to_string(tip) + ": grid " +
                            std::to_string(sl) + ", expander " + std::to_string(beta));
    }
  }
  const double sigma = std::sqrt(params.s);
  const double quarter = std::pow(params.s, 0.25);
  const double r_cut = params.ramp_outer * quarter;  // g_N distance where chi vanishes
  if (sigma * expander.r.back() < 1.05 * r_cut) {
    throw InvalidArgument("expander profile too short for the gluing band");
  }
  const std::size_t np = expander.size();
  std::vector<double> ddf(np);
  for (std::size_t i = 0; i < np; ++i) ddf[i] = expander.soliton_constant + expander.ric_radial[i];
  if (!expander.ddf.empty()) ddf = expander.ddf;
  const Hermite phiN{expander.r, expander.phi, expander.dphi};
  const Hermite fN{expander.r, expander.df, ddf};

  // Expander distance r_N (scaled profile units) with cone radius rho_1.
  auto invert = [&](double rho1) {
    auto it = std::upper_bound(expander.df.begin(), expander.df.end(), rho1);
    std::size_t k = static_cast<std::size_t>(std::max<long>(1, it - expander.df.begin())) - 1;
    k = std::min(k, np - 2);
    double lo = expander.r[k], hi = expander.r[k + 1];
    double y = 0.5 * (lo + hi);
    for (int it2 = 0; it2 < 60; ++it2) {
      const double fv = fN.value(y) - rho1;
      const double fd = fN.deriv(y);
      if (fv > 0) hi = y; else lo = y;
      double next = y - fv / fd;
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - y) < 1e-15 * std::max(1.0, y)) { y = next; break; }
      y = next;
    }
    return y;
  };

  double L = 0.0;
  const auto S = cumulative_integral(grid, grid.rho, &L);
  if (2 * 1.2 * r_cut > L) throw InvalidArgument("gluing bands of the two tips overlap");

  MetricGrid1D out = grid;
  std::vector<double> chi_all(grid.size(), 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (int tip : {0, 1}) {
      const double r0 = tip == 0 ? S[i] : L - S[i];  // g_0 distance = cone radius
      if (r0 > 1.5 * r_cut + 1.0 * quarter) continue;
      const double y = invert(r0 / sigma);  // scaled expander coordinate
      const double rN = sigma * y;
      const double chi = cutoff_ramp(rN / quarter, params.ramp_inner, params.ramp_outer);
      if (chi == 0.0) continue;
      chi_all[i] = std::max(chi_all[i], chi);
      const double phi_n = sigma * phiN.value(y);
      const double drn_drho = 1.0 / fN.deriv(y);
      const double rho2 = grid.rho[i] * grid.rho[i] * (1.0 + chi * (drn_drho * drn_drho - 1.0));
      const double phi2 = grid.phi[i] * grid.phi[i] + chi * (phi_n * phi_n - beta * beta * r0 * r0);
      if (!(rho2 > 0.0) || !(phi2 > 0.0)) throw SolverError("glued metric lost positivity");
      out.rho[i] = std::sqrt(rho2);
      out.phi[i] = std::sqrt(phi2);
    }
  }
  out.validate();
  if (diag) {
    diag->cutoff = chi_all;
    double Lo = 0.0;
    const auto So = cumulative_integral(out, out.rho, &Lo);
    diag->distance.resize(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) diag->distance[i] = std::min(So[i], Lo - So[i]);
  }
  return out;
}

}  // namespace ricci_lab::flow
