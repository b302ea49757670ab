#include "ricci_lab/soliton_ode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ricci_lab/errors.hpp"
#include "ricci_lab/io.hpp"
#include "ricci_lab/ode.hpp"

namespace ricci_lab::soliton {

namespace {

double lambda_of(Kind k) { return k == Kind::Steady ? 0.0 : 1.0; }

// State (phi, w = phi' - 1, f', f); w is carried separately so 1 - phi'^2
// keeps full relative precision near the tip.
struct TipSystem {
  int m;
  double lambda;

  double ddphi(double phi, double w, double df) const {
    const double one_minus_dphi2 = -w * (2.0 + w);
    return (m - 2) * one_minus_dphi2 / phi - df * (1.0 + w) + lambda * phi;
  }
  void operator()(double, std::span<const double> y, std::span<double> dy) const {
    const double p = y[0] > 0.0 ? y[0] : std::numeric_limits<double>::quiet_NaN();
    const double pp = ddphi(p, y[1], y[2]);
    dy[0] = 1.0 + y[1];
    dy[1] = pp;
    dy[2] = lambda - (m - 1) * pp / p;
    dy[3] = y[2];
  }
  std::vector<double> series(double a, double r) const {
    const double c3 = -(a - lambda) / (6.0 * (m - 1));
    return {r + c3 * r * r * r, 3.0 * c3 * r * r, a * r, 0.5 * a * r * r};
  }
};

ode::Tolerances tolerances_for(double tol) {
  ode::Tolerances t;
  t.rtol = std::clamp(tol, 1e-13, 1e-6);
  t.atol = t.rtol * 1e-4;
  t.h_init = 1e-5;
  return t;
}

std::vector<double> uniform_grid(double r_max, int samples) {
  if (!(r_max > 0.0) || !std::isfinite(r_max)) throw InvalidArgument("r_max must be positive");
  if (samples < 5) throw InvalidArgument("profiles need at least 5 samples");
  std::vector<double> r(samples);
  for (int i = 0; i < samples; ++i) r[i] = r_max * i / (samples - 1);
  r.back() = r_max;
  return r;
}

void fill_curvature(SolitonProfile& p, std::size_t i, double ddphi) {
  const int m = p.dim;
  const double phi = p.phi[i], dphi = p.dphi[i];
  const double krad = -ddphi / phi;
  const double kfib = (1.0 - dphi * dphi) / (phi * phi);
  p.ric_radial[i] = (m - 1) * krad;
  p.ric_fiber[i] = krad + (m - 2) * kfib;
  p.R[i] = p.ric_radial[i] + (m - 1) * p.ric_fiber[i];
}

void resize_columns(SolitonProfile& p, std::size_t n) {
  for (auto* c : {&p.phi, &p.dphi, &p.f, &p.df, &p.R, &p.ric_radial, &p.ric_fiber}) c->assign(n, 0.0);
}

// 4th-order first derivative of a uniformly sampled column, with reflection
// through r = 0 (parity +1 even, -1 odd) and one-sided stencils at the end.
std::vector<double> derivative(const std::vector<double>& v, double h, int parity) {
  const std::size_t n = v.size();
  std::vector<double> d(n, 0.0);
  auto at = [&](long i) { return i >= 0 ? v[i] : parity * v[-i]; };
  for (std::size_t i = 0; i < n; ++i) {
    const long k = static_cast<long>(i);
    if (i + 2 < n) {
      d[i] = (at(k - 2) - 8 * at(k - 1) + 8 * at(k + 1) - at(k + 2)) / (12 * h);
    } else if (i + 1 < n) {
      d[i] = (-v[i - 3] + 6 * v[i - 2] - 18 * v[i - 1] + 10 * v[i] + 3 * v[i + 1]) / (12 * h);
    } else {
      d[i] = (3 * v[i - 4] - 16 * v[i - 3] + 36 * v[i - 2] - 48 * v[i - 1] + 25 * v[i]) / (12 * h);
    }
  }
  return d;
}

double pointwise_residual(int m, double lambda, double phi, double dphi, double ddphi, double df,
                          double ddf) {
  const double krad = -ddphi / phi;
  const double kfib = (1.0 - dphi * dphi) / (phi * phi);
  const double err_rr = (m - 1) * krad + lambda - ddf;
  const double err_ff = krad + (m - 2) * kfib + lambda - df * dphi / phi;
  return std::sqrt(err_rr * err_rr + (m - 1) * err_ff * err_ff);
}

// Final state at r_max of the tip problem, or nullopt when phi collapses.
struct EndState {
  double phi, dphi, df;
};

std::optional<EndState> shoot_end(int m, double lambda, double a, double r_max,
                                  const ShootOptions& opts) {
  TipSystem sys{m, lambda};
  ode::DormandPrince dp(sys, 4, tolerances_for(opts.tolerance));
  double r = opts.r0;
  std::vector<double> y = sys.series(a, r);
  const bool ok = dp.advance(r, y, r_max, [](double, std::span<const double> s) {
    return s[0] > 0.0 && std::isfinite(s[0]) && std::isfinite(s[1]) && std::isfinite(s[2]);
  });
  if (!ok) return std::nullopt;
  return EndState{y[0], 1.0 + y[1], y[2]};
}

}  // namespace

double EigenvalueVector::trace() const {
  if (lambdas.empty()) return 0.0;
  double s = 0.0;
  for (double v : lambdas) s += v;
  return s + lambdas.back();
}

const char* to_string(Kind k) { return k == Kind::Steady ? "steady" : "expanding"; }

SolitonProfile cigar_profile(double r_max, int samples, bool normalized) {
  SolitonProfile p;
  p.kind = Kind::Steady;
  p.dim = 2;
  p.closed_form = true;
  p.tip_parameter = normalized ? 0.5 : 2.0;
  p.r = uniform_grid(r_max, samples);
  const std::size_t n = p.r.size();
  resize_columns(p, n);
  p.ddphi.assign(n, 0.0);
  p.ddf.assign(n, 0.0);
  // normalized: the unscaled cigar blown up by 2 (r = 2s).
  const double c = normalized ? 2.0 : 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = p.r[i] / c;
    const double th = std::tanh(s);
    const double sech2 = 1.0 / (std::cosh(s) * std::cosh(s));
    p.phi[i] = c * th;
    p.dphi[i] = sech2;
    p.ddphi[i] = -2.0 * sech2 * th / c;
    // log cosh s = s + log1p(e^{-2s}) - log 2 avoids overflow.
    p.f[i] = 2.0 * (s + std::log1p(std::exp(-2.0 * s)) - std::log(2.0));
    p.df[i] = 2.0 * th / c;
    p.ddf[i] = 2.0 * sech2 / (c * c);
    const double K = 2.0 * sech2 / (c * c);
    p.ric_radial[i] = K;
    p.ric_fiber[i] = K;
    p.R[i] = 2.0 * K;
  }
  return p;
}

SolitonProfile integrate_profile(Kind kind, int m, double a, double r_max, const ShootOptions& opts) {
  if (m < 2) throw InvalidArgument("profile dimension must be >= 2");
  if (!(opts.tolerance > 0.0)) throw InvalidArgument("tolerance must be positive");
  SolitonProfile p;
  p.kind = kind;
  p.dim = m;
  p.soliton_constant = lambda_of(kind);
  p.tolerance = opts.tolerance;
  p.tip_parameter = a;
  p.r = uniform_grid(r_max, opts.samples);
  const std::size_t n = p.r.size();
  resize_columns(p, n);
  if (!(opts.r0 > 0.0 && opts.r0 < p.r[1])) {
    throw InvalidArgument("series start r0 must lie inside the first grid cell");
  }

  TipSystem sys{m, p.soliton_constant};
  p.phi[0] = 0.0;
  p.dphi[0] = 1.0;
  p.f[0] = 0.0;
  p.df[0] = 0.0;
  p.ric_radial[0] = p.ric_fiber[0] = a - p.soliton_constant;
  p.R[0] = m * (a - p.soliton_constant);

  ode::DormandPrince dp(sys, 4, tolerances_for(opts.tolerance));
  double r = opts.r0;
  std::vector<double> y = sys.series(a, r);
  auto guard = [](double, std::span<const double> s) {
    return s[0] > 0.0 && std::isfinite(s[0]) && std::isfinite(s[1]) && std::isfinite(s[2]);
  };
  for (std::size_t i = 1; i < n; ++i) {
    if (!dp.advance(r, y, p.r[i], guard)) {
      throw SolverError("soliton ODE failed near r = " + std::to_string(r) +
                        " (warping function collapsed or step size underflow)");
    }
    p.phi[i] = y[0];
    p.dphi[i] = 1.0 + y[1];
    p.df[i] = y[2];
    p.f[i] = y[3];
    fill_curvature(p, i, sys.ddphi(y[0], y[1], y[2]));
  }
  return p;
}

SolitonProfile bryant_shoot(int m, double r_max, const ShootOptions& opts) {
  if (m < 3) throw InvalidArgument("the Bryant soliton needs dimension >= 3");
  // Hess f(0) = Ric(0) = (R(0)/m) g; the normalization R(0) = 1 fixes f''(0).
  return integrate_profile(Kind::Steady, m, 1.0 / m, r_max, opts);
}

SolitonProfile product_steady(int k, int m, double r_max, const ShootOptions& opts) {
  if (k < 0) throw InvalidArgument("flat factor dimension must be >= 0");
  if (m < 2) throw InvalidArgument("soliton factor dimension must be >= 2");
  SolitonProfile p = (m == 2) ? cigar_profile(r_max, opts.samples, true) : bryant_shoot(m, r_max, opts);
  p.flat_factor_dim = k;
  if (m == 2) p.tolerance = opts.tolerance;
  return p;
}

SolitonProfile expander_shoot(int m, double beta, double r_max, const ShootOptions& opts,
                              ExpanderReport* report) {
  if (m < 3) throw InvalidArgument("expander dimension must be >= 3");
  if (!(beta > 0.0 && beta < 1.0)) {
    throw InvalidArgument("expander cone slope must lie in (0,1); beta >= 1 is the flat cone");
  }
  const double lambda = 1.0;
  // In the cone coordinate rho = |grad f|, phi = beta rho + A/rho + O(rho^-3),
  // so the average of phi/rho and phi' cancels the leading correction.
  auto slope = [&](double a) {
    const auto e = shoot_end(m, lambda, a, r_max, opts);
    if (!e || !(e->df > 0.0)) return -std::numeric_limits<double>::infinity();
    return 0.5 * (e->phi / e->df + e->dphi);
  };
  double lo = lambda;
  double hi = lambda + 0.5;
  int iterations = 0;
  while (slope(hi) > beta) {
    lo = hi;
    hi = lambda + 2.0 * (hi - lambda);
    if (++iterations > 60) throw SolverError("expander shooting: no bracket for beta");
  }
  double a = 0.5 * (lo + hi);
  for (;; ++iterations) {
    if (iterations > opts.max_iterations) {
      throw SolverError("expander shooting did not converge within the iteration cap");
    }
    a = 0.5 * (lo + hi);
    const double s = slope(a);
    if (std::abs(s - beta) < opts.tolerance || hi - lo < 4e-16 * hi) break;
    (s > beta ? lo : hi) = a;
  }

  SolitonProfile p = integrate_profile(Kind::Expanding, m, a, r_max, opts);
  p.beta = beta;
  if (report) {
    ExpanderReport rep;
    const std::size_t last = p.size() - 1;
    rep.slope_at_rmax = p.phi[last] / cone_radius(p, last);
    rep.asymptotic_slope = 0.5 * (rep.slope_at_rmax + p.dphi[last]);
    rep.avr_estimate = std::pow(rep.asymptotic_slope, m - 1);
    rep.min_sectional = std::numeric_limits<double>::infinity();
    rep.max_sectional = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < p.size(); ++i) {
      for (double k : {radial_sectional(p, i), fiber_sectional(p, i)}) {
        rep.min_sectional = std::min(rep.min_sectional, k);
        rep.max_sectional = std::max(rep.max_sectional, k);
      }
    }
    rep.positive_curvature = rep.min_sectional > 0.0;
    rep.iterations = iterations;
    *report = rep;
  }
  return p;
}

double cone_radius(const SolitonProfile& p, std::size_t i) {
  if (p.kind != Kind::Expanding) throw InvalidArgument("cone radius is defined for expanders");
  return p.df.at(i);
}

double cone_slope_at(const SolitonProfile& p, double rho) {
  for (std::size_t i = 1; i < p.size(); ++i) {
    const double r0 = cone_radius(p, i - 1), r1 = cone_radius(p, i);
    if (r0 <= rho && rho <= r1 && r1 > r0) {
      const double w = (rho - r0) / (r1 - r0);
      return (1.0 - w) * p.phi[i - 1] / std::max(r0, 1e-300) + w * p.phi[i] / r1;
    }
  }
  throw InvalidArgument("cone radius " + std::to_string(rho) + " is outside the profile");
}

double radial_sectional(const SolitonProfile& p, std::size_t i) {
  return p.ric_radial.at(i) / (p.dim - 1);
}

double fiber_sectional(const SolitonProfile& p, std::size_t i) {
  if (p.dim == 2) return radial_sectional(p, i);
  return (1.0 - p.dphi.at(i) * p.dphi.at(i)) / (p.phi.at(i) * p.phi.at(i));
}

EigenvalueVector tip_ricci_eigenvalues(const SolitonProfile& p) {
  if (p.size() < 3 || p.r[0] != 0.0 || p.phi[0] != 0.0 || std::abs(p.df[0]) > 1e-12) {
    throw InvalidArgument("profile has no closed tip with a critical point at r = 0");
  }
  // Ric components are even in r: Richardson-extrapolate from r_1 and r_2.
  const double h1 = p.r[1], h2 = p.r[2];
  auto extrap = [&](const std::vector<double>& v) {
    return (h2 * h2 * v[1] - h1 * h1 * v[2]) / (h2 * h2 - h1 * h1);
  };
  const double rad = extrap(p.ric_radial);
  const double fib = extrap(p.ric_fiber);
  const double R0 = rad + (p.dim - 1) * fib;
  if (!(R0 > 0.0)) throw InvalidArgument("tip scalar curvature is not positive");
  std::vector<double> all(p.flat_factor_dim, 0.0);
  all.push_back(rad / R0);
  for (int i = 1; i < p.dim; ++i) all.push_back(fib / R0);
  std::sort(all.begin(), all.end());
  all.pop_back();
  return {all};
}

double soliton_residual(const SolitonProfile& p) {
  const std::size_t n = p.size();
  if (n < 5) throw InvalidArgument("profile too short for a residual");
  const double lambda = p.soliton_constant;
  std::vector<double> ddphi = p.ddphi, ddf = p.ddf;
  if (ddphi.size() != n || ddf.size() != n) {
    const double h = p.r[1] - p.r[0];
    for (std::size_t i = 1; i < n; ++i) {
      if (std::abs(p.r[i] - p.r[i - 1] - h) > 1e-9 * h) {
        throw InvalidArgument("soliton_residual needs a uniform grid");
      }
    }
    ddphi = derivative(p.dphi, h, +1);
    ddf = derivative(p.df, h, -1);
  }
  double worst = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    worst = std::max(worst, pointwise_residual(p.dim, lambda, p.phi[i], p.dphi[i], ddphi[i], p.df[i],
                                               ddf[i]));
  }
  return worst;
}

double hamilton_identity_deviation(const SolitonProfile& p) {
  if (p.kind != Kind::Steady) throw InvalidArgument("Hamilton identity applies to steady profiles");
  if (p.size() == 0) throw InvalidArgument("empty profile");
  const double h0 = p.R[0] + p.df[0] * p.df[0];
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    worst = std::max(worst, std::abs(p.R[i] + p.df[i] * p.df[i] - h0));
  }
  return worst;
}

nlohmann::json profile_metadata(const SolitonProfile& p) {
  nlohmann::json j = {{"kind", to_string(p.kind)},
                      {"n", p.total_dim()},
                      {"profile_dim", p.dim},
                      {"flat_factor_dim", p.flat_factor_dim},
                      {"soliton_constant", p.soliton_constant},
                      {"tolerance", p.tolerance},
                      {"tip_parameter", p.tip_parameter},
                      {"closed_form", p.closed_form}};
  j["beta"] = p.beta ? nlohmann::json(*p.beta) : nlohmann::json(nullptr);
  return j;
}

void write_profile_csv(const SolitonProfile& p, const std::string& path) {
  io::Table t;
  t.add("r", p.r);
  t.add("phi_1", p.phi);
  t.add("dphi_1", p.dphi);
  t.add("f", p.f);
  t.add("df", p.df);
  t.add("R", p.R);
  t.add("ric_eig_1", p.ric_radial);
  t.add("ric_eig_2", p.ric_fiber);
  io::write_csv(t, path);
}

SolitonProfile read_profile_csv(const std::string& path, const nlohmann::json& meta) {
  const io::Table t = io::read_csv(path);
  SolitonProfile p;
  const std::string kind = meta.at("kind").get<std::string>();
  if (kind != "steady" && kind != "expanding") throw InvalidArgument("unknown profile kind " + kind);
  p.kind = kind == "steady" ? Kind::Steady : Kind::Expanding;
  p.dim = meta.at("profile_dim").get<int>();
  p.flat_factor_dim = meta.at("flat_factor_dim").get<int>();
  p.soliton_constant = meta.at("soliton_constant").get<double>();
  p.tolerance = meta.at("tolerance").get<double>();
  p.tip_parameter = meta.value("tip_parameter", 0.0);
  if (meta.contains("beta") && !meta["beta"].is_null()) p.beta = meta["beta"].get<double>();
  p.r = t.column("r");
  p.phi = t.column("phi_1");
  p.dphi = t.column("dphi_1");
  p.f = t.column("f");
  p.df = t.column("df");
  p.R = t.column("R");
  p.ric_radial = t.column("ric_eig_1");
  p.ric_fiber = t.column("ric_eig_2");
  return p;
}

}  // namespace ricci_lab::soliton
