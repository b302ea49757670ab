#pragma once

// Cohomogeneity-one metrics g = rho(x)^2 dx^2 + phi(x)^2 g_{S^{n-2}} on S^{n-1},
// x in [0, pi], sampled at cell centres of a uniform computational coordinate
// u with x = u - a sin 2u (a in [0, 1/2) clusters nodes at the tips).
// phi is odd and rho even about each tip; derivatives use 4th-order
// differences in u with mirrored ghost cells.

#include <optional>
#include <vector>

#include "ricci_lab/soliton_ode.hpp"

namespace ricci_lab::flow {

struct MetricGrid1D {
  int n = 3;             // manifold S^{n-1}, fiber S^{n-2}
  double stretch = 0.0;  // a
  std::vector<double> u, x, rho, phi;

  std::size_t size() const { return x.size(); }
  int fiber_dim() const { return n - 2; }
  int manifold_dim() const { return n - 1; }
  double du() const;
  // Throws InvalidArgument when the invariants fail.
  void validate() const;
};

// Node layout only (rho, phi empty).
MetricGrid1D make_nodes(int n, int resolution, double stretch = 0.0);
double stretch_map(double u, double a);
double stretch_map_d1(double u, double a);
double stretch_map_d2(double u, double a);

// Parity-aware 4th-order derivatives in u (parity +1 even, -1 odd).
std::vector<double> diff_u(const std::vector<double>& v, double h, int parity);
std::vector<double> diff_uu(const std::vector<double>& v, double h, int parity);
// Cumulative integral of an even function from x = 0 to each node, and the
// total over [0, pi], for values v(x) given at the nodes (dx measure).
std::vector<double> cumulative_integral(const MetricGrid1D& g, const std::vector<double>& v,
                                        double* total = nullptr);

struct GridCurvature {
  std::vector<double> k_rad, k_fib;  // k_fib empty when the fiber is a circle
  std::vector<double> rm_min, rm_max, rm_abs, scalar;
  std::vector<double> phi_s;         // d phi / ds
};

GridCurvature grid_curvature(const MetricGrid1D& g);

// phi_s at a tip (0 for x = 0, 1 for x = pi), extrapolated from nodes.
double closure_slope(const MetricGrid1D& g, int tip);
// Total length of the x-interval, int rho dx.
double axis_length(const MetricGrid1D& g);

// The cohomogeneity-one slice beta = (b, b, 1, ..., 1) of the suspension
// family: rho = b, phi = b^2 sin x; conical with slope b at both tips.
MetricGrid1D suspension_to_grid(double beta1, int n, int resolution, double stretch = 0.0);
// Cone slope `slope` at both tips, scale rho = scale, phi = scale*slope sin x.
MetricGrid1D suspension_slice(double scale, double slope, int n, int resolution, double stretch = 0.0);
MetricGrid1D round_sphere_grid(double radius, int n, int resolution, double stretch = 0.0);

// Resample onto `resolution` nodes with the given stretch such that rho is
// constant (x proportional to arclength). Interpolation is 4-point Lagrange
// in arclength with odd extension of phi through the tips.
MetricGrid1D to_arclength_gauge(const MetricGrid1D& g, int resolution, double stretch);

struct GlueParams {
  double s = 1e-4;
  // Cutoff argument is the g_N(s)-distance from the tip over s^{1/4}; the
  // ramp is 1 on [0, 3/2] and 0 on [2, inf).
  double ramp_inner = 1.5;
  double ramp_outer = 2.0;
  double slope_tolerance = 1e-6;

  void validate() const;
  double band_inner() const;  // s^{1/4}
  double band_outer() const;  // 3 s^{1/4}
};

// Smooth non-increasing ramp: 1 for t <= a, 0 for t >= b.
double cutoff_ramp(double t, double a, double b);

struct GlueDiagnostics {
  std::vector<double> cutoff;    // chi at each node (max over the two tips)
  std::vector<double> distance;  // distance to the nearer tip in the output metric
};

// g_{s,0} = g_0 + chi (g_N(s) - g_C) near each tip, where g_N(s) is the
// expander slice at time s (rescaled profile), g_C its asymptotic cone and
// both are identified with g_0 through the cone radius. The output is
// sampled on the input nodes and carries rho(x) from the glued radial part.
MetricGrid1D glue_expander(const MetricGrid1D& grid, const soliton::SolitonProfile& expander,
                           const GlueParams& params, GlueDiagnostics* diag = nullptr);

// The flat cone-free expander (phi = r, f = r^2/2) used when the tips are
// already smooth.
soliton::SolitonProfile gaussian_expander(int m, double r_max, int samples);

}  // namespace ricci_lab::flow
