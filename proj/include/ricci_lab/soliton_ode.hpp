#pragma once

// Rotationally symmetric gradient Ricci solitons
//
//   g = dr^2 + phi(r)^2 g_{S^{m-1}},   Ric + lambda g = Hess f,
//
// with lambda = 0 for steady solitons and lambda = 1 for the time-1 slice of
// an expander (t Ric + g = Hess f at t = 1). Profiles close smoothly at r = 0.

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ricci_lab::soliton {

enum class Kind { Steady, Expanding };

struct SolitonProfile {
  Kind kind = Kind::Steady;
  int dim = 0;              // profile dimension m
  int flat_factor_dim = 0;  // k; the soliton lives on R^k x (profile)
  double soliton_constant = 0.0;
  double tolerance = 0.0;
  std::optional<double> beta;  // cone slope for expanders
  double tip_parameter = 0.0;  // f''(0)
  bool closed_form = false;

  std::vector<double> r, phi, dphi, f, df;
  std::vector<double> R, ric_radial, ric_fiber;
  // Exact second derivatives, present for closed-form profiles only.
  std::vector<double> ddphi, ddf;

  int total_dim() const { return dim + flat_factor_dim; }
  std::size_t size() const { return r.size(); }
};

struct ExpanderReport {
  double asymptotic_slope = 0.0;  // estimate of lim phi/rho
  double slope_at_rmax = 0.0;     // phi/rho at r_max
  double avr_estimate = 0.0;
  bool positive_curvature = false;
  double min_sectional = 0.0;
  double max_sectional = 0.0;
  int iterations = 0;
};

// Lambda_1 .. lambda_{n-1}, non-decreasing; lambda_n = lambda_{n-1}.
struct EigenvalueVector {
  std::vector<double> lambdas;
  double trace() const;  // lambda_1 + ... + lambda_{n-2} + 2 lambda_{n-1}
};

struct ShootOptions {
  double tolerance = 1e-10;
  int samples = 5001;  // grid points on [0, r_max]
  int max_iterations = 200;
  double r0 = 1e-4;  // series start
};

// Hamilton's cigar. normalized: phi = 2 tanh(r/2), R(0) = 1; otherwise
// phi = tanh r, f = 2 log cosh r, R(0) = 4.
SolitonProfile cigar_profile(double r_max, int samples, bool normalized = true);

// The Bryant soliton on R^m, R(tip) = 1.
SolitonProfile bryant_shoot(int m, double r_max, const ShootOptions& opts = {});

// R^k x Bry^m (cigar for m = 2), R(tip) = 1.
SolitonProfile product_steady(int k, int m, double r_max, const ShootOptions& opts = {});

// Expanding soliton on R^m coming out of the cone over S^{m-1}(beta).
SolitonProfile expander_shoot(int m, double beta, double r_max, const ShootOptions& opts = {},
                              ExpanderReport* report = nullptr);

// Integrate the tip problem with f''(0) = a on the profile grid. Throws
// SolverError if phi stops being positive or the integrator fails.
SolitonProfile integrate_profile(Kind kind, int m, double a, double r_max, const ShootOptions& opts);

EigenvalueVector tip_ricci_eigenvalues(const SolitonProfile& p);

// max over grid of |Ric + lambda g - Hess f|_g, derivatives of the stored
// dphi and df columns taken by 5-point differences (exact for closed forms).
double soliton_residual(const SolitonProfile& p);

// max over grid of |R + |grad f|^2 - (R + |grad f|^2)(0)|; steady only.
double hamilton_identity_deviation(const SolitonProfile& p);

// Cone radial coordinate rho = |grad f| of an expander at grid index i; the
// soliton field grad f = rho d/drho is the cone's scaling field at infinity.
double cone_radius(const SolitonProfile& p, std::size_t i);
// phi/rho at cone radius rho, linearly interpolated on the grid.
double cone_slope_at(const SolitonProfile& p, double rho);

// Sectional curvatures (radial, fiber) at grid index i (i > 0).
double radial_sectional(const SolitonProfile& p, std::size_t i);
double fiber_sectional(const SolitonProfile& p, std::size_t i);

nlohmann::json profile_metadata(const SolitonProfile& p);
// Columns r,phi_1,dphi_1,f,df,R,ric_eig_1,ric_eig_2.
void write_profile_csv(const SolitonProfile& p, const std::string& path);
SolitonProfile read_profile_csv(const std::string& path, const nlohmann::json& metadata);

const char* to_string(Kind k);

}  // namespace ricci_lab::soliton
