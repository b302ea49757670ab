#pragma once

// Ricci flow of cohomogeneity-one metrics rho^2 dx^2 + phi^2 g_{S^q} on S^{q+1}.
//
// The solver runs in the gauge rho(x, t) = L(t)/pi (x proportional to
// arclength), maintained by the tangential field xi d/dx with
//   xi(x) = q ( int_0^x K_rad - (x/pi) int_0^pi K_rad ),  L'/L = -(q/pi) int_0^pi K_rad,
// so the evolved quantities are phi at fixed nodes and the length L:
//   phi_t = phi_ss - (q-1)(1 - phi_s^2)/phi + xi phi_x.
// Internally phi = rho sin(x) w with w even and w = 1 at the tips; the
// W-method Jacobian carries the nonlocal gauge terms.

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ricci_lab/metric_grid.hpp"

namespace ricci_lab::flow {

enum class Scheme { Rosenbrock, Explicit };

struct FlowOptions {
  double T = 0.1;
  double t_min = 1e-6;   // first recorded time
  double t_ratio = 1.1;  // recorded times t_min * t_ratio^k
  Scheme scheme = Scheme::Rosenbrock;
  double rtol = 1e-6;
  double atol = 1e-10;
  double dt_init = 1e-9;
  double dt_min = 1e-16;
  // Explicit scheme only: a fixed step (0 = adaptive under the stability bound).
  double dt_fixed = 0.0;
  long max_steps = 5'000'000;
  double neck_ratio = 1e-3;
  double slope_tolerance = 1e-2;  // closure slope must be 1 within this
  // Extra times to record besides the geometric sequence.
  std::vector<double> extra_times;

  void validate() const;
};

struct FlowTrajectory {
  std::vector<double> times;
  std::vector<MetricGrid1D> states;
  MetricGrid1D initial;  // state at t = 0 in the solver gauge
  std::vector<double> rm_min, rm_abs_max, scalar_max;  // per recorded time
  double alpha_estimate = 0.0;  // sup t |Rm|
  double inj_estimate = 0.0;    // inf inj / sqrt(t), inj ~ min(pi/sqrt(K_max), L)
  double S = 0.0;               // last time reached
  bool neck_detected = false;
  bool completed = false;
  std::string stop_reason;
  long steps = 0;
  long rejected = 0;
  Scheme scheme = Scheme::Rosenbrock;

  nlohmann::json metadata() const;
};

// Evolve to opts.T (or until a neck or a resolution failure, recorded in
// stop_reason). Throws InvalidArgument on an unclosed grid and SolverError
// when a fixed explicit step violates the stability bound.
FlowTrajectory evolve_ricci_flow(const MetricGrid1D& grid, const FlowOptions& opts);

// Right-hand side of the gauge-fixed system for one state, exposed for tests.
struct FlowRhs {
  std::vector<double> phi_t;
  double L_t = 0.0;
  std::vector<double> xi;
};
FlowRhs flow_rhs(const MetricGrid1D& nodes, const std::vector<double>& phi, double L);

// Field value at an arbitrary x by Lagrange interpolation in u over `points`
// cells (even), with parity ghosts.
double value_at(const MetricGrid1D& g, const std::vector<double>& field, int parity, double x, int points = 4);

// Explicit stability bound on the time step for the given state.
double explicit_step_bound(const MetricGrid1D& g);

// Long-format CSV: t, x, rho, phi, R, rm_min.
void write_trajectory_csv(const FlowTrajectory& tr, const std::string& path);

const char* to_string(Scheme s);

struct SmoothingSetup {
  double beta1 = 0.8;
  int n = 4;
  double s = 1e-4;
  int resolution = 512;
  double stretch = 0.45;
  int expander_samples_per_unit = 200;
};

struct SmoothingRun {
  MetricGrid1D singular;
  MetricGrid1D glued;
  soliton::SolitonProfile expander;
  FlowTrajectory trajectory;
};

// Suspension slice, expander of the matching cone and glued data; the
// trajectory is left empty.
SmoothingRun glued_initial_data(const SmoothingSetup& setup, GlueDiagnostics* diag = nullptr);
// The same followed by the flow.
SmoothingRun smoothing_run(const SmoothingSetup& setup, const FlowOptions& opts);

}  // namespace ricci_lab::flow
