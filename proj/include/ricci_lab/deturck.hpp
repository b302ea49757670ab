#pragma once

// Ricci-DeTurck flow of perturbations g = g~ + h of a cohomogeneity-one
// background Ricci flow g~(t) = A(t)^2 (dx^2 + sin^2 x w~(x,t)^2 g_{S^q}),
//
//   d/dt g = -2 Ric(g) + L_W g,   W^k = g^{ij} (Gamma^k_ij - Gamma~^k_ij),
//
// on the cohomo_flow grid. The perturbed metric is a^2 dx^2 + b^2 g_{S^q} with
// a = A u, b = A sin(x) V; u and z = V - u are even and z vanishes at the
// tips. The right-hand side is taken as F(g~ + h) - F(g~).

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ricci_lab/cohomo_flow.hpp"

namespace ricci_lab::deturck {

// Frame components of h in g~: h_rr = h(e_r, e_r), h_ff = h(e_f, e_f).
struct PerturbationField {
  std::vector<double> h_rr, h_ff;
  double time = 0.0;
};

// Radial component of W (odd about each tip).
struct DeTurckField {
  std::vector<double> W;
  double time = 0.0;
};

struct BackgroundSlice {
  double A = 1.0;       // length scale, A'/A = lambda
  double lambda = 0.0;
  std::vector<double> w;   // even about the tips, w = 1 there
  std::vector<double> xi;  // gauge field of the background (0 for pure Ricci flow)
};

class Background {
 public:
  virtual ~Background() = default;
  const flow::MetricGrid1D& nodes() const { return nodes_; }
  virtual BackgroundSlice at(double t) const = 0;
  virtual double t_end() const = 0;
  virtual std::string id() const = 0;
  // min curvature-operator eigenvalue over [t0, t1]
  virtual double rm_lower_bound(double t0, double t1) const = 0;

 protected:
  flow::MetricGrid1D nodes_;
};

// Shrinking round S^{n-1}: A(t)^2 = radius^2 - 2(n-2) t.
std::unique_ptr<Background> round_background(double radius, int n, int resolution, double stretch = 0.0);
// Cubic-in-time interpolation of a cohomo_flow trajectory (times from 0).
std::unique_ptr<Background> trajectory_background(const flow::FlowTrajectory& tr);

enum class ErrorControl {
  PerStep,      // local error estimate <= tol
  PerUnitStep,  // local error estimate <= tol * dt, so tol bounds the defect rate
};

struct DeTurckOptions {
  double t0 = 0.0;
  double T = 0.1;
  double rtol = 1e-6;
  double atol = 1e-10;
  double dt_init = 1e-6;
  double dt_min = 1e-14;
  double dt_max = 0.0;  // 0 = unlimited
  long max_steps = 1'000'000;
  double eps_cap = 0.1;
  double tip_tolerance = 1e-6;  // |h_rr - h_ff| at the tips
  int records = 50;             // uniform output times the stepper lands on
  ErrorControl control = ErrorControl::PerUnitStep;

  void validate() const;
};

struct PerturbedTrajectory {
  std::string background_id;
  std::vector<double> times;  // t0 and every accepted step (records included)
  std::vector<flow::MetricGrid1D> states;  // rho = a, phi = b
  std::vector<PerturbationField> perturbations;
  std::vector<DeTurckField> fields;
  std::vector<double> h_sup;  // sup_x |h|_{g~(t)}
  long steps = 0;
  long rejected = 0;
  double rtol = 0.0;
  // Lie-derivative field of the evolution: W plus the background's own gauge field.
  std::vector<std::vector<double>> transport;

  double h0_sup() const { return h_sup.front(); }
};

PerturbedTrajectory deturck_evolve(const Background& bg, const PerturbationField& h0,
                                   const DeTurckOptions& opts);

// sup_t |g(t) - g^(t)|_inf / |g(0) - g^(0)|_inf over the times both runs
// recorded, norms in the background.
double stability_ratio(const PerturbedTrajectory& a, const PerturbedTrajectory& b);
// sup_t |h(t)|_inf / |h(0)|_inf, i.e. the ratio against the background itself.
double amplification(const PerturbedTrajectory& p);
// The perturbation at the last time, for restarts.
PerturbationField final_perturbation(const PerturbedTrajectory& p);

struct PullbackResult {
  std::vector<double> times;
  std::vector<flow::MetricGrid1D> metrics;  // Psi_t^* g(t)
  std::vector<std::vector<double>> psi;     // Psi_t at the nodes
  double ricci_residual = 0.0;    // max |d/dt g^ + 2 Ric(g^)| in g^ frames
  double deturck_residual = 0.0;  // same for the DeTurck system itself
};

// Psi_T = id, d/dt Psi = -W(Psi); throws SolverError if Psi reaches a tip.
PullbackResult deturck_ode_pullback(const PerturbedTrajectory& p);

// max over interior times of the frame norm of d/dt g + 2 Ric(g) - L_Y g,
// with Y = fields (empty for plain Ricci flow), by 5-point time differences.
// `profile`, if given, receives the per-node maximum over time.
double flow_residual(const std::vector<double>& times, const std::vector<flow::MetricGrid1D>& metrics,
                     const std::vector<std::vector<double>>* fields = nullptr,
                     std::vector<double>* profile = nullptr);

// h = eps g~ (conformal) and h from frame-component samples.
PerturbationField conformal_perturbation(const flow::MetricGrid1D& nodes, double eps);
PerturbationField perturbation_from(const flow::MetricGrid1D& nodes, const std::function<double(double)>& h_rr,
                                    const std::function<double(double)>& h_ff);
double sup_norm(const PerturbationField& h, int q);

void write_history_csv(const PerturbedTrajectory& p, const std::string& path);
nlohmann::json stability_summary(double lambda_meas, double eps, const std::string& background_id);

}  // namespace ricci_lab::deturck
