#pragma once

// Coordinate finite-difference curvature: Christoffel symbols from centered
// differences of the metric, Riemann tensor from centered differences of the
// Christoffel symbols. Second-order accurate in the stencil spacing; every
// direction uses the 5 points x-2h .. x+2h. Independent of the warped-product
// formulas in warped_geometry.

#include <functional>

#include <Eigen/Dense>

#include "ricci_lab/warped_geometry.hpp"

namespace ricci_lab::geometry {

using MetricFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

struct OracleOptions {
  double spacing = 1e-3;
  // Metric tensors whose symmetric part differs by more than this are rejected.
  double symmetry_tol = 1e-12;
  // Smallest admissible metric eigenvalue on the stencil (singular strata).
  double degeneracy_tol = 1e-10;
};

CurvatureReport curvature_oracle(const MetricFn& metric, const Eigen::VectorXd& point,
                                 const OracleOptions& opts = {});

// Oracle applied at every point of a list.
std::vector<CurvatureReport> curvature_oracle(const MetricFn& metric,
                                              const std::vector<Eigen::VectorXd>& points,
                                              const OracleOptions& opts = {});

// Full curvature operator on 2-forms at a point, in an orthonormal frame,
// pairs ordered (0,1),(0,2),...,(d-2,d-1).
Eigen::MatrixXd curvature_operator_fd(const MetricFn& metric, const Eigen::VectorXd& point,
                                      const OracleOptions& opts = {});

// Coordinate metric of a suspension chain, as a MetricFn.
MetricFn suspension_metric(const SuspensionChain& chain);

// Coordinate metric of a single layer beta^2 (dx^2 + sin^2 x h) whose fiber h
// is the round m-sphere of constant curvature fiber_curvature, written in
// standard polar angles (y_1, ..., y_m).
MetricFn layer_metric(double beta, int fiber_dim, double fiber_curvature);

}  // namespace ricci_lab::geometry
