#pragma once

// Singular multiply-warped metrics on S^{n-1}
//
//   g = b1^2 (dx1^2 + b2^2 sin^2 x1 (dx2^2 + ... + b_{n-1}^2 sin^2 x_{n-2} dx_{n-1}^2))
//
// and their curvature in g-orthonormal coordinate frames. Every metric in the
// family is diagonal in the coordinate frame and so is its curvature operator
// on 2-forms; the eigenvalues are the sectional curvatures of coordinate
// planes.

#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace ricci_lab::geometry {

// Exclusion margin around singular strata: samples need |sin x_i| >= this.
inline constexpr double kStratumMargin = 1e-3;

struct SuspensionSpec {
  int n = 3;                  // manifold is S^{n-1}
  std::vector<double> beta;   // up to n-1 entries in (0,1]; missing entries are 1

  // Throws InvalidArgument on n < 3, too many entries, or entries outside (0,1].
  void validate() const;
  // The full length-(n-1) vector.
  std::vector<double> padded_beta() const;
};

struct WarpLayer {
  double beta = 1.0;
  int fiber_dim = 1;
  double fiber_rm_min = 1.0;  // lower bound of Rm(h) in h-orthonormal frames
  double x = 0.0;             // angle in (0, pi)

  void validate() const;
};

struct CurvatureReport {
  std::vector<double> point;
  double sectional_min = 0.0;
  double sectional_max = 0.0;
  double rm_operator_min_eig = 0.0;
  std::vector<double> ricci_eigs;  // ascending
  double scalar = 0.0;
};

// A stratum {sin x_index = 0} (index is 1-based), singular because the
// entry beta_{cause} < 1 with cause > index.
struct SingularStratum {
  int index = 0;
  int cause = 0;
};

class SuspensionChain {
 public:
  explicit SuspensionChain(SuspensionSpec spec);

  const SuspensionSpec& spec() const { return spec_; }
  int dimension() const { return spec_.n - 1; }
  const std::vector<double>& beta() const { return beta_; }

  // Layer templates, outermost first; layer i has beta_i, fiber dimension
  // n-1-i. The x field is 0 until bound by layer_at().
  const std::vector<WarpLayer>& layers() const { return layers_; }
  // Circumference of the innermost circle, 2*pi*beta_{n-1}.
  double circle_length() const;
  const std::vector<SingularStratum>& singular_strata() const { return strata_; }

  // Diagonal metric components g_kk at coordinates (x_1, ..., x_{n-1}).
  std::vector<double> metric_diagonal(std::span<const double> point) const;
  // Coordinate-plane sectional curvatures K[a][b] (0-based, a != b).
  std::vector<std::vector<double>> frame_sectional(std::span<const double> point) const;

 private:
  SuspensionSpec spec_;
  std::vector<double> beta_;
  std::vector<WarpLayer> layers_;
  std::vector<SingularStratum> strata_;
};

SuspensionChain build_suspension(const SuspensionSpec& spec);

// Curvature of g = beta^2 (dx^2 + sin^2 x h) at the layer's x. The fiber is
// treated as having constant curvature fiber_rm_min when filling Ricci and
// scalar; the operator lower bound is exact for any fiber with that bound.
CurvatureReport layer_curvature(const WarpLayer& layer);

// Exact curvature report of the full suspension at one interior point.
CurvatureReport suspension_curvature(const SuspensionChain& chain, std::span<const double> point);

// Minimum curvature-operator eigenvalue over samples, computed by feeding the
// bound of each inner layer into the next layer's fiber_rm_min.
double min_rm_over_suspension(const SuspensionSpec& spec,
                              const std::vector<std::vector<double>>& samples);

// Tensor-product sample grid with per_axis points per angle, kept at least
// `margin` (in angle) away from 0 and pi; the circle coordinate is sampled
// on [0, 2 pi).
std::vector<std::vector<double>> interior_sample_grid(int n, int per_axis, double margin = 0.05);

void to_json(nlohmann::json& j, const SuspensionSpec& s);
void from_json(const nlohmann::json& j, SuspensionSpec& s);
void to_json(nlohmann::json& j, const CurvatureReport& r);

}  // namespace ricci_lab::geometry
