#pragma once

// Parameter-space simplices for eigenvalue vectors (lambda_1, ..., lambda_{n-1}):
//
//   Omega   = {beta in [0,1]^{n-1} : some beta_i = 0}
//   Delta*  = {lambda in [0,1]^{n-1} : lambda_1 + ... + lambda_{n-2} + 2 lambda_{n-1} = 1}
//   Delta   = sorted (non-decreasing) points of Delta*
//
// A face (i_1 < ... < i_{k+1}) of Delta* forces lambda to be constant on the
// blocks [i_j, i_{j+1}) (with i_{k+2} = n) and, when i_1 > 1, zero before i_1.
// Indices are 1-based as in the face notation; coordinates are 0-based vectors.

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ricci_lab::simplex {

enum class Space { Omega, DeltaStar, Delta };

std::string to_string(Space s);
Space space_from_string(const std::string& s);

struct SimplexPoint {
  std::vector<double> coords;  // n-1 entries
  Space space = Space::DeltaStar;

  int n() const { return static_cast<int>(coords.size()) + 1; }
  // Throws InvalidArgument unless the point satisfies its space's invariants.
  void validate(double tol = 1e-12) const;
};

struct FaceDescriptor {
  std::vector<int> indices;  // 1 <= i_1 < ... < i_{k+1} <= n-1
  Space space = Space::DeltaStar;

  int k() const { return static_cast<int>(indices.size()) - 1; }
  void validate(int n) const;
};

constexpr double kFaceTolerance = 1e-12;

// lambda_1 + ... + lambda_{n-2} + 2 lambda_{n-1}
double weighted_sum(const std::vector<double>& lambda);
bool in_space(const std::vector<double>& coords, Space s, double tol = kFaceTolerance);

// Throws InvalidArgument when p and F live in different spaces.
bool face_membership(const SimplexPoint& p, const FaceDescriptor& F, double tol = kFaceTolerance);

// Vertex Delta_0(k) = (0, ..., 0, 1/(n+1-k), ..., 1/(n+1-k)) with k-1 zeros.
SimplexPoint delta_vertex(int n, int k);
// Vertex Omega_0(k) = (1, ..., 1, 0, 1, ..., 1), zero in slot k.
SimplexPoint omega_vertex(int n, int k);

// Uniform sample of Delta* (or of one of its faces).
std::vector<double> sample_delta_star(int n, std::mt19937_64& rng);
std::vector<double> sample_face(int n, const FaceDescriptor& F, std::mt19937_64& rng);

// Euclidean nearest point of Sigma = Delta*_{n-3}(2, ..., n-1) = {lambda_1 = 0}.
std::vector<double> project_to_sigma(const std::vector<double>& lambda);
double distance_to_sigma(const std::vector<double>& lambda);

// Contraction Delta* -> Delta: left-to-right scan; at a descent mu_l > mu_{l+1}
// the sorted prefix is divided by nu and the next entry set to mu_l / nu, with
// nu fixed by the weighted sum. Identity on Delta.
SimplexPoint contraction_r(const SimplexPoint& p);

struct PhiOptions {
  double epsilon = 0.1;
  double C = 4.0;
  int resolution = 256;  // lattice step 1/resolution
  void validate() const;
};

// Piecewise-linear self-map of Delta*: identity outside U(Sigma, eps), onto
// Sigma inside U(Sigma, eps/C), face-preserving, |Phi - id| <= C eps.
// It interpolates a face-preserving retraction at the vertices of the Kuhn
// triangulation of R^{n-1} with step 1/resolution, extended homogeneously
// so that linear interpolation stays on the affine hull of Delta*.
class PhiMap {
 public:
  PhiMap(int n, const PhiOptions& opts);

  int n() const { return n_; }
  const PhiOptions& options() const { return opts_; }
  // Vertex values: identity for dist >= eps - margin, onto Sigma for dist <= eps/C + margin.
  double margin() const { return margin_; }

  std::vector<double> operator()(const std::vector<double>& lambda) const;
  // The retraction before interpolation.
  std::vector<double> smooth(const std::vector<double>& lambda) const;

 private:
  std::vector<double> vertex_image(const std::vector<double>& v) const;

  int n_;
  PhiOptions opts_;
  double margin_ = 0.0;
};

PhiMap build_phi(int n, const PhiOptions& opts);

// ---- Face-preserving self-maps of the standard d-simplex ----
//
// Points are barycentric (d+1 entries) with respect to A_0 = 0, A_i = e_i.
// A map is piecewise linear on the regular subdivision of resolution N, given
// by the images of the lattice points.

struct PLMap {
  int dim = 0;
  int resolution = 1;
  std::vector<std::vector<int>> lattice;     // d+1 non-negative ints summing to N
  std::vector<std::vector<double>> image;    // barycentric images
  std::vector<std::vector<int>> simplices;   // d-simplices, positively oriented
  std::map<std::vector<int>, std::size_t> lookup;

  std::size_t index(const std::vector<int>& l) const;
  std::vector<double> operator()(const std::vector<double>& bary) const;
};

PLMap identity_map(int dim, int resolution);
// Lattice point images permuted by the vertex permutation perm.
PLMap vertex_permutation_map(int dim, int resolution, const std::vector<int>& perm);
// Each lattice point moves within its minimal face by at most `jitter` mesh
// steps (corners stay fixed).
PLMap random_face_preserving_map(int dim, int resolution, double jitter, std::uint64_t seed);

// Euclidean coordinates of a barycentric point (A_0 = 0, A_i = e_i).
std::vector<double> to_cartesian(const std::vector<double>& bary);

// Throws InvalidArgument, naming the face, when some lattice point or sampled
// simplex centre leaves its minimal face.
void check_face_preserving(const PLMap& f, double tol = 1e-12);

// Degree of f restricted to the boundary of the face spanned by `face`
// (vertex labels, at least two), as a map of that (k-1)-sphere to itself. The
// signed count is taken at a random direction from the face's barycentre and
// retried with fresh directions while it is not a regular value.
int pl_degree(const PLMap& f, const std::vector<int>& face, std::uint64_t seed = 1);

struct CoverageReport {
  std::vector<int> face;
  int resolution = 0;
  long cells = 0;
  long uncovered = 0;
  double max_gap = 0.0;  // largest distance from an uncovered cell centre to the image
  double mesh = 0.0;     // cell diameter

  nlohmann::json to_json() const;
};

// Cells of the face's regular subdivision (resolution `grid`) whose centre is
// not in f(face). Checks face preservation first.
CoverageReport surjectivity_check(const PLMap& f, const std::vector<int>& face, int grid);

}  // namespace ricci_lab::simplex
