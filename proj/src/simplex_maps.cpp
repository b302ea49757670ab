#include "ricci_lab/simplex_maps.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include <Eigen/Dense>

#include "ricci_lab/errors.hpp"

namespace ricci_lab::simplex {

namespace {

double weight(std::size_t i, std::size_t m) { return i + 1 == m ? 2.0 : 1.0; }

void require_n(int n) {
  if (n < 3) throw InvalidArgument("simplex dimension needs n >= 3");
}

std::string face_name(const std::vector<int>& labels) {
  std::ostringstream os;
  os << '{';
  for (std::size_t i = 0; i < labels.size(); ++i) os << (i ? "," : "") << labels[i];
  os << '}';
  return os.str();
}

std::vector<double> dirichlet(std::size_t k, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> b(k);
  double tot = 0.0;
  for (double& v : b) tot += (v = e(rng));
  for (double& v : b) v /= tot;
  return b;
}

// Block ranges [begin, end) (0-based) of a face and whether zeros lead.
std::vector<std::pair<int, int>> blocks(const FaceDescriptor& F, int n) {
  std::vector<std::pair<int, int>> out;
  for (std::size_t j = 0; j < F.indices.size(); ++j) {
    const int end = j + 1 < F.indices.size() ? F.indices[j + 1] : n;
    out.emplace_back(F.indices[j] - 1, end - 1);
  }
  return out;
}

// ---- Freudenthal subdivision of the standard simplex ----
//
// In z_j = N (x_j + ... + x_d) the simplex is {N >= z_1 >= ... >= z_d >= 0},
// a union of Kuhn simplices of the unit cube grid.

std::vector<int> z_to_lattice(const std::vector<int>& z, int N) {
  const std::size_t d = z.size();
  std::vector<int> l(d + 1);
  l[0] = N - (d ? z[0] : 0);
  for (std::size_t j = 0; j < d; ++j) l[j + 1] = z[j] - (j + 1 < d ? z[j + 1] : 0);
  return l;
}

bool z_inside(const std::vector<int>& z, int N) {
  int prev = N;
  for (int v : z) {
    if (v > prev || v < 0) return false;
    prev = v;
  }
  return true;
}

double cartesian_det(const std::vector<std::vector<int>>& pts) {
  const std::size_t d = pts.size() - 1;
  Eigen::MatrixXd M(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) M(j, i) = pts[i + 1][j + 1] - pts[0][j + 1];
  }
  return d ? M.determinant() : 1.0;
}

PLMap freudenthal(int dim, int N) {
  if (dim < 1) throw InvalidArgument("simplex dimension must be positive");
  if (N < 1) throw InvalidArgument("subdivision resolution must be positive");
  PLMap f;
  f.dim = dim;
  f.resolution = N;
  std::vector<int> z(dim, 0);
  // all non-increasing integer sequences bounded by N
  std::function<void(int, int)> rec = [&](int j, int hi) {
    if (j == dim) {
      const auto l = z_to_lattice(z, N);
      f.lookup.emplace(l, f.lattice.size());
      f.lattice.push_back(l);
      return;
    }
    for (int v = 0; v <= hi; ++v) {
      z[j] = v;
      rec(j + 1, v);
    }
  };
  rec(0, N);
  std::vector<int> perm(dim);
  std::vector<int> base(dim, 0);
  std::function<void(int)> cubes = [&](int j) {
    if (j == dim) {
      std::iota(perm.begin(), perm.end(), 0);
      do {
        std::vector<int> v = base;
        std::vector<std::vector<int>> pts;
        bool ok = z_inside(v, N);
        pts.push_back(z_to_lattice(v, N));
        for (int k = 0; k < dim && ok; ++k) {
          v[perm[k]] += 1;
          ok = z_inside(v, N);
          pts.push_back(z_to_lattice(v, N));
        }
        if (!ok) continue;
        if (cartesian_det(pts) < 0) std::swap(pts[0], pts[1]);
        std::vector<int> s;
        for (const auto& p : pts) s.push_back(static_cast<int>(f.lookup.at(p)));
        f.simplices.push_back(std::move(s));
      } while (std::next_permutation(perm.begin(), perm.end()));
      return;
    }
    for (int v = 0; v < N; ++v) {
      base[j] = v;
      cubes(j + 1);
    }
  };
  cubes(0);
  f.image.resize(f.lattice.size());
  for (std::size_t i = 0; i < f.lattice.size(); ++i) {
    f.image[i].resize(dim + 1);
    for (int j = 0; j <= dim; ++j) f.image[i][j] = static_cast<double>(f.lattice[i][j]) / N;
  }
  return f;
}

std::vector<int> support(const std::vector<int>& l) {
  std::vector<int> s;
  for (std::size_t i = 0; i < l.size(); ++i) {
    if (l[i] > 0) s.push_back(static_cast<int>(i));
  }
  return s;
}

bool inside_labels(const std::vector<double>& b, const std::vector<int>& labels, double tol) {
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (!std::binary_search(labels.begin(), labels.end(), static_cast<int>(i)) && std::abs(b[i]) > tol) {
      return false;
    }
  }
  return true;
}

std::vector<int> checked_face(const PLMap& f, std::vector<int> face, std::size_t min_size) {
  std::sort(face.begin(), face.end());
  if (face.size() < min_size || std::adjacent_find(face.begin(), face.end()) != face.end()) {
    throw InvalidArgument("face needs at least " + std::to_string(min_size) + " distinct vertex labels");
  }
  if (face.front() < 0 || face.back() > f.dim) throw InvalidArgument("face label outside the simplex");
  return face;
}

// Simplices of the map's triangulation of dimension |labels| - 1 lying in the
// face spanned by labels.
std::vector<std::vector<int>> face_simplices(const PLMap& f, const std::vector<int>& labels) {
  std::set<std::vector<int>> out;
  for (const auto& s : f.simplices) {
    std::vector<int> in;
    for (int v : s) {
      bool ok = true;
      for (int c : support(f.lattice[v])) {
        if (!std::binary_search(labels.begin(), labels.end(), c)) ok = false;
      }
      if (ok) in.push_back(v);
    }
    if (in.size() == labels.size()) {
      std::sort(in.begin(), in.end());
      out.insert(in);
    }
  }
  return {out.begin(), out.end()};
}

// Local coordinates of a barycentric point on a face: drop the first label.
Eigen::VectorXd chart(const std::vector<double>& b, const std::vector<int>& labels) {
  Eigen::VectorXd x(labels.size() - 1);
  for (std::size_t i = 1; i < labels.size(); ++i) x(i - 1) = b[labels[i]];
  return x;
}

}  // namespace

std::string to_string(Space s) {
  switch (s) {
    case Space::Omega:
      return "Omega";
    case Space::DeltaStar:
      return "DeltaStar";
    case Space::Delta:
      return "Delta";
  }
  return "?";
}

Space space_from_string(const std::string& s) {
  std::string t;
  for (char c : s) {
    if (c != '_' && c != '*') t += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  if (s == "Delta*") return Space::DeltaStar;
  if (t == "omega") return Space::Omega;
  if (t == "deltastar") return Space::DeltaStar;
  if (t == "delta") return Space::Delta;
  throw InvalidArgument("unknown simplex space '" + s + "'");
}

double weighted_sum(const std::vector<double>& lambda) {
  double s = 0.0;
  for (std::size_t i = 0; i < lambda.size(); ++i) s += weight(i, lambda.size()) * lambda[i];
  return s;
}

bool in_space(const std::vector<double>& c, Space s, double tol) {
  if (c.size() < 2) return false;
  for (double v : c) {
    if (!std::isfinite(v) || v < -tol || v > 1.0 + tol) return false;
  }
  if (s == Space::Omega) {
    return std::any_of(c.begin(), c.end(), [&](double v) { return std::abs(v) <= tol; });
  }
  if (std::abs(weighted_sum(c) - 1.0) > tol * static_cast<double>(c.size())) return false;
  if (s == Space::Delta) {
    for (std::size_t i = 0; i + 1 < c.size(); ++i) {
      if (c[i] > c[i + 1] + tol) return false;
    }
  }
  return true;
}

void SimplexPoint::validate(double tol) const {
  require_n(n());
  if (!in_space(coords, space, tol)) throw InvalidArgument("point is not in " + to_string(space));
}

void FaceDescriptor::validate(int n) const {
  if (indices.empty()) throw InvalidArgument("face needs at least one index");
  for (std::size_t j = 0; j < indices.size(); ++j) {
    if (indices[j] < 1 || indices[j] > n - 1) throw InvalidArgument("face index outside 1..n-1");
    if (j && indices[j] <= indices[j - 1]) throw InvalidArgument("face indices must increase strictly");
  }
}

bool face_membership(const SimplexPoint& p, const FaceDescriptor& F, double tol) {
  if (p.space != F.space) throw InvalidArgument("point and face live in different spaces");
  p.validate(tol);
  const int n = p.n();
  F.validate(n);
  const auto& c = p.coords;
  if (F.space == Space::Omega) {
    for (int i = 1; i <= n - 1; ++i) {
      if (!std::binary_search(F.indices.begin(), F.indices.end(), i) && std::abs(c[i - 1] - 1.0) > tol) {
        return false;
      }
    }
    return true;
  }
  for (int i = 0; i < F.indices.front() - 1; ++i) {
    if (std::abs(c[i]) > tol) return false;
  }
  for (auto [b, e] : blocks(F, n)) {
    for (int i = b + 1; i < e; ++i) {
      if (std::abs(c[i] - c[b]) > tol) return false;
    }
  }
  return true;
}

SimplexPoint delta_vertex(int n, int k) {
  require_n(n);
  if (k < 1 || k > n - 1) throw InvalidArgument("vertex index outside 1..n-1");
  SimplexPoint p{std::vector<double>(n - 1, 0.0), Space::Delta};
  for (int i = k - 1; i < n - 1; ++i) p.coords[i] = 1.0 / (n + 1 - k);
  return p;
}

SimplexPoint omega_vertex(int n, int k) {
  require_n(n);
  if (k < 1 || k > n - 1) throw InvalidArgument("vertex index outside 1..n-1");
  SimplexPoint p{std::vector<double>(n - 1, 1.0), Space::Omega};
  p.coords[k - 1] = 0.0;
  return p;
}

std::vector<double> sample_delta_star(int n, std::mt19937_64& rng) {
  require_n(n);
  auto b = dirichlet(n - 1, rng);
  b.back() *= 0.5;
  return b;
}

std::vector<double> sample_face(int n, const FaceDescriptor& F, std::mt19937_64& rng) {
  require_n(n);
  F.validate(n);
  std::vector<double> x(n - 1, 0.0);
  if (F.space == Space::Omega) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::fill(x.begin(), x.end(), 1.0);
    for (int i : F.indices) x[i - 1] = U(rng);
    x[F.indices[std::uniform_int_distribution<std::size_t>(0, F.indices.size() - 1)(rng)] - 1] = 0.0;
    return x;
  }
  const auto b = dirichlet(F.indices.size(), rng);
  if (F.space == Space::Delta) {
    for (std::size_t j = 0; j < F.indices.size(); ++j) {
      const auto v = delta_vertex(n, F.indices[j]).coords;
      for (int i = 0; i < n - 1; ++i) x[i] += b[j] * v[i];
    }
    return x;
  }
  const auto bl = blocks(F, n);
  for (std::size_t j = 0; j < bl.size(); ++j) {
    const double w = bl[j].second - bl[j].first + (bl[j].second == n - 1 ? 1 : 0);
    for (int i = bl[j].first; i < bl[j].second; ++i) x[i] = b[j] / w;
  }
  // equal entries must stay exactly equal
  return x;
}

std::vector<double> project_to_sigma(const std::vector<double>& lambda) {
  const std::size_t m = lambda.size();
  require_n(static_cast<int>(m) + 1);
  // y_i = max(0, x_i - tau a_i) on the coordinates 2..n-1, with a.y = 1.
  std::vector<std::size_t> order;
  for (std::size_t i = 1; i < m; ++i) order.push_back(i);
  auto bp = [&](std::size_t i) { return lambda[i] / weight(i, m); };
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return bp(a) > bp(b); });
  double A = 0.0, B = 0.0, tau = 0.0;
  for (std::size_t j = 0; j < order.size(); ++j) {
    const std::size_t i = order[j];
    const double a = weight(i, m);
    A += a * lambda[i];
    B += a * a;
    tau = (A - 1.0) / B;
    if (j + 1 == order.size() || tau >= bp(order[j + 1])) break;
  }
  std::vector<double> y(m, 0.0);
  for (std::size_t i = 1; i < m; ++i) y[i] = std::max(0.0, lambda[i] - tau * weight(i, m));
  return y;
}

double distance_to_sigma(const std::vector<double>& lambda) {
  const auto y = project_to_sigma(lambda);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (lambda[i] - y[i]) * (lambda[i] - y[i]);
  return std::sqrt(s);
}

SimplexPoint contraction_r(const SimplexPoint& p) {
  SimplexPoint q = p;
  q.space = Space::DeltaStar;
  q.validate();
  auto& x = q.coords;
  const std::size_t m = x.size();
  for (std::size_t l = 0; l + 1 < m; ++l) {
    if (x[l] <= x[l + 1]) continue;
    double lhs = weight(l + 1, m) * x[l], rhs = weight(l + 1, m) * x[l + 1];
    for (std::size_t j = 0; j <= l; ++j) {
      lhs += weight(j, m) * x[j];
      rhs += weight(j, m) * x[j];
    }
    const double nu = lhs / rhs;
    for (std::size_t j = 0; j <= l; ++j) x[j] /= nu;
    x[l + 1] = x[l];
  }
  q.space = Space::Delta;
  return q;
}

void PhiOptions::validate() const {
  if (!(epsilon > 0.0)) throw InvalidArgument("phi: epsilon must be positive");
  if (!(C > 1.0)) throw InvalidArgument("phi: C must exceed 1");
  if (resolution < 1) throw InvalidArgument("phi: resolution must be positive");
}

PhiMap::PhiMap(int n, const PhiOptions& opts) : n_(n), opts_(opts) {
  require_n(n);
  opts.validate();
  std::vector<double> e1(n - 1, 0.0);
  e1[0] = 1.0;
  if (opts.epsilon > 0.5 * distance_to_sigma(e1)) throw InvalidArgument("phi: epsilon too large for the simplex");
  // Lattice vertices used at x lie within r of x; after rescaling onto the
  // affine hull they lie within margin_ of x.
  const double h = 1.0 / opts.resolution;
  const double r = std::sqrt(n - 1.0) * h;
  const double a = std::sqrt(n + 2.0);
  if (a * r >= 0.5 || h > 0.5 / n) throw InvalidArgument("phi: resolution too coarse for the simplex");
  margin_ = r + (1.0 + r) * a * r / (1.0 - a * r);
  if (!(opts.epsilon / opts.C + margin_ < opts.epsilon - margin_)) {
    throw InvalidArgument("phi: resolution too coarse to separate eps/C from eps; increase it");
  }
}

std::vector<double> PhiMap::smooth(const std::vector<double>& lambda) const {
  const double lo = opts_.epsilon / opts_.C + margin_, hi = opts_.epsilon - margin_;
  const double d = distance_to_sigma(lambda);
  const double theta = std::clamp((hi - d) / (hi - lo), 0.0, 1.0);
  if (theta == 0.0) return lambda;
  // Subtracting theta * lambda_1 from every entry keeps equal entries equal
  // and leading zeros zero; at theta = 1 the first entry vanishes.
  const double m = lambda[0];
  std::vector<double> y(lambda.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::max(lambda[i] - theta * m, 0.0);
  y[0] = (1.0 - theta) * m;
  const double s = weighted_sum(y);
  for (double& v : y) v /= s;
  return y;
}

std::vector<double> PhiMap::vertex_image(const std::vector<double>& v) const {
  const double s = weighted_sum(v);
  std::vector<double> w(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) w[i] = v[i] / s;
  auto y = smooth(w);
  for (double& c : y) c *= s;
  return y;
}

std::vector<double> PhiMap::operator()(const std::vector<double>& lambda) const {
  if (static_cast<int>(lambda.size()) != n_ - 1 || !in_space(lambda, Space::DeltaStar)) {
    throw InvalidArgument("phi: point is not in Delta*");
  }
  const std::size_t m = lambda.size();
  const double N = opts_.resolution;
  std::vector<double> base(m), frac(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double z = std::max(lambda[i], 0.0) * N;
    base[i] = std::floor(z);
    frac[i] = z - base[i];
  }
  std::vector<std::size_t> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  std::vector<double> out(m, 0.0), v = base;
  auto add = [&](double c) {
    if (c <= 0.0) return;
    std::vector<double> p(m);
    for (std::size_t i = 0; i < m; ++i) p[i] = v[i] / N;
    const auto img = vertex_image(p);
    for (std::size_t i = 0; i < m; ++i) out[i] += c * img[i];
  };
  add(1.0 - frac[perm[0]]);
  for (std::size_t k = 0; k < m; ++k) {
    v[perm[k]] += 1.0;
    add(k + 1 < m ? frac[perm[k]] - frac[perm[k + 1]] : frac[perm[k]]);
  }
  return out;
}

PhiMap build_phi(int n, const PhiOptions& opts) { return PhiMap(n, opts); }

std::size_t PLMap::index(const std::vector<int>& l) const {
  const auto it = lookup.find(l);
  if (it == lookup.end()) throw InvalidArgument("not a lattice point of the subdivision");
  return it->second;
}

std::vector<double> PLMap::operator()(const std::vector<double>& b) const {
  if (static_cast<int>(b.size()) != dim + 1) throw InvalidArgument("barycentric point has the wrong size");
  for (double v : b) {
    if (!(v >= -1e-12)) throw InvalidArgument("barycentric point outside the simplex");
  }
  std::vector<double> z(dim), base(dim), frac(dim);
  double acc = 0.0;
  for (int j = dim; j >= 1; --j) {
    acc += std::max(b[j], 0.0);
    z[j - 1] = std::min(acc, 1.0) * resolution;
  }
  for (int j = 0; j < dim; ++j) {
    base[j] = std::floor(z[j]);
    frac[j] = z[j] - base[j];
  }
  std::vector<int> perm(dim);
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(), [&](int a, int c) { return frac[a] > frac[c]; });
  std::vector<int> v(dim);
  for (int j = 0; j < dim; ++j) v[j] = static_cast<int>(base[j]);
  std::vector<double> out(dim + 1, 0.0);
  auto add = [&](double c) {
    if (c <= 0.0) return;
    const auto& img = image[index(z_to_lattice(v, resolution))];
    for (int i = 0; i <= dim; ++i) out[i] += c * img[i];
  };
  add(1.0 - frac[perm[0]]);
  for (int k = 0; k < dim; ++k) {
    v[perm[k]] += 1;
    add(k + 1 < dim ? frac[perm[k]] - frac[perm[k + 1]] : frac[perm[k]]);
  }
  return out;
}

PLMap identity_map(int dim, int resolution) { return freudenthal(dim, resolution); }

PLMap vertex_permutation_map(int dim, int resolution, const std::vector<int>& perm) {
  auto f = freudenthal(dim, resolution);
  std::vector<int> sorted = perm;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i <= dim; ++i) {
    if (static_cast<int>(sorted.size()) != dim + 1 || sorted[i] != i) {
      throw InvalidArgument("not a permutation of the simplex vertices");
    }
  }
  for (auto& img : f.image) {
    std::vector<double> p(dim + 1);
    for (int i = 0; i <= dim; ++i) p[perm[i]] = img[i];
    img = std::move(p);
  }
  return f;
}

PLMap random_face_preserving_map(int dim, int resolution, double jitter, std::uint64_t seed) {
  if (!(jitter >= 0.0)) throw InvalidArgument("jitter must be non-negative");
  auto f = freudenthal(dim, resolution);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (std::size_t p = 0; p < f.lattice.size(); ++p) {
    const auto s = support(f.lattice[p]);
    if (s.size() < 2) continue;
    auto& b = f.image[p];
    std::vector<double> d(dim + 1, 0.0);
    double mean = 0.0;
    for (int i : s) mean += (d[i] = U(rng));
    mean /= static_cast<double>(s.size());
    double big = 0.0;
    for (int i : s) big = std::max(big, std::abs(d[i] -= mean));
    if (big == 0.0) continue;
    double t = jitter / resolution / big;
    for (int i : s) {
      if (d[i] < 0.0) t = std::min(t, -b[i] / d[i]);
    }
    for (int i : s) b[i] = std::max(b[i] + t * d[i], 0.0);
    double tot = 0.0;
    for (int i : s) tot += b[i];
    for (int i : s) b[i] /= tot;
  }
  return f;
}

std::vector<double> to_cartesian(const std::vector<double>& bary) {
  if (bary.size() < 2) throw InvalidArgument("barycentric point needs at least two entries");
  return {bary.begin() + 1, bary.end()};
}

void check_face_preserving(const PLMap& f, double tol) {
  for (std::size_t p = 0; p < f.lattice.size(); ++p) {
    const auto s = support(f.lattice[p]);
    if (!inside_labels(f.image[p], s, tol)) {
      throw InvalidArgument("map does not preserve face " + face_name(s));
    }
  }
  for (const auto& simp : f.simplices) {
    std::vector<double> c(f.dim + 1, 0.0);
    std::vector<int> lab;
    for (int v : simp) {
      for (int i = 0; i <= f.dim; ++i) c[i] += static_cast<double>(f.lattice[v][i]);
    }
    for (int i = 0; i <= f.dim; ++i) {
      if (c[i] > 0) lab.push_back(i);
      c[i] /= static_cast<double>(simp.size()) * f.resolution;
    }
    if (!inside_labels(f(c), lab, tol)) throw InvalidArgument("map does not preserve face " + face_name(lab));
  }
}

int pl_degree(const PLMap& f, const std::vector<int>& face_in, std::uint64_t seed) {
  const auto face = checked_face(f, face_in, 2);
  const std::size_t k = face.size() - 1;
  for (std::size_t p = 0; p < f.lattice.size(); ++p) {
    const auto s = support(f.lattice[p]);
    const bool in_face =
        std::all_of(s.begin(), s.end(), [&](int c) { return std::binary_search(face.begin(), face.end(), c); });
    if (in_face && !inside_labels(f.image[p], face, 1e-12)) {
      throw InvalidArgument("map does not send face " + face_name(face) + " to itself");
    }
  }
  // (k-1)-simplices on the boundary, with the orientation they inherit
  struct Piece {
    Eigen::MatrixXd Q;
    int sign;
  };
  Eigen::VectorXd c = Eigen::VectorXd::Constant(static_cast<long>(k), 1.0 / (k + 1));
  std::vector<Piece> pieces;
  for (std::size_t drop = 0; drop < face.size(); ++drop) {
    std::vector<int> facet = face;
    facet.erase(facet.begin() + static_cast<long>(drop));
    for (const auto& s : face_simplices(f, facet)) {
      Eigen::MatrixXd P(k, k), Q(k, k);
      for (std::size_t i = 0; i < k; ++i) {
        std::vector<double> b(f.dim + 1);
        for (int j = 0; j <= f.dim; ++j) b[j] = static_cast<double>(f.lattice[s[i]][j]) / f.resolution;
        P.col(static_cast<long>(i)) = chart(b, face) - c;
        Q.col(static_cast<long>(i)) = chart(f.image[s[i]], face) - c;
      }
      const double dp = P.determinant();
      if (dp == 0.0) throw InvalidArgument("degenerate boundary simplex");
      pieces.push_back({Q, dp > 0 ? 1 : -1});
    }
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> G(0.0, 1.0);
  for (int attempt = 0; attempt < 20; ++attempt) {
    Eigen::VectorXd u(k);
    for (std::size_t i = 0; i < k; ++i) u(static_cast<long>(i)) = G(rng);
    u.normalize();
    int deg = 0;
    bool regular = true;
    for (const auto& pc : pieces) {
      const double dq = pc.Q.determinant();
      const double scale = pc.Q.cwiseAbs().maxCoeff();
      if (std::abs(dq) <= 1e-12 * std::pow(scale, static_cast<double>(k))) {
        // a flat image only matters if the ray grazes it
        Eigen::VectorXd a = pc.Q.completeOrthogonalDecomposition().solve(u);
        if ((pc.Q * a - u).norm() < 1e-9 && (a.array() >= -1e-9).all()) regular = false;
        continue;
      }
      const Eigen::VectorXd a = pc.Q.partialPivLu().solve(u);
      const double amin = a.minCoeff(), amax = a.cwiseAbs().maxCoeff();
      if (amin > 1e-9 * amax) {
        deg += (dq > 0 ? 1 : -1) * pc.sign;
      } else if (amin > -1e-9 * amax) {
        regular = false;
      }
      if (!regular) break;
    }
    if (regular) return deg;
  }
  throw SolverError("no regular value found for face " + face_name(face));
}

nlohmann::json CoverageReport::to_json() const {
  return {{"face", face}, {"resolution", resolution}, {"max_gap", max_gap},
          {"cells", cells},  {"uncovered", uncovered},   {"mesh", mesh}};
}

CoverageReport surjectivity_check(const PLMap& f, const std::vector<int>& face_in, int grid) {
  const auto face = checked_face(f, face_in, 1);
  if (grid < 1) throw InvalidArgument("coverage grid must be positive");
  check_face_preserving(f);
  CoverageReport rep;
  rep.face = face;
  rep.resolution = grid;
  const std::size_t k = face.size() - 1;
  auto embed = [&](const std::vector<double>& local) {
    std::vector<double> b(f.dim + 1, 0.0);
    for (std::size_t i = 0; i < face.size(); ++i) b[face[i]] = local[i];
    return b;
  };
  auto cart = [&](const std::vector<double>& b) {
    const auto x = to_cartesian(b);
    return Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<long>(x.size())).eval();
  };
  if (k == 0) {
    rep.cells = 1;
    return rep;
  }
  // image simplices of the face, in the face chart
  struct Img {
    Eigen::MatrixXd T;  // columns q_i - q_0
    Eigen::VectorXd q0;
    bool flat;
    std::vector<Eigen::VectorXd> samples;  // cartesian points for gap distances
  };
  std::vector<Img> imgs;
  for (const auto& s : face_simplices(f, face)) {
    Img im;
    im.q0 = chart(f.image[s[0]], face);
    im.T.resize(static_cast<long>(k), static_cast<long>(k));
    for (std::size_t i = 1; i <= k; ++i) im.T.col(static_cast<long>(i - 1)) = chart(f.image[s[i]], face) - im.q0;
    im.flat = std::abs(im.T.determinant()) < 1e-300;
    std::vector<double> centre(f.dim + 1, 0.0);
    for (int v : s) {
      im.samples.push_back(cart(f.image[v]));
      for (int j = 0; j <= f.dim; ++j) centre[j] += f.image[v][j] / static_cast<double>(s.size());
    }
    im.samples.push_back(cart(centre));
    imgs.push_back(std::move(im));
  }
  const auto cells = freudenthal(static_cast<int>(k), grid);
  rep.cells = static_cast<long>(cells.simplices.size());
  for (const auto& s : cells.simplices) {
    std::vector<double> local(k + 1, 0.0);
    std::vector<Eigen::VectorXd> corners;
    for (int v : s) {
      std::vector<double> lb(k + 1);
      for (std::size_t j = 0; j <= k; ++j) {
        lb[j] = static_cast<double>(cells.lattice[v][j]) / grid;
        local[j] += lb[j] / static_cast<double>(s.size());
      }
      corners.push_back(cart(embed(lb)));
    }
    for (std::size_t a = 0; a < corners.size(); ++a) {
      for (std::size_t b = a + 1; b < corners.size(); ++b) rep.mesh = std::max(rep.mesh, (corners[a] - corners[b]).norm());
    }
    const auto yb = embed(local);
    const Eigen::VectorXd y = chart(yb, face);
    bool covered = false;
    for (const auto& im : imgs) {
      if (im.flat) continue;
      const Eigen::VectorXd a = im.T.partialPivLu().solve(y - im.q0);
      if (a.minCoeff() >= -1e-12 && a.sum() <= 1.0 + 1e-12) {
        covered = true;
        break;
      }
    }
    if (covered) continue;
    ++rep.uncovered;
    const Eigen::VectorXd yc = cart(yb);
    double gap = std::numeric_limits<double>::infinity();
    for (const auto& im : imgs) {
      for (const auto& q : im.samples) gap = std::min(gap, (q - yc).norm());
    }
    rep.max_gap = std::max(rep.max_gap, gap);
  }
  return rep;
}

}  // namespace ricci_lab::simplex
