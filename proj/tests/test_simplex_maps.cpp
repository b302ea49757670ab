#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "ricci_lab/errors.hpp"
#include "ricci_lab/simplex_maps.hpp"

using namespace ricci_lab;
using namespace ricci_lab::simplex;

namespace {

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

double dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// Every increasing index tuple in {1, ..., n-1}.
std::vector<FaceDescriptor> all_faces(int n, Space s) {
  std::vector<FaceDescriptor> out;
  const int m = n - 1;
  for (int mask = 1; mask < (1 << m); ++mask) {
    FaceDescriptor F;
    F.space = s;
    for (int i = 0; i < m; ++i) {
      if (mask & (1 << i)) F.indices.push_back(i + 1);
    }
    out.push_back(F);
  }
  return out;
}

// The contraction as written for a face: blocks mu_j of widths w_j, the last
// one counting lambda_{n-1} twice.
std::vector<double> block_contraction(const std::vector<double>& lambda, const std::vector<int>& idx) {
  const int n = static_cast<int>(lambda.size()) + 1;
  const std::size_t K = idx.size();
  std::vector<double> mu(K), w(K);
  for (std::size_t j = 0; j < K; ++j) {
    mu[j] = lambda[idx[j] - 1];
    const int next = j + 1 < K ? idx[j + 1] : n + 1;
    w[j] = next - idx[j];
  }
  for (std::size_t l = 0; l + 1 < K; ++l) {
    if (mu[l] <= mu[l + 1]) continue;
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t j = 0; j <= l; ++j) lhs += w[j] * mu[j];
    lhs += w[l + 1] * mu[l];
    for (std::size_t j = 0; j <= l + 1; ++j) rhs += w[j] * mu[j];
    const double nu = lhs / rhs;
    for (std::size_t j = 0; j <= l; ++j) mu[j] /= nu;
    mu[l + 1] = mu[l];
  }
  std::vector<double> out(lambda.size(), 0.0);
  for (std::size_t j = 0; j < K; ++j) {
    const int end = j + 1 < K ? idx[j + 1] : n;
    for (int i = idx[j]; i < end; ++i) out[i - 1] = mu[j];
  }
  return out;
}

// Minimal face of a point of Delta*: leading zeros, then blocks of equal entries.
std::vector<int> minimal_face(const std::vector<double>& x) {
  std::size_t i = 0;
  while (i + 1 < x.size() && x[i] == 0.0) ++i;
  std::vector<int> idx{static_cast<int>(i) + 1};
  for (std::size_t j = i + 1; j < x.size(); ++j) {
    if (x[j] != x[j - 1]) idx.push_back(static_cast<int>(j) + 1);
  }
  return idx;
}

std::vector<double> sample_delta(int n, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> out(n - 1, 0.0);
  double tot = 0.0;
  std::vector<double> c(n - 1);
  for (double& v : c) tot += (v = e(rng));
  for (int k = 1; k <= n - 1; ++k) {
    const auto v = delta_vertex(n, k).coords;
    for (int i = 0; i < n - 1; ++i) out[i] += c[k - 1] / tot * v[i];
  }
  return out;
}

}  // namespace

TEST_CASE("face membership examples") {
  CHECK(face_membership({{1, 0, 1}, Space::Omega}, {{2}, Space::Omega}));
  CHECK_FALSE(face_membership({{1, 0, 0.5}, Space::Omega}, {{2}, Space::Omega}));
  CHECK(face_membership({{1, 0, 0.5}, Space::Omega}, {{2, 3}, Space::Omega}));
  const SimplexPoint q{{0.25, 0.25, 0.25}, Space::Delta};
  CHECK(in_space(q.coords, Space::Delta));
  CHECK(face_membership(q, {{1}, Space::Delta}));
  CHECK(max_diff(q.coords, delta_vertex(4, 1).coords) == 0.0);
  const std::vector<double> p{0.5, 0.1, 0.2};
  CHECK(in_space(p, Space::DeltaStar));
  CHECK_FALSE(in_space(p, Space::Delta));
  CHECK(face_membership({p, Space::DeltaStar}, {{1, 2, 3}, Space::DeltaStar}));
  CHECK_FALSE(face_membership({p, Space::DeltaStar}, {{1, 3}, Space::DeltaStar}));
  // leading zeros are required when i_1 > 1
  CHECK(face_membership({{0, 1.0 / 3, 1.0 / 3}, Space::DeltaStar}, {{2}, Space::DeltaStar}));
  CHECK_FALSE(face_membership({{0.2, 0.2, 0.3}, Space::DeltaStar}, {{2, 3}, Space::DeltaStar}));
  CHECK_THROWS_AS(face_membership(q, {{1}, Space::DeltaStar}), InvalidArgument);
  CHECK_THROWS_AS(face_membership(q, {{2, 2}, Space::Delta}), InvalidArgument);
  CHECK_THROWS_AS(face_membership(q, {{4}, Space::Delta}), InvalidArgument);
  CHECK_THROWS_AS((SimplexPoint{{0.5, 0.5, 0.5}, Space::DeltaStar}.validate()), InvalidArgument);
  CHECK_THROWS_AS((SimplexPoint{{0.5, 0.5, 0.5}, Space::Omega}.validate()), InvalidArgument);
  CHECK(space_from_string(to_string(Space::Delta)) == Space::Delta);
  CHECK_THROWS_AS(space_from_string("Gamma"), InvalidArgument);
}

TEST_CASE("simplex vertices") {
  CHECK(max_diff(delta_vertex(4, 3).coords, {0, 0, 0.5}) == 0.0);
  for (int n : {3, 4, 5, 7}) {
    for (int k = 1; k <= n - 1; ++k) {
      const auto v = delta_vertex(n, k);
      CHECK(weighted_sum(v.coords) == doctest::Approx(1.0).epsilon(1e-15));
      CHECK(in_space(v.coords, Space::Delta));
      CHECK(face_membership(v, {{k}, Space::Delta}));
      const auto o = omega_vertex(n, k);
      CHECK(face_membership(o, {{k}, Space::Omega}));
    }
  }
  CHECK_THROWS_AS(delta_vertex(4, 0), InvalidArgument);
  CHECK_THROWS_AS(delta_vertex(4, 4), InvalidArgument);
  CHECK_THROWS_AS(omega_vertex(2, 1), InvalidArgument);
}

TEST_CASE("contraction r: worked example") {
  const auto out = contraction_r({{0.5, 0.1, 0.2}, Space::DeltaStar});
  CHECK(out.space == Space::Delta);
  CHECK(max_diff(out.coords, {0.25, 0.25, 0.25}) < 1e-15);
  // after the first step the scan sees (0.3, 0.3, 0.2)
  CHECK(max_diff(block_contraction({0.5, 0.1, 0.2}, {1, 2, 3}), {0.25, 0.25, 0.25}) < 1e-15);
  CHECK(max_diff(contraction_r({{0.3, 0.3, 0.2}, Space::DeltaStar}).coords, {0.25, 0.25, 0.25}) < 1e-15);
  {
    // the point lands on the boundary of Delta
    bool boundary = false;
    for (const auto& F : all_faces(4, Space::Delta)) {
      if (F.k() < 2 && face_membership(out, F)) boundary = true;
    }
    CHECK(boundary);
  }
  CHECK_THROWS_AS(contraction_r({{0.5, 0.5, 0.5}, Space::DeltaStar}), InvalidArgument);
}

TEST_CASE("contraction r: properties on random points") {
  std::mt19937_64 rng(7);
  for (int n : {3, 4, 5, 6}) {
    double sum_err = 0.0, idem = 0.0, oracle = 0.0;
    for (int s = 0; s < 10000; ++s) {
      const auto x = sample_delta_star(n, rng);
      const auto y = contraction_r({x, Space::DeltaStar});
      REQUIRE(in_space(y.coords, Space::Delta));
      sum_err = std::max(sum_err, std::abs(weighted_sum(y.coords) - weighted_sum(x)));
      idem = std::max(idem, max_diff(contraction_r({y.coords, Space::DeltaStar}).coords, y.coords));
      oracle = std::max(oracle, max_diff(block_contraction(x, minimal_face(x)), y.coords));
    }
    CHECK(sum_err < 1e-14);
    CHECK(idem < 1e-12);
    CHECK(oracle < 1e-14);
  }
}

TEST_CASE("contraction r is the identity on Delta and respects faces") {
  std::mt19937_64 rng(11);
  for (int n : {4, 5}) {
    for (int s = 0; s < 2000; ++s) {
      const auto x = sample_delta(n, rng);
      REQUIRE(in_space(x, Space::Delta, 1e-14));
      CHECK(contraction_r({x, Space::DeltaStar}).coords == x);
    }
    for (const auto& F : all_faces(n, Space::DeltaStar)) {
      FaceDescriptor D = F;
      D.space = Space::Delta;
      for (int s = 0; s < 200; ++s) {
        const auto x = sample_face(n, F, rng);
        REQUIRE(face_membership({x, Space::DeltaStar}, F));
        const auto y = contraction_r({x, Space::DeltaStar});
        CHECK(face_membership(y, D));
        if (!in_space(x, Space::Delta) && F.k() > 0) {
          // off Delta_k the image lies on a proper face of Delta_k
          bool boundary = false;
          for (std::size_t drop = 0; drop < D.indices.size(); ++drop) {
            FaceDescriptor B = D;
            B.indices.erase(B.indices.begin() + static_cast<long>(drop));
            if (face_membership(y, B, 1e-12)) boundary = true;
          }
          CHECK(boundary);
        }
      }
    }
  }
}

TEST_CASE("phi: identity far, onto Sigma near, bounded displacement") {
  for (int n : {4, 5}) {
    for (double eps : {0.1, 0.01}) {
      PhiOptions o;
      o.epsilon = eps;
      o.C = 4.0;
      o.resolution = eps < 0.05 ? 4096 : 512;
      const auto phi = build_phi(n, o);
      std::mt19937_64 rng(static_cast<unsigned>(n * 100 + 1 / eps));
      std::uniform_real_distribution<double> U(0.0, 1.0);
      const std::vector<double> e1 = [&] {
        std::vector<double> v(n - 1, 0.0);
        v[0] = 1.0;
        return v;
      }();
      int far = 0, near = 0;
      double disp = 0.0, far_err = 0.0, near_l1 = 0.0, sigma_err = 0.0;
      for (int s = 0; s < 10000; ++s) {
        std::vector<double> x;
        if (s % 2 == 0) {
          x = sample_delta_star(n, rng);
        } else {
          // concentrate near Sigma: mix a point of Sigma with the opposite vertex
          auto y = sample_face(n, {[&] {
                                     std::vector<int> v;
                                     for (int i = 2; i <= n - 1; ++i) v.push_back(i);
                                     return v;
                                   }(),
                                   Space::DeltaStar},
                               rng);
          const double t = 2.0 * eps * U(rng);
          x.resize(n - 1);
          for (int i = 0; i < n - 1; ++i) x[i] = (1 - t) * y[i] + t * e1[i];
          if (s % 10 == 1) x = y;
        }
        const auto fx = phi(x);
        REQUIRE(in_space(fx, Space::DeltaStar, 1e-12));
        const double d = distance_to_sigma(x);
        disp = std::max(disp, dist(fx, x));
        if (d >= eps) {
          ++far;
          far_err = std::max(far_err, max_diff(fx, x));
        }
        if (d < eps / o.C) {
          ++near;
          near_l1 = std::max(near_l1, std::abs(fx[0]));
        }
        if (x[0] == 0.0) sigma_err = std::max(sigma_err, max_diff(fx, x));
      }
      MESSAGE("n=" << n << " eps=" << eps << ": far " << far << ", near " << near << ", max displacement / eps "
                   << disp / eps);
      CHECK(far > 1000);
      CHECK(near > 500);
      CHECK(far_err < 1e-13);
      CHECK(near_l1 < 1e-13);
      CHECK(sigma_err < 1e-13);
      CHECK(disp <= o.C * eps);
      for (const auto& F : all_faces(n, Space::DeltaStar)) {
        for (int s = 0; s < 300; ++s) {
          auto x = sample_face(n, F, rng);
          if (s % 2 && F.indices.front() == 1 && F.k() > 0) {
            // pull toward the part of the face lying in Sigma
            FaceDescriptor G = F;
            G.indices.erase(G.indices.begin());
            const auto z = sample_face(n, G, rng);
            const double t = 3.0 * eps * U(rng);
            for (int i = 0; i < n - 1; ++i) x[i] = (1 - t) * z[i] + t * x[i];
          }
          CHECK(face_membership({phi(x), Space::DeltaStar}, F, 1e-12));
        }
      }
    }
  }
}

TEST_CASE("phi: examples and errors") {
  const int n = 4;
  PhiOptions o;
  o.epsilon = 0.05;
  o.C = 4.0;
  o.resolution = 1024;
  const auto phi = build_phi(n, o);
  const auto y = std::vector<double>{0.0, 0.4, 0.3};  // in Sigma
  REQUIRE(in_space(y, Space::DeltaStar));
  // move off Sigma along the unit normal within the affine hull
  const std::vector<double> nrm = [] {
    std::vector<double> v{-5.0, 1.0, 2.0};
    const double s = std::sqrt(30.0);
    for (double& c : v) c /= -s;
    return v;
  }();
  auto at = [&](double d) {
    std::vector<double> x(3);
    for (int i = 0; i < 3; ++i) x[i] = y[i] + d * nrm[i];
    return x;
  };
  const auto far = at(2 * o.epsilon);
  CHECK(distance_to_sigma(far) == doctest::Approx(2 * o.epsilon).epsilon(1e-12));
  CHECK(max_diff(phi(far), far) < 1e-14);
  const auto near = at(o.epsilon / (2 * o.C));
  const auto img = phi(near);
  CHECK(std::abs(img[0]) < 1e-14);
  CHECK(dist(img, near) <= o.C * o.epsilon);
  CHECK(max_diff(phi(y), y) < 1e-15);
  // smooth retraction and its interpolant agree on lattice-aligned points far away
  CHECK(phi.smooth(far) == far);

  PhiOptions coarse = o;
  coarse.resolution = 8;
  CHECK_THROWS_AS(build_phi(n, coarse), InvalidArgument);
  PhiOptions badC = o;
  badC.C = 1.0;
  CHECK_THROWS_AS(build_phi(n, badC), InvalidArgument);
  CHECK_THROWS_AS(build_phi(2, o), InvalidArgument);
  CHECK_THROWS_AS(phi({0.5, 0.5, 0.5}), InvalidArgument);
}

TEST_CASE("r after phi sends each face of Delta* into the matching face of Delta") {
  std::mt19937_64 rng(5);
  for (int n : {4, 5}) {
    PhiOptions o;
    o.epsilon = 0.1;
    o.resolution = 512;
    const auto phi = build_phi(n, o);
    for (const auto& F : all_faces(n, Space::DeltaStar)) {
      FaceDescriptor D = F;
      D.space = Space::Delta;
      for (int s = 0; s < 300; ++s) {
        const auto x = sample_face(n, F, rng);
        CHECK(face_membership(contraction_r({phi(x), Space::DeltaStar}), D, 1e-12));
      }
    }
  }
}

TEST_CASE("PL degree of basic maps") {
  for (int dim : {2, 3}) {
    const auto id = identity_map(dim, 8);
    std::vector<int> all(dim + 1);
    std::iota(all.begin(), all.end(), 0);
    CHECK(pl_degree(id, all) == 1);
    CHECK(pl_degree(id, {0, 1}) == 1);
    std::vector<int> perm = all;
    std::swap(perm[0], perm[1]);
    const auto refl = vertex_permutation_map(dim, 8, perm);
    CHECK(pl_degree(refl, all) == -1);
    CHECK(pl_degree(refl, {0, 1}) == -1);
    if (dim == 3) CHECK(pl_degree(refl, {0, 1, 2}) == -1);
    // a 3-cycle of a triangle's vertices is a rotation
    std::vector<int> cyc = all;
    std::rotate(cyc.begin(), cyc.begin() + 1, cyc.begin() + 3);
    CHECK(pl_degree(vertex_permutation_map(dim, 8, cyc), {0, 1, 2}) == 1);
    // the reflection does not map the face {0, 2} to itself
    CHECK_THROWS_AS(pl_degree(refl, {0, 2}), InvalidArgument);
  }
  CHECK_THROWS_AS(pl_degree(identity_map(2, 4), {1}), InvalidArgument);
  CHECK_THROWS_AS(identity_map(2, 0), InvalidArgument);
  CHECK_THROWS_AS(vertex_permutation_map(2, 4, {0, 0, 1}), InvalidArgument);
}

TEST_CASE("random face-preserving maps have degree one on every face boundary") {
  for (int n : {4, 5}) {
    const int dim = n - 2;
    int tested = 0;
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
      const auto f = random_face_preserving_map(dim, 6, 0.45, seed);
      check_face_preserving(f);
      for (int mask = 3; mask < (1 << (dim + 1)); ++mask) {
        std::vector<int> face;
        for (int i = 0; i <= dim; ++i) {
          if (mask & (1 << i)) face.push_back(i);
        }
        if (face.size() < 2) continue;
        CHECK(pl_degree(f, face, seed) == 1);
        ++tested;
      }
    }
    CHECK(tested > 0);
  }
  // large jitter folds the map but keeps the degree
  const auto folded = random_face_preserving_map(2, 6, 2.5, 99);
  CHECK(pl_degree(folded, {0, 1, 2}) == 1);
}

TEST_CASE("surjectivity of face-preserving maps") {
  {
    const auto rep = surjectivity_check(identity_map(2, 16), {0, 1, 2}, 64);
    CHECK(rep.uncovered == 0);
    CHECK(rep.max_gap == 0.0);
    CHECK(rep.cells == 64 * 64);
  }
  for (std::uint64_t seed : {3u, 4u, 5u}) {
    const auto f = random_face_preserving_map(2, 16, 0.45, seed);
    const auto rep = surjectivity_check(f, {0, 1, 2}, 64);
    MESSAGE("seed " << seed << ": uncovered " << rep.uncovered << ", gap " << rep.max_gap);
    CHECK(rep.max_gap <= 2 * rep.mesh);
    const auto j = rep.to_json();
    CHECK(j["resolution"] == 64);
    CHECK(j["face"].size() == 3);
    CHECK(j.contains("max_gap"));
  }
  {
    const auto f = random_face_preserving_map(3, 6, 0.45, 8);
    for (const std::vector<int>& face : {std::vector<int>{0, 1, 2, 3}, {1, 2, 3}, {0, 3}}) {
      const auto rep = surjectivity_check(f, face, 16);
      CHECK(rep.max_gap <= 2 * rep.mesh);
    }
  }
  auto bad = identity_map(2, 8);
  bad.image[bad.index({4, 4, 0})] = {0.4, 0.4, 0.2};
  CHECK_THROWS_WITH_AS(surjectivity_check(bad, {0, 1, 2}, 16), doctest::Contains("{0,1}"), InvalidArgument);
  CHECK_THROWS_AS(check_face_preserving(bad), InvalidArgument);
}
