#include <algorithm>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "ricci_lab/cohomo_flow.hpp"
#include "ricci_lab/errors.hpp"
#include "ricci_lab/fast_marching.hpp"

using namespace ricci_lab;
using namespace ricci_lab::flow;
using std::numbers::pi;

namespace {

double great_circle(const SamplePoint& a, const SamplePoint& b) {
  const double c = std::cos(a.x) * std::cos(b.x) + std::sin(a.x) * std::sin(b.x) * std::cos(a.alpha - b.alpha);
  return std::acos(std::clamp(c, -1.0, 1.0));
}

}  // namespace

TEST_CASE("fast marching reproduces great-circle distances") {
  const auto g = round_sphere_grid(1.0, 4, 256, 0.3);
  const auto samples = default_samples();
  const auto p = distance_profile(g, samples);
  REQUIRE(p.d.size() == samples.size());
  CHECK(p.length == doctest::Approx(pi).epsilon(1e-12));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(p.d[i][i] == 0.0);
    for (std::size_t k = 0; k < samples.size(); ++k) {
      CHECK(p.d[i][k] == p.d[k][i]);
      CHECK(std::abs(p.d[i][k] - great_circle(samples[i], samples[k])) < 1e-2);
    }
  }
  CHECK(p.d[0][1] == doctest::Approx(pi).epsilon(1e-9));
}

TEST_CASE("identical grids give zero, scaled spheres give the scaling bound") {
  const auto samples = default_samples(5, 3);
  const auto g = round_sphere_grid(1.0, 4, 256, 0.3);
  const auto p = distance_profile(g, samples);
  CHECK(gh_estimate(p, distance_profile(g, samples)) == 0.0);
  for (double eps : {0.01, 0.05}) {
    const auto q = distance_profile(round_sphere_grid(1.0 - eps, 4, 256, 0.3), samples);
    const double gh = gh_estimate(p, q);
    CHECK(gh <= pi * eps + 1e-2);
    CHECK(gh >= 0.9 * eps * p.d[0][1]);
  }
}

TEST_CASE("triangle inequality up to grid error") {
  const auto g = suspension_to_grid(0.8, 4, 256, 0.3);
  const auto samples = default_samples(5, 3);
  const auto p = distance_profile(g, samples);
  const std::size_t n = samples.size();
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t c = 0; c < n; ++c) CHECK(p.d[a][c] <= p.d[a][b] + p.d[b][c] + 1e-2);
  // tip to tip along a meridian is the axis length
  CHECK(p.d[0][1] == doctest::Approx(0.8 * pi).epsilon(1e-9));
}

TEST_CASE("glued data stay GH-close to the singular input") {
  const double b = 0.8;
  const auto g = suspension_to_grid(b, 4, 512, 0.45);
  soliton::ShootOptions so;
  so.samples = 6001;
  const auto e = soliton::expander_shoot(3, b, 30.0, so);
  const auto samples = default_samples();
  const auto p0 = distance_profile(g, samples);
  for (double s : {1e-3, 1e-4}) {
    GlueParams gp;
    gp.s = s;
    const auto out = glue_expander(g, e, gp);
    CHECK(gh_estimate(distance_profile(out, samples), p0) <= 10 * std::pow(s, 0.25));
  }
}

TEST_CASE("distance profile errors") {
  const auto g = round_sphere_grid(1.0, 4, 128);
  const auto p = distance_profile(g, default_samples(3, 2));
  const auto q = distance_profile(g, default_samples(4, 2));
  CHECK_THROWS_AS(gh_estimate(p, q), InvalidArgument);
  CHECK_THROWS_AS(distance_profile(g, {{4.0, 0.0}}), InvalidArgument);
  CHECK_THROWS_AS(distance_profile(g, {{1.0, 7.0}}), InvalidArgument);
  FastMarchingOptions bad;
  bad.axis_cells = 2;
  CHECK_THROWS_AS(distance_profile(g, default_samples(), bad), InvalidArgument);
  CHECK_THROWS_AS(default_samples(0, 1), InvalidArgument);
  const auto j = to_json(p);
  CHECK(j["distances"].size() == p.d.size());
  CHECK(j["samples"][1][0] == doctest::Approx(pi));
}

TEST_CASE("distance distortion along the smoothing flow") {
  SmoothingSetup st;
  st.s = 1e-4;
  FlowOptions o;
  o.T = 0.03;
  o.t_min = 1e-3;
  o.t_ratio = 3.0;
  const auto tr = smoothing_run(st, o).trajectory;
  REQUIRE(tr.completed);
  const auto samples = default_samples(5, 3);
  std::vector<DistanceProfile> prof;
  for (const auto& s : tr.states) prof.push_back(distance_profile(s, samples));
  double C = 0.0;
  for (std::size_t a = 0; a < prof.size(); ++a) {
    for (std::size_t b = a + 1; b < prof.size(); ++b) {
      const double gh = gh_estimate(prof[a], prof[b]);
      C = std::max(C, gh / (std::sqrt(tr.times[a]) + std::sqrt(tr.times[b])));
    }
  }
  MESSAGE("measured distortion constant " << C);
  CHECK(C > 0.0);
  CHECK(C < 3.0);
}
