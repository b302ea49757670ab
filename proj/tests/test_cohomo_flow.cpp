#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "doctest.h"
#include "ricci_lab/cohomo_flow.hpp"
#include "ricci_lab/errors.hpp"
#include "ricci_lab/io.hpp"
#include "ricci_lab/warped_geometry.hpp"

using namespace ricci_lab;
using namespace ricci_lab::flow;
using std::numbers::pi;

namespace {

double min_of(const std::vector<double>& v) { return *std::min_element(v.begin(), v.end()); }

MetricGrid1D dumbbell(double depth) {
  auto g = round_sphere_grid(1.0, 4, 256, 0.3);
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.phi[i] *= 1.0 - depth * std::exp(-std::pow((g.x[i] - pi / 2) / 0.3, 2));
  }
  return g;
}

}  // namespace

TEST_CASE("suspension slice closure and parity") {
  const auto round = suspension_to_grid(1.0, 4, 256);
  CHECK(std::abs(closure_slope(round, 0) - 1.0) < 1e-8);
  CHECK(std::abs(closure_slope(round, 1) - 1.0) < 1e-8);
  for (double b : {0.5, 0.8}) {
    const auto g = suspension_to_grid(b, 4, 512, 0.3);
    CHECK(std::abs(closure_slope(g, 0) - b) < 1e-8);
    CHECK(std::abs(closure_slope(g, 1) - b) < 1e-8);
    for (double r : g.rho) CHECK(r == b);
    CHECK(axis_length(g) == doctest::Approx(b * pi).epsilon(1e-12));
  }
  CHECK_THROWS_AS(suspension_to_grid(0.0, 4, 256), InvalidArgument);
  CHECK_THROWS_AS(suspension_to_grid(1.2, 4, 256), InvalidArgument);
  CHECK_THROWS_AS(suspension_to_grid(0.8, 4, 32), InvalidArgument);
  CHECK_THROWS_AS(suspension_to_grid(0.8, 2, 256), InvalidArgument);
}

TEST_CASE("slice curvature agrees with the warped-geometry frames") {
  for (int n : {4, 5}) {
    const double b = 0.8;
    const auto g = suspension_to_grid(b, n, 512, 0.2);
    const auto c = grid_curvature(g);
    geometry::SuspensionSpec spec;
    spec.n = n;
    spec.beta = {b, b};
    const auto chain = geometry::build_suspension(spec);
    for (std::size_t i = 40; i < g.size() - 40; i += 37) {
      std::vector<double> pt(n - 1, pi / 2);
      pt[0] = g.x[i];
      pt.back() = 0.3;
      const auto rep = geometry::suspension_curvature(chain, pt);
      CAPTURE(g.x[i]);
      CHECK(c.rm_min[i] == doctest::Approx(rep.sectional_min).epsilon(1e-7));
      CHECK(c.rm_max[i] == doctest::Approx(rep.sectional_max).epsilon(1e-7));
      CHECK(c.scalar[i] == doctest::Approx(rep.scalar).epsilon(1e-7));
      CHECK(c.rm_min[i] >= 1.0 / (b * b) - 1e-7);
    }
  }
}

TEST_CASE("arclength regauge of a reparametrized round sphere") {
  auto g = make_nodes(4, 256, 0.25);
  g.rho.resize(g.size());
  g.phi.resize(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double x = g.x[i];
    g.rho[i] = 1.0 + 0.3 * std::cos(2 * x);
    g.phi[i] = std::sin(x + 0.15 * std::sin(2 * x));
  }
  CHECK(axis_length(g) == doctest::Approx(pi).epsilon(1e-12));
  const auto a = to_arclength_gauge(g, 300, 0.4);
  REQUIRE(a.size() == 300);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.rho[i] == doctest::Approx(1.0).epsilon(1e-12));
    worst = std::max(worst, std::abs(a.phi[i] - std::sin(a.x[i])));
  }
  CHECK(worst < 1e-7);
  CHECK(std::abs(value_at(a, a.phi, -1, 1.0) - std::sin(1.0)) < 1e-7);
  CHECK(std::abs(value_at(a, a.phi, -1, 0.001) - std::sin(0.001)) < 1e-8);
}

TEST_CASE("gauge field vanishes on the round sphere") {
  for (int n : {3, 4, 6}) {
    const double r0 = 1.3;
    const auto g = round_sphere_grid(r0, n, 256, 0.4);
    const auto F = flow_rhs(g, g.phi, pi * r0);
    const int N = n - 1;
    for (std::size_t i = 0; i < g.size(); ++i) {
      CHECK(std::abs(F.xi[i]) < 1e-7);
      CHECK(F.phi_t[i] == doctest::Approx(-(N - 1) * g.phi[i] / (r0 * r0)).epsilon(1e-7));
    }
    CHECK(F.L_t == doctest::Approx(-pi * (N - 1) / r0).epsilon(1e-9));
  }
}

TEST_CASE("round sphere follows the homothetic law to half-life") {
  for (int n : {3, 4, 5}) {
    CAPTURE(n);
    const double r0 = 1.0;
    const int N = n - 1;
    const auto g = round_sphere_grid(r0, n, 256, 0.3);
    FlowOptions o;
    o.t_min = 1e-4;
    o.T = r0 * r0 / (4.0 * (N - 1));
    const auto tr = evolve_ricci_flow(g, o);
    REQUIRE(tr.completed);
    CHECK(tr.times.back() == o.T);
    double worst = 0.0;
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
      const double exact = r0 * r0 - 2.0 * (N - 1) * tr.times[k];
      const double v = value_at(tr.states[k], tr.states[k].phi, -1, pi / 2);
      worst = std::max(worst, std::abs(v * v - exact) / exact);
    }
    CHECK(worst < 1e-4);
    for (std::size_t k = 1; k < tr.times.size(); ++k) CHECK(tr.times[k] > tr.times[k - 1]);
    for (const auto& s : tr.states) CHECK(s.n == n);
  }
}

TEST_CASE("explicit scheme and the stability bound") {
  const auto g = round_sphere_grid(1.0, 4, 64, 0.0);
  const double bound = explicit_step_bound(g);
  FlowOptions o;
  o.scheme = Scheme::Explicit;
  o.t_min = 1e-3;
  o.T = 0.02;
  o.dt_fixed = 3.0 * bound;
  CHECK_THROWS_AS(evolve_ricci_flow(g, o), SolverError);
  o.dt_fixed = 0.9 * bound;
  const auto tr = evolve_ricci_flow(g, o);
  REQUIRE(tr.completed);
  const double exact = 1.0 - 4.0 * o.T;
  const double v = value_at(tr.states.back(), tr.states.back().phi, -1, pi / 2);
  CHECK(std::abs(v * v - exact) / exact < 1e-4);
  // adaptive explicit run agrees with the implicit one
  o.dt_fixed = 0.0;
  const auto te = evolve_ricci_flow(g, o);
  o.scheme = Scheme::Rosenbrock;
  const auto ti = evolve_ricci_flow(g, o);
  REQUIRE(te.completed);
  REQUIRE(ti.completed);
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(std::abs(te.states.back().phi[i] - ti.states.back().phi[i]) < 1e-5);
  }
  CHECK(te.metadata()["scheme"] == "explicit-heun");
}

TEST_CASE("flow rejects conical data and detects neck pinches") {
  FlowOptions o;
  CHECK_THROWS_AS(evolve_ricci_flow(suspension_to_grid(0.8, 4, 256), o), InvalidArgument);
  o.T = 0.5;
  o.t_min = 1e-4;
  const auto tr = evolve_ricci_flow(dumbbell(0.9), o);
  CHECK(tr.neck_detected);
  CHECK_FALSE(tr.completed);
  CHECK(tr.S < 0.1);
  CHECK(tr.stop_reason.find("neck") != std::string::npos);
  FlowOptions bad;
  bad.T = -1.0;
  CHECK_THROWS_AS(evolve_ricci_flow(round_sphere_grid(1.0, 4, 64), bad), InvalidArgument);
}

TEST_CASE("gluing the trivial expander leaves a smooth grid unchanged") {
  const auto g = suspension_to_grid(1.0, 4, 512, 0.3);
  const auto e = gaussian_expander(3, 40.0, 8001);
  GlueParams p;
  p.s = 1e-4;
  const auto out = glue_expander(g, e, p);
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(std::abs(out.phi[i] - g.phi[i]) < 1e-10);
    CHECK(std::abs(out.rho[i] - g.rho[i]) < 1e-10);
  }
}

TEST_CASE("glued suspension: smooth tips and localized negativity") {
  const double b = 0.8;
  const auto g = suspension_to_grid(b, 4, 512, 0.45);
  soliton::ShootOptions so;
  so.samples = 6001;
  const auto e = soliton::expander_shoot(3, b, 30.0, so);
  for (double s : {1e-3, 1e-4}) {
    CAPTURE(s);
    GlueParams p;
    p.s = s;
    GlueDiagnostics diag;
    const auto out = glue_expander(g, e, p, &diag);
    CHECK(std::abs(closure_slope(out, 0) - 1.0) < 1e-3);
    CHECK(std::abs(closure_slope(out, 1) - 1.0) < 1e-3);
    const auto c = grid_curvature(out);
    const double inner = p.band_inner(), outer = p.band_outer();
    double band_min = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double d = diag.distance[i];
      if (d > outer) {
        CHECK(out.phi[i] == g.phi[i]);
        CHECK(c.rm_min[i] >= 1.0 / (b * b) - 1e-6);
      } else if (d > inner) {
        band_min = std::min(band_min, c.rm_min[i]);
      } else if (diag.cutoff[i] == 1.0) {
        CHECK(c.rm_min[i] > 0.0);  // expander slice, positively curved
      }
    }
    CHECK(band_min < 0.0);
    // measured constant of the band bound, finite at both scales
    const double C = -band_min * std::sqrt(s);
    CHECK(C < 1.0);
  }
  auto bad = soliton::expander_shoot(3, 0.7, 30.0, so);
  GlueParams p;
  CHECK_THROWS_AS(glue_expander(g, bad, p), InvalidArgument);
  p.s = 2.0;
  CHECK_THROWS_AS(glue_expander(g, e, p), InvalidArgument);
  const auto wrong_dim = soliton::expander_shoot(4, b, 30.0, so);
  CHECK_THROWS_AS(glue_expander(g, wrong_dim, GlueParams{}), InvalidArgument);
}

TEST_CASE("cutoff ramp") {
  CHECK(cutoff_ramp(0.0, 1.5, 2.0) == 1.0);
  CHECK(cutoff_ramp(1.5, 1.5, 2.0) == 1.0);
  CHECK(cutoff_ramp(2.0, 1.5, 2.0) == 0.0);
  CHECK(cutoff_ramp(1.75, 1.5, 2.0) == doctest::Approx(0.5));
  double prev = 1.0;
  for (double t = 1.5; t <= 2.0; t += 0.01) {
    const double v = cutoff_ramp(t, 1.5, 2.0);
    CHECK(v <= prev);
    prev = v;
  }
}

TEST_CASE("smoothing run keeps Rm >= 1 - 1e-2 after the band transient") {
  SmoothingSetup st;
  st.s = 1e-4;
  FlowOptions o;
  o.T = 0.105;
  const auto run = smoothing_run(st, o);
  const auto& tr = run.trajectory;
  REQUIRE(tr.completed);
  CHECK(min_of(grid_curvature(run.glued).rm_min) < 0.0);
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    if (tr.times[k] > 10.0 * std::sqrt(st.s)) CHECK(tr.rm_min[k] >= 0.99);
  }
  CHECK(tr.alpha_estimate > 0.0);
  CHECK(std::isfinite(tr.alpha_estimate));
  CHECK(tr.inj_estimate > 0.0);
  const auto meta = tr.metadata();
  for (const char* key : {"scheme", "gauge", "S", "alpha_estimate", "inj_estimate", "stop_reason"}) {
    CHECK(meta.contains(key));
  }

  const auto path = (std::filesystem::temp_directory_path() / "ricci_lab_traj.csv").string();
  FlowTrajectory small = tr;
  small.times.resize(2);
  small.states.resize(2);
  write_trajectory_csv(small, path);
  const auto table = io::read_csv(path);
  CHECK(table.header == std::vector<std::string>{"t", "x", "rho", "phi", "R", "rm_min"});
  CHECK(table.rows() == 2 * st.resolution);
  std::filesystem::remove(path);
}

TEST_CASE("sup t|Rm| is uniform across the regularization family") {
  std::vector<double> alphas;
  for (double s : {1e-3, 1e-4, 1e-5}) {
    SmoothingSetup st;
    st.s = s;
    st.resolution = 384;
    FlowOptions o;
    o.T = 0.05;
    const auto tr = smoothing_run(st, o).trajectory;
    REQUIRE(tr.completed);
    alphas.push_back(tr.alpha_estimate);
  }
  const double lo = *std::min_element(alphas.begin(), alphas.end());
  const double hi = *std::max_element(alphas.begin(), alphas.end());
  CHECK(hi / lo < 2.0);
}
