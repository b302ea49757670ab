// Desk-scale acceptance run: one PASS/FAIL line per criterion. Exit status is
// the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ricci_lab/cohomo_flow.hpp"
#include "ricci_lab/curvature_oracle.hpp"
#include "ricci_lab/deturck.hpp"
#include "ricci_lab/fast_marching.hpp"
#include "ricci_lab/simplex_maps.hpp"
#include "ricci_lab/soliton_ode.hpp"
#include "ricci_lab/warped_geometry.hpp"

using namespace ricci_lab;
using std::numbers::pi;

namespace {

struct Outcome {
  bool ok = true;
  std::ostringstream note;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      note << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void criterion(const std::string& name, double limit_s, const std::function<void(Outcome&)>& body) {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(o);
  } catch (const std::exception& e) {
    o.ok = false;
    o.note << " [exception: " << e.what() << "]";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ostringstream lim;
  lim << "runtime " << secs << " s < " << limit_s << " s";
  o.require(secs < limit_s, lim.str());
  std::string note = o.note.str();
  while (!note.empty() && note.back() == ';') note.pop_back();
  std::printf("%s %s:%s; %.3g s (limit %g s)\n", o.ok ? "PASS" : "FAIL", name.c_str(), note.c_str(), secs,
              limit_s);
  std::fflush(stdout);
  if (!o.ok) ++failures;
}

double min_of(const std::vector<double>& v) { return *std::min_element(v.begin(), v.end()); }

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

// ---- criteria ----

void warped_curvature(Outcome& o) {
  using namespace geometry;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> ub(0.3, 1.0), ux(kStratumMargin, pi - kStratumMargin), uk(1.0, 3.0);
  std::uniform_real_distribution<double> uxo(0.3, pi - 0.3), uko(1.0, 2.5), uy(0.6, 2.5);
  std::uniform_int_distribution<int> um(1, 5), umo(1, 3);
  double margin = 1e9;
  int layers = 0;
  while (layers < 200) {
    WarpLayer l{ub(rng), um(rng), uk(rng), ux(rng)};
    if (std::abs(std::sin(l.x)) < kStratumMargin) continue;
    ++layers;
    margin = std::min(margin, layer_curvature(l).rm_operator_min_eig - 1.0 / (l.beta * l.beta));
  }
  // oracle agreement: second-order convergence of the finite-difference curvature
  double slope = 1e9, gap = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const WarpLayer l{ub(rng), umo(rng), uko(rng), uxo(rng)};
    const auto exact = layer_curvature(l);
    Eigen::VectorXd x(l.fiber_dim + 1);
    x[0] = l.x;
    for (int a = 1; a <= l.fiber_dim; ++a) x[a] = uy(rng);
    const auto metric = layer_metric(l.beta, l.fiber_dim, l.fiber_rm_min);
    const double hs[3] = {0.02, 0.01, 0.005};
    double e[3];
    for (int k = 0; k < 3; ++k) {
      const auto r = curvature_oracle(metric, x, {hs[k]});
      e[k] = std::max({std::abs(exact.sectional_min - r.sectional_min), std::abs(exact.sectional_max - r.sectional_max),
                       std::abs(exact.rm_operator_min_eig - r.rm_operator_min_eig)});
    }
    gap = std::max(gap, e[2]);
    slope = std::min(slope, std::log(e[0] / e[2]) / std::log(hs[0] / hs[2]));
  }
  o.note << " 200 layers, min(Rm - beta^-2) = " << margin << " (>= -1e-8); oracle slope " << slope
         << " (>= 1.9), oracle gap at h=0.005 " << gap;
  o.require(margin >= -1e-8, "Rm >= beta^-2 - 1e-8");
  o.require(slope >= 1.9, "oracle slope >= 1.9");
}

void cigar(Outcome& o) {
  const auto c = soliton::cigar_profile(10.0, 2001);
  const double res = soliton::soliton_residual(c);
  double dev = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) dev = std::max(dev, std::abs(c.R[i] + c.df[i] * c.df[i] - 1.0));
  o.note << " residual " << res << " (< 1e-12); max |R + |grad f|^2 - 1| = " << dev << " (<= 1e-14)";
  o.require(res < 1e-12, "soliton residual");
  o.require(dev <= 1e-14, "normalized Hamilton constant");
}

soliton::ShootOptions fine() {
  soliton::ShootOptions s;
  s.tolerance = 1e-10;
  s.samples = 4001;
  return s;
}

void bryant(Outcome& o) {
  for (int n : {3, 4, 5}) {
    const auto p = soliton::bryant_shoot(n, 20.0, fine());
    const double h = soliton::hamilton_identity_deviation(p);
    const auto ev = soliton::tip_ricci_eigenvalues(p);
    double tip = 0.0;
    for (double l : ev.lambdas) tip = std::max(tip, std::abs(l - 1.0 / n));
    const double tr = std::abs(ev.trace() - 1.0);
    o.note << " n=" << n << ": hamilton " << h << ", tip " << tip << ", trace " << tr << ";";
    o.require(h < 1e-6, "Hamilton deviation < 1e-6");
    o.require(tip < 1e-6, "tip eigenvalues 1/n within 1e-6");
    o.require(tr < 1e-8, "trace within 1e-8");
  }
}

void vertex_map(Outcome& o) {
  for (int k = 0; k <= 2; ++k) {
    const auto ev = soliton::tip_ricci_eigenvalues(soliton::product_steady(k, 4 - k, 20.0, fine()));
    const auto target = simplex::delta_vertex(4, k + 1).coords;
    const double d = max_diff(ev.lambdas, target);
    o.note << " R^" << k << " x Bry^" << 4 - k << " -> Delta_0(" << k + 1 << ") within " << d << ";";
    o.require(ev.lambdas.size() == 3 && d < 1e-4, "vertex within 1e-4");
  }
}

void expanders(Outcome& o) {
  soliton::ShootOptions so;
  so.samples = 5001;
  for (int n : {3, 4}) {
    for (double beta : {0.5, 0.9}) {
      soliton::ExpanderReport rep;
      const auto p = soliton::expander_shoot(n, beta, 60.0, so, &rep);
      const double err = std::abs(soliton::cone_slope_at(p, 50.0) - beta);
      o.note << " n=" << n << " beta=" << beta << ": |phi/rho - beta| " << err << ", min K " << rep.min_sectional << ";";
      o.require(err < 1e-3, "slope within 1e-3 at 50");
      o.require(rep.positive_curvature && rep.min_sectional > 0.0, "positive sectional curvature");
    }
  }
}

void round_sphere(Outcome& o) {
  for (int n : {3, 4, 5}) {
    const int N = n - 1;
    flow::FlowOptions fo;
    fo.t_min = 1e-4;
    fo.T = 1.0 / (4.0 * (N - 1));
    const auto tr = flow::evolve_ricci_flow(flow::round_sphere_grid(1.0, n, 256, 0.3), fo);
    double worst = 0.0;
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
      const double exact = 1.0 - 2.0 * (N - 1) * tr.times[k];
      const double v = flow::value_at(tr.states[k], tr.states[k].phi, -1, pi / 2);
      worst = std::max(worst, std::abs(v * v - exact) / exact);
    }
    o.note << " S^" << N << ": " << worst << ";";
    o.require(tr.completed && tr.times.back() == fo.T, "reached half-life");
    o.require(worst < 1e-4, "homothetic law within 1e-4");
  }
}

void smoothing(Outcome& o) {
  flow::FlowOptions fo;
  fo.T = 0.1;
  fo.t_min = 1e-3;
  std::vector<double> alpha;
  for (double s : {1e-4, 1e-3}) {
    flow::SmoothingSetup st;
    st.beta1 = 0.8;
    st.n = 4;
    st.s = s;
    const auto run = flow::smoothing_run(st, fo);
    const auto& tr = run.trajectory;
    o.require(tr.completed, "flow reached T");
    alpha.push_back(tr.alpha_estimate);
    if (s != 1e-4) continue;
    const double rm = min_of(tr.rm_min);
    const auto samples = flow::default_samples();
    const double gh =
        flow::gh_estimate(flow::distance_profile(tr.states.front(), samples), flow::distance_profile(run.singular, samples));
    o.note << " s=1e-4: min Rm over " << tr.times.size() << " records on [" << tr.times.front() << ", " << tr.times.back()
           << "] = " << rm << " (>= 0.99; glued data at t=0: " << min_of(flow::grid_curvature(run.glued).rm_min)
           << "); gh(g(t_min), singular) = " << gh << " (<= 0.05);";
    o.require(rm >= 0.99, "min Rm >= 0.99");
    o.require(gh <= 0.05, "gh <= 0.05");
  }
  const double ratio = std::max(alpha[0], alpha[1]) / std::min(alpha[0], alpha[1]);
  o.note << " sup t|Rm| = " << alpha[0] << " (s=1e-4), " << alpha[1] << " (s=1e-3), ratio " << ratio << " (< 2)";
  o.require(ratio < 2.0, "sup t|Rm| within a factor 2");
}

void deturck_stability(Outcome& o) {
  auto bg = deturck::round_background(1.0, 4, 128);
  deturck::DeTurckOptions opt;
  opt.T = 0.125;
  opt.rtol = 1e-6;
  std::vector<double> lam;
  double pullback = 0.0;
  for (double eps : {1e-3, 1e-2}) {
    const auto p = deturck::deturck_evolve(*bg, deturck::conformal_perturbation(bg->nodes(), eps), opt);
    lam.push_back(deturck::amplification(p));
    pullback = std::max(pullback, deturck::deturck_ode_pullback(p).ricci_residual);
  }
  // a perturbation that is not a homothety, so the DeTurck field is nonzero
  const auto wave = deturck::perturbation_from(
      bg->nodes(), [](double x) { return 1e-2 * std::cos(2 * x); }, [](double x) { return 1e-2 * std::cos(2 * x); });
  const auto pw = deturck::deturck_evolve(*bg, wave, opt);
  const double wave_residual = deturck::deturck_ode_pullback(pw).ricci_residual;
  pullback = std::max(pullback, wave_residual);

  auto zero_opt = opt;
  zero_opt.dt_max = opt.T / 1e4;
  zero_opt.records = 10;
  const auto z = deturck::deturck_evolve(*bg, deturck::conformal_perturbation(bg->nodes(), 0.0), zero_opt);
  const double drift = *std::max_element(z.h_sup.begin(), z.h_sup.end());

  const double agree = std::abs(lam[0] / lam[1] - 1.0);
  o.note << " sup|h|/|h0| = " << lam[0] << " (eps=1e-3), " << lam[1] << " (eps=1e-2), relative difference " << agree
         << " (< 0.1); zero drift " << drift << " over " << z.steps << " steps (< 1e-12); pullback Ricci residual "
         << pullback << " (wave " << wave_residual << ") < 10 x rtol = " << 10 * opt.rtol;
  o.require(agree < 0.1, "ratios within 10%");
  o.require(z.steps >= 10000 && drift < 1e-12, "zero drift");
  o.require(pullback < 10 * opt.rtol, "pullback residual");
}

void simplex_suite(Outcome& o) {
  using namespace simplex;
  std::mt19937_64 rng(99);
  // r: idempotence on Delta*, identity on Delta
  double idem = 0.0, fix = 0.0;
  for (int n : {4, 5}) {
    for (int s = 0; s < 10000; ++s) {
      const SimplexPoint p{sample_delta_star(n, rng), Space::DeltaStar};
      const auto q = contraction_r(p);
      idem = std::max(idem, max_diff(contraction_r({q.coords, Space::DeltaStar}).coords, q.coords));
      std::vector<double> b(n - 1, 0.0);
      // a point of Delta as a random convex combination of its vertices
      std::vector<double> w(n - 1);
      std::exponential_distribution<double> ex(1.0);
      double tot = 0.0;
      for (double& v : w) tot += (v = ex(rng));
      for (int k = 1; k <= n - 1; ++k) {
        const auto v = delta_vertex(n, k).coords;
        for (int i = 0; i < n - 1; ++i) b[i] += w[k - 1] / tot * v[i];
      }
      fix = std::max(fix, max_diff(contraction_r({b, Space::DeltaStar}).coords, b));
    }
  }
  const auto worked = contraction_r({{0.5, 0.1, 0.2}, Space::DeltaStar}).coords;
  const double worked_err = max_diff(worked, {0.25, 0.25, 0.25});
  o.note << " r idempotence " << idem << ", Delta fixed " << fix << " (<= 1e-12, 2x10^4 points); worked example error "
         << worked_err << ";";
  o.require(idem <= 1e-12 && fix <= 1e-12, "r idempotent and fixes Delta");
  o.require(worked_err <= 1e-12, "worked example");

  // Phi: the three properties on 10^4 samples per (n, eps)
  for (int n : {4, 5}) {
    for (double eps : {0.1, 0.01}) {
      PhiOptions po;
      po.epsilon = eps;
      po.C = 4.0;
      po.resolution = eps < 0.05 ? 4096 : 512;
      const auto phi = build_phi(n, po);
      std::vector<int> sigma_idx;
      for (int i = 2; i <= n - 1; ++i) sigma_idx.push_back(i);
      std::vector<double> e1(n - 1, 0.0);
      e1[0] = 1.0;
      std::uniform_real_distribution<double> U(0.0, 1.0);
      double far_err = 0.0, near_err = 0.0, disp = 0.0;
      int far = 0, near = 0, face_fail = 0, face_checks = 0;
      for (int s = 0; s < 10000; ++s) {
        std::vector<double> x;
        if (s % 2 == 0) {
          x = sample_delta_star(n, rng);
        } else {
          // a point of Sigma mixed with the opposite vertex
          const auto y = sample_face(n, {sigma_idx, Space::DeltaStar}, rng);
          const double t = 2.0 * eps * U(rng);
          x.resize(n - 1);
          for (int i = 0; i < n - 1; ++i) x[i] = (1 - t) * y[i] + t * e1[i];
        }
        const auto fx = phi(x);
        const double d = distance_to_sigma(x);
        disp = std::max(disp, dist(fx, x));
        if (d >= eps) {
          ++far;
          far_err = std::max(far_err, max_diff(fx, x));
        }
        if (d < eps / po.C) {
          ++near;
          near_err = std::max(near_err, std::abs(fx[0]));
        }
      }
      // faces: every face of Delta*, half the samples pulled towards its part in Sigma
      for (int mask = 1; mask < (1 << (n - 1)); ++mask) {
        FaceDescriptor F{{}, Space::DeltaStar};
        for (int i = 1; i <= n - 1; ++i) {
          if (mask & (1 << (i - 1))) F.indices.push_back(i);
        }
        for (int s = 0; s < 300; ++s) {
          auto x = sample_face(n, F, rng);
          if (s % 2 && F.indices.front() == 1 && F.k() > 0) {
            FaceDescriptor G = F;
            G.indices.erase(G.indices.begin());
            const auto z = sample_face(n, G, rng);
            const double t = 3.0 * eps * U(rng);
            for (int i = 0; i < n - 1; ++i) x[i] = (1 - t) * z[i] + t * x[i];
          }
          ++face_checks;
          if (!face_membership({phi(x), Space::DeltaStar}, F, 1e-12)) ++face_fail;
        }
      }
      o.note << " phi n=" << n << " eps=" << eps << ": far " << far << " err " << far_err << ", near " << near
             << " |lambda_1| " << near_err << ", |phi-id|/eps " << disp / eps << ", faces " << face_fail << "/"
             << face_checks << ";";
      o.require(far > 0 && far_err < 1e-12, "phi = id far from Sigma");
      o.require(near > 0 && near_err < 1e-12, "phi onto Sigma near Sigma");
      o.require(disp <= po.C * eps, "|phi - id| <= C eps");
      o.require(face_fail == 0, "phi preserves faces");
    }
  }

  // Degree 1 for random face-preserving maps of Delta_2 and Delta_3 (n = 4, 5)
  int bad = 0, boundaries = 0;
  for (int dim : {2, 3}) {
    for (int seed = 0; seed < 50; ++seed) {
      const auto f = random_face_preserving_map(dim, 6, 0.45, 1000 + seed);
      for (int mask = 0; mask < (1 << (dim + 1)); ++mask) {
        std::vector<int> face;
        for (int i = 0; i <= dim; ++i) {
          if (mask & (1 << i)) face.push_back(i);
        }
        if (face.size() < 2) continue;
        ++boundaries;
        if (pl_degree(f, face, seed + 1) != 1) ++bad;
      }
    }
  }
  o.note << " degree != 1 on " << bad << " of " << boundaries << " face boundaries (100 maps);";
  o.require(bad == 0, "pl_degree = 1");

  // coverage of Delta_2 at grid 1/64
  double worst = 0.0;
  for (int seed = 0; seed < 5; ++seed) {
    const auto rep = surjectivity_check(random_face_preserving_map(2, 16, 0.45, 500 + seed), {0, 1, 2}, 64);
    worst = std::max(worst, rep.max_gap / rep.mesh);
  }
  o.note << " coverage gap / mesh " << worst << " (<= 2)";
  o.require(worst <= 2.0, "coverage gap <= 2 mesh");
}

}  // namespace

int main() {
  criterion("warped curvature bound", 60, warped_curvature);
  criterion("cigar closed form", 1, cigar);
  criterion("Bryant n=3,4,5", 30, bryant);
  criterion("vertex eigenvalue map n=4", 60, vertex_map);
  criterion("expander asymptotics", 60, expanders);
  criterion("round-sphere Ricci flow", 30, round_sphere);
  criterion("smoothing run", 600, smoothing);
  criterion("DeTurck stability", 300, deturck_stability);
  criterion("simplex suite", 120, simplex_suite);
  std::printf("%d of 9 criteria failed\n", failures);
  return failures;
}
