#include "ricci_lab/fast_marching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>

#include "ricci_lab/cohomo_flow.hpp"
#include "ricci_lab/errors.hpp"

namespace ricci_lab::flow {

using std::numbers::pi;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Arclength from tip 0 as a function of x; S - Lx/pi is odd at both tips.
struct Arclength {
  const MetricGrid1D& g;
  double L = 0.0;
  std::vector<double> D;

  explicit Arclength(const MetricGrid1D& grid) : g(grid) {
    const auto S = cumulative_integral(g, g.rho, &L);
    D.resize(S.size());
    for (std::size_t i = 0; i < S.size(); ++i) D[i] = S[i] - L * g.x[i] / pi;
  }
  double s_of_x(double x) const {
    if (x <= 0.0) return 0.0;
    if (x >= pi) return L;
    return value_at(g, D, -1, x) + L * x / pi;
  }
  double x_of_s(double s) const {
    double lo = 0.0, hi = pi;
    for (int it = 0; it < 200 && hi - lo > 1e-14; ++it) {
      const double mid = 0.5 * (lo + hi);
      (s_of_x(mid) < s ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }
};

// min over l in [0,1] of l T_a + (1-l) T_c + |l e_a + (1-l) e_c|.
double triangle(double ta, const double* ea, double tc, const double* ec) {
  const double d0 = ea[0] - ec[0], d1 = ea[1] - ec[1];
  const double A = d0 * d0 + d1 * d1, B = ec[0] * d0 + ec[1] * d1, C = ec[0] * ec[0] + ec[1] * ec[1];
  const double D = ta - tc;
  auto f = [&](double l) { return tc + l * D + std::sqrt(std::max(0.0, C + 2 * B * l + A * l * l)); };
  double best = std::min(f(0.0), f(1.0));
  // (B + A l)^2 = D^2 (C + 2 B l + A l^2)
  const double qa = A * A - D * D * A, qb = 2 * (A * B - D * D * B), qc = B * B - D * D * C;
  if (std::abs(qa) > 1e-300) {
    const double disc = qb * qb - 4 * qa * qc;
    if (disc >= 0) {
      const double sq = std::sqrt(disc);
      for (double l : {(-qb + sq) / (2 * qa), (-qb - sq) / (2 * qa)}) {
        if (l > 0.0 && l < 1.0) best = std::min(best, f(l));
      }
    }
  }
  return best;
}

class Marcher {
 public:
  Marcher(std::vector<double> phi, double hs, int K) : phi_(std::move(phi)), hs_(hs), K_(K) {
    J_ = static_cast<int>(phi_.size()) - 1;
    da_ = 2 * pi / K_;
  }

  int J() const { return J_; }
  int K() const { return K_; }
  double hs() const { return hs_; }
  double da() const { return da_; }
  double phi(int j) const { return phi_[j]; }

  // tips are 0 (j = 0) and 1 (j = J); interior (j, k) follows
  std::size_t id(int j, int k) const {
    if (j == 0) return 0;
    if (j == J_) return 1;
    k = ((k % K_) + K_) % K_;
    return 2 + static_cast<std::size_t>(j - 1) * K_ + k;
  }
  std::size_t size() const { return 2 + static_cast<std::size_t>(J_ - 1) * K_; }

  std::vector<double> run(const std::vector<std::pair<std::size_t, double>>& seeds) const {
    std::vector<double> T(size(), kInf);
    std::vector<char> done(size(), 0);
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    for (auto [i, v] : seeds) {
      if (v < T[i]) {
        T[i] = v;
        heap.emplace(v, i);
      }
    }
    auto jk = [&](std::size_t i) -> std::pair<int, int> {
      if (i == 0) return {0, 0};
      if (i == 1) return {J_, 0};
      return {static_cast<int>((i - 2) / K_) + 1, static_cast<int>((i - 2) % K_)};
    };
    auto update = [&](int j, int k) {
      const std::size_t i = id(j, k);
      if (done[i]) return;
      double v;
      if (j == 0 || j == J_) {
        const int jn = j == 0 ? 1 : J_ - 1;
        v = kInf;
        for (int kk = 0; kk < K_; ++kk) {
          const std::size_t in = id(jn, kk);
          if (done[in]) v = std::min(v, T[in] + hs_);
        }
      } else {
        // Semi-Lagrangian update over the 8 triangles around (j, k).
        static constexpr int ring[8][2] = {{1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}};
        double ev[8][2], tv[8];
        for (int r = 0; r < 8; ++r) {
          const int jn = j + ring[r][0], kn = k + ring[r][1];
          const std::size_t in = id(jn, kn);
          tv[r] = done[in] ? T[in] : kInf;
          const bool tip = jn == 0 || jn == J_;
          ev[r][0] = ring[r][0] * hs_;
          ev[r][1] = tip ? 0.0 : 0.5 * (phi_[j] + phi_[jn]) * ring[r][1] * da_;
        }
        v = kInf;
        for (int r = 0; r < 8; ++r) {
          if (std::isfinite(tv[r])) v = std::min(v, tv[r] + std::hypot(ev[r][0], ev[r][1]));
          const int r2 = (r + 1) % 8;
          if (std::isfinite(tv[r]) && std::isfinite(tv[r2])) v = std::min(v, triangle(tv[r], ev[r], tv[r2], ev[r2]));
        }
      }
      if (v < T[i]) {
        T[i] = v;
        heap.emplace(v, i);
      }
    };
    while (!heap.empty()) {
      auto [v, i] = heap.top();
      heap.pop();
      if (done[i] || v > T[i]) continue;
      done[i] = 1;
      auto [j, k] = jk(i);
      if (j == 0 || j == J_) {
        const int jn = j == 0 ? 1 : J_ - 1;
        if (jn == 0 || jn == J_) {
          update(jn, 0);
        } else {
          for (int kk = 0; kk < K_; ++kk) update(jn, kk);
        }
        continue;
      }
      update(j - 1, k);
      update(j + 1, k);
      update(j, k - 1);
      update(j, k + 1);
    }
    return T;
  }

  // Nodes around (s, a) with local flat distances, for seeding.
  std::vector<std::pair<std::size_t, double>> seeds(double s, double a) const {
    std::vector<std::pair<std::size_t, double>> out;
    const int j0 = std::clamp(static_cast<int>(std::floor(s / hs_)), 0, J_ - 1);
    const int k0 = static_cast<int>(std::floor(a / da_));
    for (int j : {j0, j0 + 1}) {
      for (int k : {k0, k0 + 1}) {
        const double ds = j * hs_ - s;
        if (j == 0 || j == J_) {
          out.emplace_back(id(j, k), std::abs(ds));
          continue;
        }
        const double pm = 0.5 * (phi_at(s) + phi_[j]);
        const double dth = k * da_ - a;
        out.emplace_back(id(j, k), std::sqrt(ds * ds + pm * pm * dth * dth));
      }
    }
    return out;
  }

  double sample(const std::vector<double>& T, double s, double a) const {
    const int j0 = std::clamp(static_cast<int>(std::floor(s / hs_)), 0, J_ - 1);
    const double ts = std::clamp(s / hs_ - j0, 0.0, 1.0);
    const int k0 = static_cast<int>(std::floor(a / da_));
    const double ta = a / da_ - k0;
    auto row = [&](int j) { return (1 - ta) * T[id(j, k0)] + ta * T[id(j, k0 + 1)]; };
    return (1 - ts) * row(j0) + ts * row(j0 + 1);
  }

 private:
  double phi_at(double s) const {
    const double t = std::clamp(s / hs_, 0.0, static_cast<double>(J_));
    const int j = std::min(static_cast<int>(t), J_ - 1);
    return phi_[j] + (t - j) * (phi_[j + 1] - phi_[j]);
  }

  std::vector<double> phi_;
  double hs_;
  int K_;
  int J_ = 0;
  double da_ = 0.0;
};

}  // namespace

void FastMarchingOptions::validate() const {
  if (axis_cells < 8 || angle_nodes < 8) throw InvalidArgument("fast-marching grid too coarse");
}

std::vector<SamplePoint> default_samples(int per_axis, int angles) {
  if (per_axis < 1 || angles < 1) throw InvalidArgument("sample counts must be positive");
  std::vector<SamplePoint> out{{0.0, 0.0}, {pi, 0.0}};
  for (int i = 1; i <= per_axis; ++i) {
    for (int a = 0; a < angles; ++a) out.push_back({pi * i / (per_axis + 1), 2 * pi * a / angles});
  }
  return out;
}

DistanceProfile distance_profile(const MetricGrid1D& grid, const std::vector<SamplePoint>& samples,
                                 const FastMarchingOptions& opts) {
  grid.validate();
  opts.validate();
  for (const auto& p : samples) {
    if (!(p.x >= 0.0 && p.x <= pi) || !(p.alpha >= 0.0 && p.alpha < 2 * pi)) {
      throw InvalidArgument("sample point outside [0,pi] x [0,2pi)");
    }
  }
  const Arclength arc(grid);
  const int J = opts.axis_cells;
  const double hs = arc.L / J;
  std::vector<double> phi(J + 1, 0.0);
  for (int j = 1; j < J; ++j) phi[j] = value_at(grid, grid.phi, -1, arc.x_of_s(j * hs));
  const Marcher fm(std::move(phi), hs, opts.angle_nodes);

  DistanceProfile out;
  out.samples = samples;
  out.length = arc.L;
  const std::size_t n = samples.size();
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = arc.s_of_x(samples[i].x);
  out.d.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::pair<std::size_t, double>> seeds;
    if (s[i] <= 0.0) seeds = {{0, 0.0}};
    else if (s[i] >= arc.L) seeds = {{1, 0.0}};
    else seeds = fm.seeds(s[i], samples[i].alpha);
    const auto T = fm.run(seeds);
    for (std::size_t k = 0; k < n; ++k) {
      if (k != i) out.d[i][k] = fm.sample(T, s[k], samples[k].alpha);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = i + 1; k < n; ++k) {
      const double v = 0.5 * (out.d[i][k] + out.d[k][i]);
      out.d[i][k] = out.d[k][i] = v;
    }
  }
  return out;
}

double gh_estimate(const DistanceProfile& a, const DistanceProfile& b) {
  if (a.samples != b.samples) throw InvalidArgument("distance profiles use different sample sets");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.d.size(); ++i) {
    for (std::size_t k = 0; k < a.d.size(); ++k) worst = std::max(worst, std::abs(a.d[i][k] - b.d[i][k]));
  }
  return worst;
}

nlohmann::json to_json(const DistanceProfile& p) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& q : p.samples) samples.push_back({q.x, q.alpha});
  return {{"samples", samples}, {"length", p.length}, {"distances", p.d}};
}

}  // namespace ricci_lab::flow
