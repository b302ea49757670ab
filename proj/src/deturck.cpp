#include "ricci_lab/deturck.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "ricci_lab/errors.hpp"

namespace ricci_lab::deturck {

using flow::MetricGrid1D;
using std::numbers::pi;

namespace {

constexpr double kGamma = 1.0 + 0.70710678118654752440;
constexpr int kBand = 4;  // node half-bandwidth of the right-hand side
constexpr int kInterp = 8;
constexpr int kTipCells = 2;

struct Ops {
  MetricGrid1D nodes;
  std::size_t m;
  int q;
  double h;
  std::vector<double> xp, xpp, sn, ct;

  explicit Ops(const MetricGrid1D& g)
      : nodes(g), m(g.size()), q(g.fiber_dim()), h(g.du()), xp(m), xpp(m), sn(m), ct(m) {
    for (std::size_t i = 0; i < m; ++i) {
      xp[i] = flow::stretch_map_d1(g.u[i], g.stretch);
      xpp[i] = flow::stretch_map_d2(g.u[i], g.stretch);
      sn[i] = std::sin(g.x[i]);
      ct[i] = std::cos(g.x[i]) / sn[i];
    }
  }

  std::vector<double> dx(const std::vector<double>& v, int parity) const {
    auto d = flow::diff_u(v, h, parity);
    for (std::size_t i = 0; i < m; ++i) d[i] /= xp[i];
    return d;
  }
  void dx2(const std::vector<double>& v, int parity, std::vector<double>& vx, std::vector<double>& vxx) const {
    vx = dx(v, parity);
    vxx = flow::diff_uu(v, h, parity);
    for (std::size_t i = 0; i < m; ++i) vxx[i] = (vxx[i] - xpp[i] * vx[i]) / (xp[i] * xp[i]);
  }

  // f(x_i + d) by Lagrange interpolation in u over kInterp cells, with the
  // offset kept relative to node i. Throws SolverError outside (0, pi).
  double shifted(const std::vector<double>& f, int parity, std::size_t i, double d) const {
    const double xi = nodes.x[i];
    if (!(xi + d > 0.0 && xi + d < pi)) throw SolverError("DeTurck ODE left the chart at a tip");
    const double a = nodes.stretch, ui = nodes.u[i];
    double du = d / xp[i];
    for (int it = 0; it < 30; ++it) {
      const double r = du - 2.0 * a * std::cos(2.0 * ui + du) * std::sin(du) - d;
      const double step = r / flow::stretch_map_d1(ui + du, a);
      du -= step;
      if (std::abs(step) <= 1e-17 + 1e-15 * std::abs(du)) break;
    }
    const double sft = du / h;  // offset in cells from node i
    const long base = static_cast<long>(std::floor(sft));
    const long im = static_cast<long>(m);
    const long lo = static_cast<long>(i) + base - kInterp / 2 + 1;
    double out = 0.0;
    for (long b = 0; b < kInterp; ++b) {
      const double rb = sft - static_cast<double>(lo + b - static_cast<long>(i));
      double w = 1.0;
      for (long c = 0; c < kInterp; ++c) {
        if (c != b) w *= (rb + static_cast<double>(b - c)) / static_cast<double>(b - c);
      }
      const long j = lo + b;
      double v;
      if (j < 0) v = parity * f[-j - 1];
      else if (j >= im) v = parity * f[2 * im - 1 - j];
      else v = f[j];
      out += w * v;
    }
    return out;
  }

  double dist2(std::size_t i) const {
    const double d = std::min(nodes.x[i], pi - nodes.x[i]);
    return d * d;
  }
  // Tip cells of an even function vanishing at the tips, from the next two.
  void close(std::vector<double>& f, std::size_t stride, std::size_t offset) const {
    for (int tip : {0, 1}) {
      auto idx = [&](std::size_t j) { return tip == 0 ? j : m - 1 - j; };
      const double z0 = dist2(idx(0)), z1 = dist2(idx(1)), z2 = dist2(idx(2));
      f[idx(0) * stride + offset] = f[idx(1) * stride + offset] * z0 * (z0 - z2) / (z1 * (z1 - z2)) +
                                    f[idx(2) * stride + offset] * z0 * (z0 - z1) / (z2 * (z2 - z1));
    }
  }
  // First `cells` tip cells of an even function from the next three, quadratic in d^2.
  void extend(std::vector<double>& f, int cells) const {
    for (int tip : {0, 1}) {
      auto idx = [&](int j) { return tip == 0 ? static_cast<std::size_t>(j) : m - 1 - j; };
      for (int c = 0; c < cells; ++c) {
        const double z0 = dist2(idx(c));
        double v = 0.0;
        for (int j = cells; j < cells + 3; ++j) {
          double l = 1.0;
          for (int k = cells; k < cells + 3; ++k) {
            if (k != j) l *= (z0 - dist2(idx(k))) / (dist2(idx(j)) - dist2(idx(k)));
          }
          v += l * f[idx(j)];
        }
        f[idx(c)] = v;
      }
    }
  }
};

struct Slice {
  double t = -1.0;
  double A = 1.0, lambda = 0.0;
  std::vector<double> w, wx, wxx, xi, xix, zb;  // zb = w - 1
};

class SliceCache {
 public:
  SliceCache(const Background& bg, const Ops& ops) : bg_(bg), ops_(ops) {}
  const Slice& at(double t) {
    for (auto& s : slots_) {
      if (s.t == t) return s;
    }
    Slice& s = slots_[next_];
    next_ = (next_ + 1) % slots_.size();
    auto b = bg_.at(t);
    s.t = t;
    s.A = b.A;
    s.lambda = b.lambda;
    s.w = std::move(b.w);
    s.xi = std::move(b.xi);
    ops_.dx2(s.w, +1, s.wx, s.wxx);
    s.xix = ops_.dx(s.xi, -1);
    s.zb.resize(s.w.size());
    for (std::size_t i = 0; i < s.w.size(); ++i) s.zb[i] = s.w[i] - 1.0;
    return s;
  }

 private:
  const Background& bg_;
  const Ops& ops_;
  std::array<Slice, 4> slots_;
  std::size_t next_ = 0;
};

// Full variables from the interleaved perturbation y = (du_i, dz_i).
void unpack(const Ops& ops, const Slice& s, const std::vector<double>& y, std::vector<double>& u,
            std::vector<double>& z, std::vector<double>& V) {
  u.resize(ops.m);
  z.resize(ops.m);
  V.resize(ops.m);
  for (std::size_t i = 0; i < ops.m; ++i) {
    u[i] = 1.0 + y[2 * i];
    z[i] = s.zb[i] + y[2 * i + 1];
    V[i] = u[i] + z[i];
  }
}

// u_t, V_t and W for the metric (A u)^2 dx^2 + (A sin x V)^2 g_S.
void raw_rate(const Ops& ops, const Slice& s, const std::vector<double>& u, const std::vector<double>& z,
              const std::vector<double>& V, std::vector<double>& ut, std::vector<double>& Vt,
              std::vector<double>& W) {
  const std::size_t m = ops.m;
  const int q = ops.q;
  const double A2 = s.A * s.A;
  std::vector<double> ux, uxx, Vx, Vxx;
  ops.dx2(u, +1, ux, uxx);
  ops.dx2(V, +1, Vx, Vxx);
  // (u W)_x is expanded so that second derivatives use the compact stencil.
  W.resize(m);
  std::vector<double> Px(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double c = ops.ct[i], cx = -1.0 / (ops.sn[i] * ops.sn[i]);
    const double w = s.w[i], wx = s.wx[i], wxx = s.wxx[i];
    const double U = u[i], Ux = ux[i], v = V[i], vx = Vx[i];
    const double v2 = v * v, v3 = v2 * v;
    const double G = 1.0 / U - w * w * U / v2;
    const double bracket = (c * G + vx / (v * U) - U * w * wx / v2) / U;
    W[i] = (Ux / (U * U * U) - q * bracket) / A2;
    const double Gx = -Ux / (U * U) - (2.0 * w * wx * U + w * w * Ux) / v2 + 2.0 * w * w * U * vx / v3;
    const double b1x = cx * G + c * Gx;
    const double b2x = Vxx[i] / (v * U) - vx * (vx * U + v * Ux) / (v2 * U * U);
    const double b3x = -(Ux * w * wx + U * wx * wx + U * w * wxx) / v2 + 2.0 * U * w * wx * vx / v3;
    Px[i] = (uxx[i] / (U * U) - 2.0 * Ux * Ux / (U * U * U) - q * (b1x + b2x + b3x)) / A2 + Ux * s.xi[i] +
            U * s.xix[i];
  }
  ut.resize(m);
  Vt.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double c = ops.ct[i];
    const double Y = W[i] + s.xi[i];
    const double u2 = u[i] * u[i];
    const double krad =
        -((-V[i] + 2.0 * c * Vx[i] + Vxx[i]) - (c * V[i] + Vx[i]) * ux[i] / u[i]) / (A2 * u2 * V[i]);
    const double kfib = (-z[i] * (u[i] + V[i]) / (ops.sn[i] * ops.sn[i]) + V[i] * V[i] -
                         2.0 * c * V[i] * Vx[i] - Vx[i] * Vx[i]) /
                        (A2 * u2 * V[i] * V[i]);
    ut[i] = -q * u[i] * krad + Px[i] - s.lambda * u[i];
    Vt[i] = -V[i] * krad - (q - 1) * V[i] * kfib + (c * V[i] + Vx[i]) * Y - s.lambda * V[i];
  }
}

// Curvatures of rho^2 dx^2 + phi^2 g_S through u = rho, V = phi / sin x, both
// even, so that the tip cells keep full order.
void regular_curvature(const Ops& ops, const MetricGrid1D& g, std::vector<double>& krad,
                       std::vector<double>& kfib) {
  const std::size_t m = ops.m;
  std::vector<double> V(m), ux, uxx, Vx, Vxx;
  for (std::size_t i = 0; i < m; ++i) V[i] = g.phi[i] / ops.sn[i];
  ops.dx2(g.rho, +1, ux, uxx);
  ops.dx2(V, +1, Vx, Vxx);
  krad.resize(m);
  kfib.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double c = ops.ct[i], u = g.rho[i], u2 = u * u;
    krad[i] = -((-V[i] + 2.0 * c * Vx[i] + Vxx[i]) - (c * V[i] + Vx[i]) * ux[i] / u) / (u2 * V[i]);
    kfib[i] = ((u - V[i]) * (u + V[i]) / (ops.sn[i] * ops.sn[i]) + V[i] * V[i] - 2.0 * c * V[i] * Vx[i] -
               Vx[i] * Vx[i]) /
              (u2 * V[i] * V[i]);
  }
}

// Rate of y: F(bg + y) - F(bg); dz rows at the tip cells are zero.
class System {
 public:
  System(const Background& bg, const Ops& ops) : ops_(ops), cache_(bg, ops) {}

  const Slice& slice(double t) { return cache_.at(t); }

  void closed(std::vector<double>& y) const { ops_.close(y, 2, 1); }

  bool positive(double t, const std::vector<double>& y) {
    const auto& s = cache_.at(t);
    for (std::size_t i = 0; i < ops_.m; ++i) {
      const double u = 1.0 + y[2 * i], V = u + s.zb[i] + y[2 * i + 1];
      if (!(u > 0.0) || !(V > 0.0)) return false;
    }
    return true;
  }

  void rate(double t, std::vector<double> y, std::vector<double>& out, std::vector<double>* W = nullptr) {
    const auto& s = cache_.at(t);
    if (bg_t_ != t) {
      std::vector<double> zero(2 * ops_.m, 0.0);
      eval(s, zero, bg_ut_, bg_vt_, bg_w_);
      bg_t_ = t;
    }
    closed(y);
    std::vector<double> ut, vt, w;
    eval(s, y, ut, vt, w);
    out.assign(2 * ops_.m, 0.0);
    for (std::size_t i = 0; i < ops_.m; ++i) {
      out[2 * i] = ut[i] - bg_ut_[i];
      out[2 * i + 1] = (vt[i] - ut[i]) - (bg_vt_[i] - bg_ut_[i]);
    }
    for (std::size_t i : {std::size_t{0}, ops_.m - 1}) out[2 * i + 1] = 0.0;
    if (W) *W = std::move(w);
  }

 private:
  void eval(const Slice& s, const std::vector<double>& y, std::vector<double>& ut, std::vector<double>& vt,
            std::vector<double>& w) const {
    std::vector<double> u, z, V;
    unpack(ops_, s, y, u, z, V);
    raw_rate(ops_, s, u, z, V, ut, vt, w);
  }

  const Ops& ops_;
  SliceCache cache_;
  double bg_t_ = -1.0;
  std::vector<double> bg_ut_, bg_vt_, bg_w_;
};

// Banded finite-difference Jacobian of the rate, entries J_ij.
void jacobian(System& sys, double t, const std::vector<double>& y, const std::vector<double>& f0,
              std::vector<Eigen::Triplet<double>>& trip) {
  const std::size_t na = y.size();
  const std::size_t reach = 2 * kBand + 1;
  const std::size_t colours = 2 * reach + 1;
  trip.clear();
  std::vector<double> pert, fp;
  for (std::size_t c = 0; c < colours; ++c) {
    pert = y;
    for (std::size_t j = c; j < na; j += colours) pert[j] += 1e-7;
    sys.rate(t, pert, fp);
    for (std::size_t j = c; j < na; j += colours) {
      const std::size_t lo = j >= reach ? j - reach : 0, hi = std::min(na - 1, j + reach);
      for (std::size_t i = lo; i <= hi; ++i) {
        const double v = (fp[i] - f0[i]) / 1e-7;
        if (v != 0.0) trip.emplace_back(i, j, v);
      }
    }
  }
}

std::vector<double> record_times(const DeTurckOptions& o) {
  std::vector<double> out;
  for (int k = 1; k <= o.records; ++k) out.push_back(o.t0 + (o.T - o.t0) * k / o.records);
  out.back() = o.T;
  return out;
}

double tip_value(const Ops& ops, const std::vector<double>& f, int tip) {
  const std::size_t i0 = tip == 0 ? 0 : ops.m - 1, i1 = tip == 0 ? 1 : ops.m - 2;
  const double z0 = ops.dist2(i0), z1 = ops.dist2(i1);
  return (z1 * f[i0] - z0 * f[i1]) / (z1 - z0);
}

MetricGrid1D with_fields(const MetricGrid1D& nodes, std::vector<double> rho, std::vector<double> phi) {
  MetricGrid1D g = nodes;
  g.rho = std::move(rho);
  g.phi = std::move(phi);
  return g;
}

// Lagrange derivative weights at t[c] over the points t[lo..lo+4].
std::array<double, 5> derivative_weights(const std::vector<double>& t, std::size_t lo, std::size_t c) {
  std::array<double, 5> wgt{};
  for (std::size_t j = 0; j < 5; ++j) {
    double denom = 1.0;
    for (std::size_t k = 0; k < 5; ++k) {
      if (k != j) denom *= t[lo + j] - t[lo + k];
    }
    double num = 0.0;
    for (std::size_t l = 0; l < 5; ++l) {
      if (l == j) continue;
      double prod = 1.0;
      for (std::size_t k = 0; k < 5; ++k) {
        if (k != j && k != l) prod *= t[c] - t[lo + k];
      }
      num += prod;
    }
    wgt[j] = num / denom;
  }
  return wgt;
}

class RoundBackground final : public Background {
 public:
  RoundBackground(double r, int n, int res, double stretch) : r_(r) {
    nodes_ = flow::make_nodes(n, res, stretch);
    N_ = n - 1;
  }
  BackgroundSlice at(double t) const override {
    BackgroundSlice s;
    const double A2 = r_ * r_ - 2.0 * (N_ - 1) * t;
    if (!(A2 > 0.0)) throw InvalidArgument("time beyond the round background's extinction");
    s.A = std::sqrt(A2);
    s.lambda = -(N_ - 1) / A2;
    s.w.assign(nodes_.size(), 1.0);
    s.xi.assign(nodes_.size(), 0.0);
    return s;
  }
  double t_end() const override { return r_ * r_ / (2.0 * (N_ - 1)); }
  std::string id() const override {
    std::ostringstream os;
    os << "round_S" << N_ << "_r" << r_ << "_m" << nodes_.size();
    return os.str();
  }
  double rm_lower_bound(double, double) const override { return 1.0 / (r_ * r_); }

 private:
  double r_;
  int N_;
};

class TrajectoryBackground final : public Background {
 public:
  explicit TrajectoryBackground(const flow::FlowTrajectory& tr) {
    if (tr.states.empty()) throw InvalidArgument("empty background trajectory");
    nodes_ = tr.initial;
    nodes_.rho.clear();
    nodes_.phi.clear();
    times_.push_back(0.0);
    add(tr.initial);
    const auto c0 = flow::grid_curvature(tr.initial);
    rm_.push_back(*std::min_element(c0.rm_min.begin(), c0.rm_min.end()));
    for (std::size_t k = 0; k < tr.states.size(); ++k) {
      if (!(tr.times[k] > times_.back())) continue;
      times_.push_back(tr.times[k]);
      add(tr.states[k]);
      rm_.push_back(tr.rm_min[k]);
    }
    if (times_.size() < 2) throw InvalidArgument("background trajectory needs at least two times");
    std::ostringstream os;
    os << "trajectory_n" << nodes_.n << "_m" << nodes_.size() << "_T" << times_.back();
    id_ = os.str();
  }

  // Cubic Lagrange interpolation over the four records around t.
  BackgroundSlice at(double t) const override {
    if (t < 0.0 || t > times_.back()) throw InvalidArgument("time outside the background trajectory");
    const std::size_t n = times_.size();
    std::size_t k = std::upper_bound(times_.begin(), times_.end(), t) - times_.begin();
    k = std::clamp<std::size_t>(k, 1, n - 1);
    const std::size_t width = std::min<std::size_t>(4, n);
    const std::size_t lo = std::min(k > 2 ? k - 2 : 0, n - width);
    std::vector<double> c(width, 1.0);
    for (std::size_t j = 0; j < width; ++j) {
      for (std::size_t l = 0; l < width; ++l) {
        if (l != j) c[j] *= (t - times_[lo + l]) / (times_[lo + j] - times_[lo + l]);
      }
    }
    BackgroundSlice s;
    s.A = s.lambda = 0.0;
    const std::size_t m = slices_[lo].w.size();
    s.w.assign(m, 0.0);
    s.xi.assign(m, 0.0);
    for (std::size_t j = 0; j < width; ++j) {
      const auto& a = slices_[lo + j];
      s.A += c[j] * a.A;
      s.lambda += c[j] * a.lambda;
      for (std::size_t i = 0; i < m; ++i) {
        s.w[i] += c[j] * a.w[i];
        s.xi[i] += c[j] * a.xi[i];
      }
    }
    return s;
  }
  double t_end() const override { return times_.back(); }
  std::string id() const override { return id_; }
  double rm_lower_bound(double t0, double t1) const override {
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < times_.size(); ++k) {
      const bool inside = times_[k] >= t0 && times_[k] <= t1;
      const bool brackets = (k + 1 < times_.size() && times_[k] < t0 && times_[k + 1] > t0);
      if (inside || brackets) lo = std::min(lo, rm_[k]);
    }
    return lo;
  }

 private:
  void add(const MetricGrid1D& g) {
    const double L = flow::axis_length(g);
    const double A = L / pi;
    for (double r : g.rho) {
      if (std::abs(r - A) > 1e-8 * A) throw InvalidArgument("background trajectory is not in the arclength gauge");
    }
    const auto f = flow::flow_rhs(g, g.phi, L);
    BackgroundSlice s;
    s.A = A;
    s.lambda = f.L_t / L;
    s.xi = f.xi;
    s.w.resize(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) s.w[i] = g.phi[i] / (A * std::sin(g.x[i]));
    slices_.push_back(std::move(s));
  }

  std::vector<double> times_, rm_;
  std::vector<BackgroundSlice> slices_;
  std::string id_;
};

}  // namespace

std::unique_ptr<Background> round_background(double radius, int n, int resolution, double stretch) {
  if (!(radius > 0.0)) throw InvalidArgument("radius must be positive");
  if (n < 3) throw InvalidArgument("round background needs n >= 3");
  return std::make_unique<RoundBackground>(radius, n, resolution, stretch);
}

std::unique_ptr<Background> trajectory_background(const flow::FlowTrajectory& tr) {
  return std::make_unique<TrajectoryBackground>(tr);
}

void DeTurckOptions::validate() const {
  if (!(T > t0) || t0 < 0.0) throw InvalidArgument("need 0 <= t0 < T");
  if (!(rtol > 0.0) || !(atol > 0.0)) throw InvalidArgument("tolerances must be positive");
  if (!(dt_init > 0.0) || !(dt_min > 0.0) || dt_max < 0.0) throw InvalidArgument("bad step-size limits");
  if (max_steps < 1 || records < 1) throw InvalidArgument("max_steps and records must be positive");
  if (!(eps_cap > 0.0) || eps_cap >= 1.0) throw InvalidArgument("eps_cap must lie in (0, 1)");
}

double sup_norm(const PerturbationField& h, int q) {
  double s = 0.0;
  for (std::size_t i = 0; i < h.h_rr.size(); ++i) {
    s = std::max(s, std::sqrt(h.h_rr[i] * h.h_rr[i] + q * h.h_ff[i] * h.h_ff[i]));
  }
  return s;
}

PerturbedTrajectory deturck_evolve(const Background& bg, const PerturbationField& h0, const DeTurckOptions& opts) {
  opts.validate();
  const Ops ops(bg.nodes());
  const std::size_t m = ops.m;
  const int q = ops.q;
  if (h0.h_rr.size() != m || h0.h_ff.size() != m) throw InvalidArgument("perturbation does not match the grid");
  if (opts.T > bg.t_end()) throw InvalidArgument("T beyond the background's time range");
  if (bg.rm_lower_bound(opts.t0, opts.T) < -1.0) {
    throw InvalidArgument("background curvature operator drops below -1");
  }
  const double h0_sup = sup_norm(h0, q);
  if (!(h0_sup <= opts.eps_cap)) throw InvalidArgument("initial perturbation exceeds the cap");
  for (std::size_t i = 0; i < m; ++i) {
    if (!std::isfinite(h0.h_rr[i]) || !std::isfinite(h0.h_ff[i])) throw InvalidArgument("non-finite perturbation");
  }
  {
    std::vector<double> d(m);
    for (std::size_t i = 0; i < m; ++i) d[i] = h0.h_rr[i] - h0.h_ff[i];
    for (int tip : {0, 1}) {
      if (std::abs(tip_value(ops, d, tip)) > opts.tip_tolerance) {
        throw InvalidArgument("perturbation opens a cone at a tip (h_rr != h_ff)");
      }
    }
  }

  System sys(bg, ops);
  std::vector<double> y(2 * m);
  {
    const auto& s = sys.slice(opts.t0);
    for (std::size_t i = 0; i < m; ++i) {
      const double u = std::sqrt(1.0 + h0.h_rr[i]);
      const double V = s.w[i] * std::sqrt(1.0 + h0.h_ff[i]);
      y[2 * i] = u - 1.0;
      y[2 * i + 1] = (V - u) - s.zb[i];
    }
    sys.closed(y);
  }

  PerturbedTrajectory out;
  out.background_id = bg.id();
  out.rtol = opts.rtol;
  auto record = [&](double t) {
    std::vector<double> f, W;
    sys.rate(t, y, f, &W);
    const auto& s = sys.slice(t);
    std::vector<double> u, z, V;
    unpack(ops, s, y, u, z, V);
    PerturbationField p;
    p.time = t;
    p.h_rr.resize(m);
    p.h_ff.resize(m);
    std::vector<double> rho(m), phi(m), Y(m);
    for (std::size_t i = 0; i < m; ++i) {
      p.h_rr[i] = u[i] * u[i] - 1.0;
      p.h_ff[i] = (V[i] * V[i] - s.w[i] * s.w[i]) / (s.w[i] * s.w[i]);
      rho[i] = s.A * u[i];
      phi[i] = s.A * ops.sn[i] * V[i];
      Y[i] = W[i] + s.xi[i];
    }
    out.times.push_back(t);
    out.states.push_back(with_fields(ops.nodes, std::move(rho), std::move(phi)));
    out.h_sup.push_back(sup_norm(p, q));
    out.perturbations.push_back(std::move(p));
    out.fields.push_back({std::move(W), t});
    out.transport.push_back(std::move(Y));
  };
  record(opts.t0);

  const auto targets = record_times(opts);
  std::size_t next = 0;
  double t = opts.t0;
  double dt = opts.dt_init;
  if (opts.dt_max > 0.0) dt = std::min(dt, opts.dt_max);
  std::vector<Eigen::Triplet<double>> trip;
  Eigen::SparseMatrix<double> mat(2 * m, 2 * m);
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  bool analysed = false;
  std::vector<Eigen::Triplet<double>> jac;
  int jac_age = 1 << 20;
  long last_rejected = 0;
  double fact_step = -1.0;
  std::vector<double> f0, ft, k1, k2, y1, f1, ynew;
  Eigen::VectorXd rhs(2 * m), sol;

  const double expo = opts.control == ErrorControl::PerUnitStep ? 1.0 : 0.5;
  while (next < targets.size()) {
    if (out.steps + out.rejected >= opts.max_steps) throw SolverError("DeTurck solver exceeded max_steps");
    const double remaining = targets[next] - t;
    // split the approach to a record time so steps never collapse
    double step = remaining <= dt ? remaining : (remaining < 2.0 * dt ? 0.5 * remaining : dt);
    const bool hits = step >= remaining;
    const double tn = hits ? targets[next] : t + step;
    step = tn - t;

    sys.rate(t, y, f0);
    const double tau = 1e-6 * std::max(1.0, t);
    sys.rate(t + tau, y, ft);
    for (std::size_t i = 0; i < ft.size(); ++i) ft[i] = (ft[i] - f0[i]) / tau;
    // W-method: any matrix J~ keeps the order, so the Jacobian is refreshed
    // every few steps and the factorisation (J~ = J fact_step/step) kept
    // while the step stays within 20%.
    if (jac_age >= 10 || out.rejected != last_rejected) {
      jacobian(sys, t, y, f0, jac);
      jac_age = 0;
      fact_step = -1.0;
      last_rejected = out.rejected;
    }
    ++jac_age;
    if (!(step > 0.8 * fact_step && step < 1.25 * fact_step)) {
      trip.clear();
      for (const auto& e : jac) trip.emplace_back(e.row(), e.col(), -kGamma * step * e.value());
      for (std::size_t i = 0; i < 2 * m; ++i) trip.emplace_back(i, i, 1.0);
      mat.setFromTriplets(trip.begin(), trip.end());
      if (!analysed) {
        lu.analyzePattern(mat);
        analysed = true;
      }
      lu.factorize(mat);
      fact_step = step;
    }
    if (lu.info() != Eigen::Success) throw SolverError("DeTurck stage matrix is singular");

    for (std::size_t i = 0; i < 2 * m; ++i) rhs[i] = f0[i] + kGamma * step * ft[i];
    sol = lu.solve(rhs);
    k1.assign(sol.data(), sol.data() + 2 * m);
    y1 = y;
    for (std::size_t i = 0; i < 2 * m; ++i) y1[i] += step * k1[i];
    sys.closed(y1);
    bool ok = sys.positive(tn, y1);
    double err = 0.0;
    if (ok) {
      sys.rate(tn, y1, f1);
      for (std::size_t i = 0; i < 2 * m; ++i) rhs[i] = f1[i] - 2.0 * k1[i] - kGamma * step * ft[i];
      sol = lu.solve(rhs);
      k2.assign(sol.data(), sol.data() + 2 * m);
      ynew = y;
      for (std::size_t i = 0; i < 2 * m; ++i) ynew[i] += step * (1.5 * k1[i] + 0.5 * k2[i]);
      sys.closed(ynew);
      ok = sys.positive(tn, ynew);
      const auto& s = sys.slice(tn);
      for (std::size_t i = 0; ok && i < m; ++i) {
        const double u = 1.0 + ynew[2 * i], V = u + s.zb[i] + ynew[2 * i + 1];
        const double eu = std::abs(0.5 * step * (k1[2 * i] + k2[2 * i])) / (opts.atol + opts.rtol * std::abs(u));
        const double ez =
            std::abs(0.5 * step * (k1[2 * i + 1] + k2[2 * i + 1])) / (opts.atol + opts.rtol * std::abs(V));
        err = std::max({err, eu, ez});
      }
      if (opts.control == ErrorControl::PerUnitStep) err /= step;
      if (!std::isfinite(err)) ok = false;
    }
    if (!ok || err > 1.0) {
      ++out.rejected;
      dt = step * (ok ? std::clamp(0.9 * std::pow(err, -expo), 0.1, 0.5) : 0.25);
      if (dt < opts.dt_min) {
        throw SolverError(ok ? "DeTurck step-size underflow" : "DeTurck metric lost positivity");
      }
      continue;
    }
    y = std::move(ynew);
    t = tn;
    ++out.steps;
    record(t);
    if (hits) ++next;
    const double grow = err > 0.0 ? std::clamp(0.8 * std::pow(err, -expo), 0.2, 2.0) : 2.0;
    dt = std::max(dt, step) * grow;
    if (opts.dt_max > 0.0) dt = std::min(dt, opts.dt_max);
  }
  return out;
}

double stability_ratio(const PerturbedTrajectory& a, const PerturbedTrajectory& b) {
  if (a.background_id != b.background_id) throw InvalidArgument("runs use different backgrounds");
  if (a.perturbations.empty() || b.perturbations.empty()) throw InvalidArgument("empty trajectory");
  const int q = a.states.front().fiber_dim();
  auto diff = [&](const PerturbationField& x, const PerturbationField& y) {
    PerturbationField d;
    d.h_rr.resize(x.h_rr.size());
    d.h_ff.resize(x.h_ff.size());
    for (std::size_t i = 0; i < x.h_rr.size(); ++i) {
      d.h_rr[i] = x.h_rr[i] - y.h_rr[i];
      d.h_ff[i] = x.h_ff[i] - y.h_ff[i];
    }
    return sup_norm(d, q);
  };
  if (a.times.front() != b.times.front()) throw InvalidArgument("runs start at different times");
  const double d0 = diff(a.perturbations.front(), b.perturbations.front());
  if (!(d0 > 0.0)) throw InvalidArgument("zero initial difference: stability ratio undefined");
  double worst = 0.0;
  std::size_t j = 0;
  for (std::size_t i = 0; i < a.times.size(); ++i) {
    while (j < b.times.size() && b.times[j] < a.times[i]) ++j;
    if (j < b.times.size() && b.times[j] == a.times[i]) {
      worst = std::max(worst, diff(a.perturbations[i], b.perturbations[j]) / d0);
    }
  }
  return worst;
}

double amplification(const PerturbedTrajectory& p) {
  if (p.h_sup.empty() || !(p.h_sup.front() > 0.0)) {
    throw InvalidArgument("zero initial perturbation: amplification undefined");
  }
  return *std::max_element(p.h_sup.begin(), p.h_sup.end()) / p.h_sup.front();
}

PerturbationField final_perturbation(const PerturbedTrajectory& p) {
  if (p.perturbations.empty()) throw InvalidArgument("empty trajectory");
  return p.perturbations.back();
}

double flow_residual(const std::vector<double>& times, const std::vector<MetricGrid1D>& metrics,
                     const std::vector<std::vector<double>>* fields, std::vector<double>* profile) {
  if (times.size() != metrics.size() || times.size() < 5) {
    throw InvalidArgument("flow residual needs at least five matching time levels");
  }
  if (fields && fields->size() != times.size()) throw InvalidArgument("field history does not match the times");
  const Ops ops(metrics.front());
  const int q = ops.q;
  double worst = 0.0;
  if (profile) profile->assign(ops.m, 0.0);
  for (std::size_t c = 2; c + 2 < times.size(); ++c) {
    const auto wgt = derivative_weights(times, c - 2, c);
    const auto& g = metrics[c];
    std::vector<double> krad, kfib;
    regular_curvature(ops, g, krad, kfib);
    const auto rx = ops.dx(g.rho, +1);
    const auto fx = ops.dx(g.phi, -1);
    std::vector<double> Yx;
    if (fields) Yx = ops.dx((*fields)[c], -1);
    for (std::size_t i = 0; i < ops.m; ++i) {
      double rt = 0.0, ft = 0.0;
      for (std::size_t j = 0; j < 5; ++j) {
        rt += wgt[j] * metrics[c - 2 + j].rho[i];
        ft += wgt[j] * metrics[c - 2 + j].phi[i];
      }
      const double Y = fields ? (*fields)[c][i] : 0.0;
      const double yx = fields ? Yx[i] : 0.0;
      const double err = 2.0 * (rt / g.rho[i] + q * krad[i] - Y * rx[i] / g.rho[i] - yx);
      const double eff = 2.0 * (ft / g.phi[i] + krad[i] + (q - 1) * kfib[i] - Y * fx[i] / g.phi[i]);
      const double r = std::sqrt(err * err + q * eff * eff);
      worst = std::max(worst, r);
      if (profile) (*profile)[i] = std::max((*profile)[i], r);
    }
  }
  return worst;
}

PullbackResult deturck_ode_pullback(const PerturbedTrajectory& p) {
  const std::size_t K = p.times.size();
  if (K < 5 || p.transport.size() != K) throw InvalidArgument("pullback needs W at all recorded times");
  const MetricGrid1D& nodes = p.states.front();
  const Ops ops(nodes);
  const std::size_t m = ops.m;

  // Field at time t by cubic interpolation over the four nearest levels.
  auto field_at = [&](std::size_t k, double t) {
    std::size_t lo = k >= 2 ? k - 2 : 0;
    lo = std::min(lo, K - 4);
    std::vector<double> f(m, 0.0);
    for (std::size_t j = 0; j < 4; ++j) {
      double l = 1.0;
      for (std::size_t i = 0; i < 4; ++i) {
        if (i != j) l *= (t - p.times[lo + i]) / (p.times[lo + j] - p.times[lo + i]);
      }
      for (std::size_t i = 0; i < m; ++i) f[i] += l * p.transport[lo + j][i];
    }
    return f;
  };
  // Psi = x + sin(x) E with E even; dE/dt = -Y(Psi) / sin x. The division
  // amplifies noise in Y at the tip cells, which are extrapolated instead.
  auto velocity = [&](const std::vector<double>& Y, const std::vector<double>& E) {
    std::vector<double> v(m);
    for (std::size_t i = 0; i < m; ++i) v[i] = -ops.shifted(Y, -1, i, ops.sn[i] * E[i]) / ops.sn[i];
    ops.extend(v, kTipCells);
    return v;
  };

  std::vector<std::vector<double>> E(K);
  E[K - 1].assign(m, 0.0);
  for (std::size_t k = K - 1; k >= 1; --k) {
    const double t1 = p.times[k], t0 = p.times[k - 1], dt = t1 - t0;
    const auto& P = E[k];
    const auto Ymid = field_at(k, t1 - 0.5 * dt);
    const auto v1 = velocity(p.transport[k], P);
    std::vector<double> s(m);
    for (std::size_t i = 0; i < m; ++i) s[i] = P[i] - 0.5 * dt * v1[i];
    const auto v2 = velocity(Ymid, s);
    for (std::size_t i = 0; i < m; ++i) s[i] = P[i] - 0.5 * dt * v2[i];
    const auto v3 = velocity(Ymid, s);
    for (std::size_t i = 0; i < m; ++i) s[i] = P[i] - dt * v3[i];
    const auto v4 = velocity(p.transport[k - 1], s);
    E[k - 1].resize(m);
    for (std::size_t i = 0; i < m; ++i) E[k - 1][i] = P[i] - dt / 6.0 * (v1[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i]);
  }

  PullbackResult out;
  out.times = p.times;
  out.metrics.reserve(K);
  out.psi.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    const auto& g = p.states[k];
    const auto Ex = ops.dx(E[k], +1);
    std::vector<double> rho(m), phi(m), psi(m);
    for (std::size_t i = 0; i < m; ++i) {
      const double d = ops.sn[i] * E[k][i];
      psi[i] = nodes.x[i] + d;
      const double dpsi = 1.0 + std::cos(nodes.x[i]) * E[k][i] + ops.sn[i] * Ex[i];
      rho[i] = ops.shifted(g.rho, +1, i, d) * dpsi;
      phi[i] = ops.shifted(g.phi, -1, i, d);
    }
    out.psi.push_back(std::move(psi));
    out.metrics.push_back(with_fields(nodes, std::move(rho), std::move(phi)));
  }
  out.ricci_residual = flow_residual(out.times, out.metrics);
  out.deturck_residual = flow_residual(p.times, p.states, &p.transport);
  return out;
}

PerturbationField conformal_perturbation(const MetricGrid1D& nodes, double eps) {
  PerturbationField h;
  h.h_rr.assign(nodes.size(), eps);
  h.h_ff.assign(nodes.size(), eps);
  return h;
}

PerturbationField perturbation_from(const MetricGrid1D& nodes, const std::function<double(double)>& h_rr,
                                    const std::function<double(double)>& h_ff) {
  PerturbationField h;
  for (double x : nodes.x) {
    h.h_rr.push_back(h_rr(x));
    h.h_ff.push_back(h_ff(x));
  }
  return h;
}

void write_history_csv(const PerturbedTrajectory& p, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw InvalidArgument("cannot open " + path);
  f.precision(17);
  f << "t,h_sup\n";
  for (std::size_t k = 0; k < p.times.size(); ++k) f << p.times[k] << ',' << p.h_sup[k] << '\n';
}

nlohmann::json stability_summary(double lambda_meas, double eps, const std::string& background_id) {
  return {{"Lambda_meas", lambda_meas}, {"eps", eps}, {"background_id", background_id}};
}

}  // namespace ricci_lab::deturck
