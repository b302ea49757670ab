#include "ricci_lab/ode.hpp"

#include <algorithm>
#include <cmath>

namespace ricci_lab::ode {

namespace {
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
// b - b*, the embedded 4th-order difference
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;
}  // namespace

DormandPrince::DormandPrince(Rhs rhs, std::size_t dim, Tolerances tol)
    : rhs_(std::move(rhs)), dim_(dim), tol_(tol), h_(tol.h_init) {
  for (auto& k : k_) k.assign(dim_, 0.0);
  ytmp_.assign(dim_, 0.0);
  ynew_.assign(dim_, 0.0);
}

bool DormandPrince::advance(double& t, std::vector<double>& y, double t_end,
                            const std::function<bool(double, std::span<const double>)>& guard) {
  const std::size_t n = dim_;
  auto f = [&](double tt, const std::vector<double>& yy, std::vector<double>& out) {
    rhs_(tt, std::span<const double>(yy), std::span<double>(out));
  };
  f(t, y, k_[0]);
  while (t < t_end) {
    if (stats_.accepted + stats_.rejected > tol_.max_steps) return false;
    double h = std::min(h_, t_end - t);
    const bool last = (h == t_end - t);
    for (std::size_t i = 0; i < n; ++i) ytmp_[i] = y[i] + h * a21 * k_[0][i];
    f(t + c2 * h, ytmp_, k_[1]);
    for (std::size_t i = 0; i < n; ++i) ytmp_[i] = y[i] + h * (a31 * k_[0][i] + a32 * k_[1][i]);
    f(t + c3 * h, ytmp_, k_[2]);
    for (std::size_t i = 0; i < n; ++i)
      ytmp_[i] = y[i] + h * (a41 * k_[0][i] + a42 * k_[1][i] + a43 * k_[2][i]);
    f(t + c4 * h, ytmp_, k_[3]);
    for (std::size_t i = 0; i < n; ++i)
      ytmp_[i] = y[i] + h * (a51 * k_[0][i] + a52 * k_[1][i] + a53 * k_[2][i] + a54 * k_[3][i]);
    f(t + c5 * h, ytmp_, k_[4]);
    for (std::size_t i = 0; i < n; ++i)
      ytmp_[i] = y[i] + h * (a61 * k_[0][i] + a62 * k_[1][i] + a63 * k_[2][i] + a64 * k_[3][i] +
                             a65 * k_[4][i]);
    f(t + h, ytmp_, k_[5]);
    for (std::size_t i = 0; i < n; ++i)
      ynew_[i] = y[i] + h * (b1 * k_[0][i] + b3 * k_[2][i] + b4 * k_[3][i] + b5 * k_[4][i] +
                             b6 * k_[5][i]);
    f(t + h, ynew_, k_[6]);

    double err = 0.0;
    bool finite = true;
    for (std::size_t i = 0; i < n; ++i) {
      const double ei = h * (e1 * k_[0][i] + e3 * k_[2][i] + e4 * k_[3][i] + e5 * k_[4][i] +
                             e6 * k_[5][i] + e7 * k_[6][i]);
      const double sc = tol_.atol + tol_.rtol * std::max(std::abs(y[i]), std::abs(ynew_[i]));
      const double r = ei / sc;
      if (!std::isfinite(r)) finite = false;
      err += r * r;
    }
    err = std::sqrt(err / static_cast<double>(n));
    if (finite && err <= 1.0) {
      t = last ? t_end : t + h;
      y.swap(ynew_);
      std::swap(k_[0], k_[6]);
      ++stats_.accepted;
      if (guard && !guard(t, std::span<const double>(y))) return false;
      const double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
      if (!last || fac < 1.0) h_ = h * fac;
    } else {
      ++stats_.rejected;
      const double fac = finite ? std::clamp(0.9 * std::pow(err, -0.25), 0.1, 0.9) : 0.1;
      h_ = h * fac;
      if (h_ < tol_.h_min) return false;
    }
  }
  return true;
}

}  // namespace ricci_lab::ode
