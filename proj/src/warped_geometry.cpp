#include "ricci_lab/warped_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "ricci_lab/errors.hpp"

namespace ricci_lab::geometry {

namespace {

void check_margin(double x, int index) {
  if (!(std::abs(std::sin(x)) >= kStratumMargin) || x <= 0.0 || x >= std::numbers::pi) {
    throw SingularPointError("coordinate x_" + std::to_string(index) + " = " + std::to_string(x) +
                             " lies on or too close to a singular stratum");
  }
}

CurvatureReport make_report(std::vector<double> point, std::vector<std::vector<double>> const& K) {
  const std::size_t d = K.size();
  CurvatureReport r;
  r.point = std::move(point);
  r.sectional_min = std::numeric_limits<double>::infinity();
  r.sectional_max = -std::numeric_limits<double>::infinity();
  r.ricci_eigs.assign(d, 0.0);
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = 0; b < d; ++b) {
      if (a == b) continue;
      r.ricci_eigs[a] += K[a][b];
      r.sectional_min = std::min(r.sectional_min, K[a][b]);
      r.sectional_max = std::max(r.sectional_max, K[a][b]);
    }
  }
  // Operator is diagonal on {e_a ^ e_b}.
  r.rm_operator_min_eig = r.sectional_min;
  r.scalar = 0.0;
  for (double v : r.ricci_eigs) r.scalar += v;
  std::sort(r.ricci_eigs.begin(), r.ricci_eigs.end());
  return r;
}

}  // namespace

void SuspensionSpec::validate() const {
  if (n < 3) throw InvalidArgument("suspension requires n >= 3, got " + std::to_string(n));
  if (beta.size() > static_cast<std::size_t>(n - 1)) {
    throw InvalidArgument("beta has " + std::to_string(beta.size()) + " entries, at most n-1 = " +
                          std::to_string(n - 1) + " allowed");
  }
  for (double b : beta) {
    if (!(b > 0.0 && b <= 1.0)) {
      throw InvalidArgument("beta entries must lie in (0,1], got " + std::to_string(b));
    }
  }
}

std::vector<double> SuspensionSpec::padded_beta() const {
  std::vector<double> out = beta;
  out.resize(static_cast<std::size_t>(n - 1), 1.0);
  return out;
}

void WarpLayer::validate() const {
  if (!(beta > 0.0 && beta <= 1.0)) throw InvalidArgument("layer beta must lie in (0,1]");
  if (fiber_dim < 1) throw InvalidArgument("layer fiber dimension must be >= 1");
  if (!std::isfinite(fiber_rm_min)) throw InvalidArgument("layer fiber_rm_min must be finite");
}

SuspensionChain::SuspensionChain(SuspensionSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  beta_ = spec_.padded_beta();
  const int d = dimension();
  for (int i = 1; i <= d - 1; ++i) {
    WarpLayer layer;
    layer.beta = beta_[i - 1];
    layer.fiber_dim = d - i;
    layer.fiber_rm_min = 1.0;
    layers_.push_back(layer);
    for (int j = i + 1; j <= d; ++j) {
      if (beta_[j - 1] < 1.0) {
        strata_.push_back({i, j});
        break;
      }
    }
  }
}

double SuspensionChain::circle_length() const { return 2.0 * std::numbers::pi * beta_.back(); }

std::vector<double> SuspensionChain::metric_diagonal(std::span<const double> point) const {
  const int d = dimension();
  if (point.size() != static_cast<std::size_t>(d)) {
    throw InvalidArgument("point has wrong number of coordinates");
  }
  std::vector<double> g(d);
  double scale = 1.0;
  for (int k = 0; k < d; ++k) {
    scale *= beta_[k] * beta_[k];
    g[k] = scale;
    if (k + 1 < d) {
      const double s = std::sin(point[k]);
      scale *= s * s;
    }
  }
  return g;
}

std::vector<std::vector<double>> SuspensionChain::frame_sectional(
    std::span<const double> point) const {
  const int d = dimension();
  if (point.size() != static_cast<std::size_t>(d)) {
    throw InvalidArgument("point has wrong number of coordinates");
  }
  for (int i = 0; i < d - 1; ++i) check_margin(point[i], i + 1);
  std::vector<std::vector<double>> K(d, std::vector<double>(d, 0.0));
  // Level i (0-based) is beta_i^2 (dx_i^2 + sin^2 x_i h_{i+1}); walk inward-out.
  for (int i = d - 2; i >= 0; --i) {
    const double binv2 = 1.0 / (beta_[i] * beta_[i]);
    const double s = std::sin(point[i]);
    const double c = std::cos(point[i]);
    const double csc2 = 1.0 / (s * s);
    const double cot2 = c * c * csc2;
    for (int a = i + 1; a < d; ++a) {
      for (int b = a + 1; b < d; ++b) {
        K[a][b] = K[b][a] = binv2 * (csc2 * K[a][b] - cot2);
      }
    }
    for (int b = i + 1; b < d; ++b) K[i][b] = K[b][i] = binv2;
  }
  return K;
}

SuspensionChain build_suspension(const SuspensionSpec& spec) { return SuspensionChain(spec); }

CurvatureReport layer_curvature(const WarpLayer& layer) {
  layer.validate();
  check_margin(layer.x, 1);
  const int m = layer.fiber_dim;
  const double binv2 = 1.0 / (layer.beta * layer.beta);
  // Index 0 is the radial direction, 1..m the fiber.
  std::vector<std::vector<double>> K(m + 1, std::vector<double>(m + 1, 0.0));
  const double s = std::sin(layer.x);
  const double c = std::cos(layer.x);
  const double fiber = binv2 * (layer.fiber_rm_min / (s * s) - c * c / (s * s));
  for (int a = 1; a <= m; ++a) {
    K[0][a] = K[a][0] = binv2;
    for (int b = a + 1; b <= m; ++b) K[a][b] = K[b][a] = fiber;
  }
  return make_report({layer.x}, K);
}

CurvatureReport suspension_curvature(const SuspensionChain& chain, std::span<const double> point) {
  return make_report(std::vector<double>(point.begin(), point.end()), chain.frame_sectional(point));
}

double min_rm_over_suspension(const SuspensionSpec& spec,
                              const std::vector<std::vector<double>>& samples) {
  const SuspensionChain chain(spec);
  const auto& layers = chain.layers();
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : samples) {
    if (p.size() != static_cast<std::size_t>(chain.dimension())) {
      throw InvalidArgument("sample has wrong number of coordinates");
    }
    double inner = 1.0;  // unused by the innermost (m = 1) layer
    for (int i = static_cast<int>(layers.size()) - 1; i >= 0; --i) {
      WarpLayer layer = layers[i];
      layer.x = p[i];
      layer.fiber_rm_min = inner;
      inner = layer_curvature(layer).rm_operator_min_eig;
    }
    best = std::min(best, inner);
  }
  return best;
}

std::vector<std::vector<double>> interior_sample_grid(int n, int per_axis, double margin) {
  if (n < 3 || per_axis < 1) throw InvalidArgument("interior_sample_grid: need n >= 3, per_axis >= 1");
  const int d = n - 1;
  std::vector<double> angles(per_axis), circle(per_axis);
  for (int k = 0; k < per_axis; ++k) {
    angles[k] = per_axis == 1 ? std::numbers::pi / 2
                              : margin + (std::numbers::pi - 2 * margin) * k / (per_axis - 1);
    circle[k] = 2.0 * std::numbers::pi * k / per_axis;
  }
  std::vector<std::vector<double>> out;
  std::vector<int> idx(d, 0);
  while (true) {
    std::vector<double> p(d);
    for (int a = 0; a < d; ++a) p[a] = (a + 1 < d) ? angles[idx[a]] : circle[idx[a]];
    out.push_back(std::move(p));
    int a = 0;
    while (a < d && ++idx[a] == per_axis) idx[a++] = 0;
    if (a == d) break;
  }
  return out;
}

void to_json(nlohmann::json& j, const SuspensionSpec& s) { j = {{"n", s.n}, {"beta", s.beta}}; }

void from_json(const nlohmann::json& j, SuspensionSpec& s) {
  j.at("n").get_to(s.n);
  j.at("beta").get_to(s.beta);
}

void to_json(nlohmann::json& j, const CurvatureReport& r) {
  j = {{"point", r.point},
       {"sectional_min", r.sectional_min},
       {"sectional_max", r.sectional_max},
       {"rm_operator_min_eig", r.rm_operator_min_eig},
       {"ricci_eigs", r.ricci_eigs},
       {"scalar", r.scalar}};
}

}  // namespace ricci_lab::geometry
