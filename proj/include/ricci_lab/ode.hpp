#pragma once

// Adaptive Dormand-Prince 5(4) integrator for small non-stiff systems.

#include <functional>
#include <span>
#include <vector>

namespace ricci_lab::ode {

using Rhs = std::function<void(double t, std::span<const double> y, std::span<double> dydt)>;

struct Tolerances {
  double rtol = 1e-10;
  double atol = 1e-14;
  double h_init = 1e-6;
  double h_min = 1e-14;
  long max_steps = 10'000'000;
};

struct StepStats {
  long accepted = 0;
  long rejected = 0;
};

class DormandPrince {
 public:
  DormandPrince(Rhs rhs, std::size_t dim, Tolerances tol = {});

  // Advance y from t to t_end (t_end > t). Returns false (leaving y at the
  // last accepted state and t at its time) if `guard` rejects a state or the
  // step size underflows. `guard` sees every accepted state.
  bool advance(double& t, std::vector<double>& y, double t_end,
               const std::function<bool(double, std::span<const double>)>& guard = {});

  const StepStats& stats() const { return stats_; }
  double step_size() const { return h_; }

 private:
  Rhs rhs_;
  std::size_t dim_;
  Tolerances tol_;
  double h_;
  StepStats stats_;
  std::vector<double> k_[7], ytmp_, ynew_;
};

}  // namespace ricci_lab::ode
