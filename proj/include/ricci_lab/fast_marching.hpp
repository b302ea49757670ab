#pragma once

// Geodesic distances in the totally geodesic 2-sphere slice ds^2 + phi(s)^2 da^2
// of a cohomogeneity-one metric, by fast marching on an (s, a) grid whose
// end rows are collapsed to the two tips.

#include <vector>

#include <nlohmann/json.hpp>

#include "ricci_lab/metric_grid.hpp"

namespace ricci_lab::flow {

struct SamplePoint {
  double x = 0.0;      // grid coordinate in [0, pi]
  double alpha = 0.0;  // fiber angle in [0, 2 pi)
  bool operator==(const SamplePoint&) const = default;
};

struct FastMarchingOptions {
  int axis_cells = 400;   // cells along the axis, tip to tip
  int angle_nodes = 256;  // periodic angle nodes

  void validate() const;
};

struct DistanceProfile {
  std::vector<SamplePoint> samples;
  std::vector<std::vector<double>> d;  // symmetric, zero diagonal
  double length = 0.0;                 // axis length L
};

// Both tips plus per_axis interior x values times `angles` angles.
std::vector<SamplePoint> default_samples(int per_axis = 7, int angles = 4);

DistanceProfile distance_profile(const MetricGrid1D& grid, const std::vector<SamplePoint>& samples,
                                 const FastMarchingOptions& opts = {});

// sup |d1 - d2| over sample pairs; throws InvalidArgument unless the sample
// sets agree.
double gh_estimate(const DistanceProfile& a, const DistanceProfile& b);

nlohmann::json to_json(const DistanceProfile& p);

}  // namespace ricci_lab::flow
