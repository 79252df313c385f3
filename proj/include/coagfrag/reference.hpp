#pragma once

#include <functional>
#include <stdexcept>
#include <string>

#include "coagfrag/integrator.hpp"

namespace coagfrag {

struct OracleSolution {
  std::function<double(double t, double x)> density;
  /// Valid for 0 <= t < t_max.
  double t_max = 0.0;
  std::string note;
};

/// (1 + a0 t)^2 exp(-(1 + a0 t) x): pure fragmentation with a = a0 x,
/// B = 2 and initial data exp(-x).
double exact_pure_fragmentation(double a0, double t, double x);
OracleSolution pure_fragmentation_oracle(double a0);

/// M2(0) / (1 - 2 K0 M2(0) t): lambda = 2, alpha = 1 (K = 2 K0 x y), no
/// fragmentation.
double multiplicative_M2(double K0, double M2_0, double t);
/// 1 / (2 K0 M2(0)).
double multiplicative_gel_time(double K0, double M2_0);

class ResourceCapExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FineReferenceOptions {
  /// Cell count relative to the configured grid.
  double resolution_factor = 4.0;
  std::size_t max_cells = 2000;
  /// Fixed step; rounded down so that output strides are whole steps.
  double dt = 1e-3;
};

/// Uniform grid over the configured size range, fixed-dt Heun with the same
/// operators. The initial profile is projected afresh on the fine grid.
TimeSeries fine_reference(const RunConfig& config, const FineReferenceOptions& options = {});

}  // namespace coagfrag
