#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "vartex/autodiff.hpp"
#include "vartex/parameters.hpp"

namespace vartex::nn {

struct GradCheckReport {
  /// Max over checked elements of |analytic - numeric| / max(1, |analytic|), per input.
  std::vector<double> max_rel_error;
  double worst = 0.0;
  std::size_t checked = 0;
  double tolerance = 1e-4;
  bool passed() const { return worst < tolerance; }
};

using OpFn = std::function<Var(Graph&, std::span<const Var>)>;

/// Central-difference check of `op` at `inputs`. Non-scalar outputs are
/// contracted with a fixed random cotangent so a single backward covers all
/// outputs. At most `max_elements` entries per input are probed.
GradCheckReport grad_check(const OpFn& op, const std::vector<Tensor>& inputs, double eps = 1e-4,
                           double tolerance = 1e-4,
                           std::size_t max_elements = std::numeric_limits<std::size_t>::max(),
                           std::uint64_t seed = 0);

struct ParameterProbe {
  std::string name;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct ParameterCheckReport {
  std::vector<ParameterProbe> probes;
  double worst = 0.0;
  double tolerance = 1e-4;
  bool passed() const { return worst < tolerance; }
};

/// Checks d(loss)/d(parameter) for `samples` (parameter, element) pairs drawn
/// uniformly over all elements of `store`. `loss` must build a scalar from the
/// store's current values each time it is called.
ParameterCheckReport grad_check_parameters(ParameterStore& store, const std::function<Var(Graph&)>& loss,
                                           std::size_t samples, std::uint64_t seed, double eps = 1e-4,
                                           double tolerance = 1e-4);

}  // namespace vartex::nn
