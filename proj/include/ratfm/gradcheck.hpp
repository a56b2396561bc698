#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ratfm/tensor.hpp"

namespace ratfm {

struct GradcheckEntry {
  std::string component;
  std::size_t checked = 0;  // coordinates compared
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct GradcheckOptions {
  std::uint64_t seed = 7;
  double step = 1e-5;
  double layer_tolerance = 1e-4;
  double model_tolerance = 1e-3;
  double model_fraction = 0.01;  // share of model parameters sampled end to end
  /// Component whose backward rule is replaced by a wrong one (testing aid).
  std::string corrupt_component;
};

/// |analytic - numeric| / max(|analytic|, |numeric|, floor). check_gradient sets the floor to
/// 1e-4 of the largest numeric gradient in the component, so coordinates whose true gradient
/// is zero are judged against the component's scale instead of finite-difference roundoff.
double relative_error(double analytic, double numeric, double floor);

/// Compares the reverse-mode gradient of the scalar `loss()` with central differences for
/// the chosen coordinates of `inputs` (all coordinates when `coords` is empty). A coordinate
/// that fails at `step` is retried at step/10 and step/100 and keeps its best result.
struct CoordinateRef {
  std::size_t tensor = 0;
  std::size_t index = 0;
};
GradcheckEntry check_gradient(const std::string& component, const std::function<Tensor()>& loss,
                              std::vector<Tensor> inputs, double step, double tolerance,
                              std::vector<CoordinateRef> coords = {});

/// Component names in report order.
const std::vector<std::string>& gradcheck_components();

/// Every differentiable primitive and layer once, then the full model at channels 4 on an
/// 8x8 fine grid.
std::vector<GradcheckEntry> run_gradcheck(const GradcheckOptions& options = {});

/// Identity on values whose gradient rule scales the incoming gradient by `factor`.
Tensor faulty_identity(const Tensor& x, double factor);

}  // namespace ratfm
