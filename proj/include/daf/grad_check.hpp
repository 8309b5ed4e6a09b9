#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "daf/tensor.hpp"

namespace daf {

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Coordinates probed per parameter tensor; 0 means every coordinate.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 0;
  // Relative error is |a - b| / max(|a|, |b|, abs_floor). The floor keeps the
  // rounding noise of the difference quotient (about eps * |f| / step) from
  // dominating near-zero gradients.
  double abs_floor = 1e-5;
};

struct ParamCheck {
  std::string name;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;  // differences straddling a relu kink
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  double tolerance = 0.0;
  bool passed = true;

  std::vector<std::string> offenders() const;
};

/// Compares tape gradients of `loss_fn` against central differences
/// (f(x+h) - f(x-h)) / 2h for every parameter. `loss_fn` must build its
/// graph on whatever tape is active and be deterministic; a disagreement
/// between two plain evaluations raises NumericError.
GradCheckReport grad_check(const std::function<Tensor()>& loss_fn, std::vector<NamedTensor> params,
                           const GradCheckOptions& options = {});

}  // namespace daf
