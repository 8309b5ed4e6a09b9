#include "daf/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "daf/error.hpp"
#include "daf/rng.hpp"

namespace daf {

std::vector<std::string> GradCheckReport::offenders() const {
  std::vector<std::string> out;
  for (const auto& p : params) {
    if (!p.passed) out.push_back(p.name);
  }
  return out;
}

namespace {

struct Probe {
  double value;
  std::uint64_t kinks;
};

Probe evaluate(const std::function<Tensor()>& loss_fn) {
  ReluKinkMonitor monitor;
  const double v = loss_fn().item();
  return {v, monitor.signature()};
}

std::vector<std::size_t> pick_coords(std::size_t n, std::size_t limit, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (limit == 0 || limit >= n) return idx;
  rng.shuffle(idx);
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor()>& loss_fn, std::vector<NamedTensor> params,
                           const GradCheckOptions& options) {
  for (auto& p : params) {
    for (double v : p.value.data()) {
      if (!std::isfinite(v)) throw NumericError("grad_check: parameter " + p.name + " is not finite");
    }
    p.value.set_requires_grad(true);
    p.value.zero_grad();
  }

  // Analytic gradients.
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor loss = loss_fn();
    tape.backward(loss);
    for (const auto& p : params) analytic.emplace_back(p.value.grad().begin(), p.value.grad().end());
  }

  const Probe base = evaluate(loss_fn);
  const Probe again = evaluate(loss_fn);
  if (base.value != again.value) {
    throw NumericError("grad_check: loss function is not deterministic (two evaluations disagree)");
  }

  GradCheckReport report;
  report.tolerance = options.tolerance;
  Rng rng(options.seed);
  const double h = options.step;

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    ParamCheck check;
    check.name = p.name;
    auto data = p.value.data();
    for (std::size_t i : pick_coords(data.size(), options.max_coords_per_param, rng)) {
      const double orig = data[i];
      data[i] = orig + h;
      const Probe plus = evaluate(loss_fn);
      data[i] = orig - h;
      const Probe minus = evaluate(loss_fn);
      data[i] = orig;
      if (plus.kinks != base.kinks || minus.kinks != base.kinks) {
        ++check.skipped_kinks;
        continue;
      }
      const double numeric = (plus.value - minus.value) / (2.0 * h);
      const double a = analytic[pi][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++check.checked;
      if (rel > check.max_rel_error || check.checked == 1) {
        check.max_rel_error = std::max(check.max_rel_error, rel);
        if (rel >= check.max_rel_error) {
          check.worst_index = i;
          check.worst_analytic = a;
          check.worst_numeric = numeric;
        }
      }
    }
    check.passed = check.max_rel_error < options.tolerance;
    report.passed = report.passed && check.passed;
    report.params.push_back(std::move(check));
  }
  return report;
}

}  // namespace daf
