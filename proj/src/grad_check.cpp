// SPDX-License-Identifier: Apache-2.0
#include "rcf/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rcf/branch_probe.hpp"
#include "rcf/random.hpp"
#include "rcf/tape.hpp"

namespace rcf {

namespace {

struct Evaluation {
  double value;
  std::uint64_t fingerprint;
};

Evaluation evaluate(const std::function<Tensor()>& loss_fn) {
  detail::BranchProbe probe;
  const Tensor loss = loss_fn();
  return {loss.item(), probe.fingerprint()};
}

std::vector<std::size_t> pick_coordinates(std::size_t numel, std::size_t limit,
                                          Rng& rng) {
  std::vector<std::size_t> idx(numel);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (limit == 0 || limit >= numel) return idx;
  shuffle(std::span<std::size_t>(idx), rng);
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradCheckResult grad_check(const std::function<Tensor()>& loss_fn,
                           const ParamList& params,
                           const GradCheckOptions& options) {
  for (const auto& p : params)
    if (p.tensor.dtype() != DType::f64)
      throw ConfigError("grad_check requires f64 parameters; '" + p.name + "' is " +
                        std::string(to_string(p.tensor.dtype())));

  std::vector<Tensor> handles;
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.drop_grad();
    t.set_requires_grad(true);
    handles.push_back(t);
  }

  std::uint64_t base_fingerprint = 0;
  {
    Tape tape;
    detail::BranchProbe probe;
    Tensor loss;
    {
      Tape::Recording rec(tape);
      loss = loss_fn();
    }
    base_fingerprint = probe.fingerprint();
    tape.backward(loss);
  }

  GradCheckResult result;
  Rng rng(options.seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& t = handles[pi];
    const std::vector<double> analytic = t.grad_vector();
    auto values = t.data<double>();
    for (std::size_t i : pick_coordinates(t.numel(), options.max_coords_per_tensor, rng)) {
      const double a = analytic[i];
      const double saved = values[i];
      bool kink = false;
      auto difference = [&](double eps) {
        values[i] = saved + eps;
        const Evaluation plus = evaluate(loss_fn);
        values[i] = saved - eps;
        const Evaluation minus = evaluate(loss_fn);
        values[i] = saved;
        kink |= plus.fingerprint != base_fingerprint || minus.fingerprint != base_fingerprint;
        return (plus.value - minus.value) / (2.0 * eps);
      };
      double numeric = difference(options.eps);
      if (options.extrapolate && !kink)
        numeric = (4.0 * difference(options.eps / 2.0) - numeric) / 3.0;
      if (kink) {
        ++result.skipped_kinks;
        continue;
      }
      if (!std::isfinite(a) || !std::isfinite(numeric))
        throw NumericError("grad_check: non-finite gradient for '" + params[pi].name +
                           "' at index " + std::to_string(i));
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++result.checked;
      if (rel > result.max_rel_error || result.worst_param.empty()) {
        if (rel >= result.max_rel_error) {
          result.max_rel_error = rel;
          result.worst_param = params[pi].name;
          result.worst_index = i;
          result.worst_analytic = a;
          result.worst_numeric = numeric;
        }
      }
    }
  }
  result.passed = result.max_rel_error < options.tol;
  return result;
}

}  // namespace rcf
