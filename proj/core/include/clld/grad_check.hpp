#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "clld/autograd.hpp"

namespace clld {

// Builds a scalar from the leaf bound to x.
template <typename T>
using GraphFunction = std::function<Var<T>(Graph<T>&, Var<T>)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares the tape gradient of f at x with central differences of
// step eps. Relative error per coordinate is
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
template <typename T>
GradCheckResult grad_check_detailed(const GraphFunction<T>& f, const Tensor<T>& x, T eps) {
  auto evaluate = [&](Tensor<T>& at) {
    Graph<T> g;
    const T v = f(g, g.leaf(at)).value()[0];
    if (!std::isfinite(static_cast<double>(v))) throw EvaluationError("grad_check: f(x) is not finite");
    return v;
  };

  Tensor<T> probe(x.shape(), std::vector<T>(x.data().begin(), x.data().end()));
  probe.set_requires_grad(true);
  std::vector<T> analytic;
  {
    Graph<T> g;
    auto leaf = g.leaf(probe);
    auto out = f(g, leaf);
    if (out.value().size() != 1) throw ContractError("grad_check: f must be scalar-valued");
    if (!std::isfinite(static_cast<double>(out.value()[0]))) throw EvaluationError("grad_check: f(x) is not finite");
    g.backward(out, false);
    auto gr = g.grad(leaf);
    analytic.assign(gr.begin(), gr.end());
    if (analytic.empty()) analytic.assign(x.size(), T(0));
  }
  probe.set_requires_grad(false);

  GradCheckResult result;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const T saved = probe[i];
    probe[i] = saved + eps;
    const T fp = evaluate(probe);
    probe[i] = saved - eps;
    const T fm = evaluate(probe);
    probe[i] = saved;
    const double numeric = (static_cast<double>(fp) - static_cast<double>(fm)) / (2.0 * static_cast<double>(eps));
    const double a = static_cast<double>(analytic[i]);
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
    const double rel = std::abs(a - numeric) / denom;
    if (rel > result.max_relative_error || i == 0) {
      result = {std::max(rel, result.max_relative_error), i, a, numeric};
    }
  }
  return result;
}

template <typename T>
double grad_check(const GraphFunction<T>& f, const Tensor<T>& x, T eps) {
  return grad_check_detailed(f, x, eps).max_relative_error;
}

}  // namespace clld
