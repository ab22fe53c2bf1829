#pragma once

// Central finite-difference oracle. Independent of the backward pass: it
// only ever evaluates forward values.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "taper/numerics/graph.hpp"

namespace taper::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  ///< "name[index]" of the worst entry
  std::size_t checked = 0;
};

/// Relative error with an absolute floor so that two gradients that are both
/// ~0 do not divide noise by noise.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares Graph::backward against (f(x+h) - f(x-h)) / 2h for every entry
/// of every parameter. `build` must construct the loss on the given graph
/// from the current parameter values.
inline GradCheckResult check_gradients(const ParameterRefs& params, const std::function<Var(Graph&)>& build,
                                       double h = 1e-5) {
  std::vector<Tensor> analytic;
  {
    Graph g;
    const Var loss = build(g);
    g.backward(loss);
    for (Parameter* p : params) analytic.push_back(p->grad);
  }
  const auto eval = [&] {
    Graph g;
    return build(g).value()[0];
  };
  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + h;
      const double up = eval();
      p.value[i] = saved - h;
      const double down = eval();
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[k].empty() ? 0.0 : analytic[k][i];
      const double err = relative_error(a, numeric);
      ++result.checked;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst = p.name + "[" + std::to_string(i) + "] analytic=" + std::to_string(a) +
                       " numeric=" + std::to_string(numeric);
      }
    }
  }
  return result;
}

inline Parameter random_param(const std::string& name, std::size_t rows, std::size_t cols, Rng& rng) {
  Parameter p(name, Tensor({rows, cols}));
  for (double& v : p.value.data()) v = rng.uniform(-1.0, 1.0);
  return p;
}

}  // namespace taper::testing
