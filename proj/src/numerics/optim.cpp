#include "taper/numerics/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace taper {

AdamState AdamState::for_params(const ParameterRefs& params) {
  AdamState s;
  for (const Parameter* p : params) {
    s.first_moment.emplace_back(p->value.shape());
    s.second_moment.emplace_back(p->value.shape());
  }
  return s;
}

void adam_step(const ParameterRefs& params, AdamState& state, double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("adam_step: learning rate must be positive, got " + std::to_string(lr));
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw std::invalid_argument("adam_step: state has " + std::to_string(state.first_moment.size()) +
                                " accumulators for " + std::to_string(params.size()) + " parameters");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    Tensor& m = state.first_moment[k];
    Tensor& v = state.second_moment[k];
    if (m.shape() != p.value.shape() || p.grad.shape() != p.value.shape()) {
      throw std::invalid_argument("adam_step: shape mismatch for " + p.name);
    }
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      if (g == 0.0 && m[i] == 0.0) continue;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p.value[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

double lr_at(const LrSchedule& schedule, int epoch) {
  if (epoch < 0) throw std::invalid_argument("lr_at: negative epoch");
  if (const auto* c = std::get_if<CosineAnnealing>(&schedule)) {
    const double phase = static_cast<double>(epoch % c->period) / static_cast<double>(c->period);
    return c->lr_min + (c->lr0 - c->lr_min) * (1.0 + std::cos(std::numbers::pi * phase)) / 2.0;
  }
  const auto& s = std::get<StepDecay>(schedule);
  return s.lr0 * std::pow(s.factor, epoch / s.every);
}

}  // namespace taper
