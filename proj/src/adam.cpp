#include "gcnnlp/adam.hpp"

#include <cmath>

namespace gcnnlp::ad {

AdamState make_adam_state(std::span<Parameter* const> params) {
  AdamState state;
  for (const Parameter* p : params) {
    state.first.emplace_back(p->value.shape());
    state.second.emplace_back(p->value.shape());
  }
  return state;
}

void adam_step(std::span<Parameter* const> params, AdamState& state, double learning_rate, const AdamConfig& config) {
  if (state.first.size() != params.size() || state.second.size() != params.size()) {
    throw ShapeError("optimizer state holds " + std::to_string(state.first.size()) + " moments for " +
                     std::to_string(params.size()) + " parameters");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    Tensor& m = state.first[k];
    Tensor& v = state.second[k];
    if (m.shape() != p.value.shape() || v.shape() != p.value.shape() || p.grad.shape() != p.value.shape()) {
      throw ShapeError("optimizer state does not match parameter " + p.name);
    }
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p.value[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

}  // namespace gcnnlp::ad
