#include "ccpt/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "ccpt/error.hpp"

namespace ccpt {

OptimizerState make_optimizer(std::span<Tensor* const> params, double learning_rate, std::uint64_t warmup_steps,
                              double weight_decay) {
  if (!(learning_rate > 0.0)) throw Error(ErrorKind::Parameter, "learning rate must be positive");
  if (weight_decay < 0.0) throw Error(ErrorKind::Parameter, "weight decay must be non-negative");
  OptimizerState state;
  state.learning_rate = learning_rate;
  state.warmup_steps = warmup_steps;
  state.weight_decay = weight_decay;
  for (const Tensor* p : params) {
    state.first_moment.push_back(Tensor::zeros_like(*p));
    state.second_moment.push_back(Tensor::zeros_like(*p));
  }
  return state;
}

double effective_learning_rate(const OptimizerState& state) {
  if (state.warmup_steps == 0 || state.step_count >= state.warmup_steps) return state.learning_rate;
  return state.learning_rate * static_cast<double>(state.step_count) / static_cast<double>(state.warmup_steps);
}

void optimizer_step(std::span<Tensor* const> params, std::span<const Tensor> grads, OptimizerState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
      params.size() != state.second_moment.size()) {
    throw Error(ErrorKind::Contract, "optimizer parameter, gradient and moment counts differ");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k]->same_shape(grads[k]) || !params[k]->same_shape(state.first_moment[k])) {
      throw Error(ErrorKind::Contract, "optimizer shape mismatch at parameter " + std::to_string(k));
    }
  }

  const double lr = effective_learning_rate(state);
  const double t = static_cast<double>(state.step_count + 1);
  const double bc1 = 1.0 - std::pow(OptimizerState::kBeta1, t);
  const double bc2 = 1.0 - std::pow(OptimizerState::kBeta2, t);

  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k]->data();
    auto g = grads[k].data();
    auto m = state.first_moment[k].data();
    auto v = state.second_moment[k].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = OptimizerState::kBeta1 * m[i] + (1.0 - OptimizerState::kBeta1) * g[i];
      v[i] = OptimizerState::kBeta2 * v[i] + (1.0 - OptimizerState::kBeta2) * g[i] * g[i];
      if (lr == 0.0) continue;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= lr * state.weight_decay * p[i];
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + OptimizerState::kEpsilon);
    }
  }
  ++state.step_count;
}

}  // namespace ccpt
