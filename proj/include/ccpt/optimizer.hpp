#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ccpt/tensor.hpp"

namespace ccpt {

/// Adam with decoupled weight decay and a linear warm-up to a constant rate.
struct OptimizerState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step_count = 0;
  double learning_rate = 3e-4;
  std::uint64_t warmup_steps = 0;
  double weight_decay = 0.0;

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

OptimizerState make_optimizer(std::span<Tensor* const> params, double learning_rate, std::uint64_t warmup_steps,
                              double weight_decay);

/// Rate applied by the next step: min(step_count / warmup_steps, 1) * learning_rate.
double effective_learning_rate(const OptimizerState& state);

/// Applies one update in place and increments step_count.
void optimizer_step(std::span<Tensor* const> params, std::span<const Tensor> grads, OptimizerState& state);

}  // namespace ccpt
