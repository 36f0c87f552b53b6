#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ccpt/autodiff.hpp"

namespace ccpt {

/// Builds a scalar loss on `tape` from leaves holding the current parameters.
using LossFn = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
};

/// Compares backward() against central differences for every parameter entry.
/// Relative error is |a - n| / max(|a|, |n|, 1e-8).
GradCheckResult grad_check(const LossFn& loss_fn, std::vector<Tensor> params, double h = 1e-4);

/// Loss value only, no backward.
double evaluate_loss(const LossFn& loss_fn, std::span<const Tensor> params);

/// Analytic gradients via one backward pass.
std::vector<Tensor> analytic_gradients(const LossFn& loss_fn, std::span<const Tensor> params);

struct GradCheckCase {
  std::string name;
  GradCheckResult result;
};

/// The verification suite run by `ccpt gradcheck`: every registered op plus
/// the composed continual-training loss on a small batch.
std::vector<GradCheckCase> run_gradcheck_suite(unsigned seed = 7);

}  // namespace ccpt
