#include "ccpt/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ccpt/alignment.hpp"
#include "ccpt/distill.hpp"
#include "ccpt/encoders.hpp"
#include "ccpt/error.hpp"
#include "ccpt/rng.hpp"

namespace ccpt {

namespace {

// Below this magnitude a gradient entry is compared absolutely; round-off in
// the central difference is ~1e-12 for O(1) losses.
constexpr double kRelativeFloor = 1e-8;

std::vector<Var> bind_leaves(Tape& tape, std::span<const Tensor> params, bool requires_grad) {
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.leaf(p, requires_grad));
  return leaves;
}

Var checked_scalar(const Var& v) {
  if (v.value().size() != 1) throw Error(ErrorKind::Contract, "gradient check loss must be scalar");
  return v;
}

}  // namespace

double evaluate_loss(const LossFn& loss_fn, std::span<const Tensor> params) {
  Tape tape;
  const auto leaves = bind_leaves(tape, params, false);
  return checked_scalar(loss_fn(tape, leaves)).value().item();
}

std::vector<Tensor> analytic_gradients(const LossFn& loss_fn, std::span<const Tensor> params) {
  Tape tape;
  const auto leaves = bind_leaves(tape, params, true);
  tape.backward(checked_scalar(loss_fn(tape, leaves)));
  std::vector<Tensor> grads;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& g = leaves[i].grad();
    grads.push_back(g.empty() ? Tensor::zeros_like(params[i]) : g);
  }
  return grads;
}

GradCheckResult grad_check(const LossFn& loss_fn, std::vector<Tensor> params, double h) {
  if (!(h > 0.0)) throw Error(ErrorKind::Parameter, "finite-difference step must be positive");
  const auto analytic = analytic_gradients(loss_fn, params);
  GradCheckResult result;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t k = 0; k < params[p].size(); ++k) {
      const double x = params[p][k];
      params[p][k] = x + h;
      const double up = evaluate_loss(loss_fn, params);
      params[p][k] = x - h;
      const double down = evaluate_loss(loss_fn, params);
      params[p][k] = x;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[p][k];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kRelativeFloor});
      if (err > result.max_relative_error) result = {err, p, k};
    }
  }
  return result;
}

namespace {

Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = lo + (hi - lo) * uniform01(rng);
  return t;
}

// Entries with magnitude in [0.2, 1] and random sign, away from relu's kink.
Tensor away_from_zero(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t = random_tensor(rows, cols, rng, 0.2, 1.0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (uniform01(rng) < 0.5) t[i] = -t[i];
  }
  return t;
}

// Reduces a matrix-valued op to a scalar with fixed random weights so every
// output entry contributes.
LossFn weighted(std::function<Var(Tape&, std::span<const Var>)> op, Tensor weights) {
  return [op = std::move(op), weights = std::move(weights)](Tape& tape, std::span<const Var> p) {
    return sum(mul(op(tape, p), tape.constant(weights)));
  };
}

struct ComposedInstance {
  std::vector<Tensor> params;
  Tensor images, texts;
  TeacherSnapshot teacher;
};

std::size_t corrected_rows(const Tensor& teacher) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < teacher.rows(); ++i) n += diagonal_is_row_max(teacher, i) ? 0 : 1;
  return n;
}

// Smallest gap between a diagonal entry and its nearest competitor; the
// correction pattern must not flip under finite-difference perturbations.
double correction_margin(const Tensor& s) {
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < s.rows(); ++i) {
    for (std::size_t j = 0; j < s.cols(); ++j) {
      if (j != i) margin = std::min(margin, std::abs(s(i, i) - s(i, j)));
    }
  }
  return margin;
}

ComposedInstance composed_instance(unsigned seed) {
  const EncoderDims dims{6, 5, 7, 4};
  const std::size_t n = 6;
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng(derive_seed(seed, {0x636f6d70, attempt}));
    EncoderParams student = init_encoders(dims, derive_seed(seed, {attempt, 1}));
    EncoderParams teacher = init_encoders(dims, derive_seed(seed, {attempt, 2}));
    student.log_temperature = Tensor::scalar(std::log(0.5));
    Tensor images = random_tensor(n, dims.image_dim, rng);
    Tensor texts = random_tensor(n, dims.text_dim, rng);
    const Tensor ts = similarity_matrix(encode_images(teacher, images), encode_texts(teacher, texts));
    const std::size_t corrected = corrected_rows(ts);
    if (corrected == 0 || corrected == n || correction_margin(ts) < 1e-3) continue;
    std::vector<Tensor> params;
    for (const Tensor* t : student.parameters()) params.push_back(*t);
    return {std::move(params), std::move(images), std::move(texts), TeacherSnapshot(std::move(teacher), 1)};
  }
}

}  // namespace

std::vector<GradCheckCase> run_gradcheck_suite(unsigned seed) {
  Rng rng(derive_seed(seed, {0x6763}));
  std::vector<GradCheckCase> cases;
  auto check = [&](std::string name, const LossFn& fn, std::vector<Tensor> params) {
    cases.push_back({std::move(name), grad_check(fn, std::move(params))});
  };

  const Tensor a34 = random_tensor(3, 4, rng);
  const Tensor b34 = random_tensor(3, 4, rng);
  const Tensor b45 = random_tensor(4, 5, rng);
  const Tensor w34 = random_tensor(3, 4, rng);
  const Tensor w35 = random_tensor(3, 5, rng);
  const Tensor w43 = random_tensor(4, 3, rng);
  const Tensor bias = random_tensor(1, 4, rng);
  const Tensor s11 = random_tensor(1, 1, rng, 0.5, 1.5);
  const Tensor pos = random_tensor(3, 4, rng, 0.5, 2.0);
  const Tensor kinked = away_from_zero(3, 4, rng);
  const Tensor square = random_tensor(4, 4, rng);
  const Tensor w41 = random_tensor(4, 1, rng);
  const Tensor w44 = random_tensor(4, 4, rng);

  check("matmul", weighted([](Tape&, std::span<const Var> p) { return matmul(p[0], p[1]); }, w35), {a34, b45});
  check("transpose", weighted([](Tape&, std::span<const Var> p) { return transpose(p[0]); }, w43), {a34});
  check("add", weighted([](Tape&, std::span<const Var> p) { return add(p[0], p[1]); }, w34), {a34, b34});
  check("subtract", weighted([](Tape&, std::span<const Var> p) { return subtract(p[0], p[1]); }, w34), {a34, b34});
  check("mul", weighted([](Tape&, std::span<const Var> p) { return mul(p[0], p[1]); }, w34), {a34, b34});
  check("scalar_mul", weighted([](Tape&, std::span<const Var> p) { return scalar_mul(p[0], -1.7); }, w34), {a34});
  check("add_row_broadcast",
        weighted([](Tape&, std::span<const Var> p) { return add_row_broadcast(p[0], p[1]); }, w34), {a34, bias});
  check("div_by_scalar", weighted([](Tape&, std::span<const Var> p) { return div_by_scalar(p[0], p[1]); }, w34),
        {a34, s11});
  check("tanh", weighted([](Tape&, std::span<const Var> p) { return tanh(p[0]); }, w34), {a34});
  check("relu", weighted([](Tape&, std::span<const Var> p) { return relu(p[0]); }, w34), {kinked});
  check("log", weighted([](Tape&, std::span<const Var> p) { return log(p[0]); }, w34), {pos});
  check("exp", weighted([](Tape&, std::span<const Var> p) { return exp(p[0]); }, w34), {a34});
  check("l2_normalize_rows", weighted([](Tape&, std::span<const Var> p) { return l2_normalize_rows(p[0]); }, w34),
        {a34});
  check("row_softmax", weighted([](Tape&, std::span<const Var> p) { return row_softmax(p[0], 0.7); }, w34), {a34});
  check("row_log_softmax", weighted([](Tape&, std::span<const Var> p) { return row_log_softmax(p[0]); }, w34),
        {a34});
  check("diagonal", weighted([](Tape&, std::span<const Var> p) { return diagonal(p[0]); }, w41), {square});
  check("sum", [](Tape&, std::span<const Var> p) { return sum(p[0]); }, {a34});
  check("mean", [](Tape&, std::span<const Var> p) { return mean(p[0]); }, {a34});

  check("similarity_matrix",
        weighted([](Tape&, std::span<const Var> p) { return similarity_matrix(p[0], p[1]); }, w44),
        {random_tensor(4, 3, rng), random_tensor(4, 3, rng)});
  check("clip_loss", [](Tape&, std::span<const Var> p) { return clip_loss(p[0], p[1]); },
        {random_tensor(5, 5, rng), Tensor::scalar(0.3)});
  {
    const Tensor teacher = random_tensor(5, 5, rng);
    check("odid_loss",
          [teacher](Tape&, std::span<const Var> p) { return odid_loss(p[0], teacher, 0.8); },
          {random_tensor(5, 5, rng)});
  }

  // Encoders, learned temperature, InfoNCE and corrected off-diagonal
  // distillation against a frozen teacher, as used in a training step.
  const ComposedInstance inst = composed_instance(seed);
  const LossFn composed = [&inst](Tape& tape, std::span<const Var> p) {
    const EncoderVars enc = encoder_vars_from(p);
    const Var s = similarity_matrix(encode_images(enc, tape.constant(inst.images)),
                                    encode_texts(enc, tape.constant(inst.texts)));
    const Var clip = clip_loss(s, exp(enc.log_temperature()));
    const Tensor corrected = row_correction(teacher_similarity(inst.teacher, inst.images, inst.texts), s.value());
    return total_loss(clip, odid_loss(s, corrected, 1.5), {0.8, 1.5});
  };
  check("composed_total_loss", composed, inst.params);
  return cases;
}

}  // namespace ccpt
