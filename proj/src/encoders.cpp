#include "ccpt/encoders.hpp"

#include <algorithm>
#include <cmath>

#include "ccpt/error.hpp"
#include "ccpt/rng.hpp"

namespace ccpt {

const std::array<std::string_view, EncoderParams::kParameterCount>& EncoderParams::parameter_names() {
  static const std::array<std::string_view, kParameterCount> names = {
      "image.w1", "image.b1", "image.w2", "image.b2", "text.w1", "text.b1", "text.w2", "text.b2",
      "log_temperature"};
  return names;
}

std::vector<Tensor*> EncoderParams::parameters() {
  return {&image.w1, &image.b1, &image.w2, &image.b2, &text.w1, &text.b1, &text.w2, &text.b2, &log_temperature};
}

std::vector<const Tensor*> EncoderParams::parameters() const {
  return {&image.w1, &image.b1, &image.w2, &image.b2, &text.w1, &text.b1, &text.w2, &text.b2, &log_temperature};
}

EncoderDims EncoderParams::dims() const {
  return {image.w1.rows(), text.w1.rows(), image.w1.cols(), image.w2.cols()};
}

double EncoderParams::temperature() const { return std::exp(log_temperature.item()); }

namespace {

Tensor fan_in_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor w(fan_in, fan_out);
  for (double& v : w.data()) v = (2.0 * uniform01(rng) - 1.0) * bound;
  return w;
}

TowerParams init_tower(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
  TowerParams t;
  t.w1 = fan_in_uniform(in, hidden, rng);
  t.b1 = Tensor(1, hidden);
  t.w2 = fan_in_uniform(hidden, out, rng);
  t.b2 = Tensor(1, out);
  return t;
}

Var tower_forward(Var w1, Var b1, Var w2, Var b2, Var batch, const char* which) {
  if (batch.value().cols() != w1.value().rows()) {
    throw Error(ErrorKind::Shape, std::string(which) + " batch width " + std::to_string(batch.value().cols()) +
                                      " does not match encoder input " + std::to_string(w1.value().rows()));
  }
  Var h = tanh(add_row_broadcast(matmul(batch, w1), b1));
  return add_row_broadcast(matmul(h, w2), b2);
}

}  // namespace

EncoderParams init_encoders(const EncoderDims& dims, std::uint64_t seed) {
  if (dims.image_dim == 0 || dims.text_dim == 0 || dims.hidden == 0 || dims.embed_dim == 0) {
    throw Error(ErrorKind::Parameter, "encoder dimensions must be positive");
  }
  Rng rng(derive_seed(seed, {0x656e63}));
  EncoderParams p;
  p.image = init_tower(dims.image_dim, dims.hidden, dims.embed_dim, rng);
  p.text = init_tower(dims.text_dim, dims.hidden, dims.embed_dim, rng);
  p.log_temperature = Tensor::scalar(std::log(kInitTemperature));
  return p;
}

void clamp_temperature(EncoderParams& params) {
  double& lt = params.log_temperature[0];
  lt = std::clamp(lt, kLogTemperatureMin, kLogTemperatureMax);
}

EncoderVars bind_encoders(Tape& tape, const EncoderParams& params, bool requires_grad) {
  EncoderVars ev;
  const auto ps = params.parameters();
  for (std::size_t i = 0; i < ps.size(); ++i) ev.vars[i] = tape.leaf(*ps[i], requires_grad);
  return ev;
}

EncoderVars encoder_vars_from(std::span<const Var> leaves) {
  if (leaves.size() < EncoderParams::kParameterCount) {
    throw Error(ErrorKind::Contract, "expected encoder parameter leaves");
  }
  EncoderVars ev;
  std::copy_n(leaves.begin(), EncoderParams::kParameterCount, ev.vars.begin());
  return ev;
}

Var encode_images(const EncoderVars& enc, Var batch) {
  return tower_forward(enc.image_w1(), enc.image_b1(), enc.image_w2(), enc.image_b2(), batch, "image");
}

Var encode_texts(const EncoderVars& enc, Var batch) {
  return tower_forward(enc.text_w1(), enc.text_b1(), enc.text_w2(), enc.text_b2(), batch, "text");
}

Tensor encode_images(const EncoderParams& params, const Tensor& batch) {
  Tape tape;
  const EncoderVars ev = bind_encoders(tape, params, false);
  return encode_images(ev, tape.constant(batch)).value();
}

Tensor encode_texts(const EncoderParams& params, const Tensor& batch) {
  Tape tape;
  const EncoderVars ev = bind_encoders(tape, params, false);
  return encode_texts(ev, tape.constant(batch)).value();
}

TeacherSnapshot snapshot_teacher(const EncoderParams& params, int stage) { return TeacherSnapshot(params, stage); }

}  // namespace ccpt
