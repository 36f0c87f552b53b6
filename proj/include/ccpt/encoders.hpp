#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "ccpt/autodiff.hpp"
#include "ccpt/tensor.hpp"

namespace ccpt {

struct EncoderDims {
  std::size_t image_dim = 32;
  std::size_t text_dim = 24;
  std::size_t hidden = 64;
  std::size_t embed_dim = 16;
};

/// input -> tanh(x W1 + b1) W2 + b2
struct TowerParams {
  Tensor w1, b1, w2, b2;

  friend bool operator==(const TowerParams&, const TowerParams&) = default;
};

inline constexpr double kInitTemperature = 0.07;
inline constexpr double kLogTemperatureMin = -5.0;
inline constexpr double kLogTemperatureMax = 5.0;

/// Two-tower encoder weights. `log_temperature` stores log(tau), so the
/// contrastive logits are S / exp(log_temperature).
struct EncoderParams {
  TowerParams image;
  TowerParams text;
  Tensor log_temperature;

  static constexpr std::size_t kParameterCount = 9;
  static const std::array<std::string_view, kParameterCount>& parameter_names();

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;

  EncoderDims dims() const;
  double temperature() const;

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

EncoderParams init_encoders(const EncoderDims& dims, std::uint64_t seed);

/// Keeps tau inside [exp(-5), exp(5)].
void clamp_temperature(EncoderParams& params);

/// Encoder parameters placed on a tape, in parameters() order.
struct EncoderVars {
  std::array<Var, EncoderParams::kParameterCount> vars;

  Var image_w1() const { return vars[0]; }
  Var image_b1() const { return vars[1]; }
  Var image_w2() const { return vars[2]; }
  Var image_b2() const { return vars[3]; }
  Var text_w1() const { return vars[4]; }
  Var text_b1() const { return vars[5]; }
  Var text_w2() const { return vars[6]; }
  Var text_b2() const { return vars[7]; }
  Var log_temperature() const { return vars[8]; }
};

EncoderVars bind_encoders(Tape& tape, const EncoderParams& params, bool requires_grad);
/// Binds from leaves that already live on a tape (used by gradient checks).
EncoderVars encoder_vars_from(std::span<const Var> leaves);

/// Unnormalized image embeddings [N x D].
Var encode_images(const EncoderVars& enc, Var batch);
Var encode_texts(const EncoderVars& enc, Var batch);

// Gradient-free forward passes.
Tensor encode_images(const EncoderParams& params, const Tensor& batch);
Tensor encode_texts(const EncoderParams& params, const Tensor& batch);

/// Frozen copy of the model at the end of a stage.
class TeacherSnapshot {
 public:
  TeacherSnapshot(EncoderParams params, int stage) : params_(std::move(params)), stage_(stage) {}

  const EncoderParams& params() const { return params_; }
  int stage() const { return stage_; }

  friend bool operator==(const TeacherSnapshot&, const TeacherSnapshot&) = default;

 private:
  EncoderParams params_;
  int stage_;
};

TeacherSnapshot snapshot_teacher(const EncoderParams& params, int stage);

}  // namespace ccpt
