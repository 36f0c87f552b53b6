#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ccpt/encoders.hpp"
#include "ccpt/synthstream.hpp"

namespace ccpt {

enum class Strategy { RetCoP, SeqFT, ER, RehearsalOnly, OdidOnly, MoF };

std::string to_string(Strategy s);
/// Throws a usage error for names outside the declared set.
Strategy strategy_from_string(const std::string& name);

bool uses_distillation(Strategy s);
bool uses_replay(Strategy s);

struct RunConfig {
  Strategy strategy = Strategy::RetCoP;
  /// Stage order. Each entry is resolved from a token in the config file:
  /// a built-in modality id or a path to a modality spec file.
  std::vector<ModalitySpec> stages = {default_modality(1), default_modality(2), default_modality(3)};
  std::vector<std::string> stage_tokens = {"1", "2", "3"};
  std::size_t steps_per_stage = 2000;
  std::size_t batch_size = 24;
  std::size_t buffer_capacity = 256;
  double replay_fraction = 0.25;
  std::size_t cluster_count = 0;  // 0: half the stage quota
  double lambda = 1.0;
  double distill_temperature = 0.07;
  double learning_rate = 3e-4;
  std::uint64_t warmup_steps = 100;
  double weight_decay = 0.0;
  bool learn_temperature = true;
  std::size_t hidden = 64;
  std::size_t embed_dim = 16;
  std::size_t pool_size = 2048;
  std::size_t eval_samples = 1000;
  std::size_t probe_train_samples = 1000;
  std::size_t checkpoint_every = 0;
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  std::string run_id;

  /// run_id, or "<strategy>-seed<seed>" when unset.
  std::string effective_run_id() const;
  EncoderDims encoder_dims() const;
  /// Throws a configuration error naming the first invalid field.
  void validate() const;
};

/// Parses `key = value` text. Unknown keys are configuration errors; an
/// invalid strategy name is a usage error. Relative spec paths resolve
/// against `base_dir`.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Canonical `key = value` rendering; parse_config(to_text(c)) == c for
/// configs whose stages are built-in ids.
std::string to_text(const RunConfig& config);

/// FNV-1a over the canonical text plus the resolved modality specs.
std::uint64_t config_hash(const RunConfig& config);

}  // namespace ccpt
