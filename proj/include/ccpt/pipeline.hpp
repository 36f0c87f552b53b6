#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ccpt/config.hpp"
#include "ccpt/encoders.hpp"
#include "ccpt/eval.hpp"
#include "ccpt/optimizer.hpp"
#include "ccpt/rehearsal.hpp"
#include "ccpt/rng.hpp"

namespace ccpt {

/// Everything needed to continue a run bit-exactly.
struct TrainState {
  std::size_t stage_index = 0;  // stage in progress (0-based)
  std::size_t step_in_stage = 0;
  std::uint64_t global_step = 0;
  EncoderParams params;
  OptimizerState optimizer;
  std::optional<TeacherSnapshot> teacher;
  RehearsalBuffer buffer;
  std::uint64_t reservoir_seen = 0;
  /// Most recent current-stage pairs, oldest first.
  std::deque<PairSample> pool;
  Rng batch_rng;
  Rng reservoir_rng;
  /// Metrics of each modality at the stage it was learned.
  std::vector<MetricsRecord> learned;

  friend bool operator==(const TrainState&, const TrainState&) = default;
};

struct StepLoss {
  std::size_t stage = 0;  // 1-based
  std::size_t step = 0;   // within stage
  double clip = 0.0;
  std::optional<double> odid;
  double total = 0.0;

  friend bool operator==(const StepLoss&, const StepLoss&) = default;
};

/// Drives the continual phase: stage 1 .. stage S, each training on one
/// modality and ending with teacher snapshot, exemplar selection and
/// evaluation of every modality seen so far.
class Trainer {
 public:
  /// Fresh run: seeded random initialisation stands in for text pre-training.
  explicit Trainer(RunConfig config);
  /// Continues from a checkpoint.
  Trainer(RunConfig config, TrainState state);

  const RunConfig& config() const { return config_; }
  const TrainState& state() const { return state_; }
  bool finished() const { return state_.stage_index >= config_.stages.size(); }

  /// One optimizer step in the current stage.
  StepLoss train_step();
  /// Stage-end bookkeeping; returns the records it appended.
  std::vector<MetricsRecord> finish_stage();
  /// Remaining steps of the current stage followed by finish_stage().
  std::vector<MetricsRecord> run_stage();
  /// Runs to completion, writing metrics and the final checkpoint.
  std::vector<MetricsRecord> run();

  /// Called after every step.
  void set_step_observer(std::function<void(const StepLoss&)> observer) { observer_ = std::move(observer); }
  /// Disables all file output (metrics and checkpoints).
  void set_write_outputs(bool write) { write_outputs_ = write; }

  std::filesystem::path metrics_path() const;

 private:
  void append_metrics(const std::vector<MetricsRecord>& records) const;
  void maybe_checkpoint(const std::string& name) const;
  void drop_metrics_after_checkpoint() const;
  std::size_t exemplar_quota() const;

  RunConfig config_;
  std::vector<ModalityGenerator> generators_;
  TrainState state_;
  std::function<void(const StepLoss&)> observer_;
  bool write_outputs_ = true;
  bool fallback_logged_ = false;
};

TrainState initial_state(const RunConfig& config);

/// Runs a whole configuration and returns its metrics log.
std::vector<MetricsRecord> run_pipeline(const RunConfig& config);

/// JSON-lines rendering of one record.
std::string metrics_json_line(const RunConfig& config, const MetricsRecord& record, std::uint64_t step);

/// One parsed metrics line.
struct MetricsLine {
  std::string run_id;
  std::string strategy;
  MetricsRecord record;
  std::uint64_t step = 0;
};
std::vector<MetricsLine> read_metrics(const std::filesystem::path& path);

}  // namespace ccpt
