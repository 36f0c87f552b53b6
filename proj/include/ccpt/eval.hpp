#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ccpt/encoders.hpp"
#include "ccpt/synthstream.hpp"
#include "ccpt/tensor.hpp"

namespace ccpt {

enum class Setting { ZeroShot, LinearProbe };

std::string to_string(Setting s);
Setting setting_from_string(const std::string& s);

/// One evaluation of one modality after one stage.
struct MetricsRecord {
  int stage = 0;
  int modality = 0;
  Setting setting = Setting::ZeroShot;
  double acc = 0.0;
  double auc = 0.0;
  /// acc at the stage the modality was learned minus acc now.
  std::optional<double> forgetting;

  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

struct ClassificationScore {
  double acc = 0.0;
  double auc = 0.0;
};

struct AucResult {
  double macro = 0.0;
  /// Empty where the class has no positives or no negatives.
  std::vector<std::optional<double>> per_class;
};

/// Macro one-vs-rest AUC with midrank ties. labels are 0..C-1. Classes that
/// are absent (or present everywhere) are undefined and left out of the
/// macro average; if no class is defined this throws a metric error.
AucResult macro_ovr_auc(const Tensor& scores, std::span<const int> labels);

/// Top-1 accuracy of row-wise argmax (ties to the lowest column).
double argmax_accuracy(const Tensor& scores, std::span<const int> labels);

/// Nearest class prompt by cosine similarity; AUC on per-sample softmax of
/// the similarities at the model temperature.
ClassificationScore zero_shot_eval(const EncoderParams& params, const ModalityGenerator& gen, std::size_t n_test,
                                   std::uint64_t seed);

struct ProbeOptions {
  std::size_t iterations = 500;
  double learning_rate = 0.5;
  double l2 = 1e-4;
};

/// Multinomial logistic regression on frozen, L2-normalized image embeddings
/// trained by full-batch gradient descent.
ClassificationScore linear_probe_eval(const EncoderParams& params, const ModalityGenerator& gen, std::size_t n_train,
                                      std::size_t n_test, std::uint64_t seed, const ProbeOptions& opts = {});

/// Probe on explicit features; exposed for tests.
ClassificationScore linear_probe(const Tensor& train_x, std::span<const int> train_y, const Tensor& test_x,
                                 std::span<const int> test_y, std::size_t n_classes, const ProbeOptions& opts = {});

enum class MetricUnit { Fraction, Percent };

/// metric_at_learning_stage - metric_now. Positive is forgetting.
double forgetting_rate(double metric_at_learning_stage, double metric_now, MetricUnit unit = MetricUnit::Fraction);

}  // namespace ccpt
