#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ccpt/pipeline.hpp"

namespace ccpt {

/// "52.0(↓6.9)" for forgetting, "89.8(↑0.8)" for improvement, "97.9(0.0)"
/// when the rounded delta is zero and "58.9" without a delta. Inputs are
/// fractions; output is in percent with one decimal.
std::string format_with_delta(double value, std::optional<double> forgetting);

/// One table per modality: rows are (stage, strategy), columns are ACC and
/// AUC per setting. Values are averaged over runs sharing a strategy, and
/// deltas are taken against the stage that learned the modality.
std::string render_report(const std::vector<MetricsLine>& lines);

}  // namespace ccpt
