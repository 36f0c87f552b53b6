#include "ccpt/report.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "ccpt/error.hpp"

namespace ccpt {

namespace {

std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", fraction * 100.0);
  return buf;
}

struct Mean {
  double total = 0.0;
  std::size_t count = 0;
  void add(double v) {
    total += v;
    ++count;
  }
  double value() const { return total / static_cast<double>(count); }
};

std::string pad(const std::string& s, std::size_t width) {
  // Arrows are three bytes but one column wide.
  std::size_t columns = 0;
  for (unsigned char c : s) columns += (c & 0xC0) != 0x80 ? 1 : 0;
  return s + std::string(width > columns ? width - columns : 0, ' ');
}

}  // namespace

std::string format_with_delta(double value, std::optional<double> forgetting) {
  std::string out = percent(value);
  if (!forgetting) return out;
  const double rounded = std::round(*forgetting * 1000.0) / 10.0;
  if (rounded == 0.0) return out + "(0.0)";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", std::abs(rounded));
  return out + (rounded > 0 ? "(↓" : "(↑") + buf + ")";
}

std::string render_report(const std::vector<MetricsLine>& lines) {
  if (lines.empty()) throw Error(ErrorKind::Metric, "no metrics to report");

  // (modality, stage, strategy, setting) -> mean acc / auc
  using Key = std::tuple<int, int, std::string, Setting>;
  std::map<Key, std::pair<Mean, Mean>> cells;
  std::map<int, int> learned_at;
  std::vector<std::string> strategies;
  for (const auto& l : lines) {
    auto& cell = cells[{l.record.modality, l.record.stage, l.strategy, l.record.setting}];
    cell.first.add(l.record.acc);
    cell.second.add(l.record.auc);
    auto it = learned_at.find(l.record.modality);
    if (it == learned_at.end() || l.record.stage < it->second) learned_at[l.record.modality] = l.record.stage;
    bool known = false;
    for (const auto& s : strategies) known = known || s == l.strategy;
    if (!known) strategies.push_back(l.strategy);
  }

  const std::size_t w = 14;
  std::ostringstream os;
  for (const auto& [modality, first_stage] : learned_at) {
    std::set<int> stages;
    for (const auto& [key, cell] : cells) {
      if (std::get<0>(key) == modality) stages.insert(std::get<1>(key));
    }
    os << "Modality " << modality << " (deltas relative to stage " << first_stage << ")\n";
    os << pad("Stage", 7) << pad("Method", 16) << pad("ZS ACC(%)", w) << pad("ZS AUC(%)", w) << pad("LP ACC(%)", w)
       << pad("LP AUC(%)", w) << '\n';
    for (int stage : stages) {
      for (const auto& strategy : strategies) {
        std::ostringstream row;
        bool any = false;
        for (Setting setting : {Setting::ZeroShot, Setting::LinearProbe}) {
          auto now = cells.find({modality, stage, strategy, setting});
          if (now == cells.end()) {
            row << pad("-", w) << pad("-", w);
            continue;
          }
          any = true;
          std::optional<double> acc_delta, auc_delta;
          if (stage != first_stage) {
            auto base = cells.find({modality, first_stage, strategy, setting});
            if (base != cells.end()) {
              acc_delta = base->second.first.value() - now->second.first.value();
              auc_delta = base->second.second.value() - now->second.second.value();
            }
          }
          row << pad(format_with_delta(now->second.first.value(), acc_delta), w)
              << pad(format_with_delta(now->second.second.value(), auc_delta), w);
        }
        if (any) os << pad(std::to_string(stage), 7) << pad(strategy, 16) << row.str() << '\n';
      }
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace ccpt
