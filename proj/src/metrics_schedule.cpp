#include "grapecm/metrics_schedule.hpp"

#include <algorithm>
#include <cmath>

namespace grapecm {

std::vector<std::string> CollectionSchedule::validate() const {
  std::vector<std::string> violations;
  if (interval_min_s <= 0) violations.push_back("metrics: interval_min must be positive");
  if (node_count == 0) violations.push_back("metrics: node_count must be positive");
  for (const auto& [name, m] : metrics) {
    if (m.staleness_bound_s < interval_min_s)
      violations.push_back("metrics[" + name + "]: staleness bound below interval_min");
    if (m.interval_s < interval_min_s || m.interval_s > m.staleness_bound_s)
      violations.push_back("metrics[" + name + "]: interval outside [interval_min, staleness]");
    if (m.report_bytes == 0)
      violations.push_back("metrics[" + name + "]: zero report size");
  }
  return violations;
}

double aggregate_bandwidth_bps(const CollectionSchedule& s) {
  double total = 0.0;
  for (const auto& [name, m] : s.metrics) {
    total += static_cast<double>(m.report_bytes) / m.interval_s;
  }
  return total * static_cast<double>(s.node_count);
}

bool enforce_budget(CollectionSchedule& s) {
  if (s.budget_bytes_per_s <= 0) return true;
  while (aggregate_bandwidth_bps(s) > s.budget_bytes_per_s) {
    // Relax the metric already collected least often: stable metrics drift
    // toward long intervals, so they give ground before fresh ones.
    MetricSchedule* pick = nullptr;
    for (auto& [name, m] : s.metrics) {
      if (m.interval_s >= m.staleness_bound_s) continue;  // no headroom
      if (pick == nullptr || m.interval_s > pick->interval_s) pick = &m;
    }
    if (pick == nullptr) return false;  // staleness bounds block the budget
    pick->interval_s = std::min(pick->interval_s * 2.0, pick->staleness_bound_s);
  }
  return true;
}

double adapt_interval(CollectionSchedule& s, const std::string& metric,
                      double observed_change_rate) {
  auto it = s.metrics.find(metric);
  if (it == s.metrics.end()) return 0.0;
  MetricSchedule& m = it->second;
  m.last_change_rate = observed_change_rate;
  if (std::abs(observed_change_rate) < s.drift_threshold) {
    m.interval_s = std::min(m.interval_s * 2.0, m.staleness_bound_s);
  } else {
    m.interval_s = std::max(m.interval_s / 2.0, s.interval_min_s);
  }
  enforce_budget(s);
  return it->second.interval_s;
}

}  // namespace grapecm
