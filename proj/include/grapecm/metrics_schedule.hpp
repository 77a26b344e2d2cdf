#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "grapecm/expected.hpp"

namespace grapecm {

// Per-metric collection state. The interval adapts between interval_min
// and the metric's staleness bound; stable metrics are collected less
// frequently, volatile ones back down to the floor.
struct MetricSchedule {
  double interval_s = 1.0;
  double last_change_rate = 0.0;
  double staleness_bound_s = 900.0;
  std::uint64_t report_bytes = 1000;
};

struct CollectionSchedule {
  std::map<std::string, MetricSchedule> metrics;
  double interval_min_s = 1.0;
  double drift_threshold = 0.01;       // relative change per window
  double budget_bytes_per_s = 0.0;     // aggregate fleet budget; 0 = none
  std::uint64_t node_count = 1;

  std::vector<std::string> validate() const;
};

// Fleet-wide bytes per second under the current intervals.
double aggregate_bandwidth_bps(const CollectionSchedule& s);

// Doubling/halving adaptation for one metric, then budget enforcement:
// below the drift threshold the interval doubles (capped at the staleness
// bound), otherwise it halves (floored at interval_min). Returns the
// metric's new interval.
double adapt_interval(CollectionSchedule& s, const std::string& metric,
                      double observed_change_rate);

// Relaxes intervals until the aggregate fits the budget, doubling the
// largest-interval metric that still has headroom first. Returns false if
// the budget is unattainable without violating a staleness bound.
bool enforce_budget(CollectionSchedule& s);

}  // namespace grapecm
