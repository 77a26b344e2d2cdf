#pragma once

#include <string>
#include <vector>

#include "grapecm/expected.hpp"
#include "grapecm/types.hpp"

namespace grapecm {

// One node's slot for a coordinated background task, repeating every
// period. Windows may wrap around the period boundary.
struct TaskWindow {
  std::string node_id;
  micros_t start_us = 0;
  micros_t duration_us = 0;
  double max_cpu = 0.0;

  bool active_at(micros_t offset_us, micros_t period_us) const;
};

struct BackgroundScheduleRequest {
  double task_duration_s = 1.0;
  double period_s = 60.0;
  int cap = 1;  // max nodes in-window at any instant
  double preset_max_duration_s = 1.0;
  double preset_max_cpu = 0.02;
};

// Staggers one window per node per period such that at most `cap` nodes
// are in-window at any virtual instant. When ceil(N/cap) slots of the task
// duration fit in the period, slots are spread evenly; otherwise windows
// are packed back to back across the period (wrapping), which meets the
// cap exactly when N * duration <= cap * period. Infeasible requests fail
// naming the violated inequality.
Expected<std::vector<TaskWindow>> schedule_background(
    const std::vector<std::string>& nodes, const BackgroundScheduleRequest& req);

// Exhaustive concurrency check over one period: evaluates every window
// boundary instant, including wrapped segments.
int max_concurrent(const std::vector<TaskWindow>& windows, micros_t period_us);

}  // namespace grapecm
