#include "grapecm/background_schedule.hpp"

#include <algorithm>

namespace grapecm {

bool TaskWindow::active_at(micros_t offset_us, micros_t period_us) const {
  micros_t start = start_us % period_us;
  micros_t end = start + duration_us;
  if (end <= period_us) return offset_us >= start && offset_us < end;
  // Wrapped window: [start, period) U [0, end - period).
  return offset_us >= start || offset_us < end - period_us;
}

Expected<std::vector<TaskWindow>> schedule_background(
    const std::vector<std::string>& nodes, const BackgroundScheduleRequest& req) {
  const std::size_t n = nodes.size();
  if (req.cap < 1) return make_error("schedule: cap must be >= 1");
  if (req.task_duration_s <= 0) return make_error("schedule: task duration must be positive");
  if (req.period_s <= 0) return make_error("schedule: period must be positive");
  if (req.task_duration_s > req.preset_max_duration_s) {
    return make_error("schedule: task duration exceeds preset max-duration");
  }
  const double lhs = static_cast<double>(n) * req.task_duration_s;
  const double rhs = static_cast<double>(req.cap) * req.period_s;
  if (lhs > rhs) {
    return make_error("schedule: infeasible, N*task_duration <= cap*period violated (" +
                      std::to_string(lhs) + " > " + std::to_string(rhs) + ")");
  }

  const micros_t period_us = seconds_to_micros(req.period_s);
  const micros_t dur_us = seconds_to_micros(req.task_duration_s);
  std::vector<TaskWindow> windows;
  windows.reserve(n);

  const std::size_t cap = static_cast<std::size_t>(req.cap);
  const std::size_t slot_count = n == 0 ? 0 : (n + cap - 1) / cap;

  if (slot_count > 0 &&
      static_cast<micros_t>(slot_count) * dur_us <= period_us) {
    // Evenly spread slots of up to `cap` nodes. Slot spacing is at least
    // the task duration, so adjacent slots never overlap.
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t slot = i / cap;
      micros_t start = static_cast<micros_t>(
          (static_cast<unsigned long long>(period_us) * slot) / slot_count);
      windows.push_back(TaskWindow{nodes[i], start, dur_us, req.preset_max_cpu});
    }
  } else {
    // Tight fit: tile windows back to back over cap lanes, wrapping at the
    // period boundary. Folding the <= cap*period tiling into one period
    // keeps concurrency at ceil(N*dur/period) <= cap.
    for (std::size_t i = 0; i < n; ++i) {
      micros_t start = static_cast<micros_t>(
          (static_cast<unsigned long long>(i) * dur_us) % period_us);
      windows.push_back(TaskWindow{nodes[i], start, dur_us, req.preset_max_cpu});
    }
  }
  return windows;
}

int max_concurrent(const std::vector<TaskWindow>& windows, micros_t period_us) {
  // Concurrency can only increase at a window start, so probing every
  // start instant is exhaustive.
  int best = 0;
  for (const auto& probe : windows) {
    micros_t at = probe.start_us % period_us;
    int active = 0;
    for (const auto& w : windows) {
      if (w.active_at(at, period_us)) ++active;
    }
    best = std::max(best, active);
  }
  return best;
}

}  // namespace grapecm
