#pragma once

#include <optional>
#include <string>
#include <vector>

#include "grapecm/policy.hpp"

namespace grapecm {

// One completed (or passively monitored) execution of a binary. For a run
// in eager mode, alloc_latency_delta and mem_bloat are the measured
// relative deltas versus demand paging. For a passive demand-mode run they
// hold the node's modeled predictions, and predicted_latency_gain carries
// the modeled gain (cross-mode histories derive the gain from p50s
// instead).
struct RunRecord {
  PagingMode paging_mode = PagingMode::kDemandPaging;
  double latency_p50_s = 0.0;
  double alloc_latency_delta = 0.0;
  double mem_bloat = 0.0;
  std::optional<double> predicted_latency_gain;
};

// Append-only per-binary execution history.
struct ProcessHistory {
  std::string process;
  std::vector<RunRecord> runs;
};

struct ClassifierThresholds {
  double min_latency_gain = 0.05;
  double max_bloat = 0.10;
  double max_alloc_penalty = 0.05;
};

struct PagingDecision {
  PagingMode mode = PagingMode::kDemandPaging;
  bool needs_observation = false;
  std::string reason;
  double latency_gain = 0.0;
  double bloat = 0.0;
  double alloc_penalty = 0.0;
};

// Eager iff the predicted latency gain clears the threshold AND neither
// the bloat nor the allocation penalty exceeds its ceiling. All inputs are
// relative fractions, so rescaling absolute latencies cannot change the
// decision. Insufficient history yields the conservative default (demand)
// flagged needs-observation.
PagingDecision classify_paging(const ProcessHistory& h,
                               const ClassifierThresholds& thresholds = {});

}  // namespace grapecm
