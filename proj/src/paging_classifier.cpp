#include "grapecm/paging_classifier.hpp"

namespace grapecm {

namespace {

double mean(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double sum = 0.0;
  for (double x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

}  // namespace

PagingDecision classify_paging(const ProcessHistory& h,
                               const ClassifierThresholds& thresholds) {
  PagingDecision out;

  std::vector<double> demand_p50, eager_p50;
  std::vector<double> bloats, penalties, predicted_gains;
  for (const RunRecord& run : h.runs) {
    if (run.paging_mode == PagingMode::kEager) {
      eager_p50.push_back(run.latency_p50_s);
      bloats.push_back(run.mem_bloat);
      penalties.push_back(run.alloc_latency_delta);
    } else {
      demand_p50.push_back(run.latency_p50_s);
      if (run.predicted_latency_gain) {
        // Passive run: deltas are the node's modeled eager predictions.
        bloats.push_back(run.mem_bloat);
        penalties.push_back(run.alloc_latency_delta);
        predicted_gains.push_back(*run.predicted_latency_gain);
      }
    }
  }

  if (!demand_p50.empty() && !eager_p50.empty()) {
    double d = mean(demand_p50);
    double e = mean(eager_p50);
    out.latency_gain = d > 0 ? (d - e) / d : 0.0;
  } else if (!predicted_gains.empty()) {
    out.latency_gain = mean(predicted_gains);
  } else {
    out.mode = PagingMode::kDemandPaging;
    out.needs_observation = true;
    out.reason = "needs-observation";
    return out;
  }

  out.bloat = mean(bloats);
  out.alloc_penalty = mean(penalties);

  if (out.latency_gain < thresholds.min_latency_gain) {
    out.mode = PagingMode::kDemandPaging;
    out.reason = "latency gain below threshold";
  } else if (out.bloat > thresholds.max_bloat) {
    out.mode = PagingMode::kDemandPaging;
    out.reason = "memory bloat above threshold";
  } else if (out.alloc_penalty > thresholds.max_alloc_penalty) {
    out.mode = PagingMode::kDemandPaging;
    out.reason = "allocation penalty above threshold";
  } else {
    out.mode = PagingMode::kEager;
    out.reason = "gain clears thresholds";
  }
  return out;
}

}  // namespace grapecm
