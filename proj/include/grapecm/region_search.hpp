#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "grapecm/expected.hpp"
#include "grapecm/knapsack.hpp"
#include "grapecm/types.hpp"
#include "grapecm/wire.hpp"

namespace grapecm {

// ---------------------------------------------------------------------------
// Round-based huge-page benefit search: measure large chunks of the address
// space first, then narrow down to the promising regions by halving.
// ---------------------------------------------------------------------------

inline constexpr double kDefaultSearchEpsilon = 0.001;

struct Cohort {
  ExperimentAssignment assignment;
  int machine_count = 0;
};

struct ExperimentPlan {
  int round = 0;
  std::vector<Cohort> cohorts;  // one per chunk under test
  Cohort control;               // promotes nothing; always present
  // Significant regions this plan was derived from (empty at round 0).
  std::vector<AddressRegion> surviving_regions;
  bool done = false;  // nothing left to test: surviving_regions are final
};

// Plans round `round` over `space`.
//
// Round 0 partitions the space into `branching` near-equal chunks. Later
// rounds prune chunks whose benefit is not significantly above epsilon
// (mean - 2*stderr <= epsilon, never on a single sample), keep the
// top-ceil(branching/2) survivors by mean benefit (ties to the lower start
// index) and split each in two; chunks of length 1 are final and are not
// split further. Machines are spread evenly over the cohorts plus the
// control cohort, which absorbs the remainder.
Expected<ExperimentPlan> plan_round(const std::vector<RegionEstimate>& prior,
                                    AddressRegion space, int round,
                                    int budget_machines, int branching,
                                    double epsilon = kDefaultSearchEpsilon,
                                    const std::string& process = "",
                                    double experiment_duration_s = 30.0);

// Folds cohort results into estimates: per cohort, mean benefit is the
// sample mean of valid runtime deltas minus the control cohort's mean;
// stderr is the cohort's sample standard error (+inf on one sample).
// Estimates for re-tested regions replace their prior entry.
std::vector<RegionEstimate> update_estimates(
    const ExperimentPlan& plan, std::vector<RegionEstimate> prior,
    const std::vector<ExperimentResult>& results);

// The pruning predicate exposed for reuse: true when the estimate is
// significantly above epsilon. One-sample estimates are never prunable,
// but they are not significant either until re-measured.
bool estimate_is_significant(const RegionEstimate& e, double epsilon);

struct SearchParams {
  int branching_k = 8;
  int machines_per_round = 64;
  double epsilon = kDefaultSearchEpsilon;
  int max_rounds = 7;
  double experiment_duration_s = 30.0;
  std::string process;
};

// Drives plan_round/update_estimates across rounds and tracks the frontier.
class RegionSearch {
 public:
  RegionSearch(AddressRegion space, SearchParams params);

  // Next plan to execute, or nullopt when the search is done or the round
  // budget is exhausted.
  std::optional<ExperimentPlan> next_plan();

  // Feeds one executed plan's results back.
  void ingest(const ExperimentPlan& plan, const std::vector<ExperimentResult>& results);

  // Significant regions at the current granularity (plus converged ones).
  std::vector<AddressRegion> surviving() const;

  const std::vector<RegionEstimate>& frontier() const { return frontier_; }
  int rounds_run() const { return rounds_run_; }
  int machine_experiments() const { return machine_experiments_; }
  bool done() const { return done_; }

 private:
  AddressRegion space_;
  SearchParams params_;
  std::vector<RegionEstimate> frontier_;
  int next_round_ = 0;
  int rounds_run_ = 0;
  int machine_experiments_ = 0;
  bool done_ = false;
};

}  // namespace grapecm
