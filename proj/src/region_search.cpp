#include "grapecm/region_search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace grapecm {

namespace {

std::string experiment_id(int round, std::size_t cohort) {
  return "r" + std::to_string(round) + "-c" + std::to_string(cohort);
}

std::string control_id(int round) { return "r" + std::to_string(round) + "-control"; }

Cohort make_cohort(std::string id, const std::string& process,
                   std::vector<AddressRegion> regions, int machines,
                   double duration_s) {
  Cohort c;
  c.assignment.experiment_id = std::move(id);
  c.assignment.process = process;
  c.assignment.promote_regions = std::move(regions);
  c.assignment.duration_s = duration_s;
  c.machine_count = machines;
  return c;
}

void spread_machines(ExperimentPlan& plan, int budget_machines) {
  const int groups = static_cast<int>(plan.cohorts.size()) + 1;
  const int per = budget_machines / groups;
  for (auto& c : plan.cohorts) c.machine_count = per;
  plan.control.machine_count = per + (budget_machines - per * groups);
}

}  // namespace

bool estimate_is_significant(const RegionEstimate& e, double epsilon) {
  if (!std::isfinite(e.std_err)) return false;  // one sample: unproven
  return e.mean_benefit - 2.0 * e.std_err > epsilon;
}

Expected<ExperimentPlan> plan_round(const std::vector<RegionEstimate>& prior,
                                    AddressRegion space, int round,
                                    int budget_machines, int branching,
                                    double epsilon, const std::string& process,
                                    double experiment_duration_s) {
  if (branching < 1) return make_error("plan_round: branching must be >= 1");
  if (budget_machines < branching + 1) {
    return make_error("plan_round: need at least branching+1 machines (" +
                      std::to_string(branching + 1) + ")");
  }
  if (space.length == 0) return make_error("plan_round: empty search space");
  if (round < 0) return make_error("plan_round: negative round");

  ExperimentPlan plan;
  plan.round = round;
  plan.control = make_cohort(control_id(round), process, {}, 0, experiment_duration_s);

  if (round == 0) {
    // No data yet: K near-equal chunks covering the space.
    const std::uint64_t k = static_cast<std::uint64_t>(branching);
    const std::uint64_t base = space.length / k;
    const std::uint64_t extra = space.length % k;
    std::uint64_t cursor = space.start;
    for (std::uint64_t i = 0; i < k && cursor < space.end(); ++i) {
      std::uint64_t len = base + (i < extra ? 1 : 0);
      if (len == 0) continue;
      plan.cohorts.push_back(make_cohort(experiment_id(round, plan.cohorts.size()),
                                         process, {AddressRegion{cursor, len}}, 0,
                                         experiment_duration_s));
      cursor += len;
    }
    spread_machines(plan, budget_machines);
    return plan;
  }

  // Prune the not-significant chunks, rank the survivors.
  std::vector<const RegionEstimate*> survivors;
  for (const auto& e : prior) {
    // One-sample estimates are never prunable; carry them forward for
    // re-measurement rather than splitting blind.
    if (!std::isfinite(e.std_err)) {
      survivors.push_back(&e);
      continue;
    }
    if (e.mean_benefit - 2.0 * e.std_err > epsilon) survivors.push_back(&e);
  }
  std::sort(survivors.begin(), survivors.end(),
            [](const RegionEstimate* a, const RegionEstimate* b) {
              if (a->mean_benefit != b->mean_benefit)
                return a->mean_benefit > b->mean_benefit;
              return a->region.start < b->region.start;
            });
  const std::size_t keep = static_cast<std::size_t>((branching + 1) / 2);
  if (survivors.size() > keep) survivors.resize(keep);

  for (const auto* e : survivors) {
    plan.surviving_regions.push_back(e->region);

    if (e->region.length <= 1) continue;  // single-region granularity: final

    if (!std::isfinite(e->std_err)) {
      // Re-test as-is to get a second sample before deciding to split.
      plan.cohorts.push_back(make_cohort(experiment_id(round, plan.cohorts.size()),
                                         process, {e->region}, 0,
                                         experiment_duration_s));
      continue;
    }
    const std::uint64_t left_len = (e->region.length + 1) / 2;
    AddressRegion left{e->region.start, left_len};
    AddressRegion right{e->region.start + left_len, e->region.length - left_len};
    plan.cohorts.push_back(make_cohort(experiment_id(round, plan.cohorts.size()),
                                       process, {left}, 0, experiment_duration_s));
    plan.cohorts.push_back(make_cohort(experiment_id(round, plan.cohorts.size()),
                                       process, {right}, 0, experiment_duration_s));
  }
  std::sort(plan.surviving_regions.begin(), plan.surviving_regions.end(),
            [](const AddressRegion& a, const AddressRegion& b) {
              return a.start < b.start;
            });

  if (static_cast<int>(plan.cohorts.size()) + 1 > budget_machines) {
    return make_error("plan_round: cohorts exceed machine budget");
  }
  if (plan.cohorts.empty()) {
    plan.done = true;  // everything pruned or converged: estimates are final
    return plan;
  }
  spread_machines(plan, budget_machines);
  return plan;
}

std::vector<RegionEstimate> update_estimates(
    const ExperimentPlan& plan, std::vector<RegionEstimate> prior,
    const std::vector<ExperimentResult>& results) {
  std::map<std::string, std::vector<double>> deltas;
  std::map<std::string, std::uint64_t> frag;
  for (const auto& r : results) {
    if (!r.valid) continue;
    deltas[r.experiment_id].push_back(r.runtime_delta);
    frag[r.experiment_id] = r.fragmentation_bytes;
  }

  double control_mean = 0.0;
  if (auto it = deltas.find(plan.control.assignment.experiment_id);
      it != deltas.end() && !it->second.empty()) {
    for (double d : it->second) control_mean += d;
    control_mean /= static_cast<double>(it->second.size());
  }

  for (const auto& cohort : plan.cohorts) {
    auto it = deltas.find(cohort.assignment.experiment_id);
    if (it == deltas.end() || it->second.empty()) continue;
    if (cohort.assignment.promote_regions.size() != 1) continue;

    const std::vector<double>& xs = it->second;
    const double n = static_cast<double>(xs.size());
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;

    double std_err = std::numeric_limits<double>::infinity();
    if (xs.size() >= 2) {
      double ss = 0.0;
      for (double x : xs) ss += (x - mean) * (x - mean);
      std_err = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    }

    RegionEstimate e;
    e.region = cohort.assignment.promote_regions.front();
    e.mean_benefit = mean - control_mean;
    e.std_err = std_err;
    e.samples = xs.size();
    e.frag_cost_bytes = frag[cohort.assignment.experiment_id];

    bool replaced = false;
    for (auto& p : prior) {
      if (p.region == e.region) {
        p = e;
        replaced = true;
        break;
      }
    }
    if (!replaced) prior.push_back(e);
  }

  std::sort(prior.begin(), prior.end(),
            [](const RegionEstimate& a, const RegionEstimate& b) {
              return a.region.start < b.region.start;
            });
  return prior;
}

RegionSearch::RegionSearch(AddressRegion space, SearchParams params)
    : space_(space), params_(std::move(params)) {}

std::optional<ExperimentPlan> RegionSearch::next_plan() {
  if (done_ || next_round_ >= params_.max_rounds) return std::nullopt;
  auto plan = plan_round(frontier_, space_, next_round_, params_.machines_per_round,
                         params_.branching_k, params_.epsilon, params_.process,
                         params_.experiment_duration_s);
  if (!plan.ok()) {
    done_ = true;
    return std::nullopt;
  }
  if (plan.value().done) {
    done_ = true;
    // Frontier keeps only what survived.
    std::vector<RegionEstimate> kept;
    for (const auto& e : frontier_) {
      for (const auto& r : plan.value().surviving_regions) {
        if (e.region == r) kept.push_back(e);
      }
    }
    frontier_ = std::move(kept);
    return std::nullopt;
  }
  return plan.value();
}

void RegionSearch::ingest(const ExperimentPlan& plan,
                          const std::vector<ExperimentResult>& results) {
  // Converged survivors carry their estimates forward; split parents are
  // superseded by their halves' fresh estimates.
  std::vector<RegionEstimate> carried;
  for (const auto& e : frontier_) {
    bool retested = false;
    for (const auto& cohort : plan.cohorts) {
      if (cohort.assignment.promote_regions.size() == 1 &&
          cohort.assignment.promote_regions.front().overlaps(e.region)) {
        retested = true;
        break;
      }
    }
    if (retested) continue;
    for (const auto& r : plan.surviving_regions) {
      if (e.region == r) {
        carried.push_back(e);
        break;
      }
    }
  }
  frontier_ = update_estimates(plan, std::move(carried), results);
  next_round_ = plan.round + 1;
  rounds_run_ += 1;
  machine_experiments_ += plan.control.machine_count;
  for (const auto& c : plan.cohorts) machine_experiments_ += c.machine_count;
}

std::vector<AddressRegion> RegionSearch::surviving() const {
  std::vector<const RegionEstimate*> survivors;
  for (const auto& e : frontier_) {
    if (estimate_is_significant(e, params_.epsilon)) survivors.push_back(&e);
  }
  std::sort(survivors.begin(), survivors.end(),
            [](const RegionEstimate* a, const RegionEstimate* b) {
              if (a->mean_benefit != b->mean_benefit)
                return a->mean_benefit > b->mean_benefit;
              return a->region.start < b->region.start;
            });
  const std::size_t keep = static_cast<std::size_t>((params_.branching_k + 1) / 2);
  if (survivors.size() > keep) survivors.resize(keep);
  std::vector<AddressRegion> out;
  for (const auto* e : survivors) out.push_back(e->region);
  std::sort(out.begin(), out.end(), [](const AddressRegion& a, const AddressRegion& b) {
    return a.start < b.start;
  });
  return out;
}

}  // namespace grapecm
