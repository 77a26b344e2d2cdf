#include <doctest.h>

#include <cmath>
#include <limits>

#include "grapecm/node_agent.hpp"
#include "grapecm/region_search.hpp"
#include "test_support.hpp"

using namespace grapecm;

namespace {

WorkloadModel planted_model(std::vector<AddressRegion> plants, double each_benefit) {
  WorkloadModel m;
  m.name = "mcf";
  for (const auto& r : plants) m.regions.push_back({r, each_benefit, 0.1, 100663296});
  m.runtime_base_s = 60.0;
  return m;
}

// Runs the full search against a single simulated node pool.
struct SearchRun {
  RegionSearch search;
  int plans_executed = 0;

  SearchRun(const WorkloadModel& model, SearchParams params, double noise_sigma,
            std::uint64_t seed)
      : search(AddressRegion{0, 4096}, params) {
    NodeConfig config;
    config.node_id = "node-0";
    config.noise_sigma = noise_sigma;
    NodeAgent node(config, test::sample_preset(), seed);
    node.start_process(model);
    while (auto plan = search.next_plan()) {
      std::vector<ExperimentResult> results;
      for (const auto& cohort : plan->cohorts) {
        for (int i = 0; i < cohort.machine_count; ++i)
          results.push_back(node.run_experiment(cohort.assignment));
      }
      for (int i = 0; i < plan->control.machine_count; ++i)
        results.push_back(node.run_experiment(plan->control.assignment));
      search.ingest(*plan, results);
      ++plans_executed;
    }
  }
};

}  // namespace

TEST_CASE("round 0 partitions the space into K equal chunks plus control") {
  auto plan = plan_round({}, {0, 4096}, 0, 64, 8);
  REQUIRE(plan.ok());
  REQUIRE(plan.value().cohorts.size() == 8);
  std::uint64_t cursor = 0;
  for (const auto& c : plan.value().cohorts) {
    REQUIRE(c.assignment.promote_regions.size() == 1);
    CHECK(c.assignment.promote_regions[0].start == cursor);
    CHECK(c.assignment.promote_regions[0].length == 512);
    cursor += 512;
    CHECK(c.machine_count == 7);  // 64 machines over 9 groups
  }
  CHECK(plan.value().control.machine_count == 8);  // absorbs the remainder
  CHECK(plan.value().control.assignment.promote_regions.empty());

  int total = plan.value().control.machine_count;
  for (const auto& c : plan.value().cohorts) total += c.machine_count;
  CHECK(total == 64);
}

TEST_CASE("plan_round requires at least branching+1 machines") {
  CHECK_FALSE(plan_round({}, {0, 4096}, 0, 8, 8).ok());
  CHECK(plan_round({}, {0, 4096}, 0, 9, 8).ok());
}

TEST_CASE("noise-free search converges to exactly the planted regions") {
  std::vector<AddressRegion> plants = {{1032, 8}, {2568, 8}};
  SearchParams params;
  params.branching_k = 8;
  params.machines_per_round = 64;
  params.epsilon = 0.001;
  params.max_rounds = 7;
  params.process = "mcf";

  SearchRun run(planted_model(plants, 0.025), params, /*noise=*/0.0, 1);
  CHECK(run.plans_executed == 7);
  CHECK(run.search.machine_experiments() == 448);
  CHECK(run.search.surviving() == plants);
}

TEST_CASE("all-zero benefit model prunes everything after round 1") {
  WorkloadModel model = planted_model({}, 0.0);
  SearchParams params;
  params.process = "mcf";
  params.epsilon = 0.001;
  SearchRun run(model, params, /*noise=*/0.0, 2);
  CHECK(run.plans_executed == 1);  // round 0 ran; round 1 pruned everything
  CHECK(run.search.done());
  CHECK(run.search.surviving().empty());
}

TEST_CASE("machine budget is respected across rounds") {
  std::vector<AddressRegion> plants = {{512, 8}};
  SearchParams params;
  params.machines_per_round = 64;
  params.max_rounds = 7;
  params.process = "mcf";
  SearchRun run(planted_model(plants, 0.03), params, 0.003, 3);
  CHECK(run.search.machine_experiments() <= 64 * 7);
}

TEST_CASE("property: with zero noise every significant plant stays contained") {
  // Soundness: each planted region is always inside some surviving chunk.
  Rng rng(904);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<AddressRegion> plants;
    int count = 1 + static_cast<int>(rng.uniform_index(3));
    std::uint64_t used = 0;
    for (int i = 0; i < count; ++i) {
      std::uint64_t start = (used + rng.uniform_index(64)) * 8;
      if (start + 8 > 4096) break;
      plants.push_back({start, 8});
      used = start / 8 + 2;
    }
    if (plants.empty()) continue;

    SearchParams params;
    params.process = "mcf";
    params.max_rounds = 7;
    WorkloadModel model = planted_model(plants, 0.02);

    NodeConfig config;
    config.noise_sigma = 0.0;
    NodeAgent node(config, test::sample_preset(), 1000 + trial);
    node.start_process(model);

    RegionSearch search(AddressRegion{0, 4096}, params);
    while (auto plan = search.next_plan()) {
      std::vector<ExperimentResult> results;
      for (const auto& cohort : plan->cohorts) {
        for (int i = 0; i < cohort.machine_count; ++i)
          results.push_back(node.run_experiment(cohort.assignment));
      }
      for (int i = 0; i < plan->control.machine_count; ++i)
        results.push_back(node.run_experiment(plan->control.assignment));
      search.ingest(*plan, results);

      for (const auto& plant : plants) {
        bool contained = false;
        for (const auto& s : search.surviving()) {
          if (s.start <= plant.start && s.end() >= plant.end()) {
            contained = true;
            break;
          }
        }
        CAPTURE(trial);
        CHECK(contained);
      }
    }
  }
}

TEST_CASE("update_estimates matches closed-form sample statistics") {
  ExperimentPlan plan;
  plan.round = 0;
  Cohort c;
  c.assignment.experiment_id = "r0-c0";
  c.assignment.promote_regions = {{0, 512}};
  c.machine_count = 8;
  plan.cohorts.push_back(c);
  plan.control.assignment.experiment_id = "r0-control";
  plan.control.machine_count = 8;

  // Eight deltas around 0.05; expected values computed independently below.
  std::vector<double> xs = {0.052, 0.047, 0.051, 0.049, 0.053, 0.048, 0.050, 0.046};
  std::vector<ExperimentResult> results;
  for (double x : xs) {
    ExperimentResult r;
    r.experiment_id = "r0-c0";
    r.node_id = "n";
    r.runtime_delta = x;
    r.fragmentation_bytes = 123;
    results.push_back(r);
  }

  double mean = 0;
  for (double x : xs) mean += x;
  mean /= 8.0;
  double ss = 0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  double expected_stderr = std::sqrt(ss / 7.0) / std::sqrt(8.0);

  auto estimates = update_estimates(plan, {}, results);
  REQUIRE(estimates.size() == 1);
  CHECK(estimates[0].mean_benefit == doctest::Approx(mean));  // no control results
  CHECK(estimates[0].std_err == doctest::Approx(expected_stderr));
  CHECK(estimates[0].samples == 8);
  CHECK(estimates[0].frag_cost_bytes == 123);
}

TEST_CASE("control cohort mean is subtracted") {
  ExperimentPlan plan;
  Cohort c;
  c.assignment.experiment_id = "r0-c0";
  c.assignment.promote_regions = {{0, 512}};
  c.machine_count = 2;
  plan.cohorts.push_back(c);
  plan.control.assignment.experiment_id = "r0-control";
  plan.control.machine_count = 2;

  std::vector<ExperimentResult> results(4);
  results[0] = {"r0-c0", "a", 0.06, 0, 0, 0, true};
  results[1] = {"r0-c0", "b", 0.04, 0, 0, 0, true};
  results[2] = {"r0-control", "c", 0.01, 0, 0, 0, true};
  results[3] = {"r0-control", "d", -0.01, 0, 0, 0, true};

  auto estimates = update_estimates(plan, {}, results);
  REQUIRE(estimates.size() == 1);
  CHECK(estimates[0].mean_benefit == doctest::Approx(0.05));  // 0.05 - 0.0
}

TEST_CASE("single result gives infinite stderr and is never prunable") {
  ExperimentPlan plan;
  Cohort c;
  c.assignment.experiment_id = "r0-c0";
  c.assignment.promote_regions = {{0, 512}};
  c.machine_count = 1;
  plan.cohorts.push_back(c);
  plan.control.assignment.experiment_id = "r0-control";

  std::vector<ExperimentResult> results(1);
  results[0] = {"r0-c0", "a", 0.0, 0, 0, 0, true};  // zero benefit, one sample

  auto estimates = update_estimates(plan, {}, results);
  REQUIRE(estimates.size() == 1);
  CHECK(std::isinf(estimates[0].std_err));
  CHECK_FALSE(estimate_is_significant(estimates[0], 0.001));

  // The next plan re-tests it rather than pruning or splitting.
  auto next = plan_round(estimates, {0, 4096}, 1, 64, 8);
  REQUIRE(next.ok());
  REQUIRE(next.value().cohorts.size() == 1);
  CHECK(next.value().cohorts[0].assignment.promote_regions[0] ==
        AddressRegion{0, 512});
}

TEST_CASE("invalid results are excluded from estimates") {
  ExperimentPlan plan;
  Cohort c;
  c.assignment.experiment_id = "r0-c0";
  c.assignment.promote_regions = {{0, 512}};
  c.machine_count = 3;
  plan.cohorts.push_back(c);
  plan.control.assignment.experiment_id = "r0-control";

  std::vector<ExperimentResult> results(3);
  results[0] = {"r0-c0", "a", 0.05, 0, 0, 0, true};
  results[1] = {"r0-c0", "b", 9.99, 0, 0, 0, false};  // flagged invalid
  results[2] = {"r0-c0", "c", 0.05, 0, 0, 0, true};

  auto estimates = update_estimates(plan, {}, results);
  REQUIRE(estimates.size() == 1);
  CHECK(estimates[0].samples == 2);
  CHECK(estimates[0].mean_benefit == doctest::Approx(0.05));
}

TEST_CASE("ties in survivor ranking break toward the lower start") {
  std::vector<RegionEstimate> prior;
  for (int i = 0; i < 6; ++i) {
    RegionEstimate e;
    e.region = {static_cast<std::uint64_t>(i) * 512, 512};
    e.mean_benefit = 0.02;  // all tied
    e.std_err = 0.0001;
    e.samples = 8;
    prior.push_back(e);
  }
  auto plan = plan_round(prior, {0, 4096}, 1, 64, 8);
  REQUIRE(plan.ok());
  // Top-4 of six tied chunks: the four with the lowest starts.
  REQUIRE(plan.value().surviving_regions.size() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(plan.value().surviving_regions[i].start ==
          static_cast<std::uint64_t>(i) * 512);
  }
}
