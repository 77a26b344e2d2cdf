#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "grapecm/expected.hpp"
#include "grapecm/node_agent.hpp"
#include "grapecm/policy.hpp"
#include "grapecm/workload.hpp"

namespace grapecm {

enum class TransportKind { kInProcess, kSocket };

enum class Pipeline {
  kFaultLatency,      // fault storm; latency histogram and percentiles
  kBenefitSweep,      // per-region estimates, promotion curve, selection
  kServiceLatency,    // operation latency under demand vs eager paging
  kRegionSearch,      // round-based narrowing over the address space
  kCoordination,      // background-task windows vs cluster-request tails
  kMetricsAdaptation, // collection intervals under a bandwidth budget
};

const char* to_string(Pipeline p);

struct SearchScenarioParams {
  int branching_k = 8;
  int machines = 64;
  double epsilon = 0.001;
  double noise_sigma = 0.003;
  int max_rounds = 7;
  double experiment_duration_s = 30.0;
  std::string process;
  int sweep_samples = 8;  // benefit-sweep cohort size
};

struct FragBudget {
  std::optional<std::uint64_t> bytes;
  std::optional<double> fraction_of_full;  // of full-promotion fragmentation
};

struct CoordinationParams {
  double period_s = 60.0;
  double task_duration_s = 1.0;
  int cap = 5;
  bool coordinated = true;
  int fanout = 10;
  double request_rate_hz = 200.0;
  double base_latency_median_s = 0.002;
  double base_latency_sigma = 0.3;
  double slow_penalty_s = 0.1;
};

struct MetricSpec {
  std::string name;
  std::uint64_t bytes = 1000;
  double staleness_bound_s = 900.0;
  bool volatile_signal = false;  // change rate stays above the threshold
};

struct MetricsParams {
  double budget_bytes_per_s = 0.0;
  double interval_min_s = 1.0;
  double drift_threshold = 0.01;
  std::vector<MetricSpec> metrics;
};

struct Scenario {
  std::string name;
  std::string description;
  Pipeline pipeline = Pipeline::kFaultLatency;
  std::uint64_t seed = 1;
  int node_count = 1;
  TransportKind transport = TransportKind::kInProcess;
  int cm_port = 0;  // socket transport only; 0 picks an ephemeral port
  double cm_rtt_us = 50.0;
  BaselineMode baseline_mode = BaselineMode::kPresetOnly;
  std::uint64_t address_space_pages = 4096;
  double duration_s = 60.0;
  double day_length_s = 86400.0;

  std::map<std::string, WorkloadModel> workload_models;
  // model name -> node indices ("all" in JSON maps to every node).
  std::map<std::string, std::vector<int>> assignments;

  PagingMode service_paging_mode = PagingMode::kDemandPaging;
  SearchScenarioParams search;
  FragBudget frag_budget;
  CoordinationParams coordination;
  MetricsParams metrics;
  std::optional<PresetPolicy> preset;

  nlohmann::json raw;  // file contents, echoed into reports

  std::vector<std::string> validate() const;
};

Expected<Scenario> scenario_from_json(const nlohmann::json& j);
Expected<Scenario> load_scenario_file(const std::string& path);

nlohmann::json workload_to_json(const WorkloadModel& m);
Expected<WorkloadModel> workload_from_json(const std::string& name,
                                           const nlohmann::json& j);

}  // namespace grapecm
