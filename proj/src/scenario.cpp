#include "grapecm/scenario.hpp"

#include <fstream>

#include "grapecm/wire.hpp"

namespace grapecm {

using nlohmann::json;

const char* to_string(Pipeline p) {
  switch (p) {
    case Pipeline::kFaultLatency: return "fault-latency";
    case Pipeline::kBenefitSweep: return "benefit-sweep";
    case Pipeline::kServiceLatency: return "service-latency";
    case Pipeline::kRegionSearch: return "region-search";
    case Pipeline::kCoordination: return "coordination";
    case Pipeline::kMetricsAdaptation: return "metrics-adaptation";
  }
  return "unknown";
}

namespace {

Expected<Pipeline> pipeline_from(const std::string& s) {
  if (s == "fault-latency") return Pipeline::kFaultLatency;
  if (s == "benefit-sweep") return Pipeline::kBenefitSweep;
  if (s == "service-latency") return Pipeline::kServiceLatency;
  if (s == "region-search") return Pipeline::kRegionSearch;
  if (s == "coordination") return Pipeline::kCoordination;
  if (s == "metrics-adaptation") return Pipeline::kMetricsAdaptation;
  return make_error("scenario: unknown pipeline: " + s);
}

double num_or(const json& j, const char* key, double fallback) {
  auto it = j.find(key);
  return it != j.end() && it->is_number() ? it->get<double>() : fallback;
}

}  // namespace

json workload_to_json(const WorkloadModel& m) {
  json regions = json::array();
  for (const auto& r : m.regions) {
    regions.push_back({{"start", r.region.start},
                       {"length", r.region.length},
                       {"benefit", r.benefit},
                       {"walk-reduction", r.walk_reduction},
                       {"frag-cost-bytes", r.frag_cost_bytes}});
  }
  return {{"regions", std::move(regions)},
          {"paging",
           {{"eager-latency-gain", m.paging.eager_latency_gain},
            {"eager-alloc-penalty", m.paging.eager_alloc_penalty},
            {"eager-bloat", m.paging.eager_bloat}}},
          {"fault-rate-hz", m.fault_rate_hz},
          {"runtime-base-s", m.runtime_base_s},
          {"cow-break-fraction", m.cow_break_fraction},
          {"huge-alloc-failure-rate", m.huge_alloc_failure_rate},
          {"priority", m.priority},
          {"op-rate-hz", m.op_rate_hz},
          {"op-latency-median-s", m.op_latency_median_s},
          {"op-latency-sigma", m.op_latency_sigma}};
}

Expected<WorkloadModel> workload_from_json(const std::string& name, const json& j) {
  if (!j.is_object()) return make_error("workload " + name + ": not an object");
  WorkloadModel m;
  m.name = name;
  if (j.contains("regions")) {
    if (!j["regions"].is_array())
      return make_error("workload " + name + ": regions must be an array");
    for (const auto& rj : j["regions"]) {
      RegionProfile p;
      auto region = region_from_json(rj);
      if (!region.ok()) return region.error();
      p.region = region.value();
      p.benefit = num_or(rj, "benefit", 0.0);
      p.walk_reduction = num_or(rj, "walk-reduction", 0.0);
      p.frag_cost_bytes = static_cast<std::uint64_t>(num_or(rj, "frag-cost-bytes", 0.0));
      m.regions.push_back(p);
    }
  }
  if (j.contains("paging")) {
    const json& pj = j["paging"];
    m.paging.eager_latency_gain = num_or(pj, "eager-latency-gain", 0.0);
    m.paging.eager_alloc_penalty = num_or(pj, "eager-alloc-penalty", 0.0);
    m.paging.eager_bloat = num_or(pj, "eager-bloat", 0.0);
  }
  m.fault_rate_hz = num_or(j, "fault-rate-hz", 0.0);
  m.runtime_base_s = num_or(j, "runtime-base-s", 0.0);
  m.cow_break_fraction = num_or(j, "cow-break-fraction", 0.0);
  m.huge_alloc_failure_rate = num_or(j, "huge-alloc-failure-rate", 0.0);
  m.priority = static_cast<int>(num_or(j, "priority", 0.0));
  m.op_rate_hz = num_or(j, "op-rate-hz", 0.0);
  m.op_latency_median_s = num_or(j, "op-latency-median-s", 0.0);
  m.op_latency_sigma = num_or(j, "op-latency-sigma", 0.0);
  return m;
}

Expected<Scenario> scenario_from_json(const json& j) {
  if (!j.is_object()) return make_error("scenario: not a JSON object");
  Scenario s;
  s.raw = j;
  s.name = j.value("name", "");
  s.description = j.value("description", "");

  if (!j.contains("pipeline")) return make_error("scenario: missing field: pipeline");
  auto pipeline = pipeline_from(j["pipeline"].get<std::string>());
  if (!pipeline.ok()) return pipeline.error();
  s.pipeline = pipeline.value();

  s.seed = static_cast<std::uint64_t>(num_or(j, "seed", 1.0));
  s.node_count = static_cast<int>(num_or(j, "node-count", 1.0));
  s.cm_port = static_cast<int>(num_or(j, "cm-port", 0.0));
  s.cm_rtt_us = num_or(j, "cm-rtt-us", 50.0);
  s.address_space_pages =
      static_cast<std::uint64_t>(num_or(j, "address-space-pages", 4096.0));
  s.duration_s = num_or(j, "duration-s", 60.0);
  s.day_length_s = num_or(j, "day-length-s", 86400.0);

  if (j.contains("transport")) {
    std::string t = j["transport"].get<std::string>();
    if (t == "in-process") s.transport = TransportKind::kInProcess;
    else if (t == "socket") s.transport = TransportKind::kSocket;
    else return make_error("scenario: unknown transport: " + t);
  }
  if (j.contains("baseline-mode")) {
    std::string b = j["baseline-mode"].get<std::string>();
    if (b == "linux-model") s.baseline_mode = BaselineMode::kLinuxModel;
    else if (b == "preset-only") s.baseline_mode = BaselineMode::kPresetOnly;
    else return make_error("scenario: unknown baseline-mode: " + b);
  }
  if (j.contains("service-paging-mode")) {
    std::string m = j["service-paging-mode"].get<std::string>();
    if (m == "eager") s.service_paging_mode = PagingMode::kEager;
    else if (m == "demand-paging") s.service_paging_mode = PagingMode::kDemandPaging;
    else return make_error("scenario: unknown service-paging-mode: " + m);
  }

  if (j.contains("workload-models")) {
    for (auto it = j["workload-models"].begin(); it != j["workload-models"].end();
         ++it) {
      auto m = workload_from_json(it.key(), it.value());
      if (!m.ok()) return m.error();
      s.workload_models[it.key()] = m.value();
    }
  }
  if (j.contains("assignments")) {
    for (auto it = j["assignments"].begin(); it != j["assignments"].end(); ++it) {
      std::vector<int> nodes;
      if (it.value().is_string() && it.value() == "all") {
        for (int i = 0; i < s.node_count; ++i) nodes.push_back(i);
      } else if (it.value().is_array()) {
        for (const auto& n : it.value()) nodes.push_back(n.get<int>());
      } else {
        return make_error("scenario: assignments[" + it.key() +
                          "] must be \"all\" or an index array");
      }
      s.assignments[it.key()] = std::move(nodes);
    }
  }

  if (j.contains("search")) {
    const json& sj = j["search"];
    s.search.branching_k = static_cast<int>(num_or(sj, "k", 8.0));
    s.search.machines = static_cast<int>(num_or(sj, "machines", 64.0));
    s.search.epsilon = num_or(sj, "epsilon", 0.001);
    s.search.noise_sigma = num_or(sj, "noise-sigma", 0.003);
    s.search.max_rounds = static_cast<int>(num_or(sj, "max-rounds", 7.0));
    s.search.experiment_duration_s = num_or(sj, "experiment-duration-s", 30.0);
    s.search.sweep_samples = static_cast<int>(num_or(sj, "sweep-samples", 8.0));
    s.search.process = sj.value("process", "");
  }

  if (j.contains("frag-budget")) {
    const json& fb = j["frag-budget"];
    if (fb.contains("bytes"))
      s.frag_budget.bytes = fb["bytes"].get<std::uint64_t>();
    if (fb.contains("fraction-of-full"))
      s.frag_budget.fraction_of_full = fb["fraction-of-full"].get<double>();
  }

  if (j.contains("coordination")) {
    const json& cj = j["coordination"];
    s.coordination.period_s = num_or(cj, "period-s", 60.0);
    s.coordination.task_duration_s = num_or(cj, "task-duration-s", 1.0);
    s.coordination.cap = static_cast<int>(num_or(cj, "cap", 5.0));
    s.coordination.coordinated = cj.value("coordinated", true);
    s.coordination.fanout = static_cast<int>(num_or(cj, "fanout", 10.0));
    s.coordination.request_rate_hz = num_or(cj, "request-rate-hz", 200.0);
    s.coordination.base_latency_median_s = num_or(cj, "base-latency-median-s", 0.002);
    s.coordination.base_latency_sigma = num_or(cj, "base-latency-sigma", 0.3);
    s.coordination.slow_penalty_s = num_or(cj, "slow-penalty-s", 0.1);
  }

  if (j.contains("metrics")) {
    const json& mj = j["metrics"];
    s.metrics.budget_bytes_per_s = num_or(mj, "budget-bytes-per-s", 0.0);
    s.metrics.interval_min_s = num_or(mj, "interval-min-s", 1.0);
    s.metrics.drift_threshold = num_or(mj, "drift-threshold", 0.01);
    if (mj.contains("metrics")) {
      for (const auto& spec : mj["metrics"]) {
        MetricSpec m;
        m.name = spec.value("name", "");
        m.bytes = static_cast<std::uint64_t>(num_or(spec, "bytes", 1000.0));
        m.staleness_bound_s = num_or(spec, "staleness-bound-s", 900.0);
        m.volatile_signal = spec.value("behavior", "stable") == std::string("volatile");
        s.metrics.metrics.push_back(std::move(m));
      }
    }
    // Compact generator form for large metric sets.
    if (mj.contains("metric-groups")) {
      for (const auto& g : mj["metric-groups"]) {
        int count = static_cast<int>(num_or(g, "count", 1.0));
        std::string prefix = g.value("name-prefix", "metric");
        for (int i = 0; i < count; ++i) {
          MetricSpec m;
          m.name = prefix + "-" + std::to_string(i);
          m.bytes = static_cast<std::uint64_t>(num_or(g, "bytes", 1000.0));
          m.staleness_bound_s = num_or(g, "staleness-bound-s", 900.0);
          m.volatile_signal = g.value("behavior", "stable") == std::string("volatile");
          s.metrics.metrics.push_back(std::move(m));
        }
      }
    }
  }

  if (j.contains("preset")) {
    auto p = preset_from_json(j["preset"]);
    if (!p.ok()) return p.error();
    s.preset = p.value();
  }

  return s;
}

Expected<Scenario> load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) return make_error("cannot open scenario: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) return make_error("scenario " + path + ": malformed json");
  auto s = scenario_from_json(j);
  if (!s.ok()) return s.error();
  Scenario scenario = std::move(s).value();
  if (scenario.name.empty()) {
    std::size_t slash = path.find_last_of('/');
    std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
    std::size_t dot = base.find_last_of('.');
    scenario.name = dot == std::string::npos ? base : base.substr(0, dot);
  }
  return scenario;
}

std::vector<std::string> Scenario::validate() const {
  std::vector<std::string> violations;
  if (node_count <= 0) violations.push_back("node-count: must be positive");
  if (duration_s <= 0) violations.push_back("duration-s: must be positive");
  if (seed == 0) violations.push_back("seed: must be nonzero");
  if (cm_rtt_us < 0) violations.push_back("cm-rtt-us: must be non-negative");
  if (address_space_pages == 0)
    violations.push_back("address-space-pages: must be positive");

  for (const auto& [name, model] : workload_models) {
    for (const auto& v : model.validate(address_space_pages)) violations.push_back(v);
  }
  for (const auto& [name, nodes] : assignments) {
    if (!workload_models.count(name))
      violations.push_back("assignments: undefined workload model " + name);
    for (int idx : nodes) {
      if (idx < 0 || idx >= node_count)
        violations.push_back("assignments[" + name + "]: node index out of range");
    }
  }

  switch (pipeline) {
    case Pipeline::kFaultLatency:
    case Pipeline::kServiceLatency:
      if (assignments.empty()) violations.push_back("assignments: required");
      break;
    case Pipeline::kBenefitSweep:
    case Pipeline::kRegionSearch:
      if (search.process.empty())
        violations.push_back("search.process: required");
      else if (!workload_models.count(search.process))
        violations.push_back("search.process: undefined workload model");
      if (search.branching_k < 1) violations.push_back("search.k: must be >= 1");
      if (search.machines < search.branching_k + 1)
        violations.push_back("search.machines: must be >= k+1");
      if (search.max_rounds < 1) violations.push_back("search.max-rounds: must be >= 1");
      break;
    case Pipeline::kCoordination:
      if (coordination.cap < 1) violations.push_back("coordination.cap: must be >= 1");
      if (coordination.fanout < 1 || coordination.fanout > node_count)
        violations.push_back("coordination.fanout: must be in [1, node-count]");
      break;
    case Pipeline::kMetricsAdaptation:
      if (metrics.metrics.empty()) violations.push_back("metrics.metrics: required");
      if (metrics.budget_bytes_per_s <= 0)
        violations.push_back("metrics.budget-bytes-per-s: must be positive");
      for (const auto& m : metrics.metrics) {
        if (m.staleness_bound_s < metrics.interval_min_s)
          violations.push_back("metrics[" + m.name + "]: staleness below interval-min");
      }
      break;
  }

  if (preset) {
    for (const auto& v : validate_preset(*preset, address_space_pages))
      violations.push_back("preset: " + v);
  }
  return violations;
}

}  // namespace grapecm
