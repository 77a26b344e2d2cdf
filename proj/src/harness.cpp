#include "grapecm/harness.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <queue>

#include "grapecm/background_schedule.hpp"
#include "grapecm/cluster_manager.hpp"
#include "grapecm/event_log.hpp"
#include "grapecm/metrics_schedule.hpp"
#include "grapecm/node_agent.hpp"
#include "grapecm/region_search.hpp"
#include "grapecm/stats.hpp"
#include "grapecm/transport.hpp"

namespace grapecm {

using nlohmann::json;

namespace {

// A preset with no unspecified fields: the fail-fast configuration a CM
// would push when it wants zero escalations.
PresetPolicy default_preset() {
  PresetPolicy p;
  p.version = 1;
  p.mem_alloc_default = PagingMode::kDemandPaging;
  p.copy_on_write = CowMode::kOn;
  p.page_size_default = 4096;
  p.numa_balancing = NumaMode::kLocal;
  p.out_of_memory = OomMode::kKillLowestPriority;
  p.mem_reclaim = ReclaimMode::kOff;
  p.page_compaction = {0.0, 1.0, 0.02};
  p.page_zeroing = {30.0, 0.02};
  p.huge_page_promotion_async = Toggle::kOff;
  p.dirty_access_bit_scan = {30.0, 0.10};
  return p;
}

std::string node_name(int i) { return "node-" + std::to_string(i); }

json region_list_json(const std::vector<AddressRegion>& regions) {
  json out = json::array();
  for (const auto& r : regions) out.push_back(region_to_json(r));
  return out;
}

json estimates_json(const std::vector<RegionEstimate>& estimates) {
  json out = json::array();
  for (const auto& e : estimates) {
    out.push_back({{"region", region_to_json(e.region)},
                   {"mean-benefit", e.mean_benefit},
                   {"std-err", std::isfinite(e.std_err) ? json(e.std_err) : json()},
                   {"samples", e.samples},
                   {"frag-cost-bytes", e.frag_cost_bytes}});
  }
  return out;
}

// Fleet of simulated nodes wired to one CM over the scenario's transport.
struct Fleet {
  Scenario scenario;
  EventLog log;
  ClusterManager cm;
  std::unique_ptr<CmTcpServer> server;
  std::vector<std::unique_ptr<CmChannel>> channels;
  std::vector<std::unique_ptr<NodeAgent>> nodes;

  explicit Fleet(const Scenario& s, const std::string& log_path = "",
                 CmConfig cm_config = {})
      : scenario(s),
        log(log_path.empty() ? EventLog{} : EventLog{log_path}),
        cm(with_space(std::move(cm_config), s), &log) {}

  static CmConfig with_space(CmConfig c, const Scenario& s) {
    c.address_space_pages = s.address_space_pages;
    return c;
  }

  Expected<bool> build() {
    cm.set_base_preset(scenario.preset ? *scenario.preset : default_preset());

    if (scenario.transport == TransportKind::kSocket) {
      auto srv = CmTcpServer::start(cm, scenario.cm_port);
      if (!srv.ok()) return srv.error();
      server = std::move(srv).value();
    }

    for (int i = 0; i < scenario.node_count; ++i) {
      NodeConfig config;
      config.node_id = node_name(i);
      config.address_space_pages = scenario.address_space_pages;
      config.cm_rtt_us = scenario.cm_rtt_us;
      config.mode = scenario.baseline_mode;
      config.noise_sigma = scenario.search.noise_sigma;
      config.day_length_s = scenario.day_length_s;

      auto node = std::make_unique<NodeAgent>(
          config, scenario.preset ? *scenario.preset : default_preset(),
          scenario.seed);

      if (scenario.transport == TransportKind::kSocket) {
        auto ch = TcpChannel::connect("127.0.0.1", server->port());
        if (!ch.ok()) return ch.error();
        channels.push_back(std::move(ch).value());
      } else {
        channels.push_back(std::make_unique<InProcessChannel>(cm));
      }
      CmChannel* channel = channels.back().get();
      node->set_query_handler([channel](const PolicyQuery& q) -> std::optional<PolicyResponse> {
        auto resp = channel->exchange(Message{q});
        if (!resp) return std::nullopt;
        if (const auto* r = std::get_if<PolicyResponse>(&*resp)) return *r;
        return std::nullopt;
      });
      nodes.push_back(std::move(node));
    }

    // Hello handshake: the CM answers with the current preset.
    for (int i = 0; i < scenario.node_count; ++i) {
      Hello hello;
      hello.node_id = node_name(i);
      hello.hardware_class = "hc-a";
      for (const auto& [model_name, node_list] : scenario.assignments) {
        if (std::find(node_list.begin(), node_list.end(), i) == node_list.end())
          continue;
        const WorkloadModel& model = scenario.workload_models.at(model_name);
        ProcessInfo info;
        info.priority = model.priority;
        if (!model.regions.empty()) info.main_region = model.regions.front().region;
        hello.software_manifest[model_name] = info;
      }
      auto resp = channels[i]->exchange(Message{hello});
      if (resp) {
        if (const auto* dl = std::get_if<PresetDownload>(&*resp)) {
          nodes[i]->download_preset(dl->preset);
        }
      }
      for (const auto& [model_name, node_list] : scenario.assignments) {
        if (std::find(node_list.begin(), node_list.end(), i) != node_list.end()) {
          nodes[i]->start_process(scenario.workload_models.at(model_name));
        }
      }
    }
    return true;
  }
};

json base_report(const Scenario& s) {
  return {{"name", s.name},
          {"description", s.description},
          {"pipeline", to_string(s.pipeline)},
          {"seed", s.seed},
          {"config", s.raw}};
}

// ---------------------------------------------------------------------------
// fault-latency: fault storm, histogram and percentiles.
// ---------------------------------------------------------------------------

Expected<RunOutput> run_fault_latency(const Scenario& s,
                                      const std::string& log_path) {
  Fleet fleet(s, log_path);
  auto built = fleet.build();
  if (!built.ok()) return built.error();

  const micros_t until = seconds_to_micros(s.duration_s);
  for (auto& node : fleet.nodes) node->step(until);

  std::vector<double> latencies;
  LogHistogram hist;
  double faults = 0.0, fallbacks = 0.0;
  std::uint64_t slow = 0;
  for (const auto& node : fleet.nodes) {
    for (double l : node->fault_latencies_us()) {
      latencies.push_back(l);
      hist.add(l);
      if (l > 1000.0) ++slow;
    }
    const auto& counters = node->state().counters;
    auto get = [&counters](const char* k) {
      auto it = counters.find(k);
      return it == counters.end() ? 0.0 : it->second;
    };
    faults += get("fault-fast-base") + get("fault-huge-alloc") +
              get("fault-cow-share") + get("fault-compaction-fallback") +
              get("fault-reclaim-fallback");
    fallbacks += get("fallbacks");
  }

  LatencyStats stats = summarize(latencies);
  json report = base_report(s);
  report["fault-latency"] = {
      {"faults", stats.count},
      {"p50-us", stats.p50},
      {"p99-us", stats.p99},
      {"p999-us", stats.p999},
      {"min-us", stats.min},
      {"max-us", stats.max},
      {"decades-spanned", decades_spanned(latencies)},
      {"fallback-share", faults > 0 ? fallbacks / faults : 0.0},
      {"slow-share-over-1ms",
       stats.count > 0 ? static_cast<double>(slow) / static_cast<double>(stats.count)
                       : 0.0},
      {"histogram", hist.to_json()},
      {"queries-handled", fleet.cm.queries_handled()},
      {"alerts", fleet.cm.alerts_raised()}};
  return RunOutput{std::move(report), hist.to_csv()};
}

// ---------------------------------------------------------------------------
// benefit-sweep: per-region estimates, promotion curve, budgeted selection.
// ---------------------------------------------------------------------------

Expected<RunOutput> run_benefit_sweep(const Scenario& s,
                                      const std::string& log_path) {
  Scenario augmented = s;
  if (augmented.assignments.empty()) {
    std::vector<int> all;
    for (int i = 0; i < s.node_count; ++i) all.push_back(i);
    augmented.assignments[s.search.process] = all;
  }
  Fleet fleet(augmented, log_path);
  auto built = fleet.build();
  if (!built.ok()) return built.error();

  const WorkloadModel& model = s.workload_models.at(s.search.process);
  const int samples = std::max(1, s.search.sweep_samples);
  std::size_t cursor = 0;
  auto next_node = [&fleet, &cursor]() -> NodeAgent& {
    NodeAgent& n = *fleet.nodes[cursor % fleet.nodes.size()];
    ++cursor;
    return n;
  };

  // One cohort per model region plus a control cohort, mirroring how the
  // CM generates promotion data across machine subsets.
  ExperimentPlan plan;
  plan.round = 0;
  for (std::size_t i = 0; i < model.regions.size(); ++i) {
    Cohort c;
    c.assignment.experiment_id = "sweep-r" + std::to_string(i);
    c.assignment.process = model.name;
    c.assignment.promote_regions = {model.regions[i].region};
    c.assignment.duration_s = s.search.experiment_duration_s;
    c.machine_count = samples;
    plan.cohorts.push_back(std::move(c));
  }
  plan.control.assignment.experiment_id = "sweep-control";
  plan.control.assignment.process = model.name;
  plan.control.assignment.duration_s = s.search.experiment_duration_s;
  plan.control.machine_count = samples;

  std::vector<ExperimentResult> results;
  for (const auto& cohort : plan.cohorts) {
    for (int m = 0; m < cohort.machine_count; ++m) {
      results.push_back(next_node().run_experiment(cohort.assignment));
    }
  }
  for (int m = 0; m < plan.control.machine_count; ++m) {
    results.push_back(next_node().run_experiment(plan.control.assignment));
  }
  std::vector<RegionEstimate> estimates = update_estimates(plan, {}, results);
  fleet.cm.store_estimates(estimates);

  // Cumulative promotion curve: promote the top-k regions by estimate.
  std::vector<const RegionEstimate*> order;
  for (const auto& e : estimates) order.push_back(&e);
  std::sort(order.begin(), order.end(),
            [](const RegionEstimate* a, const RegionEstimate* b) {
              if (a->mean_benefit != b->mean_benefit)
                return a->mean_benefit > b->mean_benefit;
              return a->region.start < b->region.start;
            });
  json curve = json::array();
  std::vector<AddressRegion> cumulative;
  {
    ExperimentAssignment empty;
    empty.experiment_id = "curve-0";
    empty.process = model.name;
    empty.duration_s = s.search.experiment_duration_s;
    ExperimentResult r = next_node().run_experiment(empty);
    curve.push_back({{"regions-promoted", 0},
                     {"runtime-delta", r.runtime_delta},
                     {"load-page-walk-delta", r.load_page_walk_delta},
                     {"store-page-walk-delta", r.store_page_walk_delta},
                     {"fragmentation-bytes", r.fragmentation_bytes}});
  }
  for (std::size_t k = 0; k < order.size(); ++k) {
    cumulative.push_back(order[k]->region);
    ExperimentAssignment a;
    a.experiment_id = "curve-" + std::to_string(k + 1);
    a.process = model.name;
    a.promote_regions = cumulative;
    a.duration_s = s.search.experiment_duration_s;
    ExperimentResult r = next_node().run_experiment(a);
    curve.push_back({{"regions-promoted", k + 1},
                     {"runtime-delta", r.runtime_delta},
                     {"load-page-walk-delta", r.load_page_walk_delta},
                     {"store-page-walk-delta", r.store_page_walk_delta},
                     {"fragmentation-bytes", r.fragmentation_bytes}});
  }

  const double full_benefit = model.total_benefit();
  const std::uint64_t full_frag = model.total_frag_bytes();
  std::uint64_t budget = full_frag;
  if (s.frag_budget.bytes) {
    budget = *s.frag_budget.bytes;
  } else if (s.frag_budget.fraction_of_full) {
    budget = static_cast<std::uint64_t>(*s.frag_budget.fraction_of_full *
                                        static_cast<double>(full_frag));
  }

  auto selection = fleet.cm.select_promotions(estimates, budget);
  if (!selection.ok()) return selection.error();

  const double selected_true_benefit = model.benefit_of(selection.value().regions);
  DecisionSet decisions;
  decisions.promotions.push_back({model.name, selection.value().regions});
  auto preset = fleet.cm.compile_preset(decisions);
  if (!preset.ok()) return preset.error();

  json report = base_report(s);
  report["benefit-sweep"] = {
      {"process", model.name},
      {"estimates", estimates_json(estimates)},
      {"curve", std::move(curve)},
      {"full-promotion",
       {{"benefit", full_benefit},
        {"fragmentation-bytes", full_frag},
        {"walk-reduction", model.total_walk_reduction()}}},
      {"frag-budget-bytes", budget},
      {"selection",
       {{"regions", region_list_json(selection.value().regions)},
        {"estimated-benefit", selection.value().total_benefit},
        {"true-benefit", selected_true_benefit},
        {"fragmentation-bytes", selection.value().total_frag_bytes}}},
      {"benefit-ratio", full_benefit > 0 ? selected_true_benefit / full_benefit : 0.0},
      {"frag-ratio",
       full_frag > 0 ? static_cast<double>(selection.value().total_frag_bytes) /
                           static_cast<double>(full_frag)
                     : 0.0},
      {"preset-version", preset.value().version}};
  return RunOutput{std::move(report), ""};
}

// ---------------------------------------------------------------------------
// service-latency: operation latency under both paging modes, classifier
// fed from the resulting history.
// ---------------------------------------------------------------------------

Expected<RunOutput> run_service_latency(const Scenario& s,
                                        const std::string& log_path) {
  if (s.assignments.size() != 1) {
    return make_error("service-latency: exactly one workload assignment required");
  }
  const std::string& process = s.assignments.begin()->first;
  const std::vector<int>& node_list = s.assignments.begin()->second;
  const WorkloadModel& model = s.workload_models.at(process);
  if (model.op_rate_hz <= 0 || model.op_latency_median_s <= 0) {
    return make_error("service-latency: workload needs op-rate-hz and op-latency-median-s");
  }

  EventLog log = log_path.empty() ? EventLog{} : EventLog{log_path};
  CmConfig cm_config;
  cm_config.address_space_pages = s.address_space_pages;
  ClusterManager cm(cm_config, &log);
  cm.set_base_preset(s.preset ? *s.preset : default_preset());

  auto run_mode = [&](PagingMode mode) {
    std::vector<double> ops_us;
    const std::uint64_t per_node_ops = static_cast<std::uint64_t>(
        model.op_rate_hz * s.duration_s);
    for (int idx : node_list) {
      Rng rng = Rng::for_stream(s.seed, 0x5eabed ^ static_cast<std::uint64_t>(idx) ^
                                            (mode == PagingMode::kEager ? 0x10000 : 0));
      for (std::uint64_t i = 0; i < per_node_ops; ++i) {
        double base = model.op_latency_median_s *
                      std::exp(model.op_latency_sigma * rng.normal());
        if (mode == PagingMode::kEager) base *= 1.0 - model.paging.eager_latency_gain;
        ops_us.push_back(base * 1e6);
      }
    }
    return ops_us;
  };

  std::vector<double> demand_us = run_mode(PagingMode::kDemandPaging);
  std::vector<double> eager_us = run_mode(PagingMode::kEager);
  LatencyStats demand_stats = summarize(demand_us);
  LatencyStats eager_stats = summarize(eager_us);

  RunRecord demand_run;
  demand_run.paging_mode = PagingMode::kDemandPaging;
  demand_run.latency_p50_s = demand_stats.p50 / 1e6;
  cm.record_history(process, demand_run);

  RunRecord eager_run;
  eager_run.paging_mode = PagingMode::kEager;
  eager_run.latency_p50_s = eager_stats.p50 / 1e6;
  eager_run.alloc_latency_delta = model.paging.eager_alloc_penalty;
  eager_run.mem_bloat = model.paging.eager_bloat;
  cm.record_history(process, eager_run);

  PagingDecision decision = cm.classify(process);
  const LatencyStats& headline =
      s.service_paging_mode == PagingMode::kEager ? eager_stats : demand_stats;

  json report = base_report(s);
  report["service-latency"] = {
      {"process", process},
      {"paging-mode", s.service_paging_mode == PagingMode::kEager ? "eager"
                                                                  : "demand-paging"},
      {"p50-us", headline.p50},
      {"p99-us", headline.p99},
      {"p999-us", headline.p999},
      {"operations", headline.count},
      {"demand", stats_to_json(demand_stats, "us")},
      {"eager", stats_to_json(eager_stats, "us")},
      {"classifier",
       {{"decision", decision.mode == PagingMode::kEager ? "eager" : "demand-paging"},
        {"needs-observation", decision.needs_observation},
        {"reason", decision.reason},
        {"latency-gain", decision.latency_gain},
        {"bloat", decision.bloat},
        {"alloc-penalty", decision.alloc_penalty}}}};
  return RunOutput{std::move(report), ""};
}

// ---------------------------------------------------------------------------
// region-search: narrowing rounds over the address space, then selection.
// ---------------------------------------------------------------------------

Expected<RunOutput> run_region_search(const Scenario& s,
                                      const std::string& log_path) {
  Scenario augmented = s;
  if (augmented.assignments.empty()) {
    std::vector<int> all;
    for (int i = 0; i < s.node_count; ++i) all.push_back(i);
    augmented.assignments[s.search.process] = all;
  }
  Fleet fleet(augmented, log_path);
  auto built = fleet.build();
  if (!built.ok()) return built.error();

  const WorkloadModel& model = s.workload_models.at(s.search.process);

  SearchParams params;
  params.branching_k = s.search.branching_k;
  params.machines_per_round = s.search.machines;
  params.epsilon = s.search.epsilon;
  params.max_rounds = s.search.max_rounds;
  params.experiment_duration_s = s.search.experiment_duration_s;
  params.process = s.search.process;

  RegionSearch search(AddressRegion{0, s.address_space_pages}, params);
  std::size_t cursor = 0;
  json rounds = json::array();
  while (auto plan = search.next_plan()) {
    std::vector<ExperimentResult> results;
    auto execute = [&](const Cohort& cohort) {
      for (int m = 0; m < cohort.machine_count; ++m) {
        NodeAgent& node = *fleet.nodes[cursor % fleet.nodes.size()];
        ++cursor;
        results.push_back(node.run_experiment(cohort.assignment));
      }
    };
    for (const auto& cohort : plan->cohorts) execute(cohort);
    execute(plan->control);
    search.ingest(*plan, results);
    rounds.push_back({{"round", plan->round},
                      {"cohorts", plan->cohorts.size()},
                      {"surviving", region_list_json(search.surviving())}});
  }

  std::vector<AddressRegion> surviving = search.surviving();
  fleet.cm.store_estimates(search.frontier());

  // The scenario author's planted hot regions, for identification checks.
  std::vector<AddressRegion> planted;
  for (const auto& r : model.regions) {
    if (r.benefit > s.search.epsilon) planted.push_back(r.region);
  }
  bool identified = true;
  for (const auto& p : planted) {
    if (std::find(surviving.begin(), surviving.end(), p) == surviving.end()) {
      identified = false;
      break;
    }
  }
  const bool exact = identified && surviving.size() == planted.size();

  json selection_json;
  std::uint64_t budget = 0;
  if (s.frag_budget.bytes || s.frag_budget.fraction_of_full) {
    const std::uint64_t full_frag = model.total_frag_bytes();
    budget = s.frag_budget.bytes
                 ? *s.frag_budget.bytes
                 : static_cast<std::uint64_t>(*s.frag_budget.fraction_of_full *
                                              static_cast<double>(full_frag));
    auto selection = fleet.cm.select_promotions(search.frontier(), budget);
    if (!selection.ok()) return selection.error();
    DecisionSet decisions;
    decisions.promotions.push_back({model.name, selection.value().regions});
    auto preset = fleet.cm.compile_preset(decisions);
    if (!preset.ok()) return preset.error();
    selection_json = {{"regions", region_list_json(selection.value().regions)},
                      {"estimated-benefit", selection.value().total_benefit},
                      {"fragmentation-bytes", selection.value().total_frag_bytes},
                      {"frag-budget-bytes", budget},
                      {"preset-version", preset.value().version}};
  }

  json report = base_report(s);
  report["region-search"] = {{"process", model.name},
                             {"rounds-used", search.rounds_run()},
                             {"machine-experiments", search.machine_experiments()},
                             {"surviving", region_list_json(surviving)},
                             {"planted", region_list_json(planted)},
                             {"identified", identified},
                             {"identified-exact", exact},
                             {"estimates", estimates_json(search.frontier())},
                             {"rounds", std::move(rounds)}};
  if (!selection_json.is_null()) report["region-search"]["selection"] = selection_json;
  return RunOutput{std::move(report), ""};
}

// ---------------------------------------------------------------------------
// coordination: background windows vs cluster-request tail latency.
// ---------------------------------------------------------------------------

Expected<RunOutput> run_coordination(const Scenario& s) {
  const CoordinationParams& cp = s.coordination;
  std::vector<std::string> node_ids;
  for (int i = 0; i < s.node_count; ++i) node_ids.push_back(node_name(i));

  const micros_t period_us = seconds_to_micros(cp.period_s);
  const PresetPolicy preset = s.preset ? *s.preset : default_preset();

  std::vector<TaskWindow> windows;
  if (cp.coordinated) {
    BackgroundScheduleRequest req;
    req.task_duration_s = cp.task_duration_s;
    req.period_s = cp.period_s;
    req.cap = cp.cap;
    req.preset_max_duration_s = preset.page_compaction.max_duration_s;
    req.preset_max_cpu = preset.page_compaction.max_cpu;
    auto scheduled = schedule_background(node_ids, req);
    if (!scheduled.ok()) return scheduled.error();
    windows = std::move(scheduled).value();
  } else {
    // Every node compacts at an independent random phase.
    Rng rng = Rng::for_stream(s.seed, 0xc00ffee);
    for (const auto& id : node_ids) {
      windows.push_back(TaskWindow{
          id, static_cast<micros_t>(rng.uniform_index(
                  static_cast<std::uint64_t>(period_us))),
          seconds_to_micros(cp.task_duration_s), preset.page_compaction.max_cpu});
    }
  }
  const int concurrent = max_concurrent(windows, period_us);

  // Cluster requests fan out to `fanout` nodes; a request is as slow as its
  // slowest touched node. With the schedule published, the router can steer
  // around nodes that are inside their compaction window; the uncoordinated
  // baseline has no schedule to consult.
  Rng rng = Rng::for_stream(s.seed, 0xfa17ed);
  const std::uint64_t requests =
      static_cast<std::uint64_t>(cp.request_rate_hz * s.duration_s);
  std::vector<double> latencies_us;
  latencies_us.reserve(requests);
  std::uint64_t slow_hits = 0;

  std::vector<int> scratch(node_ids.size());
  for (std::uint64_t r = 0; r < requests; ++r) {
    const micros_t at =
        static_cast<micros_t>(static_cast<double>(r) / cp.request_rate_hz * 1e6);
    const micros_t offset = at % period_us;

    std::vector<int> pool;
    pool.reserve(node_ids.size());
    if (cp.coordinated) {
      for (std::size_t i = 0; i < windows.size(); ++i) {
        if (!windows[i].active_at(offset, period_us))
          pool.push_back(static_cast<int>(i));
      }
    }
    if (static_cast<int>(pool.size()) < cp.fanout) {
      pool.resize(node_ids.size());
      for (std::size_t i = 0; i < node_ids.size(); ++i) pool[i] = static_cast<int>(i);
    }

    // Partial Fisher-Yates draw of `fanout` distinct nodes.
    scratch.assign(pool.begin(), pool.end());
    double worst_us = 0.0;
    bool hit_slow = false;
    for (int f = 0; f < cp.fanout; ++f) {
      std::size_t j = f + rng.uniform_index(scratch.size() - f);
      std::swap(scratch[f], scratch[j]);
      int node_idx = scratch[f];
      double service_us =
          cp.base_latency_median_s * 1e6 * std::exp(cp.base_latency_sigma * rng.normal());
      if (windows[node_idx].active_at(offset, period_us)) {
        service_us += cp.slow_penalty_s * 1e6;
        hit_slow = true;
      }
      worst_us = std::max(worst_us, service_us);
    }
    if (hit_slow) ++slow_hits;
    latencies_us.push_back(worst_us);
  }

  LatencyStats stats = summarize(latencies_us);
  LogHistogram hist;
  for (double l : latencies_us) hist.add(l);

  json report = base_report(s);
  report["coordination"] = {
      {"coordinated", cp.coordinated},
      {"cap", cp.cap},
      {"max-concurrent", concurrent},
      {"requests", stats.count},
      {"p50-us", stats.p50},
      {"p99-us", stats.p99},
      {"p999-us", stats.p999},
      {"slow-hit-share",
       requests > 0 ? static_cast<double>(slow_hits) / static_cast<double>(requests)
                    : 0.0},
      {"histogram", hist.to_json()}};
  return RunOutput{std::move(report), hist.to_csv()};
}

// ---------------------------------------------------------------------------
// metrics-adaptation: collection intervals under the bandwidth budget.
// ---------------------------------------------------------------------------

Expected<RunOutput> run_metrics_adaptation(const Scenario& s) {
  CollectionSchedule schedule;
  schedule.interval_min_s = s.metrics.interval_min_s;
  schedule.drift_threshold = s.metrics.drift_threshold;
  schedule.budget_bytes_per_s = s.metrics.budget_bytes_per_s;
  schedule.node_count = static_cast<std::uint64_t>(s.node_count);
  for (const auto& m : s.metrics.metrics) {
    schedule.metrics[m.name] =
        MetricSchedule{s.metrics.interval_min_s, 0.0, m.staleness_bound_s, m.bytes};
  }
  auto violations = schedule.validate();
  if (!violations.empty()) return make_error(violations.front());

  const double raw_demand = aggregate_bandwidth_bps(schedule);

  std::map<std::string, bool> volatility;
  for (const auto& m : s.metrics.metrics) volatility[m.name] = m.volatile_signal;

  // (next report time, metric); ties resolve by name for determinism.
  using QueueEntry = std::pair<double, std::string>;
  std::priority_queue<QueueEntry, std::vector<QueueEntry>, std::greater<QueueEntry>> due;
  for (const auto& [name, m] : schedule.metrics) due.push({m.interval_s, name});

  Rng rng = Rng::for_stream(s.seed, 0x3e7e1c5);
  json timeline = json::array();
  double last_bw = raw_demand;
  timeline.push_back({{"t-s", 0.0}, {"aggregate-bps", raw_demand}});
  std::uint64_t adaptations = 0;
  std::uint64_t bound_violations = 0;

  while (!due.empty() && due.top().first <= s.duration_s) {
    auto [t, name] = due.top();
    due.pop();
    // Stable signals drift well under the threshold; volatile ones swing
    // well above it. Jitter keeps the signal from sitting on the boundary.
    const double rate = volatility[name]
                            ? schedule.drift_threshold * (10.0 + rng.next_double())
                            : schedule.drift_threshold * (0.1 + 0.1 * rng.next_double());
    adaptations += 1;
    adapt_interval(schedule, name, rate);

    const MetricSchedule& m = schedule.metrics[name];
    if (m.interval_s > m.staleness_bound_s + 1e-9 ||
        m.interval_s < schedule.interval_min_s - 1e-9) {
      ++bound_violations;
    }
    double bw = aggregate_bandwidth_bps(schedule);
    if (bw != last_bw) {
      timeline.push_back({{"t-s", t}, {"aggregate-bps", bw}});
      last_bw = bw;
    }
    due.push({t + m.interval_s, name});
  }

  const double final_bw = aggregate_bandwidth_bps(schedule);
  json intervals = json::object();
  for (const auto& [name, m] : schedule.metrics) intervals[name] = m.interval_s;

  json report = base_report(s);
  report["metrics-adaptation"] = {
      {"node-count", s.node_count},
      {"raw-demand-bps", raw_demand},
      {"budget-bps", schedule.budget_bytes_per_s},
      {"final-aggregate-bps", final_bw},
      {"within-budget", final_bw <= schedule.budget_bytes_per_s},
      {"bound-violations", bound_violations},
      {"adaptations", adaptations},
      {"final-intervals", std::move(intervals)},
      {"timeline", std::move(timeline)}};
  return RunOutput{std::move(report), ""};
}

}  // namespace

Expected<RunOutput> run_scenario(const Scenario& s,
                                 const std::string& event_log_path) {
  auto violations = s.validate();
  if (!violations.empty()) {
    return make_error("scenario invalid: " + violations.front());
  }
  switch (s.pipeline) {
    case Pipeline::kFaultLatency: return run_fault_latency(s, event_log_path);
    case Pipeline::kBenefitSweep: return run_benefit_sweep(s, event_log_path);
    case Pipeline::kServiceLatency: return run_service_latency(s, event_log_path);
    case Pipeline::kRegionSearch: return run_region_search(s, event_log_path);
    case Pipeline::kCoordination: return run_coordination(s);
    case Pipeline::kMetricsAdaptation: return run_metrics_adaptation(s);
  }
  return make_error("unknown pipeline");
}

std::string report_to_string(const json& report) { return report.dump(2) + "\n"; }

namespace {

const json* resolve_path(const json& root, const std::string& dotted) {
  const json* cur = &root;
  std::size_t pos = 0;
  while (pos <= dotted.size()) {
    std::size_t dot = dotted.find('.', pos);
    std::string key = dotted.substr(pos, dot == std::string::npos ? std::string::npos
                                                                  : dot - pos);
    if (!cur->is_object() || !cur->contains(key)) return nullptr;
    cur = &(*cur)[key];
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  return cur;
}

}  // namespace

Expected<json> compare_reports(const json& a, const json& b,
                               const std::string& metric) {
  if (!a.contains("pipeline") || !b.contains("pipeline")) {
    return make_error("compare: not a report (missing pipeline)");
  }
  if (a["pipeline"] != b["pipeline"]) {
    return make_error("compare: mismatched scenario shapes (pipelines differ)");
  }
  auto shape_key = [](const json& r, const char* key) -> json {
    return r.contains("config") && r["config"].contains(key) ? r["config"][key] : json();
  };
  if (shape_key(a, "node-count") != shape_key(b, "node-count") ||
      shape_key(a, "duration-s") != shape_key(b, "duration-s")) {
    return make_error("compare: mismatched scenario shapes (node-count/duration differ)");
  }

  const std::string section = a["pipeline"].get<std::string>();
  std::string path = metric;
  if (!metric.empty() && metric.find('.') == std::string::npos) {
    path = section + "." + metric;
  }

  json out;
  out["pipeline"] = section;
  out["metric"] = metric;

  if (!metric.empty()) {
    const json* va = resolve_path(a, path);
    const json* vb = resolve_path(b, path);
    if (va == nullptr || vb == nullptr || !va->is_number() || !vb->is_number()) {
      return make_error("compare: metric not found or not numeric: " + path);
    }
    double da = va->get<double>();
    double db = vb->get<double>();
    out["a"] = da;
    out["b"] = db;
    out["delta-pct"] = db != 0.0 ? (da - db) / db * 100.0 : 0.0;
  }

  json standard = json::object();
  for (const char* stat : {"p50-us", "p99-us", "p999-us"}) {
    const json* va = resolve_path(a, section + "." + stat);
    const json* vb = resolve_path(b, section + "." + stat);
    if (va != nullptr && vb != nullptr && va->is_number() && vb->is_number() &&
        vb->get<double>() != 0.0) {
      standard[stat] = {{"a", va->get<double>()},
                        {"b", vb->get<double>()},
                        {"delta-pct", (va->get<double>() - vb->get<double>()) /
                                          vb->get<double>() * 100.0}};
    }
  }
  out["standard-deltas"] = std::move(standard);
  return out;
}

}  // namespace grapecm
