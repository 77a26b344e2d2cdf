#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "grapecm/background_schedule.hpp"
#include "grapecm/cluster_manager.hpp"
#include "grapecm/metrics_schedule.hpp"
#include "grapecm/rng.hpp"
#include "test_support.hpp"

using namespace grapecm;

namespace {

Hello node_with_batch_job() {
  Hello h;
  h.node_id = "node-7";
  h.hardware_class = "hc-a";
  h.software_manifest["memcached"] = {10, std::nullopt};
  h.software_manifest["my-low-priority-batch-job"] = {1, AddressRegion{512, 256}};
  return h;
}

PolicyQuery alloc_failure_query() {
  PolicyQuery q;
  q.node_id = "node-7";
  q.type = "alloc-failure";
  q.process = "memcached";
  q.context["error"] = std::string("page-fault-huge-page-alloc");
  q.context["current-mem-usage"] = 103.0;
  q.context["cpu-usage"] = 10.0;
  return q;
}

}  // namespace

TEST_CASE("alloc-failure reproduces the documented fallback handling") {
  EventLog log;
  ClusterManager cm({}, &log);
  cm.register_node(node_with_batch_job());

  PolicyResponse resp = cm.handle_query(alloc_failure_query());
  CHECK(resp.action == make_action(ActionKind::kAllocBasePage));
  REQUIRE(resp.temporary_modify_preset.size() == 2);

  const PresetModification& suspend = resp.temporary_modify_preset[0];
  CHECK(suspend.ttl_s == 3600.0);
  REQUIRE(suspend.overlay.use_huge_pages.has_value());
  CHECK(suspend.overlay.use_huge_pages->empty());

  const PresetModification& reclaim = resp.temporary_modify_preset[1];
  CHECK(reclaim.ttl_s == 3600.0);
  REQUIRE(reclaim.overlay.mem_reclaim.has_value());
  CHECK(*reclaim.overlay.mem_reclaim == ReclaimMode::kOn);
  REQUIRE(reclaim.overlay.reclaim_source.has_value());
  CHECK(reclaim.overlay.reclaim_source->from_process == "my-low-priority-batch-job");
  REQUIRE(reclaim.overlay.reclaim_source->region.has_value());
  CHECK(*reclaim.overlay.reclaim_source->region == AddressRegion{512, 256});

  // Wire form carries the documented kebab-case keys.
  auto line = encode(Message{resp});
  REQUIRE(line.ok());
  CHECK(line.value().find("\"action\":\"alloc-base-page\"") != std::string::npos);
  CHECK(line.value().find("\"temporary-modify-preset\"") != std::string::npos);
  CHECK(line.value().find("\"use-huge-pages\"") != std::string::npos);
  CHECK(line.value().find("\"from\":\"my-low-priority-batch-job\"") != std::string::npos);
  CHECK(line.value().find("\"addr\"") != std::string::npos);

  // Queries are logged for audit.
  CHECK(log.events_of("query").size() == 1);
}

TEST_CASE("identical queries get identical responses") {
  ClusterManager cm;
  cm.register_node(node_with_batch_job());
  PolicyResponse a = cm.handle_query(alloc_failure_query());
  PolicyResponse b = cm.handle_query(alloc_failure_query());
  CHECK(a == b);
}

TEST_CASE("unmatched query types fall to the conservative default with an alert") {
  EventLog log;
  ClusterManager cm({}, &log);
  cm.register_node(node_with_batch_job());

  PolicyQuery q = alloc_failure_query();
  q.type = "cow-unspecified";
  PolicyResponse resp = cm.handle_query(q);
  CHECK(resp.action == make_action(ActionKind::kAllocBasePage));
  CHECK(resp.temporary_modify_preset.empty());
  CHECK(cm.alerts_raised() == 1);
  REQUIRE(log.events_of("alert").size() == 1);
  CHECK(log.events_of("alert")[0]["kind"] == "no-rule");
}

TEST_CASE("unknown processes raise an operator alert") {
  EventLog log;
  ClusterManager cm({}, &log);
  cm.register_node(node_with_batch_job());

  PolicyQuery q = alloc_failure_query();
  q.process = "mystery-binary";
  PolicyResponse resp = cm.handle_query(q);
  CHECK(resp.action == make_action(ActionKind::kAllocBasePage));
  CHECK(log.events_of("alert")[0]["kind"] == "unknown-process");
}

TEST_CASE("reclaim command is omitted without a co-located victim") {
  ClusterManager cm;
  Hello lonely;
  lonely.node_id = "node-7";
  lonely.hardware_class = "hc-a";
  lonely.software_manifest["memcached"] = {10, std::nullopt};
  cm.register_node(lonely);

  PolicyResponse resp = cm.handle_query(alloc_failure_query());
  REQUIRE(resp.temporary_modify_preset.size() == 1);  // suspension only
  CHECK(resp.temporary_modify_preset[0].overlay.use_huge_pages.has_value());
}

TEST_CASE("hello is answered with the current preset") {
  ClusterManager cm;
  cm.set_base_preset(test::sample_preset());
  auto resp = cm.handle_message(Message{node_with_batch_job()});
  REQUIRE(resp.has_value());
  REQUIRE(std::holds_alternative<PresetDownload>(*resp));
  CHECK(std::get<PresetDownload>(*resp).preset == test::sample_preset());
}

// --- classifier -------------------------------------------------------------

TEST_CASE("classifier: measured latency gain with low costs turns eager on") {
  ProcessHistory h;
  h.process = "memcached";
  h.runs.push_back({PagingMode::kDemandPaging, 0.020, 0.0, 0.0, std::nullopt});
  h.runs.push_back({PagingMode::kEager, 0.017, 0.02, 0.01, std::nullopt});
  PagingDecision d = classify_paging(h);
  CHECK(d.mode == PagingMode::kEager);
  CHECK(d.latency_gain == doctest::Approx(0.15));
  CHECK_FALSE(d.needs_observation);
}

TEST_CASE("classifier: excessive bloat forces demand paging") {
  ProcessHistory h;
  h.process = "bloaty";
  h.runs.push_back({PagingMode::kDemandPaging, 0.020, 0.0, 0.0, std::nullopt});
  h.runs.push_back({PagingMode::kEager, 0.017, 0.02, 1.25, std::nullopt});
  PagingDecision d = classify_paging(h);
  CHECK(d.mode == PagingMode::kDemandPaging);
  CHECK(d.bloat == doctest::Approx(1.25));
}

TEST_CASE("classifier: allocation penalty forces demand paging") {
  ProcessHistory h;
  h.process = "allocheavy";
  h.runs.push_back({PagingMode::kDemandPaging, 0.020, 0.0, 0.0, std::nullopt});
  h.runs.push_back({PagingMode::kEager, 0.017, 0.11, 0.0, std::nullopt});
  PagingDecision d = classify_paging(h);
  CHECK(d.mode == PagingMode::kDemandPaging);
  CHECK(d.alloc_penalty == doctest::Approx(0.11));
}

TEST_CASE("classifier: passive run with modeled sensitivities suffices") {
  ProcessHistory h;
  h.process = "memcached";
  h.runs.push_back({PagingMode::kDemandPaging, 0.020, 0.02, 0.01, 0.15});
  PagingDecision d = classify_paging(h);
  CHECK(d.mode == PagingMode::kEager);
  CHECK_FALSE(d.needs_observation);
}

TEST_CASE("classifier: insufficient history is conservative and flagged") {
  ProcessHistory empty;
  empty.process = "newbinary";
  PagingDecision d = classify_paging(empty);
  CHECK(d.mode == PagingMode::kDemandPaging);
  CHECK(d.needs_observation);

  // A demand-only run with no modeled gain is still insufficient.
  ProcessHistory demand_only;
  demand_only.process = "newbinary";
  demand_only.runs.push_back({PagingMode::kDemandPaging, 0.020, 0.0, 0.0, std::nullopt});
  d = classify_paging(demand_only);
  CHECK(d.mode == PagingMode::kDemandPaging);
  CHECK(d.needs_observation);
}

TEST_CASE("property: scaling all latencies never flips the classifier") {
  Rng rng(555);
  for (int i = 0; i < 500; ++i) {
    ProcessHistory h;
    h.process = "p";
    double demand_p50 = 0.001 + rng.next_double() * 0.1;
    double eager_p50 = demand_p50 * (0.7 + 0.6 * rng.next_double());
    double penalty = rng.next_double() * 0.15;
    double bloat = rng.next_double() * 1.5;
    h.runs.push_back({PagingMode::kDemandPaging, demand_p50, 0.0, 0.0, std::nullopt});
    h.runs.push_back({PagingMode::kEager, eager_p50, penalty, bloat, std::nullopt});

    PagingDecision base = classify_paging(h);

    double scale = 0.01 + rng.next_double() * 1000.0;
    ProcessHistory scaled = h;
    for (auto& run : scaled.runs) run.latency_p50_s *= scale;
    PagingDecision after = classify_paging(scaled);

    CHECK(base.mode == after.mode);
  }
}

// --- preset compilation ------------------------------------------------------

TEST_CASE("compile_preset fills the template and bumps the version") {
  ClusterManager cm;
  cm.set_base_preset(test::sample_preset());

  DecisionSet decisions;
  decisions.promotions.push_back({"memcached", {{1032, 8}, {2568, 8}}});
  decisions.paging_modes.push_back({"memcached", PagingMode::kEager});

  auto preset = cm.compile_preset(decisions);
  REQUIRE(preset.ok());
  CHECK(preset.value().version == 2);
  CHECK(preset.value().use_huge_pages.at("memcached") ==
        std::vector<AddressRegion>{{1032, 8}, {2568, 8}});
  CHECK(preset.value().mem_alloc_exceptions.at("memcached") == PagingMode::kEager);
}

TEST_CASE("compile_preset keeps exceptions canonical") {
  ClusterManager cm;
  cm.set_base_preset(test::sample_preset());  // default demand-paging
  DecisionSet decisions;
  decisions.paging_modes.push_back({"memcached", PagingMode::kDemandPaging});
  auto preset = cm.compile_preset(decisions);
  REQUIRE(preset.ok());
  // Equal to the default: the exception entry is removed, not stored.
  CHECK(preset.value().mem_alloc_exceptions.count("memcached") == 0);
}

TEST_CASE("compile_preset with no decisions re-issues the preset") {
  ClusterManager cm;
  cm.set_base_preset(test::sample_preset());
  auto preset = cm.compile_preset({});
  REQUIRE(preset.ok());
  PresetPolicy expected = test::sample_preset();
  expected.version = 2;
  CHECK(preset.value() == expected);
}

TEST_CASE("compile_preset rejects conflicting decisions") {
  ClusterManager cm;
  cm.set_base_preset(test::sample_preset());

  DecisionSet conflict;
  conflict.paging_modes.push_back({"memcached", PagingMode::kEager});
  conflict.paging_modes.push_back({"memcached", PagingMode::kDemandPaging});
  CHECK_FALSE(cm.compile_preset(conflict).ok());

  DecisionSet promo_conflict;
  promo_conflict.promotions.push_back({"memcached", {{0, 8}}});
  promo_conflict.promotions.push_back({"memcached", {{16, 8}}});
  CHECK_FALSE(cm.compile_preset(promo_conflict).ok());

  // Version is unchanged after failed compilations.
  CHECK(cm.current_preset().version == 1);
}

// --- adaptive collection ------------------------------------------------------

TEST_CASE("stable metric doubles up to its staleness bound") {
  CollectionSchedule s;
  s.interval_min_s = 1.0;
  s.drift_threshold = 0.01;
  s.node_count = 1;
  s.metrics["mem"] = {1.0, 0.0, 900.0, 1000};

  int adaptations = 0;
  while (s.metrics["mem"].interval_s < 900.0) {
    adapt_interval(s, "mem", 0.0);
    ++adaptations;
    REQUIRE(adaptations < 100);
  }
  // ceil(log2(900)) doublings from 1s, the last one capped at the bound.
  CHECK(adaptations == 10);
  CHECK(s.metrics["mem"].interval_s == 900.0);
}

TEST_CASE("oscillating metric pins at the interval floor") {
  CollectionSchedule s;
  s.interval_min_s = 1.0;
  s.drift_threshold = 0.01;
  s.node_count = 1;
  s.metrics["cpu"] = {16.0, 0.0, 900.0, 1000};

  for (int i = 0; i < 10; ++i) adapt_interval(s, "cpu", 0.5);
  CHECK(s.metrics["cpu"].interval_s == 1.0);
}

TEST_CASE("budget enforcement relaxes the largest eligible interval first") {
  CollectionSchedule s;
  s.interval_min_s = 1.0;
  s.drift_threshold = 0.01;
  s.node_count = 100;
  s.budget_bytes_per_s = 30000.0;
  s.metrics["a"] = {1.0, 0.0, 900.0, 1000};  // 100 KB/s at 1s
  s.metrics["b"] = {4.0, 0.0, 900.0, 1000};  // 25 KB/s at 4s

  // Aggregate 125 KB/s over a 30 KB/s budget; the 4s metric relaxes first.
  CHECK(enforce_budget(s));
  CHECK(aggregate_bandwidth_bps(s) <= 30000.0);
  CHECK(s.metrics["b"].interval_s > 4.0);

  // Unattainable budget: staleness bounds win, enforcement reports failure.
  s.metrics["a"] = {900.0, 0.0, 900.0, 1000};
  s.metrics["b"] = {900.0, 0.0, 900.0, 1000};
  s.budget_bytes_per_s = 1.0;
  CHECK_FALSE(enforce_budget(s));
}

TEST_CASE("adapted intervals stay inside [interval_min, staleness]") {
  Rng rng(31337);
  CollectionSchedule s;
  s.interval_min_s = 1.0;
  s.drift_threshold = 0.01;
  s.node_count = 50;
  s.budget_bytes_per_s = 100000.0;
  for (int i = 0; i < 20; ++i) {
    s.metrics["m" + std::to_string(i)] = {1.0, 0.0, 60.0 + i * 60.0, 500 + i * 100ULL};
  }
  for (int step = 0; step < 500; ++step) {
    std::string name = "m" + std::to_string(rng.uniform_index(20));
    adapt_interval(s, name, rng.next_double() * 0.05);
    for (const auto& [k, m] : s.metrics) {
      REQUIRE(m.interval_s >= s.interval_min_s);
      REQUIRE(m.interval_s <= m.staleness_bound_s);
    }
    // The budget is attainable here, so every adapted schedule honors it.
    REQUIRE(aggregate_bandwidth_bps(s) <= s.budget_bytes_per_s);
  }
}

// --- background scheduling ----------------------------------------------------

TEST_CASE("100 nodes at cap 5 stagger into 20 slots") {
  std::vector<std::string> nodes;
  for (int i = 0; i < 100; ++i) nodes.push_back("node-" + std::to_string(i));
  BackgroundScheduleRequest req{1.0, 60.0, 5, 1.0, 0.02};
  auto windows = schedule_background(nodes, req);
  REQUIRE(windows.ok());
  REQUIRE(windows.value().size() == 100);

  std::map<micros_t, int> slots;
  for (const auto& w : windows.value()) {
    slots[w.start_us] += 1;
    CHECK(w.duration_us == 1'000'000);
  }
  CHECK(slots.size() == 20);
  for (const auto& [start, count] : slots) CHECK(count == 5);
  CHECK(max_concurrent(windows.value(), seconds_to_micros(60)) == 5);
}

TEST_CASE("cap equal to the fleet degenerates to all-at-once") {
  std::vector<std::string> nodes;
  for (int i = 0; i < 10; ++i) nodes.push_back("node-" + std::to_string(i));
  BackgroundScheduleRequest req{1.0, 60.0, 10, 1.0, 0.02};
  auto windows = schedule_background(nodes, req);
  REQUIRE(windows.ok());
  for (const auto& w : windows.value()) CHECK(w.start_us == 0);
  CHECK(max_concurrent(windows.value(), seconds_to_micros(60)) == 10);
}

TEST_CASE("infeasible schedules fail naming the violated inequality") {
  std::vector<std::string> nodes;
  for (int i = 0; i < 100; ++i) nodes.push_back("node-" + std::to_string(i));
  BackgroundScheduleRequest req{2.0, 60.0, 3, 2.0, 0.02};  // 200 > 180
  auto windows = schedule_background(nodes, req);
  REQUIRE_FALSE(windows.ok());
  CHECK(windows.error().what.find("N*task_duration <= cap*period") != std::string::npos);
}

TEST_CASE("task duration is capped by the preset window") {
  std::vector<std::string> nodes = {"node-0"};
  BackgroundScheduleRequest req{2.0, 60.0, 1, 1.0, 0.02};  // preset allows 1s
  auto windows = schedule_background(nodes, req);
  REQUIRE_FALSE(windows.ok());
  CHECK(windows.error().what.find("preset max-duration") != std::string::npos);
}

TEST_CASE("property: feasible schedules never exceed the cap") {
  Rng rng(2718);
  for (int trial = 0; trial < 200; ++trial) {
    int n = 1 + static_cast<int>(rng.uniform_index(120));
    int cap = 1 + static_cast<int>(rng.uniform_index(10));
    double period = 10.0 + rng.next_double() * 110.0;
    // Pick a duration satisfying n*duration <= cap*period.
    double max_duration = cap * period / n;
    double duration = max_duration * (0.1 + 0.89 * rng.next_double());
    if (duration <= 1e-3) continue;

    std::vector<std::string> nodes;
    for (int i = 0; i < n; ++i) nodes.push_back("node-" + std::to_string(i));
    BackgroundScheduleRequest req{duration, period, cap, duration, 0.02};
    auto windows = schedule_background(nodes, req);
    CAPTURE(trial);
    CAPTURE(n);
    CAPTURE(cap);
    CAPTURE(duration);
    CAPTURE(period);
    REQUIRE(windows.ok());
    REQUIRE(windows.value().size() == static_cast<std::size_t>(n));
    CHECK(max_concurrent(windows.value(), seconds_to_micros(period)) <= cap);
  }
}

// --- event log persistence -----------------------------------------------------

TEST_CASE("event log replay rebuilds the CM stores") {
  const std::string path = "/tmp/grapecm_test_events.jsonl";
  std::remove(path.c_str());
  {
    EventLog log(path);
    ClusterManager cm({}, &log);
    cm.set_base_preset(test::sample_preset());
    cm.register_node(node_with_batch_job());
    cm.record_history("memcached",
                      {PagingMode::kDemandPaging, 0.020, 0.0, 0.0, std::nullopt});
    cm.record_history("memcached",
                      {PagingMode::kEager, 0.017, 0.02, 0.01, std::nullopt});
    RegionEstimate e;
    e.region = {1032, 8};
    e.mean_benefit = 0.025;
    e.std_err = 0.001;
    e.samples = 8;
    e.frag_cost_bytes = 100663296;
    cm.store_estimates({e});
    DecisionSet decisions;
    decisions.promotions.push_back({"memcached", {{1032, 8}}});
    REQUIRE(cm.compile_preset(decisions).ok());
  }

  auto events = EventLog::load(path);
  REQUIRE(events.ok());

  ClusterManager restored;
  restored.replay(events.value());
  CHECK(restored.nodes().count("node-7") == 1);
  REQUIRE(restored.history("memcached") != nullptr);
  CHECK(restored.history("memcached")->runs.size() == 2);
  CHECK(restored.classify("memcached").mode == PagingMode::kEager);
  REQUIRE(restored.estimates().size() == 1);
  CHECK(restored.estimates()[0].mean_benefit == 0.025);
  CHECK(restored.current_preset().version == 2);
  CHECK(restored.current_preset().use_huge_pages.at("memcached") ==
        std::vector<AddressRegion>{{1032, 8}});
  std::remove(path.c_str());
}
