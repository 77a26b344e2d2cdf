#include "grapecm/cluster_manager.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace grapecm {

using nlohmann::json;

std::map<std::string, QueryRule> default_query_rules() {
  std::map<std::string, QueryRule> rules;

  QueryRule alloc_failure;
  alloc_failure.action = make_action(ActionKind::kAllocBasePage);
  alloc_failure.suspend_huge_pages = true;
  alloc_failure.reclaim_from_lowest_priority = true;
  rules["alloc-failure"] = alloc_failure;

  QueryRule oom;
  oom.action = make_action(ActionKind::kKillProcess);  // node picks the victim
  rules["oom-unspecified"] = oom;

  QueryRule reclaim;
  reclaim.action = make_action(ActionKind::kSkipTask);
  rules["reclaim-unspecified"] = reclaim;

  return rules;
}

ClusterManager::ClusterManager(CmConfig config, EventLog* log)
    : config_(std::move(config)), log_(log) {}

void ClusterManager::log_event(json e) {
  if (log_) log_->append(std::move(e));
}

const ProcessHistory* ClusterManager::history(const std::string& process) const {
  auto it = histories_.find(process);
  return it == histories_.end() ? nullptr : &it->second;
}

std::vector<ExperimentResult> ClusterManager::take_results() {
  std::vector<ExperimentResult> out = std::move(results_);
  results_.clear();
  return out;
}

std::optional<Message> ClusterManager::handle_message(const Message& m) {
  if (const auto* hello = std::get_if<Hello>(&m)) {
    register_node(*hello);
    return Message{PresetDownload{preset_}};
  }
  if (const auto* metrics = std::get_if<MetricsReport>(&m)) {
    record_metrics(*metrics);
    return std::nullopt;
  }
  if (const auto* query = std::get_if<PolicyQuery>(&m)) {
    return Message{handle_query(*query)};
  }
  if (const auto* result = std::get_if<ExperimentResult>(&m)) {
    record_result(*result);
    return std::nullopt;
  }
  // CM-originated kinds arriving inbound are ignored.
  return std::nullopt;
}

void ClusterManager::register_node(const Hello& h) {
  nodes_[h.node_id] = h;
  json manifest = json::object();
  for (const auto& [proc, info] : h.software_manifest) {
    json e{{"priority", info.priority}};
    if (info.main_region) e["region"] = region_to_json(*info.main_region);
    manifest[proc] = std::move(e);
  }
  log_event({{"event", "hello"},
             {"node-id", h.node_id},
             {"hardware-class", h.hardware_class},
             {"software-manifest", std::move(manifest)}});
}

void ClusterManager::record_metrics(const MetricsReport& r) {
  latest_metrics_[r.node_id] = r;
}

void ClusterManager::record_result(const ExperimentResult& r) {
  results_.push_back(r);
}

void ClusterManager::record_history(const std::string& process, const RunRecord& run) {
  ProcessHistory& h = histories_[process];
  h.process = process;
  h.runs.push_back(run);  // append-only
  json e{{"event", "history"},
         {"process", process},
         {"paging-mode", run.paging_mode == PagingMode::kEager ? "eager" : "demand-paging"},
         {"latency-p50-s", run.latency_p50_s},
         {"alloc-latency-delta", run.alloc_latency_delta},
         {"mem-bloat", run.mem_bloat}};
  if (run.predicted_latency_gain) e["predicted-latency-gain"] = *run.predicted_latency_gain;
  log_event(std::move(e));
}

PagingDecision ClusterManager::classify(const std::string& process) const {
  auto it = histories_.find(process);
  if (it == histories_.end()) {
    PagingDecision d;
    d.mode = PagingMode::kDemandPaging;
    d.needs_observation = true;
    d.reason = "needs-observation";
    return d;
  }
  return classify_paging(it->second, config_.classifier);
}

std::optional<std::pair<std::string, ProcessInfo>>
ClusterManager::lowest_priority_neighbor(const std::string& node_id,
                                         const std::string& excluding) const {
  auto it = nodes_.find(node_id);
  if (it == nodes_.end()) return std::nullopt;
  std::optional<std::pair<std::string, ProcessInfo>> best;
  for (const auto& [proc, info] : it->second.software_manifest) {
    if (proc == excluding) continue;
    if (!best || info.priority < best->second.priority) best = {{proc, info}};
  }
  return best;
}

PolicyResponse ClusterManager::handle_query(const PolicyQuery& q) {
  ++queries_handled_;
  json ctx = json::object();
  for (const auto& [k, v] : q.context) {
    if (const auto* num = std::get_if<double>(&v)) ctx[k] = *num;
    else ctx[k] = std::get<std::string>(v);
  }
  log_event({{"event", "query"},
             {"node-id", q.node_id},
             {"type", q.type},
             {"process", q.process},
             {"context", std::move(ctx)}});

  PolicyResponse resp;

  // Unknown node or process: conservative default plus an operator alert.
  auto node_it = nodes_.find(q.node_id);
  const bool known_process =
      node_it != nodes_.end() &&
      node_it->second.software_manifest.count(q.process) > 0;
  if (!known_process && q.process != "kswapd" && q.process != "oom") {
    resp.action = make_action(ActionKind::kAllocBasePage);
    alert("unknown-process", q);
    return resp;
  }

  auto rule_it = config_.rules.find(q.type);
  if (rule_it == config_.rules.end()) {
    resp.action = make_action(ActionKind::kAllocBasePage);
    alert("no-rule", q);
    return resp;
  }

  const QueryRule& rule = rule_it->second;
  resp.action = rule.action;

  if (rule.suspend_huge_pages) {
    PresetModification suspend;
    suspend.ttl_s = rule.modification_ttl_s;
    suspend.overlay.use_huge_pages.emplace();
    resp.temporary_modify_preset.push_back(std::move(suspend));
  }
  if (rule.reclaim_from_lowest_priority) {
    auto victim = lowest_priority_neighbor(q.node_id, q.process);
    if (victim) {
      PresetModification reclaim;
      reclaim.ttl_s = rule.modification_ttl_s;
      reclaim.overlay.mem_reclaim = ReclaimMode::kOn;
      reclaim.overlay.reclaim_source =
          ReclaimSource{victim->first, victim->second.main_region};
      resp.temporary_modify_preset.push_back(std::move(reclaim));
    }
  }
  return resp;
}

void ClusterManager::alert(const std::string& kind, const PolicyQuery& q) {
  ++alerts_raised_;
  log_event({{"event", "alert"},
             {"kind", kind},
             {"node-id", q.node_id},
             {"type", q.type},
             {"process", q.process}});
}

Expected<PresetPolicy> ClusterManager::compile_preset(const DecisionSet& decisions) {
  PresetPolicy next = preset_;

  std::map<std::string, std::vector<AddressRegion>> promotions;
  for (const auto& [process, regions] : decisions.promotions) {
    std::vector<AddressRegion> canonical = regions;
    if (!canonicalize_region_list(canonical)) {
      return make_error("compile: promotion regions overlap for " + process);
    }
    auto it = promotions.find(process);
    if (it != promotions.end() && it->second != canonical) {
      return make_error("compile: conflicting promotion sets for " + process);
    }
    promotions[process] = std::move(canonical);
  }
  for (auto& [process, regions] : promotions) {
    next.use_huge_pages[process] = std::move(regions);
  }

  std::map<std::string, PagingMode> modes;
  for (const auto& [process, mode] : decisions.paging_modes) {
    auto it = modes.find(process);
    if (it != modes.end() && it->second != mode) {
      return make_error("compile: conflicting paging modes for " + process);
    }
    modes[process] = mode;
  }
  for (const auto& [process, mode] : modes) {
    if (mode == next.mem_alloc_default) {
      next.mem_alloc_exceptions.erase(process);  // canonical form
    } else {
      next.mem_alloc_exceptions[process] = mode;
    }
  }

  if (decisions.compaction) next.page_compaction = *decisions.compaction;

  next.version = preset_.version + 1;
  auto violations = validate_preset(next, config_.address_space_pages);
  if (!violations.empty()) {
    return make_error("compile: " + violations.front());
  }
  preset_ = next;
  log_event({{"event", "preset-issued"},
             {"version", next.version},
             {"preset", preset_to_json(next)}});
  return next;
}

Expected<PromotionSelection> ClusterManager::select_promotions(
    const std::vector<RegionEstimate>& estimates,
    std::uint64_t frag_budget_bytes) const {
  return select_promotion_set(estimates, frag_budget_bytes,
                              config_.knapsack_quantum_bytes);
}

void ClusterManager::store_estimates(const std::vector<RegionEstimate>& estimates) {
  estimates_ = estimates;
  for (const auto& e : estimates) {
    log_event({{"event", "estimate"},
               {"region", region_to_json(e.region)},
               {"mean-benefit", e.mean_benefit},
               {"std-err", std::isfinite(e.std_err) ? json(e.std_err) : json()},
               {"samples", e.samples},
               {"frag-cost-bytes", e.frag_cost_bytes}});
  }
}

void ClusterManager::replay(const std::vector<json>& events) {
  for (const json& e : events) {
    if (!e.contains("event")) continue;
    const std::string kind = e["event"];
    if (kind == "hello") {
      Hello h;
      h.node_id = e.value("node-id", "");
      h.hardware_class = e.value("hardware-class", "");
      if (e.contains("software-manifest")) {
        for (auto it = e["software-manifest"].begin();
             it != e["software-manifest"].end(); ++it) {
          ProcessInfo info;
          info.priority = it.value().value("priority", 0);
          if (it.value().contains("region")) {
            auto r = region_from_json(it.value()["region"]);
            if (r.ok()) info.main_region = r.value();
          }
          h.software_manifest[it.key()] = info;
        }
      }
      nodes_[h.node_id] = std::move(h);
    } else if (kind == "history") {
      RunRecord run;
      run.paging_mode = e.value("paging-mode", "demand-paging") == std::string("eager")
                            ? PagingMode::kEager
                            : PagingMode::kDemandPaging;
      run.latency_p50_s = e.value("latency-p50-s", 0.0);
      run.alloc_latency_delta = e.value("alloc-latency-delta", 0.0);
      run.mem_bloat = e.value("mem-bloat", 0.0);
      if (e.contains("predicted-latency-gain") && e["predicted-latency-gain"].is_number())
        run.predicted_latency_gain = e["predicted-latency-gain"].get<double>();
      const std::string process = e.value("process", "");
      ProcessHistory& h = histories_[process];
      h.process = process;
      h.runs.push_back(run);
    } else if (kind == "estimate") {
      RegionEstimate est;
      auto r = region_from_json(e["region"]);
      if (!r.ok()) continue;
      est.region = r.value();
      est.mean_benefit = e.value("mean-benefit", 0.0);
      est.std_err = e.contains("std-err") && e["std-err"].is_number()
                        ? e["std-err"].get<double>()
                        : std::numeric_limits<double>::infinity();
      est.samples = e.value("samples", 0ULL);
      est.frag_cost_bytes = e.value("frag-cost-bytes", 0ULL);
      bool replaced = false;
      for (auto& existing : estimates_) {
        if (existing.region == est.region) {
          existing = est;
          replaced = true;
          break;
        }
      }
      if (!replaced) estimates_.push_back(est);
    } else if (kind == "preset-issued") {
      if (e.contains("preset")) {
        auto p = preset_from_json(e["preset"]);
        if (p.ok()) preset_ = p.value();
      }
    }
  }
}

}  // namespace grapecm
