#include "grapecm/node_agent.hpp"

#include <algorithm>
#include <cmath>

namespace grapecm {

namespace {

FaultClass class_for_action(ActionKind kind) {
  switch (kind) {
    case ActionKind::kAllocHugePage: return FaultClass::kHugeAlloc;
    case ActionKind::kShareCow:
    case ActionKind::kBreakCow: return FaultClass::kCowShare;
    default: return FaultClass::kFastBase;
  }
}

}  // namespace

NodeAgent::NodeAgent(NodeConfig config, PresetPolicy preset, std::uint64_t seed)
    : config_(std::move(config)),
      rng_(Rng::for_stream(seed, std::hash<std::string>{}(config_.node_id))) {
  auto violations = validate_preset(preset, config_.address_space_pages);
  if (!violations.empty()) {
    throw SimulationError(config_.node_id + ": invalid preset: " + violations.front());
  }
  auto latency_violations = config_.latency.validate();
  if (!latency_violations.empty()) {
    throw SimulationError(config_.node_id + ": " + latency_violations.front());
  }
  state_.node_id = config_.node_id;
  state_.preset = std::move(preset);
}

void NodeAgent::bump(const std::string& counter, double by) {
  state_.counters[counter] += by;
}

double NodeAgent::time_of_day_s() const {
  double day = config_.day_length_s;
  double t = micros_to_seconds(state_.clock);
  return t - std::floor(t / day) * day;
}

DecisionContext NodeAgent::make_ctx(DecisionPoint dp, const std::string& process,
                                    std::optional<AddressRegion> region) const {
  DecisionContext ctx;
  ctx.decision_point = dp;
  ctx.process = process;
  ctx.faulting_region = region;
  ctx.node_state_summary.current_mem_usage = state_.mem_used;
  ctx.node_state_summary.cpu_usage = 0.10;
  ctx.virtual_time = state_.clock;
  ctx.time_of_day_s = time_of_day_s();
  return ctx;
}

void NodeAgent::schedule(micros_t at, EventKind kind, std::string process) {
  if (at < state_.clock) {
    throw SimulationError(config_.node_id + ": event scheduled in the past");
  }
  events_.push(Event{at, next_seq_++, kind, std::move(process)});
}

void NodeAgent::schedule_next_fault(const std::string& process) {
  auto it = state_.processes.find(process);
  if (it == state_.processes.end()) return;
  ProcessState& ps = it->second;
  if (ps.model.fault_rate_hz <= 0) return;
  double dt_s = rng_.exponential(ps.model.fault_rate_hz);
  ps.next_fault_at = state_.clock + std::max<micros_t>(1, seconds_to_micros(dt_s));
  schedule(ps.next_fault_at, EventKind::kFault, process);
}

void NodeAgent::start_process(const WorkloadModel& model) {
  auto violations = model.validate(config_.address_space_pages);
  if (!violations.empty()) {
    throw SimulationError(config_.node_id + ": invalid workload: " + violations.front());
  }
  ProcessState ps;
  ps.model = model;
  ps.allocated.assign(config_.address_space_pages, 0);

  // mem-alloc decision at process start.
  Decision d = evaluate(state_.preset, state_.active_mods,
                        make_ctx(DecisionPoint::kMemAlloc, model.name,
                                 AddressRegion{0, config_.address_space_pages}));
  Action action = is_action(d) ? std::get<Action>(d)
                               : ask_cm("mem-alloc-" + std::get<Fallback>(d).reason,
                                        model.name, {});
  ps.paging_mode = action.kind == ActionKind::kAllocEager ? PagingMode::kEager
                                                          : PagingMode::kDemandPaging;
  if (ps.paging_mode == PagingMode::kEager) {
    // Reserve the whole declared footprint up front, plus modeled bloat.
    std::uint64_t pages = 0;
    for (const auto& r : ps.model.regions) {
      for (std::uint64_t p = r.region.start; p < r.region.end(); ++p) {
        if (!ps.allocated[p]) {
          ps.allocated[p] = 1;
          ++pages;
        }
      }
    }
    ps.base_pages = pages;
    std::uint64_t footprint = pages * state_.preset.page_size_default;
    ps.eager_bloat_bytes = static_cast<std::uint64_t>(
        std::llround(ps.model.paging.eager_bloat * static_cast<double>(footprint)));
    state_.mem_used += footprint + ps.eager_bloat_bytes;
    bump("base-pages", static_cast<double>(pages));
  }

  state_.processes[model.name] = std::move(ps);
  schedule_next_fault(model.name);
  maybe_trigger_oom();
}

void NodeAgent::stop_process(const std::string& name) {
  auto it = state_.processes.find(name);
  if (it == state_.processes.end()) return;
  const ProcessState& ps = it->second;
  std::uint64_t freed = ps.base_pages * state_.preset.page_size_default +
                        ps.eager_bloat_bytes;
  for (const auto& r : ps.promoted) {
    freed += r.length * state_.preset.page_size_default + ps.model.frag_of({r});
  }
  state_.mem_used -= std::min(state_.mem_used, freed);
  state_.processes.erase(it);
}

void NodeAgent::download_preset(PresetPolicy preset) {
  auto violations = validate_preset(preset, config_.address_space_pages);
  if (!violations.empty()) {
    throw SimulationError(config_.node_id + ": invalid preset: " + violations.front());
  }
  state_.preset = std::move(preset);
  state_.active_mods.clear();
}

void NodeAgent::apply_update(const PresetModification& m) {
  auto mods = apply_modification(state_.preset, std::move(state_.active_mods), m,
                                 state_.clock);
  if (!mods.ok()) {
    throw SimulationError(config_.node_id + ": " + mods.error().what);
  }
  state_.active_mods = std::move(mods).value();
}

void NodeAgent::step(micros_t until) {
  if (until < state_.clock) {
    throw SimulationError(config_.node_id + ": step target before current clock");
  }
  if (!daemons_scheduled_) {
    daemons_scheduled_ = true;
    DaemonSchedule zero = resolve_page_zeroing(state_.preset, state_.active_mods,
                                               state_.clock);
    DaemonSchedule scan = resolve_dirty_scan(state_.preset, state_.active_mods,
                                             state_.clock);
    schedule(state_.clock + seconds_to_micros(zero.interval_s), EventKind::kZeroingTick);
    schedule(state_.clock + seconds_to_micros(scan.interval_s), EventKind::kDirtyScanTick);
    schedule(state_.clock + seconds_to_micros(config_.reclaim_interval_s),
             EventKind::kReclaimTick);
    schedule(state_.clock + seconds_to_micros(config_.promotion_interval_s),
             EventKind::kPromotionTick);
    schedule(state_.clock + seconds_to_micros(config_.metrics_interval_s),
             EventKind::kMetricsDeadline);
    // First compaction tick at the next window start.
    CompactionSchedule comp = resolve_page_compaction(state_.preset,
                                                      state_.active_mods, state_.clock);
    double tod = time_of_day_s();
    double wait_s = comp.when_s - tod;
    if (wait_s <= 0) wait_s += config_.day_length_s;
    schedule(state_.clock + seconds_to_micros(wait_s), EventKind::kCompactionTick);
  }

  while (!events_.empty() && events_.top().at <= until) {
    Event ev = events_.top();
    events_.pop();
    state_.clock = ev.at;
    process_event(ev);
    if (config_.check_conservation && state_.mem_used != computed_mem_used()) {
      throw SimulationError(config_.node_id + ": memory conservation violated at t=" +
                            std::to_string(state_.clock));
    }
  }
  state_.clock = until;
  state_.active_mods = prune_expired(std::move(state_.active_mods), state_.clock);
}

void NodeAgent::process_event(const Event& ev) {
  switch (ev.kind) {
    case EventKind::kFault:
      run_fault_event(ev.process);
      return;

    case EventKind::kZeroingTick: {
      Decision d = evaluate(state_.preset, state_.active_mods,
                            make_ctx(DecisionPoint::kZeroingTick, "page-zeroing", {}));
      bump("zeroing-ticks");
      if (config_.record_event_log) {
        event_log_.push_back(std::to_string(state_.clock) + " zeroing-tick " +
                             to_string(d));
      }
      DaemonSchedule sched = resolve_page_zeroing(state_.preset, state_.active_mods,
                                                  state_.clock);
      schedule(state_.clock + seconds_to_micros(sched.interval_s),
               EventKind::kZeroingTick);
      return;
    }

    case EventKind::kDirtyScanTick: {
      evaluate(state_.preset, state_.active_mods,
               make_ctx(DecisionPoint::kZeroingTick, "dirty-scan", {}));
      bump("dirty-scan-ticks");
      DaemonSchedule sched = resolve_dirty_scan(state_.preset, state_.active_mods,
                                                state_.clock);
      schedule(state_.clock + seconds_to_micros(sched.interval_s),
               EventKind::kDirtyScanTick);
      return;
    }

    case EventKind::kCompactionTick: {
      Decision d = evaluate(state_.preset, state_.active_mods,
                            make_ctx(DecisionPoint::kCompactionTick, "compaction", {}));
      bump("compaction-ticks");
      if (is_action(d) && std::get<Action>(d).kind == ActionKind::kRunTask) {
        bump("compaction-runs");
      }
      if (config_.record_event_log) {
        event_log_.push_back(std::to_string(state_.clock) + " compaction-tick " +
                             to_string(d));
      }
      schedule(state_.clock + seconds_to_micros(config_.day_length_s),
               EventKind::kCompactionTick);
      return;
    }

    case EventKind::kReclaimTick: {
      Decision d = evaluate(state_.preset, state_.active_mods,
                            make_ctx(DecisionPoint::kReclaimTick, "kswapd", {}));
      bump("reclaim-ticks");
      if (is_fallback(d)) {
        Action a = ask_cm("reclaim-unspecified", "kswapd", {});
        if (a.kind == ActionKind::kReclaimFrom) execute_reclaim(a);
      } else if (std::get<Action>(d).kind == ActionKind::kReclaimFrom) {
        execute_reclaim(std::get<Action>(d));
      }
      schedule(state_.clock + seconds_to_micros(config_.reclaim_interval_s),
               EventKind::kReclaimTick);
      return;
    }

    case EventKind::kPromotionTick: {
      evaluate(state_.preset, state_.active_mods,
               make_ctx(DecisionPoint::kPromotionTick, "khugepaged", {}));
      bump("promotion-ticks");
      schedule(state_.clock + seconds_to_micros(config_.promotion_interval_s),
               EventKind::kPromotionTick);
      return;
    }

    case EventKind::kMetricsDeadline: {
      MetricsReport report = report_metrics(state_.clock);
      if (report_sink_) report_sink_(report);
      schedule(state_.clock + seconds_to_micros(config_.metrics_interval_s),
               EventKind::kMetricsDeadline);
      return;
    }
  }
}

void NodeAgent::run_fault_event(const std::string& process) {
  auto it = state_.processes.find(process);
  if (it == state_.processes.end()) return;
  ProcessState& ps = it->second;

  // Sample a faulting page, weighted by region size.
  std::uint64_t page = 0;
  if (!ps.model.regions.empty()) {
    std::uint64_t total = 0;
    for (const auto& r : ps.model.regions) total += r.region.length;
    std::uint64_t pick = rng_.uniform_index(total);
    for (const auto& r : ps.model.regions) {
      if (pick < r.region.length) {
        page = r.region.start + pick;
        break;
      }
      pick -= r.region.length;
    }
  }

  const bool cow_break = rng_.next_double() < ps.model.cow_break_fraction;
  FaultOutcome outcome;
  if (config_.mode == BaselineMode::kLinuxModel) {
    outcome = linux_model_fault(ps, page);
  } else {
    outcome = preset_fault(ps, page, cow_break);
  }

  if (config_.record_event_log) {
    event_log_.push_back(std::to_string(state_.clock) + " fault " + process + "@" +
                         std::to_string(page) + " -> " + to_string(outcome.action.kind) +
                         " " + std::to_string(outcome.latency_us) + "us");
  }

  schedule_next_fault(process);
  maybe_trigger_oom();
}

FaultOutcome NodeAgent::linux_model_fault(ProcessState& ps, std::uint64_t page) {
  // The kernel decides locally; its first choice often fails and a slow
  // fallback path runs. The mixture's class probabilities encode that.
  FaultOutcome out;
  out.latency_class = config_.latency.sample_class(rng_);
  out.latency_us = config_.latency.sample_latency_us(out.latency_class, rng_);
  switch (out.latency_class) {
    case FaultClass::kHugeAlloc:
      out.action = make_action(ActionKind::kAllocHugePage);
      promote_listed_region(ps, page);
      break;
    case FaultClass::kCowShare:
      out.action = make_action(ActionKind::kShareCow);
      break;
    default:
      out.action = make_action(ActionKind::kAllocBasePage);
      allocate_base_page(ps, page);
      break;
  }
  record_latency(out.latency_class, out.latency_us, false);
  return out;
}

FaultOutcome NodeAgent::preset_fault(ProcessState& ps, std::uint64_t page,
                                     bool cow_break) {
  FaultOutcome out;
  DecisionPoint dp = cow_break ? DecisionPoint::kCowBreak : DecisionPoint::kPageFault;
  Decision d = evaluate(state_.preset, state_.active_mods,
                        make_ctx(dp, ps.model.name, AddressRegion{page, 1}));

  Action action;
  if (is_fallback(d)) {
    const std::string& reason = std::get<Fallback>(d).reason;
    std::string type = cow_break ? "cow-unspecified" : "page-fault-" + reason;
    action = ask_cm(type, ps.model.name,
                    {{"error", ContextValue{std::string(cow_break
                                                            ? "cow-break-unspecified"
                                                            : reason)}},
                     {"page", ContextValue{static_cast<double>(page)}}});
    out.via_cm = true;
  } else {
    action = std::get<Action>(d);
    if (action.kind == ActionKind::kAllocHugePage &&
        rng_.next_double() < ps.model.huge_alloc_failure_rate) {
      // The mechanism failed; fail fast to the CM instead of compacting.
      action = ask_cm("alloc-failure", ps.model.name,
                      {{"error", ContextValue{std::string("page-fault-huge-page-alloc")}},
                       {"current-mem-usage",
                        ContextValue{static_cast<double>(state_.mem_used >> 30)}},
                       {"cpu-usage", ContextValue{10.0}}});
      out.via_cm = true;
    }
  }

  apply_alloc_action(ps, page, action);

  out.action = action;
  out.latency_class = class_for_action(action.kind);
  out.latency_us = config_.latency.sample_latency_us(out.latency_class, rng_);
  if (out.via_cm) out.latency_us += config_.cm_rtt_us;
  record_latency(out.latency_class, out.latency_us, out.via_cm);
  return out;
}

FaultOutcome NodeAgent::on_page_fault(const std::string& process,
                                      std::uint64_t page) {
  auto it = state_.processes.find(process);
  if (it == state_.processes.end()) {
    throw SimulationError(config_.node_id + ": fault for unknown process " + process);
  }
  if (config_.mode == BaselineMode::kLinuxModel) {
    return linux_model_fault(it->second, page);
  }
  return preset_fault(it->second, page, false);
}

Action NodeAgent::ask_cm(const std::string& type, const std::string& process,
                         std::map<std::string, ContextValue> context) {
  bump("fallbacks");
  if (!query_handler_ || !config_.cm_reachable) {
    // Fail-fast default when the CM cannot be reached.
    bump("cm-unreachable");
    return make_action(ActionKind::kAllocBasePage);
  }
  PolicyQuery q;
  q.node_id = config_.node_id;
  q.type = type;
  q.process = process;
  q.context = std::move(context);
  q.context["virtual-time"] = static_cast<double>(state_.clock);

  std::optional<PolicyResponse> resp = query_handler_(q);
  if (!resp) {
    bump("cm-unreachable");
    return make_action(ActionKind::kAllocBasePage);
  }
  for (const auto& mod : resp->temporary_modify_preset) apply_update(mod);
  return resp->action;
}

void NodeAgent::apply_alloc_action(ProcessState& ps, std::uint64_t page,
                                   const Action& a) {
  switch (a.kind) {
    case ActionKind::kAllocBasePage:
    case ActionKind::kBreakCow:
      allocate_base_page(ps, page);
      return;
    case ActionKind::kAllocHugePage:
      promote_listed_region(ps, page);
      return;
    case ActionKind::kAllocEager:
      // Late switch to eager: treat as a plain allocation at fault time.
      allocate_base_page(ps, page);
      return;
    case ActionKind::kShareCow:
      return;  // shared mapping, nothing allocated
    case ActionKind::kReclaimFrom:
      execute_reclaim(a);
      return;
    case ActionKind::kKillProcess:
    case ActionKind::kRunTask:
    case ActionKind::kSkipTask:
      return;
  }
}

void NodeAgent::allocate_base_page(ProcessState& ps, std::uint64_t page) {
  if (page >= ps.allocated.size() || ps.allocated[page]) return;
  ps.allocated[page] = 1;
  ps.base_pages += 1;
  state_.mem_used += state_.preset.page_size_default;
  bump("base-pages");
}

void NodeAgent::promote_listed_region(ProcessState& ps, std::uint64_t page) {
  // Promotion granularity is the candidate region: the preset's listed
  // region containing the page, or the workload region in linux mode.
  const std::vector<AddressRegion>* listed =
      config_.mode == BaselineMode::kLinuxModel
          ? nullptr
          : resolve_use_huge_pages(state_.preset, state_.active_mods, ps.model.name,
                                   state_.clock);
  if (listed != nullptr) {
    for (const auto& r : *listed) {
      if (r.contains(page)) {
        promote_region(ps, r);
        return;
      }
    }
  }
  for (const auto& r : ps.model.regions) {
    if (r.region.contains(page)) {
      promote_region(ps, r.region);
      return;
    }
  }
}

void NodeAgent::promote_region(ProcessState& ps, const AddressRegion& r) {
  for (const auto& existing : ps.promoted) {
    if (existing.overlaps(r)) return;  // already promoted
  }
  // Base pages inside the region are subsumed by the huge mapping.
  std::uint64_t subsumed = 0;
  for (std::uint64_t p = r.start; p < r.end() && p < ps.allocated.size(); ++p) {
    if (ps.allocated[p]) {
      ps.allocated[p] = 0;
      ++subsumed;
    }
  }
  ps.base_pages -= subsumed;
  state_.mem_used -= subsumed * state_.preset.page_size_default;

  ps.promoted.push_back(r);
  canonicalize_region_list(ps.promoted);
  std::uint64_t frag = ps.model.frag_of({r});
  state_.mem_used += r.length * state_.preset.page_size_default + frag;
  bump("promoted-regions");
  bump("frag-bytes", static_cast<double>(frag));
}

void NodeAgent::execute_reclaim(const Action& a) {
  auto it = state_.processes.find(a.process);
  if (it == state_.processes.end()) return;
  ProcessState& victim = it->second;
  AddressRegion r = a.region.value_or(AddressRegion{0, config_.address_space_pages});
  std::uint64_t reclaimed = 0;
  for (std::uint64_t p = r.start; p < r.end() && p < victim.allocated.size(); ++p) {
    if (victim.allocated[p]) {
      victim.allocated[p] = 0;
      ++reclaimed;
    }
  }
  victim.base_pages -= reclaimed;
  std::uint64_t bytes = reclaimed * state_.preset.page_size_default;
  state_.mem_used -= std::min<std::uint64_t>(state_.mem_used, bytes);
  bump("reclaimed-bytes", static_cast<double>(bytes));
}

void NodeAgent::maybe_trigger_oom() {
  if (config_.mem_capacity_bytes == 0 ||
      state_.mem_used <= config_.mem_capacity_bytes) {
    return;
  }
  bump("oom-events");
  Decision d = evaluate(state_.preset, state_.active_mods,
                        make_ctx(DecisionPoint::kOom, "oom", {}));
  Action action = is_action(d) ? std::get<Action>(d)
                               : ask_cm("oom-unspecified", "oom", {});
  if (action.kind != ActionKind::kKillProcess) return;
  std::string victim = action.process;
  if (victim.empty()) {
    // Node resolves: lowest priority, name as tie-break.
    int best = std::numeric_limits<int>::max();
    for (const auto& [name, ps] : state_.processes) {
      if (ps.model.priority < best) {
        best = ps.model.priority;
        victim = name;
      }
    }
  }
  if (!victim.empty()) {
    stop_process(victim);
    bump("processes-killed");
  }
}

void NodeAgent::record_latency(FaultClass cls, double latency_us, bool via_cm) {
  (void)via_cm;
  bump(std::string("fault-") + to_string(cls));
  if (latency_us <= 1.0) bump("lat-le-1us");
  else if (latency_us <= 10.0) bump("lat-le-10us");
  else if (latency_us <= 100.0) bump("lat-le-100us");
  else if (latency_us <= 1e3) bump("lat-le-1ms");
  else if (latency_us <= 1e4) bump("lat-le-10ms");
  else if (latency_us <= 1e5) bump("lat-le-100ms");
  else bump("lat-gt-100ms");
  if (config_.record_latencies) latencies_us_.push_back(latency_us);
}

ExperimentResult NodeAgent::run_experiment(const ExperimentAssignment& a) {
  ExperimentResult result;
  result.experiment_id = a.experiment_id;
  result.node_id = config_.node_id;

  auto it = state_.processes.find(a.process);
  if (it == state_.processes.end()) {
    result.valid = false;
    return result;
  }
  for (const auto& r : a.promote_regions) {
    if (r.length == 0 || r.end() > config_.address_space_pages) {
      result.valid = false;
      return result;
    }
  }

  const WorkloadModel& model = it->second.model;
  std::vector<AddressRegion> promoted = a.promote_regions;
  canonicalize_region_list(promoted);

  result.runtime_delta =
      model.benefit_of(promoted) + rng_.normal(0.0, config_.noise_sigma);
  double walks = model.walk_reduction_of(promoted);
  result.load_page_walk_delta = walks;
  result.store_page_walk_delta = walks;
  result.fragmentation_bytes = model.frag_of(promoted);
  bump("experiments-run");
  // Termination-style totals, surfaced in the next metrics report.
  bump("experiment-runtime-delta-total", result.runtime_delta);
  bump("experiment-walk-delta-total", walks);
  return result;
}

MetricsReport NodeAgent::report_metrics(micros_t now) {
  MetricsReport report;
  report.node_id = config_.node_id;
  report.virtual_time = now;
  report.interval_s = config_.metrics_interval_s;
  report.counters = state_.counters;
  report.counters["mem-used-bytes"] = static_cast<double>(state_.mem_used);
  bump("metrics-reports");
  return report;
}

std::uint64_t NodeAgent::computed_mem_used() const {
  std::uint64_t total = 0;
  for (const auto& [name, ps] : state_.processes) {
    total += ps.base_pages * state_.preset.page_size_default + ps.eager_bloat_bytes;
    for (const auto& r : ps.promoted) {
      total += r.length * state_.preset.page_size_default + ps.model.frag_of({r});
    }
  }
  return total;
}

}  // namespace grapecm
