#include "grapecm/policy.hpp"

#include <algorithm>
#include <cmath>

namespace grapecm {

namespace {

bool fraction_in_unit_interval(double f) { return f > 0.0 && f <= 1.0; }

// Walks overlays most-recent-first. `pick` extracts an optional value from
// one overlay; the first overlay that yields a value wins, otherwise the
// base value is returned.
template <typename T, typename PickOverlay>
T resolve_field(const std::vector<ActiveModification>& mods, micros_t t,
                PickOverlay&& pick, T base_value) {
  const ActiveModification* best = nullptr;
  std::optional<T> best_value;
  for (const auto& am : mods) {
    if (!am.active_at(t)) continue;
    auto v = pick(am.mod.overlay);
    if (!v.has_value()) continue;
    if (best == nullptr || am.applied_at > best->applied_at ||
        (am.applied_at == best->applied_at && am.seq > best->seq)) {
      best = &am;
      best_value = std::move(v);
    }
  }
  return best_value.has_value() ? *best_value : base_value;
}

// Resolves a default+exceptions pair for one process. Within a layer the
// exception wins over the default; across layers the most recent overlay
// that defines an applicable value wins over the base preset.
template <typename V>
V resolve_with_exceptions(
    const std::vector<ActiveModification>& mods, micros_t t,
    const std::string& process,
    const std::optional<V> PresetOverlay::* default_field,
    const std::optional<std::map<std::string, V>> PresetOverlay::* exc_field,
    V base_default, const std::map<std::string, V>& base_exceptions) {
  const ActiveModification* best = nullptr;
  std::optional<V> best_value;
  for (const auto& am : mods) {
    if (!am.active_at(t)) continue;
    const PresetOverlay& o = am.mod.overlay;
    std::optional<V> layer_value;
    if ((o.*exc_field).has_value()) {
      auto it = (o.*exc_field)->find(process);
      if (it != (o.*exc_field)->end()) layer_value = it->second;
    }
    if (!layer_value.has_value() && (o.*default_field).has_value()) {
      layer_value = *(o.*default_field);
    }
    if (!layer_value.has_value()) continue;
    if (best == nullptr || am.applied_at > best->applied_at ||
        (am.applied_at == best->applied_at && am.seq > best->seq)) {
      best = &am;
      best_value = layer_value;
    }
  }
  if (best_value.has_value()) return *best_value;
  auto it = base_exceptions.find(process);
  if (it != base_exceptions.end()) return it->second;
  return base_default;
}

bool context_is_well_formed(const DecisionContext& ctx) {
  const bool needs_region = ctx.decision_point == DecisionPoint::kPageFault ||
                            ctx.decision_point == DecisionPoint::kMemAlloc ||
                            ctx.decision_point == DecisionPoint::kCowBreak;
  if (needs_region != ctx.faulting_region.has_value()) return false;
  if (needs_region && ctx.faulting_region->length == 0) return false;
  if (needs_region && ctx.process.empty()) return false;
  if (ctx.virtual_time < 0) return false;
  if (!std::isfinite(ctx.node_state_summary.cpu_usage)) return false;
  return true;
}

}  // namespace

bool PresetOverlay::empty() const {
  return !mem_alloc_default && !mem_alloc_exceptions && !copy_on_write &&
         !copy_on_write_exceptions && !page_size_default && !use_huge_pages &&
         !numa_balancing && !out_of_memory && !mem_reclaim && !reclaim_source &&
         !page_compaction && !page_zeroing && !huge_page_promotion_async &&
         !dirty_access_bit_scan;
}

const char* to_string(ActionKind kind) {
  switch (kind) {
    case ActionKind::kAllocBasePage: return "alloc-base-page";
    case ActionKind::kAllocHugePage: return "alloc-huge-page";
    case ActionKind::kAllocEager: return "alloc-eager";
    case ActionKind::kShareCow: return "share-cow";
    case ActionKind::kBreakCow: return "break-cow";
    case ActionKind::kRunTask: return "run-task";
    case ActionKind::kSkipTask: return "skip-task";
    case ActionKind::kKillProcess: return "kill-process";
    case ActionKind::kReclaimFrom: return "reclaim-from";
  }
  return "unknown";
}

const char* to_string(DecisionPoint p) {
  switch (p) {
    case DecisionPoint::kPageFault: return "page-fault";
    case DecisionPoint::kMemAlloc: return "mem-alloc";
    case DecisionPoint::kCowBreak: return "cow-break";
    case DecisionPoint::kOom: return "oom";
    case DecisionPoint::kReclaimTick: return "reclaim-tick";
    case DecisionPoint::kCompactionTick: return "compaction-tick";
    case DecisionPoint::kZeroingTick: return "zeroing-tick";
    case DecisionPoint::kPromotionTick: return "promotion-tick";
  }
  return "unknown";
}

std::string to_string(const Decision& d) {
  if (const auto* a = std::get_if<Action>(&d)) {
    std::string s = to_string(a->kind);
    if (!a->process.empty()) s += " " + a->process;
    if (a->region) s += " " + region_to_string(*a->region);
    return s;
  }
  return "fallback(" + std::get<Fallback>(d).reason + ")";
}

std::vector<std::string> validate_preset(const PresetPolicy& p,
                                         std::uint64_t address_space_pages) {
  std::vector<std::string> violations;
  auto bad = [&violations](std::string msg) { violations.push_back(std::move(msg)); };

  if (p.page_size_default == 0) bad("page-size-default: must be positive");

  if (!fraction_in_unit_interval(p.page_compaction.max_cpu))
    bad("page-compaction: max_cpu out of range");
  if (p.page_compaction.max_duration_s <= 0)
    bad("page-compaction: max_duration out of range");
  if (p.page_compaction.when_s < 0) bad("page-compaction: when out of range");

  if (!fraction_in_unit_interval(p.page_zeroing.max_cpu))
    bad("page-zeroing: max_cpu out of range");
  if (p.page_zeroing.interval_s <= 0) bad("page-zeroing: interval out of range");

  if (!fraction_in_unit_interval(p.dirty_access_bit_scan.max_cpu))
    bad("dirty-access-bit-scan: max_cpu out of range");
  if (p.dirty_access_bit_scan.interval_s <= 0)
    bad("dirty-access-bit-scan: interval out of range");

  for (const auto& [proc, mode] : p.mem_alloc_exceptions) {
    if (proc.empty()) bad("mem-alloc-exceptions: empty process name");
    if (mode == p.mem_alloc_default)
      bad("mem-alloc-exceptions[" + proc + "]: non-canonical exception");
  }
  for (const auto& [proc, mode] : p.copy_on_write_exceptions) {
    if (proc.empty()) bad("copy-on-write-exceptions: empty process name");
    if (mode == p.copy_on_write)
      bad("copy-on-write-exceptions[" + proc + "]: non-canonical exception");
  }

  for (const auto& [proc, regions] : p.use_huge_pages) {
    if (proc.empty()) bad("use-huge-pages: empty process name");
    if (!is_canonical_region_list(regions)) {
      bad("use-huge-pages[" + proc + "]: regions not sorted/disjoint");
      continue;
    }
    for (const auto& r : regions) {
      if (r.length == 0) bad("use-huge-pages[" + proc + "]: empty region");
      if (r.start + r.length < r.start)
        bad("use-huge-pages[" + proc + "]: region overflows address space");
      else if (address_space_pages != 0 && r.end() > address_space_pages)
        bad("use-huge-pages[" + proc + "]: region exceeds address space");
    }
  }

  return violations;
}

PagingMode resolve_mem_alloc(const PresetPolicy& p,
                             const std::vector<ActiveModification>& mods,
                             const std::string& process, micros_t t) {
  return resolve_with_exceptions(mods, t, process,
                                 &PresetOverlay::mem_alloc_default,
                                 &PresetOverlay::mem_alloc_exceptions,
                                 p.mem_alloc_default, p.mem_alloc_exceptions);
}

static CowMode resolve_cow(const PresetPolicy& p,
                           const std::vector<ActiveModification>& mods,
                           const std::string& process, micros_t t) {
  return resolve_with_exceptions(mods, t, process, &PresetOverlay::copy_on_write,
                                 &PresetOverlay::copy_on_write_exceptions,
                                 p.copy_on_write, p.copy_on_write_exceptions);
}

const std::vector<AddressRegion>* resolve_use_huge_pages(
    const PresetPolicy& p, const std::vector<ActiveModification>& mods,
    const std::string& process, micros_t t) {
  const std::map<std::string, std::vector<AddressRegion>>* table =
      resolve_field<const std::map<std::string, std::vector<AddressRegion>>*>(
          mods, t,
          [](const PresetOverlay& o)
              -> std::optional<const std::map<std::string, std::vector<AddressRegion>>*> {
            if (o.use_huge_pages) return &*o.use_huge_pages;
            return std::nullopt;
          },
          &p.use_huge_pages);
  auto it = table->find(process);
  return it == table->end() ? nullptr : &it->second;
}

ReclaimMode resolve_mem_reclaim(const PresetPolicy& p,
                                const std::vector<ActiveModification>& mods,
                                micros_t t,
                                std::optional<ReclaimSource>* source) {
  const ActiveModification* best = nullptr;
  for (const auto& am : mods) {
    if (!am.active_at(t) || !am.mod.overlay.mem_reclaim) continue;
    if (best == nullptr || am.applied_at > best->applied_at ||
        (am.applied_at == best->applied_at && am.seq > best->seq)) {
      best = &am;
    }
  }
  if (best != nullptr) {
    if (source) *source = best->mod.overlay.reclaim_source;
    return *best->mod.overlay.mem_reclaim;
  }
  if (source) *source = std::nullopt;
  return p.mem_reclaim;
}

DaemonSchedule resolve_page_zeroing(const PresetPolicy& p,
                                    const std::vector<ActiveModification>& mods,
                                    micros_t t) {
  return resolve_field<DaemonSchedule>(
      mods, t, [](const PresetOverlay& o) { return o.page_zeroing; },
      p.page_zeroing);
}

DaemonSchedule resolve_dirty_scan(const PresetPolicy& p,
                                  const std::vector<ActiveModification>& mods,
                                  micros_t t) {
  return resolve_field<DaemonSchedule>(
      mods, t, [](const PresetOverlay& o) { return o.dirty_access_bit_scan; },
      p.dirty_access_bit_scan);
}

CompactionSchedule resolve_page_compaction(const PresetPolicy& p,
                                           const std::vector<ActiveModification>& mods,
                                           micros_t t) {
  return resolve_field<CompactionSchedule>(
      mods, t, [](const PresetOverlay& o) { return o.page_compaction; },
      p.page_compaction);
}

Decision evaluate(const PresetPolicy& preset,
                  const std::vector<ActiveModification>& mods,
                  const DecisionContext& ctx) {
  if (!context_is_well_formed(ctx)) return Fallback{"bad-context"};

  const micros_t t = ctx.virtual_time;

  switch (ctx.decision_point) {
    case DecisionPoint::kPageFault: {
      const auto* regions = resolve_use_huge_pages(preset, mods, ctx.process, t);
      if (regions != nullptr &&
          region_list_contains_page(*regions, ctx.faulting_region->start)) {
        return make_action(ActionKind::kAllocHugePage);
      }
      return make_action(ActionKind::kAllocBasePage);
    }

    case DecisionPoint::kMemAlloc: {
      PagingMode mode = resolve_mem_alloc(preset, mods, ctx.process, t);
      return make_action(mode == PagingMode::kEager ? ActionKind::kAllocEager
                                                    : ActionKind::kAllocBasePage);
    }

    case DecisionPoint::kCowBreak: {
      switch (resolve_cow(preset, mods, ctx.process, t)) {
        case CowMode::kOn: return make_action(ActionKind::kBreakCow);
        case CowMode::kNoCow: return make_action(ActionKind::kAllocBasePage);
        case CowMode::kUnspecified: return Fallback{"unspecified"};
      }
      return Fallback{"unspecified"};
    }

    case DecisionPoint::kOom: {
      OomMode mode = resolve_field<OomMode>(
          mods, t, [](const PresetOverlay& o) { return o.out_of_memory; },
          preset.out_of_memory);
      if (mode == OomMode::kKillLowestPriority) {
        // Empty victim: the node resolves to its lowest-priority process.
        return make_action(ActionKind::kKillProcess);
      }
      return Fallback{"unspecified"};
    }

    case DecisionPoint::kReclaimTick: {
      std::optional<ReclaimSource> source;
      switch (resolve_mem_reclaim(preset, mods, t, &source)) {
        case ReclaimMode::kOn:
          if (source) {
            Action a = make_action(ActionKind::kReclaimFrom);
            a.process = source->from_process;
            a.region = source->region;
            return a;
          }
          return make_action(ActionKind::kRunTask);
        case ReclaimMode::kOff: return make_action(ActionKind::kSkipTask);
        case ReclaimMode::kUnspecified: return Fallback{"unspecified"};
      }
      return Fallback{"unspecified"};
    }

    case DecisionPoint::kCompactionTick: {
      CompactionSchedule sched = resolve_page_compaction(preset, mods, t);
      const bool in_window = ctx.time_of_day_s >= sched.when_s &&
                             ctx.time_of_day_s < sched.when_s + sched.max_duration_s;
      return make_action(in_window ? ActionKind::kRunTask : ActionKind::kSkipTask);
    }

    case DecisionPoint::kZeroingTick: {
      DaemonSchedule sched = resolve_page_zeroing(preset, mods, t);
      // Skip when the node has no CPU headroom for the daemon's budget.
      const bool headroom = ctx.node_state_summary.cpu_usage + sched.max_cpu <= 1.0;
      return make_action(headroom ? ActionKind::kRunTask : ActionKind::kSkipTask);
    }

    case DecisionPoint::kPromotionTick: {
      Toggle async = resolve_field<Toggle>(
          mods, t,
          [](const PresetOverlay& o) { return o.huge_page_promotion_async; },
          preset.huge_page_promotion_async);
      return make_action(async == Toggle::kOn ? ActionKind::kRunTask
                                              : ActionKind::kSkipTask);
    }
  }
  return Fallback{"bad-context"};
}

std::vector<ActiveModification> prune_expired(std::vector<ActiveModification> mods,
                                              micros_t now) {
  std::erase_if(mods, [now](const ActiveModification& am) {
    return now >= am.expires_at();
  });
  return mods;
}

Expected<std::vector<ActiveModification>> apply_modification(
    const PresetPolicy& base, std::vector<ActiveModification> mods,
    const PresetModification& m, micros_t now) {
  (void)base;
  if (m.ttl_s <= 0) return make_error("modification ttl must be positive");
  if (m.overlay.use_huge_pages) {
    for (const auto& [proc, regions] : *m.overlay.use_huge_pages) {
      if (!is_canonical_region_list(regions)) {
        return make_error("modification use-huge-pages[" + proc +
                          "]: regions not sorted/disjoint");
      }
    }
  }
  mods = prune_expired(std::move(mods), now);
  std::uint64_t next_seq = 0;
  for (const auto& am : mods) next_seq = std::max(next_seq, am.seq + 1);
  mods.push_back(ActiveModification{m, now, next_seq});
  return mods;
}

}  // namespace grapecm
