#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "grapecm/expected.hpp"
#include "grapecm/types.hpp"

namespace grapecm {

// ---------------------------------------------------------------------------
// Preset policy data model.
//
// A preset is the limited match-action table the cluster manager downloads
// into a node so that frequent, latency-sensitive decisions need no network
// round-trip. Fields a preset leaves `unspecified` escalate to the CM at
// decision time: the table is total by construction, never by crashing.
// ---------------------------------------------------------------------------

enum class PagingMode { kDemandPaging, kEager };
enum class CowMode { kOn, kNoCow, kUnspecified };
enum class NumaMode { kLocal, kInterleave, kUnspecified };
enum class OomMode { kKillLowestPriority, kUnspecified };
enum class ReclaimMode { kOn, kOff, kUnspecified };
enum class Toggle { kOn, kOff };

// Periodic daemon budget: run every `interval_s`, burn at most `max_cpu`.
struct DaemonSchedule {
  double interval_s = 30.0;
  double max_cpu = 0.02;

  friend bool operator==(const DaemonSchedule&, const DaemonSchedule&) = default;
};

// Compaction window: start at `when_s` seconds past virtual midnight, run
// for at most `max_duration_s` using at most `max_cpu` of one core.
struct CompactionSchedule {
  double when_s = 0.0;
  double max_duration_s = 1.0;
  double max_cpu = 0.02;

  friend bool operator==(const CompactionSchedule&, const CompactionSchedule&) = default;
};

// Directs the reclaim mechanism at a specific victim. Carried by temporary
// modifications ("mem-reclaim: {from, addr}" style commands); the base
// preset only carries the on/off/unspecified mode.
struct ReclaimSource {
  std::string from_process;
  std::optional<AddressRegion> region;

  friend bool operator==(const ReclaimSource&, const ReclaimSource&) = default;
};

struct PresetPolicy {
  std::uint64_t version = 1;

  PagingMode mem_alloc_default = PagingMode::kDemandPaging;
  std::map<std::string, PagingMode> mem_alloc_exceptions;

  CowMode copy_on_write = CowMode::kUnspecified;
  std::map<std::string, CowMode> copy_on_write_exceptions;

  std::uint64_t page_size_default = 4096;

  // Per-process promotion lists; each list canonical (sorted, disjoint).
  std::map<std::string, std::vector<AddressRegion>> use_huge_pages;

  NumaMode numa_balancing = NumaMode::kLocal;
  OomMode out_of_memory = OomMode::kUnspecified;
  ReclaimMode mem_reclaim = ReclaimMode::kOff;

  CompactionSchedule page_compaction;
  DaemonSchedule page_zeroing{30.0, 0.02};
  Toggle huge_page_promotion_async = Toggle::kOff;
  DaemonSchedule dirty_access_bit_scan{30.0, 0.10};

  friend bool operator==(const PresetPolicy&, const PresetPolicy&) = default;
};

// Partial preset: any subset of fields. While a modification is active its
// set fields shadow the base preset; unset fields fall through.
struct PresetOverlay {
  std::optional<PagingMode> mem_alloc_default;
  std::optional<std::map<std::string, PagingMode>> mem_alloc_exceptions;
  std::optional<CowMode> copy_on_write;
  std::optional<std::map<std::string, CowMode>> copy_on_write_exceptions;
  std::optional<std::uint64_t> page_size_default;
  std::optional<std::map<std::string, std::vector<AddressRegion>>> use_huge_pages;
  std::optional<NumaMode> numa_balancing;
  std::optional<OomMode> out_of_memory;
  std::optional<ReclaimMode> mem_reclaim;
  // Set together with mem_reclaim=on by "mem-reclaim: {from, addr}" commands.
  std::optional<ReclaimSource> reclaim_source;
  std::optional<CompactionSchedule> page_compaction;
  std::optional<DaemonSchedule> page_zeroing;
  std::optional<Toggle> huge_page_promotion_async;
  std::optional<DaemonSchedule> dirty_access_bit_scan;

  bool empty() const;

  friend bool operator==(const PresetOverlay&, const PresetOverlay&) = default;
};

struct PresetModification {
  double ttl_s = 0.0;
  PresetOverlay overlay;

  friend bool operator==(const PresetModification&, const PresetModification&) = default;
};

// A modification attached to its application time. Active over the
// closed-open interval [applied_at, applied_at + ttl); at expiry the base
// preset is restored exactly. `seq` breaks ties when two modifications are
// applied at the same instant: higher seq = more recent = wins.
struct ActiveModification {
  PresetModification mod;
  micros_t applied_at = 0;
  std::uint64_t seq = 0;

  micros_t expires_at() const {
    return applied_at + seconds_to_micros(mod.ttl_s);
  }
  bool active_at(micros_t t) const { return t >= applied_at && t < expires_at(); }
};

// ---------------------------------------------------------------------------
// Decision contexts and actions.
// ---------------------------------------------------------------------------

enum class DecisionPoint {
  kPageFault,
  kMemAlloc,
  kCowBreak,
  kOom,
  kReclaimTick,
  kCompactionTick,
  kZeroingTick,
  kPromotionTick,
};

struct NodeStateSummary {
  std::uint64_t current_mem_usage = 0;  // bytes
  double cpu_usage = 0.0;               // fraction of one node
};

struct DecisionContext {
  DecisionPoint decision_point = DecisionPoint::kPageFault;
  std::string process;
  // Present iff decision_point is page-fault, mem-alloc or cow-break.
  std::optional<AddressRegion> faulting_region;
  NodeStateSummary node_state_summary;
  micros_t virtual_time = 0;
  // Seconds since virtual midnight; lets compaction-tick decisions check the
  // preset window without knowing the scenario's day length.
  double time_of_day_s = 0.0;
};

enum class ActionKind {
  kAllocBasePage,
  kAllocHugePage,
  kAllocEager,
  kShareCow,
  kBreakCow,
  kRunTask,
  kSkipTask,
  kKillProcess,
  kReclaimFrom,
};

struct Action {
  ActionKind kind = ActionKind::kAllocBasePage;
  // kill-process: victim name; empty means "node picks its lowest-priority
  // process". reclaim-from: victim process.
  std::string process;
  // reclaim-from: range to reclaim; absent means whole process.
  std::optional<AddressRegion> region;

  friend bool operator==(const Action&, const Action&) = default;
};

inline Action make_action(ActionKind kind) { return Action{kind, {}, {}}; }

// Escalation to the CM, with the reason the preset could not decide.
struct Fallback {
  std::string reason;  // "unspecified" | "bad-context"

  friend bool operator==(const Fallback&, const Fallback&) = default;
};

using Decision = std::variant<Action, Fallback>;

inline bool is_action(const Decision& d) { return std::holds_alternative<Action>(d); }
inline bool is_fallback(const Decision& d) { return std::holds_alternative<Fallback>(d); }

const char* to_string(ActionKind kind);
const char* to_string(DecisionPoint p);
std::string to_string(const Decision& d);

// ---------------------------------------------------------------------------
// Operations.
// ---------------------------------------------------------------------------

// Returns every invariant violation; empty result means the preset is
// canonical and well-formed. `address_space_pages` bounds promotion regions
// when nonzero.
std::vector<std::string> validate_preset(const PresetPolicy& p,
                                         std::uint64_t address_space_pages = 0);

// Deterministic total evaluation. Resolution order for every field group:
// active modification overlays, most recent first, then the base preset;
// within a layer a process exception wins over the layer's default. A
// resolved `unspecified` yields Fallback("unspecified"); a context that
// violates its own invariants yields Fallback("bad-context"). Never throws.
Decision evaluate(const PresetPolicy& preset,
                  const std::vector<ActiveModification>& mods,
                  const DecisionContext& ctx);

// Applies `m` at `now`: active over [now, now + ttl). Expired modifications
// are pruned from the returned list. Errors only on ttl <= 0.
Expected<std::vector<ActiveModification>> apply_modification(
    const PresetPolicy& base, std::vector<ActiveModification> mods,
    const PresetModification& m, micros_t now);

// Drops modifications no longer active at `now`.
std::vector<ActiveModification> prune_expired(std::vector<ActiveModification> mods,
                                              micros_t now);

// Resolved view of one field group at evaluation time; exposed so the node
// agent can consult schedules (zeroing interval etc.) under overlays.
PagingMode resolve_mem_alloc(const PresetPolicy& p,
                             const std::vector<ActiveModification>& mods,
                             const std::string& process, micros_t t);
const std::vector<AddressRegion>* resolve_use_huge_pages(
    const PresetPolicy& p, const std::vector<ActiveModification>& mods,
    const std::string& process, micros_t t);
ReclaimMode resolve_mem_reclaim(const PresetPolicy& p,
                                const std::vector<ActiveModification>& mods,
                                micros_t t,
                                std::optional<ReclaimSource>* source = nullptr);
DaemonSchedule resolve_page_zeroing(const PresetPolicy& p,
                                    const std::vector<ActiveModification>& mods,
                                    micros_t t);
DaemonSchedule resolve_dirty_scan(const PresetPolicy& p,
                                  const std::vector<ActiveModification>& mods,
                                  micros_t t);
CompactionSchedule resolve_page_compaction(const PresetPolicy& p,
                                           const std::vector<ActiveModification>& mods,
                                           micros_t t);

}  // namespace grapecm
