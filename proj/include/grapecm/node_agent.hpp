#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "grapecm/policy.hpp"
#include "grapecm/rng.hpp"
#include "grapecm/types.hpp"
#include "grapecm/wire.hpp"
#include "grapecm/workload.hpp"

namespace grapecm {

// Thrown when the simulation detects a model inconsistency (conservation
// violation, event in the past, ...). Aborting beats silently producing
// numbers from a broken model.
class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class BaselineMode { kLinuxModel, kPresetOnly };

struct NodeConfig {
  std::string node_id = "node-0";
  std::uint64_t address_space_pages = 4096;
  double cm_rtt_us = 50.0;  // one query round-trip
  bool cm_reachable = true;
  BaselineMode mode = BaselineMode::kPresetOnly;
  FaultLatencyModel latency = FaultLatencyModel::linux_baseline();
  double noise_sigma = 0.003;      // experiment runtime-delta noise
  double day_length_s = 86400.0;   // virtual day, for compaction time-of-day
  double reclaim_interval_s = 10.0;
  double promotion_interval_s = 60.0;
  double metrics_interval_s = 900.0;
  std::uint64_t mem_capacity_bytes = 0;  // 0 = unlimited
  bool check_conservation = false;       // recompute mem_used after every event
  bool record_event_log = false;
  bool record_latencies = true;
};

struct FaultOutcome {
  Action action;
  double latency_us = 0.0;
  FaultClass latency_class = FaultClass::kFastBase;
  bool via_cm = false;
};

// Per-process bookkeeping.
struct ProcessState {
  WorkloadModel model;
  PagingMode paging_mode = PagingMode::kDemandPaging;
  std::vector<std::uint8_t> allocated;  // base-page bitmap
  std::uint64_t base_pages = 0;
  std::vector<AddressRegion> promoted;  // canonical
  std::uint64_t eager_bloat_bytes = 0;
  micros_t next_fault_at = -1;
};

struct NodeState {
  std::string node_id;
  PresetPolicy preset;
  std::vector<ActiveModification> active_mods;
  std::map<std::string, ProcessState> processes;
  std::uint64_t mem_used = 0;
  std::map<std::string, double> counters;
  micros_t clock = 0;
};

// A discrete-event simulated kernel node: executes preset decisions at
// decision points, escalates fallbacks to the CM, runs calibrated workload
// models and emits metrics. Single logical event loop; owns its state.
class NodeAgent {
 public:
  // Answers policy queries; returning nullopt means "CM unreachable".
  using QueryHandler = std::function<std::optional<PolicyResponse>(const PolicyQuery&)>;
  using ReportSink = std::function<void(const MetricsReport&)>;

  NodeAgent(NodeConfig config, PresetPolicy preset, std::uint64_t seed);

  void set_query_handler(QueryHandler h) { query_handler_ = std::move(h); }
  void set_report_sink(ReportSink s) { report_sink_ = std::move(s); }

  // Process lifecycle. Starting a process runs its mem-alloc decision; a
  // resolved eager mode allocates the whole footprint up front.
  void start_process(const WorkloadModel& model);
  void stop_process(const std::string& name);

  // CM-pushed state.
  void download_preset(PresetPolicy preset);
  void apply_update(const PresetModification& m);

  // Advances the node through all events with timestamp <= until.
  void step(micros_t until);

  // Decision-point entry (also driven by fault events inside step()).
  FaultOutcome on_page_fault(const std::string& process, std::uint64_t page);

  ExperimentResult run_experiment(const ExperimentAssignment& a);

  MetricsReport report_metrics(micros_t now);

  const NodeState& state() const { return state_; }
  const NodeConfig& config() const { return config_; }
  const std::vector<double>& fault_latencies_us() const { return latencies_us_; }
  const std::vector<std::string>& event_log() const { return event_log_; }

  // Closed-form memory total; step() checks it against the running value
  // when check_conservation is set.
  std::uint64_t computed_mem_used() const;

 private:
  enum class EventKind {
    kFault,
    kZeroingTick,
    kDirtyScanTick,
    kCompactionTick,
    kReclaimTick,
    kPromotionTick,
    kMetricsDeadline,
  };

  struct Event {
    micros_t at;
    std::uint64_t seq;
    EventKind kind;
    std::string process;  // kFault only

    bool operator>(const Event& other) const {
      return at != other.at ? at > other.at : seq > other.seq;
    }
  };

  void schedule(micros_t at, EventKind kind, std::string process = {});
  void schedule_next_fault(const std::string& process);
  void process_event(const Event& ev);
  void run_fault_event(const std::string& process);
  FaultOutcome linux_model_fault(ProcessState& ps, std::uint64_t page);
  FaultOutcome preset_fault(ProcessState& ps, std::uint64_t page, bool cow_break);

  // CM escalation; returns the definite action to execute locally.
  Action ask_cm(const std::string& type, const std::string& process,
                std::map<std::string, ContextValue> context);

  void apply_alloc_action(ProcessState& ps, std::uint64_t page, const Action& a);
  void promote_listed_region(ProcessState& ps, std::uint64_t page);
  void promote_region(ProcessState& ps, const AddressRegion& r);
  void execute_reclaim(const Action& a);
  void maybe_trigger_oom();
  void allocate_base_page(ProcessState& ps, std::uint64_t page);

  void record_latency(FaultClass cls, double latency_us, bool via_cm);
  DecisionContext make_ctx(DecisionPoint dp, const std::string& process,
                           std::optional<AddressRegion> region) const;
  double time_of_day_s() const;
  void bump(const std::string& counter, double by = 1.0);

  NodeConfig config_;
  NodeState state_;
  Rng rng_;
  QueryHandler query_handler_;
  ReportSink report_sink_;
  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> events_;
  std::uint64_t next_seq_ = 0;
  std::vector<double> latencies_us_;
  std::vector<std::string> event_log_;
  bool daemons_scheduled_ = false;
};

}  // namespace grapecm
