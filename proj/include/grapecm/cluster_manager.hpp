#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "grapecm/event_log.hpp"
#include "grapecm/expected.hpp"
#include "grapecm/knapsack.hpp"
#include "grapecm/metrics_schedule.hpp"
#include "grapecm/paging_classifier.hpp"
#include "grapecm/policy.hpp"
#include "grapecm/wire.hpp"

namespace grapecm {

// One entry in the CM's query rule table. Rules are configuration, matched
// by query type; the CM's answer is always definite.
struct QueryRule {
  Action action;
  // Emit a "suspend huge pages" modification ({use-huge-pages: {}}).
  bool suspend_huge_pages = false;
  // Emit a reclaim command targeting the querying node's lowest-priority
  // co-located process (skipped when there is no other process).
  bool reclaim_from_lowest_priority = false;
  double modification_ttl_s = 3600.0;
};

// The default table reproduces the documented alloc-failure handling: fall
// back to a base page, suspend huge pages for an hour and reclaim idle
// memory from the least important neighbor. Everything else is covered by
// the conservative catch-all (base page + operator alert).
std::map<std::string, QueryRule> default_query_rules();

struct CmConfig {
  ClassifierThresholds classifier;
  std::map<std::string, QueryRule> rules = default_query_rules();
  std::uint64_t knapsack_quantum_bytes = kDefaultFragQuantumBytes;
  std::uint64_t address_space_pages = 4096;
};

// Policy decisions feeding compile_preset. Lists, not maps, so conflicting
// decisions are detectable instead of silently merged.
struct DecisionSet {
  std::vector<std::pair<std::string, std::vector<AddressRegion>>> promotions;
  std::vector<std::pair<std::string, PagingMode>> paging_modes;
  std::optional<CompactionSchedule> compaction;
};

// The cluster manager: single logical authority over presets, estimates,
// histories and schedules. Connection handlers may run concurrently, but
// every mutation goes through handle_message / the typed methods below on
// one ordered command stream (the transport serializes).
class ClusterManager {
 public:
  explicit ClusterManager(CmConfig config = {}, EventLog* log = nullptr);

  // Wire entry point. Returns the response to send back, if any: queries
  // get a PolicyResponse, hellos get the current preset.
  std::optional<Message> handle_message(const Message& m);

  PolicyResponse handle_query(const PolicyQuery& q);

  void register_node(const Hello& h);
  void record_metrics(const MetricsReport& r);
  void record_result(const ExperimentResult& r);
  void record_history(const std::string& process, const RunRecord& run);

  PagingDecision classify(const std::string& process) const;

  // Fills the preset template from the decision set on top of the current
  // preset, bumps the version, and logs the issue. Conflicting decisions
  // for one process are an error, never a silent override.
  Expected<PresetPolicy> compile_preset(const DecisionSet& decisions);

  Expected<PromotionSelection> select_promotions(
      const std::vector<RegionEstimate>& estimates,
      std::uint64_t frag_budget_bytes) const;

  void store_estimates(const std::vector<RegionEstimate>& estimates);

  // Rebuilds registry, histories, estimates and preset version from a
  // previously written event log.
  void replay(const std::vector<nlohmann::json>& events);

  const PresetPolicy& current_preset() const { return preset_; }
  void set_base_preset(PresetPolicy p) { preset_ = std::move(p); }
  const std::map<std::string, Hello>& nodes() const { return nodes_; }
  const ProcessHistory* history(const std::string& process) const;
  const std::vector<RegionEstimate>& estimates() const { return estimates_; }
  const std::vector<ExperimentResult>& pending_results() const { return results_; }
  std::vector<ExperimentResult> take_results();
  std::uint64_t queries_handled() const { return queries_handled_; }
  std::uint64_t alerts_raised() const { return alerts_raised_; }
  CollectionSchedule& collection_schedule() { return schedule_; }

 private:
  void log_event(nlohmann::json e);
  void alert(const std::string& kind, const PolicyQuery& q);
  std::optional<std::pair<std::string, ProcessInfo>> lowest_priority_neighbor(
      const std::string& node_id, const std::string& excluding) const;

  CmConfig config_;
  EventLog* log_;
  PresetPolicy preset_;
  std::map<std::string, Hello> nodes_;
  std::map<std::string, MetricsReport> latest_metrics_;
  std::map<std::string, ProcessHistory> histories_;
  std::vector<RegionEstimate> estimates_;
  std::vector<ExperimentResult> results_;
  CollectionSchedule schedule_;
  std::uint64_t queries_handled_ = 0;
  std::uint64_t alerts_raised_ = 0;
};

}  // namespace grapecm
