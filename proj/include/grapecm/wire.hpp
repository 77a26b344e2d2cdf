#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "grapecm/expected.hpp"
#include "grapecm/policy.hpp"
#include "grapecm/types.hpp"

namespace grapecm {

// ---------------------------------------------------------------------------
// Node <-> CM message schema, protocol "grapecm/1".
//
// Framing is newline-delimited UTF-8 JSON: exactly one message per line, no
// interior raw newlines. Keys are kebab-case. Every line carries the
// protocol version ("proto"), a message discriminator ("msg") and the
// sender identity ("sender": a node id, or "cm").
// ---------------------------------------------------------------------------

inline constexpr const char* kProtocolVersion = "grapecm/1";
inline constexpr const char* kCmIdentity = "cm";

// What a node advertises about one resident process.
struct ProcessInfo {
  int priority = 0;  // higher = more important
  std::optional<AddressRegion> main_region;

  friend bool operator==(const ProcessInfo&, const ProcessInfo&) = default;
};

struct Hello {
  std::string node_id;
  std::string hardware_class;
  std::map<std::string, ProcessInfo> software_manifest;

  friend bool operator==(const Hello&, const Hello&) = default;
};

struct PresetDownload {
  PresetPolicy preset;

  friend bool operator==(const PresetDownload&, const PresetDownload&) = default;
};

struct PresetUpdate {
  PresetModification modification;

  friend bool operator==(const PresetUpdate&, const PresetUpdate&) = default;
};

struct MetricsReport {
  std::string node_id;
  micros_t virtual_time = 0;
  std::map<std::string, double> counters;
  double interval_s = 0.0;  // attached so the CM can audit bandwidth

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

// Context values are numbers or strings ("error": "page-fault-huge-page-alloc",
// "current-mem-usage": 103, ...).
using ContextValue = std::variant<double, std::string>;

struct PolicyQuery {
  std::string node_id;
  std::string type;  // e.g. "alloc-failure"
  std::string process;
  std::map<std::string, ContextValue> context;

  friend bool operator==(const PolicyQuery&, const PolicyQuery&) = default;
};

struct PolicyResponse {
  Action action;  // always definite: the CM never answers "unspecified"
  std::vector<PresetModification> temporary_modify_preset;

  friend bool operator==(const PolicyResponse&, const PolicyResponse&) = default;
};

struct ExperimentAssignment {
  std::string experiment_id;
  std::string process;
  std::vector<AddressRegion> promote_regions;
  double duration_s = 0.0;

  friend bool operator==(const ExperimentAssignment&, const ExperimentAssignment&) = default;
};

struct ExperimentResult {
  std::string experiment_id;
  std::string node_id;
  double runtime_delta = 0.0;
  double load_page_walk_delta = 0.0;
  double store_page_walk_delta = 0.0;
  std::uint64_t fragmentation_bytes = 0;
  bool valid = true;  // false when the assignment referenced unknown regions

  friend bool operator==(const ExperimentResult&, const ExperimentResult&) = default;
};

using Message = std::variant<Hello, PresetDownload, PresetUpdate, MetricsReport,
                             PolicyQuery, PolicyResponse, ExperimentAssignment,
                             ExperimentResult>;

// One message per line, trailing '\n' included. Rejects non-finite numbers.
Expected<std::string> encode(const Message& m);

// Inverse of encode on its image. Unknown fields are ignored; missing
// required fields, malformed JSON, unknown message types and protocol
// version mismatches are errors.
Expected<Message> decode(std::string_view line);

// JSON mappings shared with scenario files and the CM event log.
nlohmann::json region_to_json(const AddressRegion& r);
Expected<AddressRegion> region_from_json(const nlohmann::json& j);
nlohmann::json preset_to_json(const PresetPolicy& p);
Expected<PresetPolicy> preset_from_json(const nlohmann::json& j);
nlohmann::json modification_to_json(const PresetModification& m);
Expected<PresetModification> modification_from_json(const nlohmann::json& j);
nlohmann::json action_to_json(const Action& a);
Expected<Action> action_from_json(const nlohmann::json& j);

// Durations in scenario and wire JSON may be plain seconds or suffixed
// strings ("30s", "2m", "1h", "500ms"); "midnight" is 0.
Expected<double> duration_from_json(const nlohmann::json& j);

}  // namespace grapecm
