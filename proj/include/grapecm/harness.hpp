#pragma once

#include <string>

#include <json.hpp>

#include "grapecm/expected.hpp"
#include "grapecm/scenario.hpp"

namespace grapecm {

struct RunOutput {
  nlohmann::json report;
  std::string histogram_csv;  // empty when the pipeline has no histogram
};

// Executes one scenario end to end and produces the machine-readable
// report. Deterministic for the in-process transport: identical scenario
// and seed give a byte-identical report (reports carry no wall-clock
// state). When `event_log_path` is set, the CM's append-only event log
// (queries, alerts, estimates, issued presets) is mirrored to that file.
Expected<RunOutput> run_scenario(const Scenario& s,
                                 const std::string& event_log_path = "");

// Serializes a report the way `sim run --out` writes it.
std::string report_to_string(const nlohmann::json& report);

// Percentage deltas between two reports of the same shape. `metric` is a
// dotted path ("coordination.p99-us") or a bare stat name resolved inside
// the pipeline's primary section ("p99-us"). Alongside the requested
// metric, deltas for p50/p99/p999 are emitted when present.
Expected<nlohmann::json> compare_reports(const nlohmann::json& a,
                                         const nlohmann::json& b,
                                         const std::string& metric);

}  // namespace grapecm
