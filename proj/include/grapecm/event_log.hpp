#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "grapecm/expected.hpp"

namespace grapecm {

// Append-only newline-delimited JSON event log. In-memory always; mirrored
// to a file when a path is given. Replayable: reloading the file yields
// the same event sequence.
class EventLog {
 public:
  EventLog() = default;
  explicit EventLog(const std::string& path);

  void append(nlohmann::json event);

  const std::vector<nlohmann::json>& events() const { return events_; }

  std::vector<nlohmann::json> events_of(const std::string& kind) const;

  static Expected<std::vector<nlohmann::json>> load(const std::string& path);

 private:
  std::vector<nlohmann::json> events_;
  std::ofstream file_;
};

}  // namespace grapecm
