#include "grapecm/event_log.hpp"

namespace grapecm {

EventLog::EventLog(const std::string& path) : file_(path, std::ios::app) {}

void EventLog::append(nlohmann::json event) {
  if (file_.is_open()) {
    file_ << event.dump() << "\n";
    file_.flush();
  }
  events_.push_back(std::move(event));
}

std::vector<nlohmann::json> EventLog::events_of(const std::string& kind) const {
  std::vector<nlohmann::json> out;
  for (const auto& e : events_) {
    if (e.contains("event") && e["event"] == kind) out.push_back(e);
  }
  return out;
}

Expected<std::vector<nlohmann::json>> EventLog::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) return make_error("cannot open event log: " + path);
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      return make_error("event log " + path + ": malformed json at line " +
                        std::to_string(lineno));
    }
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace grapecm
