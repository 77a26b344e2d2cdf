#include "grapecm/wire.hpp"

#include <cmath>

namespace grapecm {

using nlohmann::json;

namespace {

// --- enum <-> string tables -------------------------------------------------

const char* paging_str(PagingMode m) {
  return m == PagingMode::kEager ? "eager" : "demand-paging";
}
Expected<PagingMode> paging_from(const std::string& s) {
  if (s == "demand-paging") return PagingMode::kDemandPaging;
  if (s == "eager") return PagingMode::kEager;
  return make_error("invalid paging mode: " + s);
}

const char* cow_str(CowMode m) {
  switch (m) {
    case CowMode::kOn: return "on";
    case CowMode::kNoCow: return "no-cow";
    case CowMode::kUnspecified: return "unspecified";
  }
  return "unspecified";
}
Expected<CowMode> cow_from(const std::string& s) {
  if (s == "on") return CowMode::kOn;
  if (s == "no-cow") return CowMode::kNoCow;
  if (s == "unspecified") return CowMode::kUnspecified;
  return make_error("invalid copy-on-write mode: " + s);
}

const char* numa_str(NumaMode m) {
  switch (m) {
    case NumaMode::kLocal: return "local";
    case NumaMode::kInterleave: return "interleave";
    case NumaMode::kUnspecified: return "unspecified";
  }
  return "unspecified";
}
Expected<NumaMode> numa_from(const std::string& s) {
  if (s == "local") return NumaMode::kLocal;
  if (s == "interleave") return NumaMode::kInterleave;
  if (s == "unspecified") return NumaMode::kUnspecified;
  return make_error("invalid numa-balancing mode: " + s);
}

const char* oom_str(OomMode m) {
  return m == OomMode::kKillLowestPriority ? "kill-lowest-priority" : "unspecified";
}
Expected<OomMode> oom_from(const std::string& s) {
  if (s == "kill-lowest-priority") return OomMode::kKillLowestPriority;
  if (s == "unspecified") return OomMode::kUnspecified;
  return make_error("invalid out-of-memory mode: " + s);
}

const char* reclaim_str(ReclaimMode m) {
  switch (m) {
    case ReclaimMode::kOn: return "on";
    case ReclaimMode::kOff: return "off";
    case ReclaimMode::kUnspecified: return "unspecified";
  }
  return "unspecified";
}
Expected<ReclaimMode> reclaim_from(const std::string& s) {
  if (s == "on") return ReclaimMode::kOn;
  if (s == "off") return ReclaimMode::kOff;
  if (s == "unspecified") return ReclaimMode::kUnspecified;
  return make_error("invalid mem-reclaim mode: " + s);
}

const char* toggle_str(Toggle t) { return t == Toggle::kOn ? "on" : "off"; }
Expected<Toggle> toggle_from(const std::string& s) {
  if (s == "on") return Toggle::kOn;
  if (s == "off") return Toggle::kOff;
  return make_error("invalid on/off value: " + s);
}

const char* action_kind_str(ActionKind k) { return to_string(k); }
Expected<ActionKind> action_kind_from(const std::string& s) {
  if (s == "alloc-base-page") return ActionKind::kAllocBasePage;
  if (s == "alloc-huge-page") return ActionKind::kAllocHugePage;
  if (s == "alloc-eager") return ActionKind::kAllocEager;
  if (s == "share-cow") return ActionKind::kShareCow;
  if (s == "break-cow") return ActionKind::kBreakCow;
  if (s == "run-task") return ActionKind::kRunTask;
  if (s == "skip-task") return ActionKind::kSkipTask;
  if (s == "kill-process") return ActionKind::kKillProcess;
  if (s == "reclaim-from") return ActionKind::kReclaimFrom;
  return make_error("invalid action kind: " + s);
}

// --- field access helpers ---------------------------------------------------

Expected<const json*> require(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) return make_error(std::string("missing field: ") + key);
  return Expected<const json*>(&*it);
}

Expected<std::string> require_string(const json& j, const char* key) {
  auto f = require(j, key);
  if (!f) return f.error();
  if (!f.value()->is_string()) return make_error(std::string("invalid field: ") + key);
  return f.value()->get<std::string>();
}

Expected<double> require_number(const json& j, const char* key) {
  auto f = require(j, key);
  if (!f) return f.error();
  if (!f.value()->is_number()) return make_error(std::string("invalid field: ") + key);
  return f.value()->get<double>();
}

bool tree_has_non_finite(const json& j) {
  if (j.is_number_float() && !std::isfinite(j.get<double>())) return true;
  if (j.is_object() || j.is_array()) {
    for (const auto& child : j) {
      if (tree_has_non_finite(child)) return true;
    }
  }
  return false;
}

json schedule_to_json(const DaemonSchedule& s) {
  return json{{"interval", s.interval_s}, {"max-cpu", s.max_cpu}};
}

Expected<DaemonSchedule> schedule_from_json(const json& j) {
  if (!j.is_object()) return make_error("invalid field: schedule");
  DaemonSchedule s;
  auto it = j.find("interval");
  if (it == j.end()) return make_error("missing field: interval");
  auto dur = duration_from_json(*it);
  if (!dur) return dur.error();
  s.interval_s = dur.value();
  auto cpu = require_number(j, "max-cpu");
  if (!cpu) return cpu.error();
  s.max_cpu = cpu.value();
  return s;
}

json compaction_to_json(const CompactionSchedule& s) {
  return json{{"when", s.when_s},
              {"max-duration", s.max_duration_s},
              {"max-cpu", s.max_cpu}};
}

Expected<CompactionSchedule> compaction_from_json(const json& j) {
  if (!j.is_object()) return make_error("invalid field: page-compaction");
  CompactionSchedule s;
  auto when_it = j.find("when");
  if (when_it == j.end()) return make_error("missing field: when");
  auto when = duration_from_json(*when_it);
  if (!when) return when.error();
  s.when_s = when.value();
  auto dur_it = j.find("max-duration");
  if (dur_it == j.end()) return make_error("missing field: max-duration");
  auto dur = duration_from_json(*dur_it);
  if (!dur) return dur.error();
  s.max_duration_s = dur.value();
  auto cpu = require_number(j, "max-cpu");
  if (!cpu) return cpu.error();
  s.max_cpu = cpu.value();
  return s;
}

// use-huge-pages accepts three shapes: an object map (what we emit), an
// array of single-key objects (the listing style), and an empty array
// (the "suspend huge pages" command).
Expected<std::map<std::string, std::vector<AddressRegion>>> huge_pages_from_json(
    const json& j) {
  std::map<std::string, std::vector<AddressRegion>> out;
  auto read_entry = [&out](const std::string& proc,
                           const json& regions) -> Expected<bool> {
    if (!regions.is_array()) return make_error("invalid field: use-huge-pages");
    std::vector<AddressRegion> list;
    for (const auto& rj : regions) {
      auto r = region_from_json(rj);
      if (!r) return r.error();
      list.push_back(r.value());
    }
    out[proc] = std::move(list);
    return true;
  };

  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      auto r = read_entry(it.key(), it.value());
      if (!r) return r.error();
    }
    return out;
  }
  if (j.is_array()) {
    for (const auto& entry : j) {
      if (!entry.is_object())
        return make_error("invalid field: use-huge-pages");
      for (auto it = entry.begin(); it != entry.end(); ++it) {
        auto r = read_entry(it.key(), it.value());
        if (!r) return r.error();
      }
    }
    return out;
  }
  return make_error("invalid field: use-huge-pages");
}

json huge_pages_to_json(const std::map<std::string, std::vector<AddressRegion>>& m) {
  json out = json::object();
  for (const auto& [proc, regions] : m) {
    json list = json::array();
    for (const auto& r : regions) list.push_back(region_to_json(r));
    out[proc] = std::move(list);
  }
  return out;
}

json context_to_json(const std::map<std::string, ContextValue>& ctx) {
  json out = json::object();
  for (const auto& [k, v] : ctx) {
    if (const auto* num = std::get_if<double>(&v)) {
      out[k] = *num;
    } else {
      out[k] = std::get<std::string>(v);
    }
  }
  return out;
}

Expected<std::map<std::string, ContextValue>> context_from_json(const json& j) {
  if (!j.is_object()) return make_error("invalid field: context");
  std::map<std::string, ContextValue> ctx;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.value().is_number()) {
      ctx[it.key()] = it.value().get<double>();
    } else if (it.value().is_string()) {
      ctx[it.key()] = it.value().get<std::string>();
    } else {
      return make_error("invalid field: context." + it.key());
    }
  }
  return ctx;
}

}  // namespace

Expected<double> duration_from_json(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (!j.is_string()) return make_error("invalid duration");
  std::string s = j.get<std::string>();
  if (s == "midnight") return 0.0;
  double scale = 1.0;
  std::size_t digits = s.find_last_of("0123456789.");
  if (digits == std::string::npos) return make_error("invalid duration: " + s);
  std::string suffix = s.substr(digits + 1);
  std::string num = s.substr(0, digits + 1);
  if (suffix == "ms") scale = 1e-3;
  else if (suffix == "s" || suffix.empty()) scale = 1.0;
  else if (suffix == "m") scale = 60.0;
  else if (suffix == "h") scale = 3600.0;
  else return make_error("invalid duration: " + s);
  try {
    return std::stod(num) * scale;
  } catch (const std::exception&) {
    return make_error("invalid duration: " + s);
  }
}

json region_to_json(const AddressRegion& r) {
  return json{{"start", r.start}, {"length", r.length}};
}

Expected<AddressRegion> region_from_json(const json& j) {
  if (!j.is_object()) return make_error("invalid region");
  auto s = require(j, "start");
  if (!s) return s.error();
  auto l = require(j, "length");
  if (!l) return l.error();
  if (!s.value()->is_number_unsigned() && !s.value()->is_number_integer())
    return make_error("invalid field: start");
  if (!l.value()->is_number_unsigned() && !l.value()->is_number_integer())
    return make_error("invalid field: length");
  return AddressRegion{s.value()->get<std::uint64_t>(),
                       l.value()->get<std::uint64_t>()};
}

json action_to_json(const Action& a) {
  if (a.process.empty() && !a.region) return json(action_kind_str(a.kind));
  json out{{"kind", action_kind_str(a.kind)}};
  if (!a.process.empty()) out["process"] = a.process;
  if (a.region) out["region"] = region_to_json(*a.region);
  return out;
}

Expected<Action> action_from_json(const json& j) {
  if (j.is_string()) {
    auto kind = action_kind_from(j.get<std::string>());
    if (!kind) return kind.error();
    return make_action(kind.value());
  }
  if (!j.is_object()) return make_error("invalid field: action");
  auto kind_str = require_string(j, "kind");
  if (!kind_str) return kind_str.error();
  auto kind = action_kind_from(kind_str.value());
  if (!kind) return kind.error();
  Action a = make_action(kind.value());
  if (j.contains("process")) {
    if (!j["process"].is_string()) return make_error("invalid field: process");
    a.process = j["process"].get<std::string>();
  }
  if (j.contains("region")) {
    auto r = region_from_json(j["region"]);
    if (!r) return r.error();
    a.region = r.value();
  }
  return a;
}

json preset_to_json(const PresetPolicy& p) {
  json j;
  j["version"] = p.version;
  j["mem-alloc-default"] = paging_str(p.mem_alloc_default);
  json exc = json::object();
  for (const auto& [k, v] : p.mem_alloc_exceptions) exc[k] = paging_str(v);
  j["mem-alloc-exceptions"] = std::move(exc);
  j["copy-on-write"] = cow_str(p.copy_on_write);
  json cexc = json::object();
  for (const auto& [k, v] : p.copy_on_write_exceptions) cexc[k] = cow_str(v);
  j["copy-on-write-exceptions"] = std::move(cexc);
  j["page-size-default"] = p.page_size_default;
  j["use-huge-pages"] = huge_pages_to_json(p.use_huge_pages);
  j["numa-balancing"] = numa_str(p.numa_balancing);
  j["out-of-memory"] = oom_str(p.out_of_memory);
  j["mem-reclaim"] = reclaim_str(p.mem_reclaim);
  j["page-compaction"] = compaction_to_json(p.page_compaction);
  j["page-zeroing"] = schedule_to_json(p.page_zeroing);
  j["huge-page-promotion-async"] = toggle_str(p.huge_page_promotion_async);
  j["dirty-access-bit-scan"] = schedule_to_json(p.dirty_access_bit_scan);
  return j;
}

Expected<PresetPolicy> preset_from_json(const json& j) {
  if (!j.is_object()) return make_error("invalid preset");
  PresetPolicy p;

  if (j.contains("version")) {
    if (!j["version"].is_number()) return make_error("invalid field: version");
    p.version = j["version"].get<std::uint64_t>();
  }

  auto mad = require_string(j, "mem-alloc-default");
  if (!mad) return mad.error();
  auto mode = paging_from(mad.value());
  if (!mode) return mode.error();
  p.mem_alloc_default = mode.value();

  if (j.contains("mem-alloc-exceptions")) {
    const json& exc = j["mem-alloc-exceptions"];
    if (!exc.is_object()) return make_error("invalid field: mem-alloc-exceptions");
    for (auto it = exc.begin(); it != exc.end(); ++it) {
      if (!it.value().is_string())
        return make_error("invalid field: mem-alloc-exceptions");
      auto m = paging_from(it.value().get<std::string>());
      if (!m) return m.error();
      p.mem_alloc_exceptions[it.key()] = m.value();
    }
  }

  auto cow = require_string(j, "copy-on-write");
  if (!cow) return cow.error();
  auto cw = cow_from(cow.value());
  if (!cw) return cw.error();
  p.copy_on_write = cw.value();

  if (j.contains("copy-on-write-exceptions")) {
    const json& exc = j["copy-on-write-exceptions"];
    if (!exc.is_object())
      return make_error("invalid field: copy-on-write-exceptions");
    for (auto it = exc.begin(); it != exc.end(); ++it) {
      if (!it.value().is_string())
        return make_error("invalid field: copy-on-write-exceptions");
      auto m = cow_from(it.value().get<std::string>());
      if (!m) return m.error();
      p.copy_on_write_exceptions[it.key()] = m.value();
    }
  }

  auto psize = require_number(j, "page-size-default");
  if (!psize) return psize.error();
  p.page_size_default = static_cast<std::uint64_t>(psize.value());

  if (j.contains("use-huge-pages")) {
    auto hp = huge_pages_from_json(j["use-huge-pages"]);
    if (!hp) return hp.error();
    p.use_huge_pages = hp.value();
  }

  auto numa = require_string(j, "numa-balancing");
  if (!numa) return numa.error();
  auto nm = numa_from(numa.value());
  if (!nm) return nm.error();
  p.numa_balancing = nm.value();

  auto oom = require_string(j, "out-of-memory");
  if (!oom) return oom.error();
  auto om = oom_from(oom.value());
  if (!om) return om.error();
  p.out_of_memory = om.value();

  auto rec = require_string(j, "mem-reclaim");
  if (!rec) return rec.error();
  auto rm = reclaim_from(rec.value());
  if (!rm) return rm.error();
  p.mem_reclaim = rm.value();

  auto comp = require(j, "page-compaction");
  if (!comp) return comp.error();
  auto cs = compaction_from_json(*comp.value());
  if (!cs) return cs.error();
  p.page_compaction = cs.value();

  auto zero = require(j, "page-zeroing");
  if (!zero) return zero.error();
  auto zs = schedule_from_json(*zero.value());
  if (!zs) return zs.error();
  p.page_zeroing = zs.value();

  auto async = require_string(j, "huge-page-promotion-async");
  if (!async) return async.error();
  auto tg = toggle_from(async.value());
  if (!tg) return tg.error();
  p.huge_page_promotion_async = tg.value();

  auto scan = require(j, "dirty-access-bit-scan");
  if (!scan) return scan.error();
  auto ss = schedule_from_json(*scan.value());
  if (!ss) return ss.error();
  p.dirty_access_bit_scan = ss.value();

  return p;
}

json modification_to_json(const PresetModification& m) {
  json j;
  j["for"] = m.ttl_s;
  const PresetOverlay& o = m.overlay;
  if (o.mem_alloc_default) j["mem-alloc-default"] = paging_str(*o.mem_alloc_default);
  if (o.mem_alloc_exceptions) {
    json exc = json::object();
    for (const auto& [k, v] : *o.mem_alloc_exceptions) exc[k] = paging_str(v);
    j["mem-alloc-exceptions"] = std::move(exc);
  }
  if (o.copy_on_write) j["copy-on-write"] = cow_str(*o.copy_on_write);
  if (o.copy_on_write_exceptions) {
    json exc = json::object();
    for (const auto& [k, v] : *o.copy_on_write_exceptions) exc[k] = cow_str(v);
    j["copy-on-write-exceptions"] = std::move(exc);
  }
  if (o.page_size_default) j["page-size-default"] = *o.page_size_default;
  if (o.use_huge_pages) j["use-huge-pages"] = huge_pages_to_json(*o.use_huge_pages);
  if (o.numa_balancing) j["numa-balancing"] = numa_str(*o.numa_balancing);
  if (o.out_of_memory) j["out-of-memory"] = oom_str(*o.out_of_memory);
  if (o.mem_reclaim) {
    // Listing style: a reclaim command with a victim serializes as
    // {"from": ..., "addr": ...}; a plain mode flips the daemon.
    if (o.reclaim_source && *o.mem_reclaim == ReclaimMode::kOn) {
      json cmd{{"from", o.reclaim_source->from_process}};
      if (o.reclaim_source->region)
        cmd["addr"] = region_to_json(*o.reclaim_source->region);
      j["mem-reclaim"] = std::move(cmd);
    } else {
      j["mem-reclaim"] = reclaim_str(*o.mem_reclaim);
    }
  }
  if (o.page_compaction) j["page-compaction"] = compaction_to_json(*o.page_compaction);
  if (o.page_zeroing) j["page-zeroing"] = schedule_to_json(*o.page_zeroing);
  if (o.huge_page_promotion_async)
    j["huge-page-promotion-async"] = toggle_str(*o.huge_page_promotion_async);
  if (o.dirty_access_bit_scan)
    j["dirty-access-bit-scan"] = schedule_to_json(*o.dirty_access_bit_scan);
  return j;
}

Expected<PresetModification> modification_from_json(const json& j) {
  if (!j.is_object()) return make_error("invalid modification");
  PresetModification m;
  auto ttl_it = j.find("for");
  if (ttl_it == j.end()) return make_error("missing field: for");
  auto ttl = duration_from_json(*ttl_it);
  if (!ttl) return ttl.error();
  m.ttl_s = ttl.value();

  PresetOverlay& o = m.overlay;
  if (j.contains("mem-alloc-default")) {
    auto v = paging_from(j["mem-alloc-default"].get<std::string>());
    if (!v) return v.error();
    o.mem_alloc_default = v.value();
  }
  if (j.contains("mem-alloc-exceptions")) {
    std::map<std::string, PagingMode> exc;
    for (auto it = j["mem-alloc-exceptions"].begin();
         it != j["mem-alloc-exceptions"].end(); ++it) {
      auto v = paging_from(it.value().get<std::string>());
      if (!v) return v.error();
      exc[it.key()] = v.value();
    }
    o.mem_alloc_exceptions = std::move(exc);
  }
  if (j.contains("copy-on-write")) {
    auto v = cow_from(j["copy-on-write"].get<std::string>());
    if (!v) return v.error();
    o.copy_on_write = v.value();
  }
  if (j.contains("copy-on-write-exceptions")) {
    std::map<std::string, CowMode> exc;
    for (auto it = j["copy-on-write-exceptions"].begin();
         it != j["copy-on-write-exceptions"].end(); ++it) {
      auto v = cow_from(it.value().get<std::string>());
      if (!v) return v.error();
      exc[it.key()] = v.value();
    }
    o.copy_on_write_exceptions = std::move(exc);
  }
  if (j.contains("page-size-default"))
    o.page_size_default = j["page-size-default"].get<std::uint64_t>();
  if (j.contains("use-huge-pages")) {
    auto hp = huge_pages_from_json(j["use-huge-pages"]);
    if (!hp) return hp.error();
    o.use_huge_pages = hp.value();
  }
  if (j.contains("numa-balancing")) {
    auto v = numa_from(j["numa-balancing"].get<std::string>());
    if (!v) return v.error();
    o.numa_balancing = v.value();
  }
  if (j.contains("out-of-memory")) {
    auto v = oom_from(j["out-of-memory"].get<std::string>());
    if (!v) return v.error();
    o.out_of_memory = v.value();
  }
  if (j.contains("mem-reclaim")) {
    const json& mr = j["mem-reclaim"];
    if (mr.is_string()) {
      auto v = reclaim_from(mr.get<std::string>());
      if (!v) return v.error();
      o.mem_reclaim = v.value();
    } else if (mr.is_object()) {
      auto from = require_string(mr, "from");
      if (!from) return from.error();
      ReclaimSource src;
      src.from_process = from.value();
      if (mr.contains("addr")) {
        auto r = region_from_json(mr["addr"]);
        if (!r) return r.error();
        src.region = r.value();
      }
      o.mem_reclaim = ReclaimMode::kOn;
      o.reclaim_source = std::move(src);
    } else {
      return make_error("invalid field: mem-reclaim");
    }
  }
  if (j.contains("page-compaction")) {
    auto v = compaction_from_json(j["page-compaction"]);
    if (!v) return v.error();
    o.page_compaction = v.value();
  }
  if (j.contains("page-zeroing")) {
    auto v = schedule_from_json(j["page-zeroing"]);
    if (!v) return v.error();
    o.page_zeroing = v.value();
  }
  if (j.contains("huge-page-promotion-async")) {
    auto v = toggle_from(j["huge-page-promotion-async"].get<std::string>());
    if (!v) return v.error();
    o.huge_page_promotion_async = v.value();
  }
  if (j.contains("dirty-access-bit-scan")) {
    auto v = schedule_from_json(j["dirty-access-bit-scan"]);
    if (!v) return v.error();
    o.dirty_access_bit_scan = v.value();
  }
  return m;
}

namespace {

struct Encoder {
  json operator()(const Hello& m) const {
    json manifest = json::object();
    for (const auto& [proc, info] : m.software_manifest) {
      json e{{"priority", info.priority}};
      if (info.main_region) e["region"] = region_to_json(*info.main_region);
      manifest[proc] = std::move(e);
    }
    return json{{"msg", "hello"},
                {"sender", m.node_id},
                {"node-id", m.node_id},
                {"hardware-class", m.hardware_class},
                {"software-manifest", std::move(manifest)}};
  }

  json operator()(const PresetDownload& m) const {
    return json{{"msg", "preset-download"},
                {"sender", kCmIdentity},
                {"preset", preset_to_json(m.preset)}};
  }

  json operator()(const PresetUpdate& m) const {
    return json{{"msg", "preset-update"},
                {"sender", kCmIdentity},
                {"modification", modification_to_json(m.modification)}};
  }

  json operator()(const MetricsReport& m) const {
    json counters = json::object();
    for (const auto& [k, v] : m.counters) counters[k] = v;
    return json{{"msg", "metrics-report"},
                {"sender", m.node_id},
                {"node-id", m.node_id},
                {"virtual-time", m.virtual_time},
                {"interval", m.interval_s},
                {"counters", std::move(counters)}};
  }

  json operator()(const PolicyQuery& m) const {
    return json{{"msg", "policy-query"},
                {"sender", m.node_id},
                {"node-id", m.node_id},
                {"type", m.type},
                {"process", m.process},
                {"context", context_to_json(m.context)}};
  }

  json operator()(const PolicyResponse& m) const {
    json mods = json::array();
    for (const auto& mod : m.temporary_modify_preset)
      mods.push_back(modification_to_json(mod));
    return json{{"msg", "policy-response"},
                {"sender", kCmIdentity},
                {"action", action_to_json(m.action)},
                {"temporary-modify-preset", std::move(mods)}};
  }

  json operator()(const ExperimentAssignment& m) const {
    json regions = json::array();
    for (const auto& r : m.promote_regions) regions.push_back(region_to_json(r));
    return json{{"msg", "experiment-assignment"},
                {"sender", kCmIdentity},
                {"experiment-id", m.experiment_id},
                {"process", m.process},
                {"promote-regions", std::move(regions)},
                {"duration", m.duration_s}};
  }

  json operator()(const ExperimentResult& m) const {
    return json{{"msg", "experiment-result"},
                {"sender", m.node_id},
                {"experiment-id", m.experiment_id},
                {"node-id", m.node_id},
                {"runtime-delta", m.runtime_delta},
                {"load-page-walk-delta", m.load_page_walk_delta},
                {"store-page-walk-delta", m.store_page_walk_delta},
                {"fragmentation-bytes", m.fragmentation_bytes},
                {"valid", m.valid}};
  }
};

Expected<Message> decode_hello(const json& j) {
  Hello m;
  auto id = require_string(j, "node-id");
  if (!id) return id.error();
  m.node_id = id.value();
  auto hw = require_string(j, "hardware-class");
  if (!hw) return hw.error();
  m.hardware_class = hw.value();
  if (j.contains("software-manifest")) {
    const json& manifest = j["software-manifest"];
    if (!manifest.is_object())
      return make_error("invalid field: software-manifest");
    for (auto it = manifest.begin(); it != manifest.end(); ++it) {
      ProcessInfo info;
      if (it.value().is_object()) {
        if (it.value().contains("priority"))
          info.priority = it.value()["priority"].get<int>();
        if (it.value().contains("region")) {
          auto r = region_from_json(it.value()["region"]);
          if (!r) return r.error();
          info.main_region = r.value();
        }
      }
      m.software_manifest[it.key()] = info;
    }
  }
  return Message{std::move(m)};
}

Expected<Message> decode_metrics(const json& j) {
  MetricsReport m;
  auto id = require_string(j, "node-id");
  if (!id) return id.error();
  m.node_id = id.value();
  auto vt = require_number(j, "virtual-time");
  if (!vt) return vt.error();
  m.virtual_time = static_cast<micros_t>(vt.value());
  auto iv = require_number(j, "interval");
  if (!iv) return iv.error();
  m.interval_s = iv.value();
  auto counters = require(j, "counters");
  if (!counters) return counters.error();
  if (!counters.value()->is_object()) return make_error("invalid field: counters");
  for (auto it = counters.value()->begin(); it != counters.value()->end(); ++it) {
    if (!it.value().is_number()) return make_error("invalid field: counters");
    m.counters[it.key()] = it.value().get<double>();
  }
  return Message{std::move(m)};
}

Expected<Message> decode_query(const json& j) {
  PolicyQuery m;
  auto type = require_string(j, "type");
  if (!type) return type.error();
  m.type = type.value();
  auto proc = require_string(j, "process");
  if (!proc) return proc.error();
  m.process = proc.value();
  if (j.contains("node-id")) {
    m.node_id = j["node-id"].get<std::string>();
  } else if (j.contains("sender")) {
    m.node_id = j["sender"].get<std::string>();
  } else {
    return make_error("missing field: node-id");
  }
  if (j.contains("context")) {
    auto ctx = context_from_json(j["context"]);
    if (!ctx) return ctx.error();
    m.context = ctx.value();
  }
  return Message{std::move(m)};
}

Expected<Message> decode_response(const json& j) {
  PolicyResponse m;
  auto act = require(j, "action");
  if (!act) return act.error();
  auto a = action_from_json(*act.value());
  if (!a) return a.error();
  m.action = a.value();
  if (j.contains("temporary-modify-preset")) {
    const json& mods = j["temporary-modify-preset"];
    if (!mods.is_array())
      return make_error("invalid field: temporary-modify-preset");
    for (const auto& mj : mods) {
      auto mod = modification_from_json(mj);
      if (!mod) return mod.error();
      m.temporary_modify_preset.push_back(mod.value());
    }
  }
  return Message{std::move(m)};
}

Expected<Message> decode_assignment(const json& j) {
  ExperimentAssignment m;
  auto id = require_string(j, "experiment-id");
  if (!id) return id.error();
  m.experiment_id = id.value();
  auto proc = require_string(j, "process");
  if (!proc) return proc.error();
  m.process = proc.value();
  auto regions = require(j, "promote-regions");
  if (!regions) return regions.error();
  if (!regions.value()->is_array())
    return make_error("invalid field: promote-regions");
  for (const auto& rj : *regions.value()) {
    auto r = region_from_json(rj);
    if (!r) return r.error();
    m.promote_regions.push_back(r.value());
  }
  auto dur_it = j.find("duration");
  if (dur_it == j.end()) return make_error("missing field: duration");
  auto dur = duration_from_json(*dur_it);
  if (!dur) return dur.error();
  m.duration_s = dur.value();
  return Message{std::move(m)};
}

Expected<Message> decode_result(const json& j) {
  ExperimentResult m;
  auto id = require_string(j, "experiment-id");
  if (!id) return id.error();
  m.experiment_id = id.value();
  auto nid = require_string(j, "node-id");
  if (!nid) return nid.error();
  m.node_id = nid.value();
  auto rd = require_number(j, "runtime-delta");
  if (!rd) return rd.error();
  m.runtime_delta = rd.value();
  auto ld = require_number(j, "load-page-walk-delta");
  if (!ld) return ld.error();
  m.load_page_walk_delta = ld.value();
  auto sd = require_number(j, "store-page-walk-delta");
  if (!sd) return sd.error();
  m.store_page_walk_delta = sd.value();
  auto fb = require_number(j, "fragmentation-bytes");
  if (!fb) return fb.error();
  m.fragmentation_bytes = static_cast<std::uint64_t>(fb.value());
  if (j.contains("valid")) m.valid = j["valid"].get<bool>();
  return Message{std::move(m)};
}

}  // namespace

Expected<std::string> encode(const Message& m) {
  json j = std::visit(Encoder{}, m);
  j["proto"] = kProtocolVersion;
  if (tree_has_non_finite(j)) return make_error("non-finite number in message");
  // Compact dump has no interior newlines; one message per line.
  return j.dump() + "\n";
}

Expected<Message> decode(std::string_view line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded()) return make_error("malformed json");
  if (!j.is_object()) return make_error("malformed json: not an object");

  auto proto = require_string(j, "proto");
  if (!proto) return proto.error();
  if (proto.value() != kProtocolVersion)
    return make_error("version mismatch: " + proto.value());

  auto kind = require_string(j, "msg");
  if (!kind) return kind.error();

  const std::string& k = kind.value();
  if (k == "hello") return decode_hello(j);
  if (k == "preset-download") {
    auto p = require(j, "preset");
    if (!p) return p.error();
    auto preset = preset_from_json(*p.value());
    if (!preset) return preset.error();
    return Message{PresetDownload{preset.value()}};
  }
  if (k == "preset-update") {
    auto mj = require(j, "modification");
    if (!mj) return mj.error();
    auto mod = modification_from_json(*mj.value());
    if (!mod) return mod.error();
    return Message{PresetUpdate{mod.value()}};
  }
  if (k == "metrics-report") return decode_metrics(j);
  if (k == "policy-query") return decode_query(j);
  if (k == "policy-response") return decode_response(j);
  if (k == "experiment-assignment") return decode_assignment(j);
  if (k == "experiment-result") return decode_result(j);
  return make_error("unknown message type: " + k);
}

}  // namespace grapecm
