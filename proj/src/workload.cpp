#include "grapecm/workload.hpp"

#include <cmath>

namespace grapecm {

namespace {

// Pro-rata coverage of `profile.region` by the canonical `promoted` list.
double coverage_fraction(const RegionProfile& profile,
                         const std::vector<AddressRegion>& promoted) {
  if (profile.region.length == 0) return 0.0;
  std::uint64_t covered = 0;
  for (const auto& p : promoted) covered += profile.region.overlap_pages(p);
  return static_cast<double>(covered) / static_cast<double>(profile.region.length);
}

}  // namespace

std::vector<std::string> WorkloadModel::validate(
    std::uint64_t address_space_pages) const {
  std::vector<std::string> violations;
  if (name.empty()) violations.push_back("workload: empty name");
  if (fault_rate_hz < 0) violations.push_back(name + ": negative fault rate");
  if (runtime_base_s < 0) violations.push_back(name + ": negative runtime");
  double benefit_sum = 0.0;
  for (const auto& r : regions) {
    if (r.region.length == 0) violations.push_back(name + ": empty region");
    if (address_space_pages != 0 && r.region.end() > address_space_pages)
      violations.push_back(name + ": region exceeds address space");
    if (r.benefit < 0) violations.push_back(name + ": negative benefit");
    benefit_sum += r.benefit;
  }
  if (benefit_sum > 1.0 + 1e-9)
    violations.push_back(name + ": region benefits sum over 1");
  if (cow_break_fraction < 0 || cow_break_fraction > 1)
    violations.push_back(name + ": cow_break_fraction out of range");
  if (huge_alloc_failure_rate < 0 || huge_alloc_failure_rate > 1)
    violations.push_back(name + ": huge_alloc_failure_rate out of range");
  return violations;
}

double WorkloadModel::total_benefit() const {
  double sum = 0.0;
  for (const auto& r : regions) sum += r.benefit;
  return sum;
}

std::uint64_t WorkloadModel::total_frag_bytes() const {
  std::uint64_t sum = 0;
  for (const auto& r : regions) sum += r.frag_cost_bytes;
  return sum;
}

double WorkloadModel::total_walk_reduction() const {
  double sum = 0.0;
  for (const auto& r : regions) sum += r.walk_reduction;
  return sum;
}

double WorkloadModel::benefit_of(const std::vector<AddressRegion>& promoted) const {
  double sum = 0.0;
  for (const auto& r : regions) sum += r.benefit * coverage_fraction(r, promoted);
  return sum;
}

double WorkloadModel::walk_reduction_of(
    const std::vector<AddressRegion>& promoted) const {
  double sum = 0.0;
  for (const auto& r : regions)
    sum += r.walk_reduction * coverage_fraction(r, promoted);
  return sum;
}

std::uint64_t WorkloadModel::frag_of(
    const std::vector<AddressRegion>& promoted) const {
  double sum = 0.0;
  for (const auto& r : regions)
    sum += static_cast<double>(r.frag_cost_bytes) * coverage_fraction(r, promoted);
  return static_cast<std::uint64_t>(std::llround(sum));
}

const char* to_string(FaultClass c) {
  switch (c) {
    case FaultClass::kFastBase: return "fast-base";
    case FaultClass::kHugeAlloc: return "huge-alloc";
    case FaultClass::kCowShare: return "cow-share";
    case FaultClass::kCompactionFallback: return "compaction-fallback";
    case FaultClass::kReclaimFallback: return "reclaim-fallback";
  }
  return "unknown";
}

std::vector<std::string> FaultLatencyModel::validate() const {
  std::vector<std::string> violations;
  double total = fast_base.probability + huge_alloc.probability +
                 cow_share.probability + compaction_fallback.probability +
                 reclaim_fallback.probability;
  if (std::abs(total - 1.0) > 1e-9)
    violations.push_back("fault-latency: probabilities do not sum to 1");
  for (const LatencyClass* c : {&fast_base, &huge_alloc, &cow_share,
                                &compaction_fallback, &reclaim_fallback}) {
    if (c->lo_us <= 0 || c->hi_us < c->lo_us)
      violations.push_back("fault-latency: bad latency range");
    if (c->probability < 0)
      violations.push_back("fault-latency: negative probability");
  }
  return violations;
}

FaultClass FaultLatencyModel::sample_class(Rng& rng) const {
  double u = rng.next_double();
  if ((u -= fast_base.probability) < 0) return FaultClass::kFastBase;
  if ((u -= huge_alloc.probability) < 0) return FaultClass::kHugeAlloc;
  if ((u -= cow_share.probability) < 0) return FaultClass::kCowShare;
  if ((u -= compaction_fallback.probability) < 0)
    return FaultClass::kCompactionFallback;
  return FaultClass::kReclaimFallback;
}

const LatencyClass& FaultLatencyModel::params(FaultClass c) const {
  switch (c) {
    case FaultClass::kFastBase: return fast_base;
    case FaultClass::kHugeAlloc: return huge_alloc;
    case FaultClass::kCowShare: return cow_share;
    case FaultClass::kCompactionFallback: return compaction_fallback;
    case FaultClass::kReclaimFallback: return reclaim_fallback;
  }
  return fast_base;
}

double FaultLatencyModel::sample_latency_us(FaultClass c, Rng& rng) const {
  const LatencyClass& p = params(c);
  return rng.log_uniform(p.lo_us, p.hi_us);
}

}  // namespace grapecm
