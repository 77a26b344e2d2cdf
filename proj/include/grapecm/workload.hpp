#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "grapecm/rng.hpp"
#include "grapecm/types.hpp"

namespace grapecm {

// Per-region promotion profile of a simulated process. Benefit is the
// fraction of total runtime saved when the whole region is promoted;
// partial promotion accrues pro-rata per page (benefits are additive
// across disjoint regions by model assumption, which is what makes
// brute-force oracles feasible).
struct RegionProfile {
  AddressRegion region;
  double benefit = 0.0;          // fraction of runtime improvement
  double walk_reduction = 0.0;   // fraction of page walks removed
  std::uint64_t frag_cost_bytes = 0;  // internal fragmentation if promoted
};

struct PagingSensitivity {
  double eager_latency_gain = 0.0;   // relative op-latency improvement
  double eager_alloc_penalty = 0.0;  // relative allocation slowdown
  double eager_bloat = 0.0;          // relative memory bloat
};

struct WorkloadModel {
  std::string name;
  std::vector<RegionProfile> regions;
  PagingSensitivity paging;
  double fault_rate_hz = 0.0;   // page faults per second of virtual time
  double runtime_base_s = 0.0;

  // Simulation behavior knobs beyond the core profile.
  double cow_break_fraction = 0.0;       // share of faults that are cow-breaks
  double huge_alloc_failure_rate = 0.0;  // huge-page allocation failure odds
  int priority = 0;                      // higher = more important
  double op_rate_hz = 0.0;               // service operations per second
  double op_latency_median_s = 0.0;
  double op_latency_sigma = 0.0;         // lognormal shape

  std::vector<std::string> validate(std::uint64_t address_space_pages) const;

  double total_benefit() const;
  std::uint64_t total_frag_bytes() const;
  double total_walk_reduction() const;

  // Benefit accrued when exactly `promoted` (canonical list) is promoted.
  double benefit_of(const std::vector<AddressRegion>& promoted) const;
  double walk_reduction_of(const std::vector<AddressRegion>& promoted) const;
  std::uint64_t frag_of(const std::vector<AddressRegion>& promoted) const;
};

// Fault outcome classes and their latency ranges. Latencies are sampled
// log-uniform inside a class. In the linux-model baseline the class itself
// is sampled from the mixture (first choice often fails and a fallback
// path runs); in preset-only mode the class is implied by the action the
// preset chose.
enum class FaultClass {
  kFastBase,
  kHugeAlloc,
  kCowShare,
  kCompactionFallback,
  kReclaimFallback,
};

const char* to_string(FaultClass c);

struct LatencyClass {
  double probability = 0.0;
  double lo_us = 1.0;
  double hi_us = 1.0;
};

struct FaultLatencyModel {
  LatencyClass fast_base{0.90, 0.8, 8.0};
  LatencyClass huge_alloc{0.05, 5.0, 100.0};
  LatencyClass cow_share{0.03, 1.0, 20.0};
  LatencyClass compaction_fallback{0.015, 1e4, 1e5};
  LatencyClass reclaim_fallback{0.005, 1e5, 1e6};

  // Mixture calibrated so the baseline spans six decades: mode near 1 us,
  // heavy tail to 1e6 us.
  static FaultLatencyModel linux_baseline() { return {}; }

  std::vector<std::string> validate() const;

  FaultClass sample_class(Rng& rng) const;
  double sample_latency_us(FaultClass c, Rng& rng) const;

  const LatencyClass& params(FaultClass c) const;
};

}  // namespace grapecm
