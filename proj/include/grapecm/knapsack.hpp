#pragma once

#include <cstdint>
#include <vector>

#include "grapecm/expected.hpp"
#include "grapecm/types.hpp"

namespace grapecm {

// One region's measured promotion value, aggregated from cohort experiments
// against the control cohort.
struct RegionEstimate {
  AddressRegion region;
  double mean_benefit = 0.0;
  double std_err = 0.0;  // +inf until a second sample exists
  std::uint64_t samples = 0;
  std::uint64_t frag_cost_bytes = 0;
};

struct PromotionSelection {
  std::vector<AddressRegion> regions;  // sorted by start
  double total_benefit = 0.0;
  std::uint64_t total_frag_bytes = 0;
};

inline constexpr std::uint64_t kDefaultFragQuantumBytes = 4096;

// Exact 0/1 knapsack: maximize total mean benefit subject to total
// fragmentation <= budget. Costs are discretized to `quantum_bytes` (rounded
// up, so the budget is never exceeded; discretization error is at most one
// quantum per region and zero when costs are quantum multiples). Ties break
// toward fewer regions, then toward the selection containing the
// lower-start region at the first difference.
//
// Regions with non-positive benefit are never selected; zero-cost regions
// with positive benefit always are. At most 64 cost-bearing candidate
// regions are supported (selection tracking uses a 64-bit mask); larger
// instances are an error, not an approximation.
Expected<PromotionSelection> select_promotion_set(
    const std::vector<RegionEstimate>& estimates, std::uint64_t frag_budget_bytes,
    std::uint64_t quantum_bytes = kDefaultFragQuantumBytes);

}  // namespace grapecm
