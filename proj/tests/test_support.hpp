#pragma once

// Shared fixtures for the unit suites.

#include <string>
#include <vector>

#include "grapecm/policy.hpp"
#include "grapecm/rng.hpp"

namespace grapecm::test {

// The sample preset from the protocol docs: demand paging with an eager
// exception for memcached, COW unspecified with a no-cow exception,
// huge-page lists for memcached and vid-encoder, daily compaction window.
inline PresetPolicy sample_preset() {
  PresetPolicy p;
  p.version = 1;
  p.mem_alloc_default = PagingMode::kDemandPaging;
  p.mem_alloc_exceptions["memcached"] = PagingMode::kEager;
  p.copy_on_write = CowMode::kUnspecified;
  p.copy_on_write_exceptions["redis-snapshot"] = CowMode::kNoCow;
  p.page_size_default = 4096;
  p.use_huge_pages["memcached"] = {{512, 8}, {2048, 8}};
  p.use_huge_pages["vid-encoder"] = {{3072, 16}};
  p.numa_balancing = NumaMode::kLocal;
  p.out_of_memory = OomMode::kUnspecified;
  p.mem_reclaim = ReclaimMode::kOff;
  p.page_compaction = {0.0, 1.0, 0.02};
  p.page_zeroing = {30.0, 0.02};
  p.huge_page_promotion_async = Toggle::kOff;
  p.dirty_access_bit_scan = {30.0, 0.10};
  return p;
}

inline DecisionContext fault_ctx(const std::string& process, std::uint64_t page,
                                 micros_t t = 0) {
  DecisionContext ctx;
  ctx.decision_point = DecisionPoint::kPageFault;
  ctx.process = process;
  ctx.faulting_region = AddressRegion{page, 1};
  ctx.node_state_summary = {103ULL << 30, 0.10};
  ctx.virtual_time = t;
  return ctx;
}

// Random but canonical preset for property tests.
inline PresetPolicy random_preset(Rng& rng) {
  PresetPolicy p = sample_preset();
  p.mem_alloc_default =
      rng.next_double() < 0.5 ? PagingMode::kDemandPaging : PagingMode::kEager;
  p.mem_alloc_exceptions.clear();
  if (rng.next_double() < 0.7) {
    p.mem_alloc_exceptions["memcached"] =
        p.mem_alloc_default == PagingMode::kEager ? PagingMode::kDemandPaging
                                                  : PagingMode::kEager;
  }
  double cow = rng.next_double();
  p.copy_on_write = cow < 0.33   ? CowMode::kOn
                    : cow < 0.66 ? CowMode::kNoCow
                                 : CowMode::kUnspecified;
  p.copy_on_write_exceptions.clear();
  p.out_of_memory = rng.next_double() < 0.5 ? OomMode::kKillLowestPriority
                                            : OomMode::kUnspecified;
  double rec = rng.next_double();
  p.mem_reclaim = rec < 0.33   ? ReclaimMode::kOn
                  : rec < 0.66 ? ReclaimMode::kOff
                               : ReclaimMode::kUnspecified;
  p.use_huge_pages.clear();
  std::uint64_t cursor = rng.uniform_index(64);
  std::vector<AddressRegion> regions;
  for (int i = 0, n = static_cast<int>(rng.uniform_index(4)); i < n; ++i) {
    std::uint64_t len = 1 + rng.uniform_index(16);
    regions.push_back({cursor, len});
    cursor += len + 1 + rng.uniform_index(32);
  }
  if (!regions.empty()) p.use_huge_pages["memcached"] = regions;
  return p;
}

// Random context, sometimes deliberately malformed.
inline DecisionContext random_ctx(Rng& rng) {
  DecisionContext ctx;
  ctx.decision_point = static_cast<DecisionPoint>(rng.uniform_index(8));
  ctx.process = rng.next_double() < 0.8 ? "memcached" : "";
  if (rng.next_double() < 0.5)
    ctx.faulting_region = AddressRegion{rng.uniform_index(256), 1};
  ctx.virtual_time = static_cast<micros_t>(rng.uniform_index(1'000'000'000));
  if (rng.next_double() < 0.05) ctx.virtual_time = -1;
  ctx.node_state_summary.cpu_usage = rng.next_double();
  ctx.time_of_day_s = rng.next_double() * 86400.0;
  return ctx;
}

}  // namespace grapecm::test
