#include <doctest.h>

#include <cstdint>
#include <vector>

#include "grapecm/knapsack.hpp"
#include "grapecm/rng.hpp"

using namespace grapecm;

namespace {

// Independent oracle: exhaustive subset enumeration with the same objective
// and tie-break semantics, implemented from scratch.
struct BruteResult {
  std::vector<AddressRegion> regions;
  double benefit = 0.0;
  std::uint64_t frag = 0;
};

BruteResult brute_force(std::vector<RegionEstimate> items,
                        std::uint64_t budget_bytes, std::uint64_t quantum) {
  std::sort(items.begin(), items.end(),
            [](const RegionEstimate& a, const RegionEstimate& b) {
              return a.region.start < b.region.start;
            });
  const std::size_t n = items.size();
  const std::uint64_t budget_units = budget_bytes / quantum;

  std::uint32_t best_mask = 0;
  double best_benefit = -1.0;
  int best_count = 0;
  bool have_best = false;

  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    std::uint64_t units = 0;
    double benefit = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) {
        units += (items[i].frag_cost_bytes + quantum - 1) / quantum;
        benefit += items[i].mean_benefit;
        ++count;
      }
    }
    if (units > budget_units) continue;

    bool wins = false;
    if (!have_best || benefit > best_benefit) {
      wins = true;
    } else if (benefit == best_benefit) {
      if (count < best_count) {
        wins = true;
      } else if (count == best_count && mask != best_mask) {
        // First differing item (ascending start): the subset containing it
        // is preferred.
        for (std::size_t i = 0; i < n; ++i) {
          bool in_new = mask & (1u << i);
          bool in_old = best_mask & (1u << i);
          if (in_new != in_old) {
            wins = in_new;
            break;
          }
        }
      }
    }
    if (wins) {
      have_best = true;
      best_mask = mask;
      best_benefit = benefit;
      best_count = count;
    }
  }

  BruteResult out;
  for (std::size_t i = 0; i < n; ++i) {
    if (best_mask & (1u << i)) {
      out.regions.push_back(items[i].region);
      out.benefit += items[i].mean_benefit;
      out.frag += items[i].frag_cost_bytes;
    }
  }
  return out;
}

RegionEstimate make_estimate(std::uint64_t start, double benefit,
                             std::uint64_t frag) {
  RegionEstimate e;
  e.region = {start, 8};
  e.mean_benefit = benefit;
  e.std_err = 0.001;
  e.samples = 8;
  e.frag_cost_bytes = frag;
  return e;
}

}  // namespace

TEST_CASE("unconstrained budget selects every positive-benefit region") {
  std::vector<RegionEstimate> estimates = {
      make_estimate(0, 0.02, 1 << 20), make_estimate(16, 0.01, 2 << 20),
      make_estimate(32, 0.0, 1 << 20),    // zero benefit: never selected
      make_estimate(48, -0.005, 1 << 20)  // negative: never selected
  };
  auto sel = select_promotion_set(estimates, 1ULL << 40);
  REQUIRE(sel.ok());
  REQUIRE(sel.value().regions.size() == 2);
  CHECK(sel.value().regions[0].start == 0);
  CHECK(sel.value().regions[1].start == 16);
  CHECK(sel.value().total_benefit == doctest::Approx(0.03));
}

TEST_CASE("budget below the smallest cost selects nothing") {
  std::vector<RegionEstimate> estimates = {make_estimate(0, 0.02, 1 << 20)};
  auto sel = select_promotion_set(estimates, 4096);
  REQUIRE(sel.ok());
  CHECK(sel.value().regions.empty());
  CHECK(sel.value().total_benefit == 0.0);
  CHECK(sel.value().total_frag_bytes == 0);
}

TEST_CASE("zero-cost regions ride along for free") {
  std::vector<RegionEstimate> estimates = {make_estimate(0, 0.02, 1 << 20),
                                           make_estimate(16, 0.001, 0)};
  auto sel = select_promotion_set(estimates, 4096);  // too small for region 0
  REQUIRE(sel.ok());
  REQUIRE(sel.value().regions.size() == 1);
  CHECK(sel.value().regions[0].start == 16);
}

TEST_CASE("ties break toward fewer regions, then lower start") {
  // Dyadic benefits make the sums exact: 0.25 + 0.25 == 0.5.
  std::vector<RegionEstimate> tie = {make_estimate(0, 0.25, 4096),
                                     make_estimate(16, 0.25, 4096),
                                     make_estimate(32, 0.5, 8192)};
  auto sel = select_promotion_set(tie, 8192);
  REQUIRE(sel.ok());
  REQUIRE(sel.value().regions.size() == 1);  // fewer regions wins the tie
  CHECK(sel.value().regions[0].start == 32);

  // Equal benefit, equal count, equal cost: lower start wins.
  std::vector<RegionEstimate> pair = {make_estimate(48, 0.25, 4096),
                                      make_estimate(8, 0.25, 4096)};
  sel = select_promotion_set(pair, 4096);
  REQUIRE(sel.ok());
  REQUIRE(sel.value().regions.size() == 1);
  CHECK(sel.value().regions[0].start == 8);
}

TEST_CASE("ceil quantization never exceeds the byte budget") {
  // 4097-byte cost rounds up to two 4KiB units.
  std::vector<RegionEstimate> estimates = {make_estimate(0, 0.02, 4097)};
  auto sel = select_promotion_set(estimates, 4097);
  REQUIRE(sel.ok());
  CHECK(sel.value().regions.empty());  // 2 units > budget's 1 unit

  sel = select_promotion_set(estimates, 8192);
  REQUIRE(sel.ok());
  CHECK(sel.value().regions.size() == 1);
}

TEST_CASE("oracle equivalence on random quantum-multiple instances") {
  Rng rng(777);
  const std::uint64_t quantum = kDefaultFragQuantumBytes;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(20);
    std::vector<RegionEstimate> estimates;
    std::uint64_t total_cost = 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::uint64_t cost = quantum * (1 + rng.uniform_index(64));
      total_cost += cost;
      estimates.push_back(
          make_estimate(i * 16, 0.001 + 0.05 * rng.next_double(), cost));
    }
    const std::uint64_t budget =
        static_cast<std::uint64_t>(rng.next_double() * static_cast<double>(total_cost));

    auto sel = select_promotion_set(estimates, budget, quantum);
    REQUIRE(sel.ok());
    BruteResult expected = brute_force(estimates, budget, quantum);

    CAPTURE(trial);
    CAPTURE(n);
    CAPTURE(budget);
    REQUIRE(sel.value().regions == expected.regions);
    CHECK(sel.value().total_benefit == expected.benefit);
    CHECK(sel.value().total_frag_bytes == expected.frag);
    CHECK(sel.value().total_frag_bytes <= budget);
  }
}

TEST_CASE("oracle equivalence with crafted exact ties") {
  Rng rng(778);
  const std::uint64_t quantum = kDefaultFragQuantumBytes;
  // Dyadic benefit pool forces frequent exact ties.
  const double pool[] = {0.125, 0.25, 0.25, 0.5, 0.125, 0.0625};
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(6);
    std::vector<RegionEstimate> estimates;
    for (std::size_t i = 0; i < n; ++i) {
      estimates.push_back(make_estimate(i * 16, pool[rng.uniform_index(6)],
                                        quantum * (1 + rng.uniform_index(4))));
    }
    const std::uint64_t budget = quantum * (1 + rng.uniform_index(3 * n));
    auto sel = select_promotion_set(estimates, budget, quantum);
    REQUIRE(sel.ok());
    BruteResult expected = brute_force(estimates, budget, quantum);
    CAPTURE(trial);
    REQUIRE(sel.value().regions == expected.regions);
    CHECK(sel.value().total_benefit == expected.benefit);
  }
}

TEST_CASE("more than 64 cost-bearing regions is a hard error") {
  std::vector<RegionEstimate> estimates;
  for (int i = 0; i < 65; ++i)
    estimates.push_back(make_estimate(i * 16, 0.01, 4096));
  CHECK_FALSE(select_promotion_set(estimates, 1 << 20).ok());
}
