#include "grapecm/knapsack.hpp"

#include <algorithm>

namespace grapecm {

namespace {

struct Cell {
  double benefit = 0.0;
  std::uint32_t count = 0;
  std::uint64_t mask = 0;
};

// True when `a` is strictly preferred over `b`.
bool better(const Cell& a, const Cell& b) {
  if (a.benefit != b.benefit) return a.benefit > b.benefit;
  if (a.count != b.count) return a.count < b.count;
  if (a.mask == b.mask) return false;
  // Lexicographic over ascending item index (items are sorted by region
  // start): the selection containing the lower-start region at the first
  // difference wins.
  std::uint64_t diff = a.mask ^ b.mask;
  std::uint64_t lowest = diff & (~diff + 1);
  return (a.mask & lowest) != 0;
}

}  // namespace

Expected<PromotionSelection> select_promotion_set(
    const std::vector<RegionEstimate>& estimates, std::uint64_t frag_budget_bytes,
    std::uint64_t quantum_bytes) {
  if (quantum_bytes == 0) return make_error("knapsack: quantum must be positive");

  // Candidates sorted by start; zero-benefit regions can never improve the
  // objective (ties already prefer fewer regions), so drop them up front.
  std::vector<const RegionEstimate*> items;
  for (const auto& e : estimates) {
    if (e.mean_benefit > 0.0) items.push_back(&e);
  }
  std::sort(items.begin(), items.end(),
            [](const RegionEstimate* a, const RegionEstimate* b) {
              return a->region.start < b->region.start;
            });

  PromotionSelection out;

  // Free (zero-cost) regions are always worth taking.
  std::vector<const RegionEstimate*> costed;
  for (const auto* e : items) {
    if (e->frag_cost_bytes == 0) {
      out.regions.push_back(e->region);
      out.total_benefit += e->mean_benefit;
    } else {
      costed.push_back(e);
    }
  }
  if (costed.size() > 64) {
    return make_error("knapsack: more than 64 cost-bearing regions");
  }

  const std::uint64_t budget_units = frag_budget_bytes / quantum_bytes;
  std::vector<std::uint64_t> weight(costed.size());
  std::uint64_t weight_sum = 0;
  for (std::size_t i = 0; i < costed.size(); ++i) {
    weight[i] = (costed[i]->frag_cost_bytes + quantum_bytes - 1) / quantum_bytes;
    weight_sum += weight[i];
  }

  const std::uint64_t capacity = std::min(budget_units, weight_sum);
  std::vector<Cell> dp(capacity + 1);  // dp[w]: best subset with weight <= w

  for (std::size_t i = 0; i < costed.size(); ++i) {
    const std::uint64_t wi = weight[i];
    if (wi > capacity) continue;
    for (std::uint64_t w = capacity; w >= wi; --w) {
      Cell take = dp[w - wi];
      take.benefit += costed[i]->mean_benefit;
      take.count += 1;
      take.mask |= (1ULL << i);
      if (better(take, dp[w])) dp[w] = take;
      if (w == wi) break;  // unsigned loop guard
    }
  }

  const Cell& best = dp[capacity];
  for (std::size_t i = 0; i < costed.size(); ++i) {
    if (best.mask & (1ULL << i)) {
      out.regions.push_back(costed[i]->region);
      out.total_benefit += costed[i]->mean_benefit;
      out.total_frag_bytes += costed[i]->frag_cost_bytes;
    }
  }
  std::sort(out.regions.begin(), out.regions.end(),
            [](const AddressRegion& a, const AddressRegion& b) {
              return a.start < b.start;
            });
  return out;
}

}  // namespace grapecm
