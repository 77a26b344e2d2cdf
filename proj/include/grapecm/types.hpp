#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace grapecm {

// Virtual time in microseconds. Wall-clock time is never consulted.
using micros_t = std::int64_t;

inline constexpr micros_t kMicrosPerSecond = 1'000'000;

inline micros_t seconds_to_micros(double s) {
  return static_cast<micros_t>(s * static_cast<double>(kMicrosPerSecond));
}

inline double micros_to_seconds(micros_t us) {
  return static_cast<double>(us) / static_cast<double>(kMicrosPerSecond);
}

// A contiguous range of abstract page indices, [start, start + length).
// Addresses are model units, not hardware virtual addresses.
struct AddressRegion {
  std::uint64_t start = 0;
  std::uint64_t length = 0;  // valid regions have length >= 1

  std::uint64_t end() const { return start + length; }

  bool contains(std::uint64_t page) const {
    return page >= start && page < end();
  }

  bool overlaps(const AddressRegion& other) const {
    return start < other.end() && other.start < end();
  }

  // Pages shared with `other`.
  std::uint64_t overlap_pages(const AddressRegion& other) const {
    if (!overlaps(other)) return 0;
    std::uint64_t lo = start > other.start ? start : other.start;
    std::uint64_t hi = end() < other.end() ? end() : other.end();
    return hi - lo;
  }

  friend bool operator==(const AddressRegion&, const AddressRegion&) = default;
  friend auto operator<=>(const AddressRegion&, const AddressRegion&) = default;
};

// True iff regions are sorted by start and pairwise disjoint, and every
// region has length >= 1. Promotion lists must satisfy this.
bool is_canonical_region_list(const std::vector<AddressRegion>& regions);

// Sorts and validates; returns false if any pair overlaps or a region is
// empty. On success `regions` is left canonical.
bool canonicalize_region_list(std::vector<AddressRegion>& regions);

// Binary search over a canonical list.
bool region_list_contains_page(const std::vector<AddressRegion>& regions,
                               std::uint64_t page);

std::string region_to_string(const AddressRegion& r);

}  // namespace grapecm
