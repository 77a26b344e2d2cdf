#include "grapecm/types.hpp"

#include <algorithm>

namespace grapecm {

bool is_canonical_region_list(const std::vector<AddressRegion>& regions) {
  for (std::size_t i = 0; i < regions.size(); ++i) {
    if (regions[i].length == 0) return false;
    if (i > 0 && regions[i].start < regions[i - 1].end()) return false;
  }
  return true;
}

bool canonicalize_region_list(std::vector<AddressRegion>& regions) {
  std::sort(regions.begin(), regions.end(),
            [](const AddressRegion& a, const AddressRegion& b) {
              return a.start < b.start;
            });
  return is_canonical_region_list(regions);
}

bool region_list_contains_page(const std::vector<AddressRegion>& regions,
                               std::uint64_t page) {
  auto it = std::upper_bound(regions.begin(), regions.end(), page,
                             [](std::uint64_t p, const AddressRegion& r) {
                               return p < r.start;
                             });
  if (it == regions.begin()) return false;
  return std::prev(it)->contains(page);
}

std::string region_to_string(const AddressRegion& r) {
  return "[" + std::to_string(r.start) + "," + std::to_string(r.end()) + ")";
}

}  // namespace grapecm
