#include "grapecm/stats.hpp"

#include <algorithm>
#include <cmath>

namespace grapecm {

LogHistogram::LogHistogram()
    : counts_(kBucketsPerDecade * kDecades + 2, 0) {}

void LogHistogram::add(double value_us) {
  ++total_;
  if (value_us < kLoUs) {
    ++counts_.front();
    return;
  }
  double pos = std::log10(value_us / kLoUs) * kBucketsPerDecade;
  std::size_t idx = 1 + static_cast<std::size_t>(pos);
  if (idx >= counts_.size() - 1) {
    ++counts_.back();
    return;
  }
  ++counts_[idx];
}

double LogHistogram::bucket_lo_us(std::size_t i) const {
  if (i == 0) return 0.0;
  return kLoUs * std::pow(10.0, static_cast<double>(i - 1) / kBucketsPerDecade);
}

double LogHistogram::bucket_hi_us(std::size_t i) const {
  if (i >= counts_.size() - 1) return std::numeric_limits<double>::infinity();
  return kLoUs * std::pow(10.0, static_cast<double>(i) / kBucketsPerDecade);
}

nlohmann::json LogHistogram::to_json() const {
  nlohmann::json buckets = nlohmann::json::array();
  for (std::size_t i = 0; i < counts_.size(); ++i) {
    if (counts_[i] == 0) continue;
    buckets.push_back({{"lo-us", bucket_lo_us(i)},
                       {"hi-us", i >= counts_.size() - 1 ? -1.0 : bucket_hi_us(i)},
                       {"count", counts_[i]}});
  }
  return {{"total", total_}, {"buckets", std::move(buckets)}};
}

std::string LogHistogram::to_csv() const {
  std::string out = "bucket_lo_us,bucket_hi_us,count\n";
  for (std::size_t i = 0; i < counts_.size(); ++i) {
    if (counts_[i] == 0) continue;
    out += std::to_string(bucket_lo_us(i)) + "," +
           (i >= counts_.size() - 1 ? "inf" : std::to_string(bucket_hi_us(i))) + "," +
           std::to_string(counts_[i]) + "\n";
  }
  return out;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  double rank = std::ceil(p / 100.0 * static_cast<double>(values.size()));
  std::size_t idx = rank <= 1.0 ? 0 : static_cast<std::size_t>(rank) - 1;
  if (idx >= values.size()) idx = values.size() - 1;
  return values[idx];
}

double decades_spanned(const std::vector<double>& values) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (double v : values) {
    if (v <= 0) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(hi > 0) || !std::isfinite(lo) || lo == 0) return 0.0;
  return std::log10(hi / lo);
}

LatencyStats summarize(const std::vector<double>& values) {
  LatencyStats s;
  if (values.empty()) return s;
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  auto at_pct = [&sorted](double p) {
    double rank = std::ceil(p / 100.0 * static_cast<double>(sorted.size()));
    std::size_t idx = rank <= 1.0 ? 0 : static_cast<std::size_t>(rank) - 1;
    return sorted[std::min(idx, sorted.size() - 1)];
  };
  s.p50 = at_pct(50.0);
  s.p99 = at_pct(99.0);
  s.p999 = at_pct(99.9);
  s.min = sorted.front();
  s.max = sorted.back();
  s.count = sorted.size();
  return s;
}

nlohmann::json stats_to_json(const LatencyStats& s, const std::string& unit) {
  return {{"p50-" + unit, s.p50},   {"p99-" + unit, s.p99},
          {"p999-" + unit, s.p999}, {"min-" + unit, s.min},
          {"max-" + unit, s.max},   {"count", s.count}};
}

}  // namespace grapecm
