#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace grapecm {

// Log-bucketed latency histogram, 5 buckets per decade from 0.1 us up to
// 1e8 us, with underflow/overflow buckets at the ends.
class LogHistogram {
 public:
  LogHistogram();

  void add(double value_us);

  std::uint64_t total() const { return total_; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }
  double bucket_lo_us(std::size_t i) const;
  double bucket_hi_us(std::size_t i) const;

  nlohmann::json to_json() const;
  std::string to_csv() const;

 private:
  static constexpr int kBucketsPerDecade = 5;
  static constexpr double kLoUs = 0.1;
  static constexpr int kDecades = 9;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

// Nearest-rank percentile; p in (0, 100]. Sorts a copy.
double percentile(std::vector<double> values, double p);

// log10(max/min) over positive samples; 0 when fewer than two samples.
double decades_spanned(const std::vector<double>& values);

struct LatencyStats {
  double p50 = 0.0;
  double p99 = 0.0;
  double p999 = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::uint64_t count = 0;
};

LatencyStats summarize(const std::vector<double>& values);
nlohmann::json stats_to_json(const LatencyStats& s, const std::string& unit);

}  // namespace grapecm
