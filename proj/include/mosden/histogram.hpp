#pragma once

#include <cstdint>
#include <mutex>
#include <vector>

#include "mosden/model.hpp"

namespace mosden {

struct LatencySummary {
  std::uint64_t count = 0;
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  double p99_ms = 0.0;
  double max_ms = 0.0;
};

Json to_json(const LatencySummary& s);

/// Streaming latency histogram with ~1% relative bucket width. Mean and max
/// are exact; percentiles resolve to the bucket's lower edge.
class LatencyHistogram {
public:
  LatencyHistogram();

  void record_us(std::int64_t micros);
  LatencySummary summary() const;
  void reset();

private:
  mutable std::mutex mu_;
  std::vector<std::uint64_t> buckets_;
  std::uint64_t count_ = 0;
  double sum_us_ = 0.0;
  std::int64_t max_us_ = 0;
};

} // namespace mosden
