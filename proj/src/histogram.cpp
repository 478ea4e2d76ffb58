#include "mosden/histogram.hpp"

#include <algorithm>
#include <cmath>

namespace mosden {

namespace {

constexpr double kGrowth = 1.01;
constexpr std::size_t kBuckets = 2200; // covers > 1e9 us

std::size_t bucket_of(std::int64_t us) {
  const double v = static_cast<double>(std::max<std::int64_t>(us, 0)) + 1.0;
  auto idx = static_cast<std::size_t>(std::log(v) / std::log(kGrowth));
  return std::min(idx, kBuckets - 1);
}

double bucket_floor_us(std::size_t idx) { return std::pow(kGrowth, static_cast<double>(idx)) - 1.0; }

} // namespace

Json to_json(const LatencySummary& s) {
  Json j = Json::object();
  j["count"] = s.count;
  j["mean_ms"] = s.mean_ms;
  j["p50_ms"] = s.p50_ms;
  j["p95_ms"] = s.p95_ms;
  j["p99_ms"] = s.p99_ms;
  j["max_ms"] = s.max_ms;
  return j;
}

LatencyHistogram::LatencyHistogram() : buckets_(kBuckets, 0) {}

void LatencyHistogram::record_us(std::int64_t micros) {
  std::lock_guard lock(mu_);
  ++buckets_[bucket_of(micros)];
  ++count_;
  sum_us_ += static_cast<double>(micros);
  max_us_ = std::max(max_us_, micros);
}

LatencySummary LatencyHistogram::summary() const {
  std::lock_guard lock(mu_);
  LatencySummary s;
  s.count = count_;
  if (count_ == 0) return s;
  s.mean_ms = sum_us_ / static_cast<double>(count_) / 1000.0;
  s.max_ms = static_cast<double>(max_us_) / 1000.0;
  auto quantile = [&](double q) {
    const auto rank = static_cast<std::uint64_t>(std::ceil(q * static_cast<double>(count_)));
    std::uint64_t seen = 0;
    for (std::size_t i = 0; i < buckets_.size(); ++i) {
      seen += buckets_[i];
      if (seen >= std::max<std::uint64_t>(rank, 1)) return std::min(bucket_floor_us(i), static_cast<double>(max_us_)) / 1000.0;
    }
    return s.max_ms;
  };
  s.p50_ms = quantile(0.50);
  s.p95_ms = quantile(0.95);
  s.p99_ms = quantile(0.99);
  return s;
}

void LatencyHistogram::reset() {
  std::lock_guard lock(mu_);
  std::fill(buckets_.begin(), buckets_.end(), 0);
  count_ = 0;
  sum_us_ = 0.0;
  max_us_ = 0;
}

} // namespace mosden
