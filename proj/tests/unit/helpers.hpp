#pragma once

#include <atomic>
#include <filesystem>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "mosden/model.hpp"
#include "mosden/node.hpp"
#include "mosden/sim.hpp"

namespace testutil {

/// Scratch directory removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("mosden-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& p) const { return path_ / p; }

private:
  std::filesystem::path path_;
};

inline mosden::SimProfile profile(const std::string& kind, std::int64_t seed = 1, double offset = 0.0) {
  auto p = mosden::sim_profile_from_config({{"seed", std::to_string(seed)}, {"kind", kind}});
  p.offset = offset;
  return p;
}

/// In-process reference-plugin VSD with a time window over avg of temp.
inline mosden::VirtualSensorDefinition sim_vsd(const std::string& name, const mosden::SimProfile& p,
                                               std::int64_t sampling_ms = 1000, std::int64_t emit_ms = 60'000,
                                               mosden::WindowSpec window = {mosden::WindowKind::Time, 60'000}) {
  mosden::VirtualSensorDefinition vsd;
  vsd.name = name;
  vsd.binding = mosden::make_reference_binding(p, mosden::Transport::InProcess);
  vsd.sampling_interval_ms = sampling_ms;
  vsd.window = window;
  vsd.aggregations = {{"temp", mosden::AggFn::Avg}};
  vsd.emit_interval_ms = emit_ms;
  vsd.history_size = 256;
  return vsd;
}

/// Records every POST; fails the first `fail_first` of them.
class RecordingDelivery : public mosden::DeliveryClient {
public:
  bool post(const std::string& endpoint, const std::string& body) override {
    std::lock_guard lock(mu);
    ++attempts;
    if (fail_all || attempts <= fail_first) return false;
    endpoints.push_back(endpoint);
    bodies.push_back(body);
    return true;
  }
  std::vector<mosden::PushDelivery> deliveries() {
    std::lock_guard lock(mu);
    std::vector<mosden::PushDelivery> out;
    for (const auto& b : bodies) out.push_back(mosden::delivery_from_json(mosden::parse_json(b)));
    return out;
  }

  std::mutex mu;
  int attempts = 0;
  int fail_first = 0;
  bool fail_all = false;
  std::vector<std::string> endpoints;
  std::vector<std::string> bodies;
};

inline constexpr std::int64_t kT0 = 1'700'000'000'000;

} // namespace testutil
