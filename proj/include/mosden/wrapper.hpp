#pragma once

// The generic wrapper: one sampling task per virtual sensor pulling readings
// from its plugin into its stream store.

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>

#include "mosden/clock.hpp"
#include "mosden/histogram.hpp"
#include "mosden/plugin.hpp"
#include "mosden/stream.hpp"
#include "mosden/worker.hpp"

namespace mosden {

struct IngestStats {
  std::atomic<std::uint64_t> samples_ok{0};
  std::atomic<std::uint64_t> samples_dropped{0};
  std::atomic<std::uint64_t> out_of_order{0};
  std::atomic<std::uint64_t> empty_reads{0};
  std::atomic<std::uint64_t> failures{0};
  std::atomic<std::uint64_t> restarts{0};
  /// Plugin read start to store-append completion, monotonic clock.
  LatencyHistogram l1;
};

enum class SampleOutcome { Stored, Dropped, Empty, Failed, Dead };

std::string_view to_string(SampleOutcome o);

/// Next due time under fixed-rate scheduling without catch-up: normally
/// `due + interval`; after an overrun the next tick fires at `completed`
/// and the grid restarts from there.
std::int64_t next_due_after(std::int64_t due, std::int64_t completed, std::int64_t interval);

class SamplingTask {
public:
  SamplingTask(std::string vs_name, std::unique_ptr<PluginHandle> handle, std::shared_ptr<StreamStore> store,
               std::int64_t interval_ms, std::shared_ptr<Clock> clock,
               std::shared_ptr<LatencyHistogram> shared_l1 = nullptr);
  ~SamplingTask();

  SamplingTask(const SamplingTask&) = delete;
  SamplingTask& operator=(const SamplingTask&) = delete;

  /// One get_readings call; stores or drops its element. Plugin failures
  /// come back as SampleOutcome::Failed, never as exceptions.
  SampleOutcome sample_once();

  /// One scheduled tick: applies the restart policy if the plugin has
  /// failed, samples, and computes next_due(). Monotonic-clock milliseconds.
  SampleOutcome tick();

  std::int64_t next_due() const { return next_due_.load(); }
  bool dead() const { return dead_.load(); }

  /// Runs tick() on a dedicated thread at the scheduled times.
  void start_thread();
  /// Stops the thread (if any) and the plugin. The store is left intact.
  void stop();

  const std::string& vs_name() const { return vs_name_; }
  const IngestStats& stats() const { return stats_; }
  const std::shared_ptr<StreamStore>& store() const { return store_; }
  std::int64_t interval_ms() const { return interval_ms_; }
  PluginState plugin_state() const;
  std::int64_t ticks() const { return ticks_.load(); }

private:
  std::int64_t mono_ms() const { return clock_->mono_us() / 1000; }

  std::string vs_name_;
  std::unique_ptr<PluginHandle> handle_;
  std::shared_ptr<StreamStore> store_;
  std::int64_t interval_ms_;
  std::shared_ptr<Clock> clock_;
  IngestStats stats_;
  std::shared_ptr<LatencyHistogram> shared_l1_;
  std::atomic<std::int64_t> next_due_;
  std::atomic<std::int64_t> ticks_{0};
  std::atomic<bool> dead_{false};
  std::atomic<PluginState> state_cache_{PluginState::Running};
  std::mutex handle_mu_;
  StoppableThread thread_;
};

} // namespace mosden
