#pragma once

#include <atomic>
#include <cstdint>
#include <memory>

namespace mosden {

/// Time source shared by the engine, stores and plugins.
///
/// `now_ms()` is wall time (epoch milliseconds) used for element timestamps
/// and expiries. `mono_us()` is a monotonic counter used only for latency
/// measurement and must never go backwards.
class Clock {
public:
  virtual ~Clock() = default;
  virtual std::int64_t now_ms() const = 0;
  virtual std::int64_t mono_us() const = 0;
  /// Real clocks block; the manual clock returns immediately.
  virtual void sleep_for_ms(std::int64_t ms) const = 0;
  virtual bool is_manual() const { return false; }
};

class SystemClock final : public Clock {
public:
  std::int64_t now_ms() const override;
  std::int64_t mono_us() const override;
  void sleep_for_ms(std::int64_t ms) const override;
};

/// Controllable clock for deterministic runs. Time only moves when the
/// owner calls set()/advance(); monotonic time mirrors wall time.
class ManualClock final : public Clock {
public:
  explicit ManualClock(std::int64_t start_ms = 0) : now_(start_ms) {}

  std::int64_t now_ms() const override { return now_.load(); }
  std::int64_t mono_us() const override { return now_.load() * 1000; }
  void sleep_for_ms(std::int64_t) const override {}
  bool is_manual() const override { return true; }

  void set(std::int64_t ms) { now_.store(ms); }
  void advance(std::int64_t ms) { now_.fetch_add(ms); }

private:
  std::atomic<std::int64_t> now_;
};

std::shared_ptr<Clock> system_clock();

} // namespace mosden
