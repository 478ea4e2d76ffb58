#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>

namespace mosden {

/// A thread with an interruptible sleep. Deadlines are in steady-clock
/// milliseconds, the same scale as SystemClock::mono_us() / 1000.
class StoppableThread {
public:
  StoppableThread() = default;
  StoppableThread(const StoppableThread&) = delete;
  StoppableThread& operator=(const StoppableThread&) = delete;
  ~StoppableThread() { stop(); }

  void start(std::function<void()> body) {
    stop();
    {
      std::lock_guard lock(mu_);
      stopping_ = false;
    }
    thread_ = std::thread(std::move(body));
  }

  /// Returns false when a stop was requested before the deadline.
  bool sleep_until_mono_ms(std::int64_t deadline_ms) {
    using namespace std::chrono;
    const auto tp = steady_clock::time_point(duration_cast<steady_clock::duration>(milliseconds(deadline_ms)));
    std::unique_lock lock(mu_);
    cv_.wait_until(lock, tp, [this] { return stopping_; });
    return !stopping_;
  }

  bool sleep_for_ms(std::int64_t ms) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, std::chrono::milliseconds(ms), [this] { return stopping_; });
    return !stopping_;
  }

  bool stopping() const {
    std::lock_guard lock(mu_);
    return stopping_;
  }

  void request_stop() {
    {
      std::lock_guard lock(mu_);
      stopping_ = true;
    }
    cv_.notify_all();
  }

  void stop() {
    request_stop();
    if (thread_.joinable() && thread_.get_id() != std::this_thread::get_id()) thread_.join();
    if (thread_.joinable()) thread_.detach();
  }

  bool running() const { return thread_.joinable(); }

private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  bool stopping_ = false;
  std::thread thread_;
};

} // namespace mosden
