#include "mosden/wrapper.hpp"

#include "mosden/errors.hpp"
#include "mosden/log.hpp"

namespace mosden {

std::string_view to_string(SampleOutcome o) {
  switch (o) {
  case SampleOutcome::Stored: return "stored";
  case SampleOutcome::Dropped: return "dropped";
  case SampleOutcome::Empty: return "empty";
  case SampleOutcome::Failed: return "failed";
  case SampleOutcome::Dead: return "dead";
  }
  return "?";
}

std::int64_t next_due_after(std::int64_t due, std::int64_t completed, std::int64_t interval) {
  const std::int64_t next = due + interval;
  return completed > next ? completed : next;
}

SamplingTask::SamplingTask(std::string vs_name, std::unique_ptr<PluginHandle> handle,
                           std::shared_ptr<StreamStore> store, std::int64_t interval_ms,
                           std::shared_ptr<Clock> clock, std::shared_ptr<LatencyHistogram> shared_l1)
    : vs_name_(std::move(vs_name)), handle_(std::move(handle)), store_(std::move(store)), interval_ms_(interval_ms),
      clock_(std::move(clock)), shared_l1_(std::move(shared_l1)), next_due_(clock_->mono_us() / 1000) {
  state_cache_ = handle_->state();
}

SamplingTask::~SamplingTask() { stop(); }

PluginState SamplingTask::plugin_state() const { return state_cache_.load(); }

SampleOutcome SamplingTask::sample_once() {
  const auto read_start = clock_->mono_us();
  std::optional<StreamElement> element;
  try {
    element = handle_->get_readings();
  } catch (const SchemaViolation& e) {
    ++stats_.samples_dropped;
    log().debug("{}: dropped reading: {}", vs_name_, e.what());
    return SampleOutcome::Dropped;
  } catch (const Error& e) {
    ++stats_.failures;
    state_cache_ = handle_->state();
    log().warn("{}: plugin call failed ({}): {}", vs_name_, e.code(), e.what());
    return SampleOutcome::Failed;
  }
  if (!element) {
    ++stats_.empty_reads;
    return SampleOutcome::Empty;
  }
  try {
    store_->append(*element);
  } catch (const OutOfOrderTimestamp& e) {
    ++stats_.samples_dropped;
    ++stats_.out_of_order;
    log().debug("{}: {}", vs_name_, e.what());
    return SampleOutcome::Dropped;
  }
  const auto l1 = clock_->mono_us() - read_start;
  stats_.l1.record_us(l1);
  if (shared_l1_) shared_l1_->record_us(l1);
  ++stats_.samples_ok;
  return SampleOutcome::Stored;
}

SampleOutcome SamplingTask::tick() {
  std::lock_guard lock(handle_mu_);
  ++ticks_;
  const std::int64_t due = next_due_.load();
  if (dead_) return SampleOutcome::Dead;

  if (handle_->state() == PluginState::Failed) {
    try {
      handle_->restart();
      ++stats_.restarts;
      log().info("{}: plugin restarted ({} of {})", vs_name_, handle_->restarts(), handle_->options().max_restarts);
    } catch (const Error& e) {
      ++stats_.restarts;
      ++stats_.failures;
      log().warn("{}: restart failed: {}", vs_name_, e.what());
    }
  }

  SampleOutcome outcome = SampleOutcome::Failed;
  if (handle_->state() == PluginState::Running) outcome = sample_once();
  state_cache_ = handle_->state();

  const std::int64_t completed = mono_ms();
  if (handle_->state() == PluginState::Failed) {
    if (handle_->can_restart()) {
      next_due_ = completed + handle_->options().restart_backoff_ms;
    } else {
      dead_ = true;
      log().error("{}: plugin failed after {} restarts, sampling stopped", vs_name_, handle_->restarts());
      return SampleOutcome::Dead;
    }
  } else {
    next_due_ = next_due_after(due, completed, interval_ms_);
  }
  return outcome;
}

void SamplingTask::start_thread() {
  thread_.start([this] {
    while (!dead_ && thread_.sleep_until_mono_ms(next_due_.load())) {
      tick();
    }
  });
}

void SamplingTask::stop() {
  thread_.stop();
  std::lock_guard lock(handle_mu_);
  if (handle_) {
    handle_->stop();
    state_cache_ = handle_->state();
  }
}

} // namespace mosden
