#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mosden/model.hpp"

namespace mosden {

/// Aggregate value; `std::nullopt` is the empty-window null marker.
using AggValue = std::optional<Value>;

struct WindowResult {
  std::string vs_name;
  std::int64_t window_end = 0;
  /// Keyed `field.fn`, in the order of the aggregation list.
  std::vector<std::pair<std::string, AggValue>> agg_values;
  std::int64_t sample_count = 0;

  const AggValue* find(std::string_view key) const;
  bool operator==(const WindowResult&) const = default;
};

Json to_json(const WindowResult& r);
WindowResult window_result_from_json(const Json& j);

/// Elements of `elements` (timestamp-ordered) that fall in `window` at `now`.
/// Count windows take the last `size` rows; time windows take
/// timestamps in the half-open range (now - size, now].
std::span<const StreamElement> select_window(std::span<const StreamElement> elements, const WindowSpec& window,
                                             std::int64_t now);

/// Folds `aggs` over `selection`. Integer inputs are widened to double for
/// avg and sum; min/max/last keep the field's own type.
WindowResult aggregate(std::string vs_name, const Schema& schema, std::span<const StreamElement> selection,
                       const std::vector<Aggregation>& aggs, std::int64_t window_end);

/// Bounded, timestamp-ordered history of one virtual sensor.
///
/// Single writer, many readers. Every element ever appended has a sequence
/// number (0-based, in append order); the ring keeps the newest `capacity`.
class StreamStore {
public:
  StreamStore(std::string vs_name, Schema schema, std::size_t capacity,
              std::optional<std::filesystem::path> journal = std::nullopt);

  StreamStore(const StreamStore&) = delete;
  StreamStore& operator=(const StreamStore&) = delete;

  /// Throws OutOfOrderTimestamp (and counts it) when `e` is older than the tail.
  void append(const StreamElement& e);

  std::vector<StreamElement> snapshot() const;
  std::optional<StreamElement> latest() const;
  std::vector<StreamElement> query_raw(const WindowSpec& window, std::int64_t now) const;
  WindowResult evaluate_window(const WindowSpec& window, const std::vector<Aggregation>& aggs,
                               std::int64_t now) const;

  struct Since {
    std::vector<StreamElement> elements;
    std::uint64_t next_seq = 0;
  };
  /// Retained elements whose sequence number is >= `seq`.
  Since since(std::uint64_t seq) const;

  const std::string& vs_name() const { return vs_name_; }
  const Schema& schema() const { return schema_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t size() const;
  std::uint64_t total_appended() const;
  std::uint64_t rejected() const;

  /// Loads the newest `capacity` rows of the journal, if one is configured
  /// and exists. Returns the number of journal lines read.
  std::size_t replay_journal();

private:
  std::string vs_name_;
  Schema schema_;
  std::size_t capacity_;
  std::optional<std::filesystem::path> journal_path_;
  std::ofstream journal_;

  mutable std::shared_mutex mu_;
  std::deque<StreamElement> ring_;
  std::uint64_t total_appended_ = 0;
  std::uint64_t rejected_ = 0;
};

/// One emission of a virtual sensor: its window and aggregations at `now`.
WindowResult emit_tick(const VirtualSensorDefinition& vsd, const StreamStore& store, std::int64_t now);

} // namespace mosden
