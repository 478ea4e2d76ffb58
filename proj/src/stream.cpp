#include "mosden/stream.hpp"

#include <algorithm>
#include <mutex>

#include "mosden/errors.hpp"
#include "mosden/log.hpp"

namespace mosden {

const AggValue* WindowResult::find(std::string_view key) const {
  for (const auto& [k, v] : agg_values) {
    if (k == key) return &v;
  }
  return nullptr;
}

Json to_json(const WindowResult& r) {
  Json aggs = Json::object();
  for (const auto& [key, value] : r.agg_values) aggs[key] = value ? to_json(*value) : Json(nullptr);
  Json j = Json::object();
  j["vs_name"] = r.vs_name;
  j["window_end"] = r.window_end;
  j["sample_count"] = r.sample_count;
  j["agg_values"] = std::move(aggs);
  return j;
}

WindowResult window_result_from_json(const Json& j) {
  if (!j.is_object()) throw SchemaError("", "expected a window result object");
  WindowResult r;
  try {
    r.vs_name = j.at("vs_name").get<std::string>();
    r.window_end = j.at("window_end").get<std::int64_t>();
    r.sample_count = j.at("sample_count").get<std::int64_t>();
    for (auto it = j.at("agg_values").begin(); it != j.at("agg_values").end(); ++it) {
      const Json& v = it.value();
      AggValue value;
      if (v.is_number_integer()) {
        value = v.get<std::int64_t>();
      } else if (v.is_number()) {
        value = v.get<double>();
      } else if (v.is_string()) {
        value = v.get<std::string>();
      } else if (!v.is_null()) {
        throw SchemaError("/agg_values/" + it.key(), "expected a scalar or null");
      }
      r.agg_values.emplace_back(it.key(), std::move(value));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("", std::string("malformed window result: ") + e.what());
  }
  return r;
}

std::span<const StreamElement> select_window(std::span<const StreamElement> elements, const WindowSpec& window,
                                             std::int64_t now) {
  if (window.kind == WindowKind::Count) {
    const auto n = std::min<std::size_t>(elements.size(), static_cast<std::size_t>(window.size));
    return elements.subspan(elements.size() - n);
  }
  const std::int64_t lower = now - window.size; // exclusive
  auto by_ts = [](const StreamElement& e, std::int64_t t) { return e.timestamp < t; };
  auto first = std::lower_bound(elements.begin(), elements.end(), lower + 1, by_ts);
  auto last = std::lower_bound(first, elements.end(), now + 1, by_ts);
  return {first, last};
}

namespace {

double as_double(const Value& v) {
  if (const auto* d = std::get_if<double>(&v)) return *d;
  return static_cast<double>(std::get<std::int64_t>(v));
}

bool numeric_less(const Value& a, const Value& b) {
  if (a.index() == 1 && b.index() == 1) return std::get<std::int64_t>(a) < std::get<std::int64_t>(b);
  return as_double(a) < as_double(b);
}

AggValue fold(AggFn fn, std::size_t column, std::span<const StreamElement> selection) {
  if (fn == AggFn::Count) return Value(static_cast<std::int64_t>(selection.size()));
  if (fn == AggFn::Sum || fn == AggFn::Avg) {
    double sum = 0.0;
    for (const auto& e : selection) sum += as_double(e.values[column]);
    if (fn == AggFn::Sum) return Value(sum);
    if (selection.empty()) return std::nullopt;
    return Value(sum / static_cast<double>(selection.size()));
  }
  if (selection.empty()) return std::nullopt;
  if (fn == AggFn::Last) return selection.back().values[column];
  const Value* best = &selection.front().values[column];
  for (const auto& e : selection.subspan(1)) {
    const Value& v = e.values[column];
    if (fn == AggFn::Min ? numeric_less(v, *best) : numeric_less(*best, v)) best = &v;
  }
  return *best;
}

} // namespace

WindowResult aggregate(std::string vs_name, const Schema& schema, std::span<const StreamElement> selection,
                       const std::vector<Aggregation>& aggs, std::int64_t window_end) {
  WindowResult r;
  r.vs_name = std::move(vs_name);
  r.window_end = window_end;
  r.sample_count = static_cast<std::int64_t>(selection.size());
  for (const auto& a : aggs) {
    auto column = field_index(schema, a.field);
    if (!column) throw FieldNotInSchema(a.field);
    r.agg_values.emplace_back(a.key(), fold(a.fn, *column, selection));
  }
  return r;
}

StreamStore::StreamStore(std::string vs_name, Schema schema, std::size_t capacity,
                         std::optional<std::filesystem::path> journal)
    : vs_name_(std::move(vs_name)), schema_(std::move(schema)), capacity_(std::max<std::size_t>(capacity, 1)),
      journal_path_(std::move(journal)) {
  check_schema(schema_);
}

void StreamStore::append(const StreamElement& e) {
  std::unique_lock lock(mu_);
  if (!ring_.empty() && e.timestamp < ring_.back().timestamp) {
    ++rejected_;
    throw OutOfOrderTimestamp("timestamp " + std::to_string(e.timestamp) + " is older than " +
                              std::to_string(ring_.back().timestamp));
  }
  if (journal_path_) {
    if (!journal_.is_open()) {
      std::filesystem::create_directories(journal_path_->parent_path());
      journal_.open(*journal_path_, std::ios::app);
      if (!journal_) throw IoError("cannot open journal " + journal_path_->string());
    }
    journal_ << serialize_stream_element(schema_, e) << '\n';
    journal_.flush();
  }
  ring_.push_back(e);
  if (ring_.size() > capacity_) ring_.pop_front();
  ++total_appended_;
}

std::vector<StreamElement> StreamStore::snapshot() const {
  std::shared_lock lock(mu_);
  return {ring_.begin(), ring_.end()};
}

std::optional<StreamElement> StreamStore::latest() const {
  std::shared_lock lock(mu_);
  if (ring_.empty()) return std::nullopt;
  return ring_.back();
}

std::vector<StreamElement> StreamStore::query_raw(const WindowSpec& window, std::int64_t now) const {
  auto all = snapshot();
  auto sel = select_window(all, window, now);
  return {sel.begin(), sel.end()};
}

WindowResult StreamStore::evaluate_window(const WindowSpec& window, const std::vector<Aggregation>& aggs,
                                          std::int64_t now) const {
  auto all = snapshot();
  return aggregate(vs_name_, schema_, select_window(all, window, now), aggs, now);
}

StreamStore::Since StreamStore::since(std::uint64_t seq) const {
  std::shared_lock lock(mu_);
  Since out;
  out.next_seq = total_appended_;
  const std::uint64_t first_seq = total_appended_ - ring_.size();
  const std::uint64_t from = std::max(seq, first_seq);
  if (from < total_appended_) {
    out.elements.assign(ring_.begin() + static_cast<std::ptrdiff_t>(from - first_seq), ring_.end());
  }
  return out;
}

std::size_t StreamStore::size() const {
  std::shared_lock lock(mu_);
  return ring_.size();
}

std::uint64_t StreamStore::total_appended() const {
  std::shared_lock lock(mu_);
  return total_appended_;
}

std::uint64_t StreamStore::rejected() const {
  std::shared_lock lock(mu_);
  return rejected_;
}

std::size_t StreamStore::replay_journal() {
  if (!journal_path_ || !std::filesystem::exists(*journal_path_)) return 0;
  std::ifstream in(*journal_path_);
  if (!in) throw IoError("cannot read journal " + journal_path_->string());
  std::deque<StreamElement> ring;
  std::size_t lines = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      auto e = parse_stream_element(schema_, line);
      if (!ring.empty() && e.timestamp < ring.back().timestamp) continue;
      ring.push_back(std::move(e));
      if (ring.size() > capacity_) ring.pop_front();
      ++lines;
    } catch (const Error& e) {
      log().warn("journal {}: skipping malformed line: {}", journal_path_->string(), e.what());
    }
  }
  std::unique_lock lock(mu_);
  ring_ = std::move(ring);
  total_appended_ = lines;
  return lines;
}

WindowResult emit_tick(const VirtualSensorDefinition& vsd, const StreamStore& store, std::int64_t now) {
  return store.evaluate_window(vsd.window, vsd.aggregations, now);
}

} // namespace mosden
