// End-to-end acceptance run: one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <unistd.h>

#include "mosden/bench.hpp"
#include "mosden/errors.hpp"
#include "mosden/net.hpp"
#include "mosden/node.hpp"
#include "mosden/offload.hpp"
#include "mosden/plugin.hpp"
#include "mosden/registry.hpp"
#include "mosden/server.hpp"
#include "mosden/sim.hpp"
#include "mosden/wrapper.hpp"
#include "oracle.hpp"

using namespace mosden;
using namespace std::chrono_literals;
namespace fs = std::filesystem;

namespace {

constexpr std::int64_t kT0 = 1'700'000'000'000;

struct Verdict {
  bool pass = false;
  std::string detail;
};

class Scratch {
public:
  explicit Scratch(const std::string& tag) {
    path_ = fs::temp_directory_path() / ("mosden-accept-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

private:
  fs::path path_;
};

/// Loopback endpoint that keeps every POSTed body.
class Sink {
public:
  Sink() {
    http_.route("POST", "/ingest", [this](const HttpRequest& req) {
      std::lock_guard lock(mu_);
      bodies_.push_back(req.body);
      received_at_.push_back(system_clock()->now_ms());
      return HttpResponse{200, "{}"};
    });
    http_.start("127.0.0.1", 0);
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(http_.port()) + "/ingest"; }
  std::vector<PushDelivery> deliveries() {
    std::lock_guard lock(mu_);
    std::vector<PushDelivery> out;
    for (const auto& b : bodies_) out.push_back(delivery_from_json(parse_json(b)));
    return out;
  }

private:
  HttpServer http_;
  std::mutex mu_;
  std::vector<std::string> bodies_;
  std::vector<std::int64_t> received_at_;
};

/// In-memory delivery client for manual-clock runs.
class Capture final : public DeliveryClient {
public:
  bool post(const std::string&, const std::string& body) override {
    std::lock_guard lock(mu_);
    bodies_.push_back(body);
    return true;
  }
  std::vector<PushDelivery> deliveries() {
    std::lock_guard lock(mu_);
    std::vector<PushDelivery> out;
    for (const auto& b : bodies_) out.push_back(delivery_from_json(parse_json(b)));
    return out;
  }

private:
  std::mutex mu_;
  std::vector<std::string> bodies_;
};

VirtualSensorDefinition sim_vsd(const std::string& name, const ConfigMap& config, std::int64_t sampling_ms,
                                std::int64_t emit_ms, WindowSpec window, std::int64_t history) {
  VirtualSensorDefinition vsd;
  vsd.name = name;
  vsd.binding = PluginBinding{std::string(kSimPluginId), Transport::InProcess, {}, config};
  vsd.sampling_interval_ms = sampling_ms;
  vsd.window = window;
  vsd.aggregations = {{"temp", AggFn::Avg}};
  vsd.emit_interval_ms = emit_ms;
  vsd.history_size = history;
  return vsd;
}

Subscription push(const std::string& vs, const std::string& endpoint, std::int64_t interval, std::int64_t expiry,
                  PayloadKind payload) {
  Subscription s;
  s.vs_name = vs;
  s.delivery_endpoint = endpoint;
  s.interval_ms = interval;
  s.expiry = expiry;
  s.payload = payload;
  return s;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------------------

Verdict aggregation_oracle() {
  std::mt19937_64 rng(20130101);
  const auto start = std::chrono::steady_clock::now();
  int mismatches = 0;
  std::string first;
  for (int i = 0; i < 10'000; ++i) {
    auto c = oracle::random_case(rng);
    auto diff = oracle::run_case(c);
    if (!diff.empty()) {
      if (first.empty()) first = "case " + std::to_string(i) + ": " + diff;
      ++mismatches;
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {mismatches == 0 && secs < 30.0,
          std::to_string(mismatches) + " mismatches in 10000 cases, " + fmt("%.2f", secs) + " s" +
              (first.empty() ? "" : "; " + first)};
}

Verdict batching() {
  Scenario s;
  s.axis = BenchAxis::Queries;
  s.points = {1};
  s.duration_s = 180;
  s.sampling_ms = 1000;
  s.clock = BenchClock::Mock;
  s.sensors = 1;
  s.query_interval_ms = 60'000;
  s.window = {WindowKind::Time, 60'000};
  s.cost_model = {1.0, 10.0, 0.01};
  auto batched = run_point(s, 1);

  Scenario raw = s;
  raw.payload = PayloadKind::Raw;
  raw.query_interval_ms = s.sampling_ms;
  auto forwarded = run_point(raw, 1);

  bool pass = batched.status == "ok" && forwarded.status == "ok";
  pass = pass && batched.ingested >= 2 && batched.ingested <= 4;
  pass = pass && batched.samples_ok >= 177 && batched.samples_ok <= 183;

  // Same counters under many cost models with a positive wake cost.
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> wake(1e-6, 100.0), per_byte(0.0, 10.0), proc(0.0, 10.0);
  int wins = 0;
  constexpr int kModels = 1000;
  for (int i = 0; i < kModels; ++i) {
    CostParameters c{proc(rng), wake(rng), i % 10 == 0 ? 0.0 : per_byte(rng)};
    auto a = account(CounterSnapshot{batched.samples_ok, batched.messages_sent, batched.bytes_sent}, c);
    auto b = account(CounterSnapshot{forwarded.samples_ok, forwarded.messages_sent, forwarded.bytes_sent}, c);
    if (a.e_beta < b.e_beta) ++wins;
  }
  pass = pass && wins == kModels;
  return {pass, "batched: " + std::to_string(batched.ingested) + " ingested / " + std::to_string(batched.samples_ok) +
                    " samples / " + std::to_string(batched.bytes_sent) + " B; raw: " +
                    std::to_string(forwarded.messages_sent) + " messages / " + std::to_string(forwarded.bytes_sent) +
                    " B; batched e_beta lower under " + std::to_string(wins) + "/" + std::to_string(kModels) +
                    " cost models"};
}

Verdict decision_rule() {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0.0, 1000.0);
  int disagreements = 0;
  int ties = 0;
  for (int i = 0; i < 1000; ++i) {
    double a = u(rng);
    double b = i % 5 == 0 ? a : u(rng);
    if (i % 50 == 1) a = b = 0.0;
    ties += a == b;
    const bool local = a < b; // direct evaluation
    if ((decide(a, b) == Strategy::ProcessLocally) != local) ++disagreements;
  }
  // plan-level sweep through the estimate
  std::uniform_int_distribution<std::int64_t> n(1, 300), bytes(1, 400);
  for (int i = 0; i < 1000; ++i) {
    CostParameters c{u(rng) / 100, u(rng) / 10, u(rng) / 1000};
    const auto samples = n(rng), raw = bytes(rng), agg = bytes(rng);
    auto e = estimate(c, samples, raw, agg);
    if (plan(c, samples, raw, agg).strategy != decide(e.e_alpha, e.e_beta)) ++disagreements;
    if ((decide(e.e_alpha, e.e_beta) == Strategy::ProcessLocally) != (e.e_alpha < e.e_beta)) ++disagreements;
  }
  int monotone_breaks = 0;
  for (int i = 0; i < 1000; ++i) {
    const double a = u(rng);
    double b1 = u(rng), b2 = u(rng);
    if (b1 > b2) std::swap(b1, b2);
    if (decide(a, b1) == Strategy::ProcessLocally && decide(a, b2) != Strategy::ProcessLocally) ++monotone_breaks;
  }
  const bool boundary = decide(10, 10) == Strategy::ForwardRaw && decide(5, 10) == Strategy::ProcessLocally &&
                        decide(10, 5) == Strategy::ForwardRaw;
  return {disagreements == 0 && monotone_breaks == 0 && boundary && ties > 0,
          std::to_string(disagreements) + " disagreements in 2000 cases (" + std::to_string(ties) + " ties), " +
              std::to_string(monotone_breaks) + " monotonicity breaks in 1000 pairs"};
}

Verdict scaling() {
  Scenario s;
  s.axis = BenchAxis::Queries;
  s.sensors = 13;
  s.duration_s = 60;
  s.sampling_ms = 1000;
  s.clock = BenchClock::Real;
  s.query_interval_ms = 1000;
  s.window = {WindowKind::Time, 60'000};
  s.cost_model = {1.0, 10.0, 0.01};

  // Shape of p95 L2 against query count, reported only.
  std::string shape;
  Scenario sweep = s;
  sweep.duration_s = 10;
  for (std::int64_t q : {1, 10, 20}) {
    auto row = run_point(sweep, q);
    shape += std::to_string(q) + ":" + fmt("%.2f", row.l2_p95_ms) + " ";
  }

  const auto start = std::chrono::steady_clock::now();
  auto row = run_point(s, 30);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  shape += "30:" + fmt("%.2f", row.l2_p95_ms);
  const bool pass = row.status == "ok" && row.losses == 0 && row.ingested == row.messages_sent &&
                    row.messages_sent > 0 && row.healthz_p95_ms < 100.0 && secs < 180.0;
  return {pass, "status " + row.status + ", " + std::to_string(row.messages_sent) + " sent, " +
                    std::to_string(row.ingested) + " ingested, losses " + std::to_string(row.losses) +
                    ", samples " + std::to_string(row.samples_ok) + ", healthz p95 " +
                    fmt("%.2f", row.healthz_p95_ms) + " ms, " + fmt("%.1f", secs) +
                    " s; p95 L2 ms by queries (reported) " + shape};
}

Verdict push_pull_round_trip() {
  NodeConfig cfg;
  cfg.node_id = "rt";
  Node node(cfg);
  node.activate(sim_vsd("room", {{"seed", "5"}, {"kind", "seeded_noise"}, {"amplitude", "3"}, {"offset", "20"}}, 500,
                        60'000, {WindowKind::Time, 60'000}, 1000));
  NodeServer server(node);
  server.start();
  Sink sink;
  node.start();
  const auto now = system_clock()->now_ms();
  node.create_subscription(push("room", sink.url(), 2000, now + 60'000, PayloadKind::Raw));
  std::this_thread::sleep_for(61s);
  node.stop();

  auto pulled = http_get(parse_url(server.base_url()), "/sensors/room/data?mode=raw");
  server.stop();
  if (!pulled || pulled->status != 200) return {false, "pull failed"};
  const auto schema = node.store("room")->schema();
  std::map<std::int64_t, std::string> by_ts;
  const auto doc = parse_json(pulled->body);
  for (const auto& e : doc["elements"]) by_ts[e["timestamp"].get<std::int64_t>()] = e.dump();

  std::size_t checked = 0, mismatched = 0;
  std::string example;
  for (const auto& d : sink.deliveries()) {
    for (const auto& e : d.payload["elements"]) {
      ++checked;
      auto it = by_ts.find(e["timestamp"].get<std::int64_t>());
      const bool same = it != by_ts.end() && it->second == e.dump() &&
                        serialize_stream_element(schema, element_from_json(schema, e)) ==
                            serialize_stream_element(schema, element_from_json(schema, parse_json(it->second)));
      if (!same) {
        if (example.empty()) example = "; first: pushed " + e.dump() + " pulled " + (it == by_ts.end() ? "nothing" : it->second);
        ++mismatched;
      }
    }
  }
  return {checked >= 100 && mismatched == 0, std::to_string(checked) + " delivered elements, " +
                                                 std::to_string(mismatched) + " differ from the pulled copy" + example};
}

Verdict expiry() {
  NodeConfig cfg;
  cfg.node_id = "exp";
  Node node(cfg);
  node.activate(sim_vsd("room", {{"seed", "2"}, {"kind", "sine"}}, 200, 1000, {WindowKind::Time, 5000}, 100));
  Sink sink;
  node.start();
  const auto expiry = system_clock()->now_ms() + 10'000;
  node.create_subscription(push("room", sink.url(), 1000, expiry, PayloadKind::Processed));
  std::this_thread::sleep_for(12s);
  node.stop();
  auto got = sink.deliveries();
  const auto late = std::count_if(got.begin(), got.end(), [&](const PushDelivery& d) { return d.sent_at > expiry; });
  const bool pass = got.size() >= 9 && got.size() <= 11 && late == 0;
  return {pass, std::to_string(got.size()) + " deliveries, " + std::to_string(late) + " stamped after expiry"};
}

template <class Ex, class F>
bool throws(F&& f) {
  try {
    f();
  } catch (const Ex&) {
    return true;
  } catch (...) {
    return false;
  }
  return false;
}

Verdict plugin_conformance() {
  std::vector<std::string> failures;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };
  const std::string exe = MOSDEN_SIM_PLUGIN_PATH;

  auto factory = [&](Transport t, std::chrono::milliseconds timeout) -> PluginFactory {
    if (t == Transport::InProcess) {
      return [timeout] { return with_call_timeout(std::make_unique<SimPlugin>(), timeout); };
    }
    return [exe, timeout] { return launch_subprocess_plugin(SubprocessOptions{{exe}, {}, timeout}); };
  };

  for (auto t : {Transport::InProcess, Transport::Subprocess}) {
    const std::string tag = std::string(to_string(t)) + ": ";
    auto handle = [&](ConfigMap cfg, std::chrono::milliseconds timeout = 2000ms) {
      PluginBinding b{std::string(kSimPluginId), t, t == Transport::Subprocess ? std::vector<std::string>{exe} : std::vector<std::string>{},
                      std::move(cfg)};
      HostOptions o;
      o.call_timeout = timeout;
      o.restart_backoff_ms = 0;
      return std::make_unique<PluginHandle>(b, factory(t, timeout), o);
    };

    {
      auto h = handle({{"seed", "1"}, {"kind", "sine"}});
      h->activate();
      auto e = h->get_readings();
      expect(h->state() == PluginState::Running && e && e->values.size() == 1, tag + "happy path");
    }
    {
      auto h = handle({{"kind", "ramp"}});
      bool key_ok = false;
      try {
        h->activate();
      } catch (const PluginRejectedConfig& e) {
        key_ok = e.key() == "seed";
      }
      expect(key_ok && h->state() == PluginState::Configured, tag + "PluginRejectedConfig");
    }
    {
      auto h = handle({{"seed", "1"}, {"fault_mode", "wrong_type"}, {"fault_after", "2"}});
      h->activate();
      const bool first_ok = h->get_readings().has_value() && h->get_readings().has_value();
      expect(first_ok && throws<SchemaViolation>([&] { h->get_readings(); }) && h->state() == PluginState::Running,
             tag + "SchemaViolation");
    }
    {
      auto h = handle({{"seed", "1"}, {"fault_mode", "stall"}, {"stall_ms", "1500"}}, 200ms);
      h->activate();
      expect(throws<PluginTimeout>([&] { h->get_readings(); }) && h->state() == PluginState::Failed,
             tag + "PluginTimeout");
    }
    {
      // restart cap through the wrapper's restart policy
      auto h = handle({{"seed", "1"}, {"fault_mode", "stall"}, {"stall_ms", "1500"}}, 150ms);
      h->activate();
      auto clock = system_clock();
      auto store = std::make_shared<StreamStore>("vs", h->schema(), 16);
      SamplingTask task("vs", std::move(h), store, 10, clock);
      SampleOutcome last = SampleOutcome::Stored;
      int ticks = 0;
      while (!task.dead() && ticks < 10) {
        last = task.tick();
        ++ticks;
      }
      expect(task.dead() && last == SampleOutcome::Dead && ticks == 4 && task.stats().restarts == 3,
             tag + "restart cap (" + std::to_string(ticks) + " ticks)");
      task.stop();
    }
  }
  {
    // the two transports agree bit for bit
    ConfigMap cfg{{"seed", "9"}, {"kind", "seeded_noise"}, {"timestamp_mode", "synthetic"}, {"start_ms", "1000"}};
    PluginHandle a({std::string(kSimPluginId), Transport::InProcess, {}, cfg}, factory(Transport::InProcess, 2000ms));
    PluginHandle b({std::string(kSimPluginId), Transport::Subprocess, {exe}, cfg}, factory(Transport::Subprocess, 2000ms));
    a.activate();
    b.activate();
    bool same = a.schema() == b.schema();
    for (int i = 0; i < 100 && same; ++i) {
      same = serialize_stream_element(a.schema(), *a.get_readings()) ==
             serialize_stream_element(b.schema(), *b.get_readings());
    }
    expect(same, "transports disagree");
  }
  std::this_thread::sleep_for(1600ms); // abandoned in-process stalls finish
  std::string detail = failures.empty() ? "every error path matched its documented outcome on both transports" : "";
  for (const auto& f : failures) detail += (detail.empty() ? "failed: " : ", ") + f;
  return {failures.empty(), detail};
}

Verdict eviction() {
  Scratch dir("evict");
  auto write = [&](const fs::path& root, const std::string& id, std::int64_t size) {
    fs::create_directories(root / id);
    std::ofstream(root / id / "plugin.json")
        << R"({"plugin_id":")" << id << R"(","version":"1.0.0","action":")" << kPluginAction
        << R"(","size_bytes":)" << size << R"(,"categories":[],"command":["/bin/true"]})";
  };
  bool base_ok = false;
  {
    const auto root = dir.path() / "base";
    for (const auto* id : {"a", "b", "c"}) write(root, id, 25'000);
    PluginCatalog catalog(root, std::make_shared<ManualClock>(0));
    catalog.rescan();
    catalog.touch("a", 30);
    catalog.touch("b", 10);
    catalog.touch("c", 20);
    auto evicted = catalog.evict_unused(60'000, 100);
    base_ok = evicted == std::vector<std::string>{"b"} && !fs::exists(root / "b") && fs::exists(root / "a") &&
              fs::exists(root / "c");
  }

  std::mt19937_64 rng(99);
  auto pick = [&](std::int64_t lo, std::int64_t hi) { return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng); };
  int bound_evicted = 0, over_budget = 0, not_lru = 0;
  for (int round = 0; round < 1000; ++round) {
    const auto root = dir.path() / ("r" + std::to_string(round));
    PluginCatalog catalog(root, std::make_shared<ManualClock>(0));
    fs::create_directories(root);
    struct P {
      std::string id;
      std::int64_t size, used;
      bool bound;
    };
    std::vector<P> ps;
    for (int i = 0, n = static_cast<int>(pick(1, 6)); i < n; ++i) {
      ps.push_back({"p" + std::to_string(i), pick(1'000, 40'000), pick(0, 1000), pick(0, 2) == 0});
      write(root, ps.back().id, ps.back().size);
    }
    catalog.rescan();
    for (const auto& p : ps) {
      catalog.touch(p.id, p.used);
      if (p.bound) catalog.bind(p.id);
    }
    const auto budget = pick(0, 120'000);
    auto evicted = catalog.evict_unused(budget, 2000);
    std::set<std::string> gone(evicted.begin(), evicted.end());
    std::int64_t idle_left = 0, newest_gone = -1, oldest_kept = 1 << 30;
    for (const auto& p : ps) {
      if (p.bound) {
        bound_evicted += gone.count(p.id) || !fs::exists(root / p.id);
        continue;
      }
      if (gone.count(p.id)) {
        newest_gone = std::max(newest_gone, p.used);
      } else {
        idle_left += p.size;
        oldest_kept = std::min(oldest_kept, p.used);
      }
    }
    over_budget += idle_left > budget;
    not_lru += newest_gone > oldest_kept;
    fs::remove_all(root);
  }
  return {base_ok && bound_evicted == 0 && over_budget == 0 && not_lru == 0,
          std::string("3x25 KB under 60000 B: ") + (base_ok ? "one LRU eviction" : "unexpected eviction set") +
              "; 1000 random scenarios: " + std::to_string(bound_evicted) + " bound evictions, " +
              std::to_string(over_budget) + " over budget, " + std::to_string(not_lru) + " out of LRU order"};
}

Verdict peer_chain() {
  Scratch dir("chain");
  auto clock = std::make_shared<ManualClock>(kT0);
  auto capture = std::make_shared<Capture>();
  auto quiet = std::make_shared<Capture>();

  NodeConfig ca, cb, cc;
  ca.node_id = "a";
  ca.data_dir = dir.path() / "a";
  cb.node_id = "b";
  cc.node_id = "c";
  fs::create_directories(*ca.data_dir);
  Node a(ca, clock, quiet), b(cb, clock, quiet), c(cc, clock, capture);

  const WindowSpec window{WindowKind::Time, 10'000};
  a.activate(sim_vsd("src", {{"seed", "3"}, {"kind", "seeded_noise"}, {"amplitude", "4"}, {"offset", "18"}}, 1000,
                     10'000, window, 600));
  NodeServer sa(a);
  sa.start();
  auto relay = sim_vsd("relay", {}, 1000, 10'000, window, 600);
  b.peer_stream(sa.base_url(), "src", relay);
  NodeServer sb(b);
  sb.start();
  auto tail = sim_vsd("tail", {}, 1000, 10'000, window, 600);
  c.peer_stream(sb.base_url(), "relay", tail);
  c.create_subscription(push("tail", "http://127.0.0.1:9/unused", 10'000, kT0 + 300'000, PayloadKind::Processed));

  for (auto t = kT0; t <= kT0 + 300'000; t += 1000) {
    a.advance_to(t);
    b.advance_to(t);
    c.advance_to(t);
  }
  sb.stop();
  sa.stop();

  // oracle straight from A's journal
  std::vector<std::pair<std::int64_t, double>> journal;
  {
    const Schema schema{{"temp", ValueType::Double, "celsius"}};
    std::ifstream in(*ca.data_dir / "src.jsonl");
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      auto j = parse_json(line);
      journal.emplace_back(j["timestamp"].get<std::int64_t>(), j["values"]["temp"].get<double>());
    }
  }
  auto deliveries = capture->deliveries();
  std::size_t compared = 0, off = 0;
  double worst = 0.0;
  for (const auto& d : deliveries) {
    auto r = window_result_from_json(d.payload["result"]);
    long double sum = 0;
    std::int64_t n = 0;
    for (const auto& [ts, v] : journal) {
      if (ts > r.window_end - window.size && ts <= r.window_end) {
        sum += v;
        ++n;
      }
    }
    const auto* got = r.find("temp.avg");
    if (n == 0 || !got || !*got || r.sample_count != n) {
      ++off;
      continue;
    }
    const double want = static_cast<double>(sum / n);
    const double rel = std::abs(std::get<double>(**got) - want) / std::max(1.0, std::abs(want));
    worst = std::max(worst, rel);
    if (rel > 1e-9) ++off;
    ++compared;
  }
  return {deliveries.size() == 30 && compared == 30 && off == 0 && journal.size() == 301,
          std::to_string(deliveries.size()) + " averages from C against " + std::to_string(journal.size()) +
              " journaled samples at A, " + std::to_string(off) + " off, worst rel err " + fmt("%.3g", worst)};
}

Verdict determinism() {
  Scenario s;
  s.axis = BenchAxis::Sensors;
  s.points = {1, 4, 8};
  s.duration_s = 120;
  s.sampling_ms = 1000;
  s.clock = BenchClock::Mock;
  s.queries = 5;
  s.seed = 17;
  s.sim_kind = "seeded_noise";
  s.query_interval_ms = 20'000;
  s.cost_model = {1.0, 10.0, 0.01};
  auto columns = [&] {
    std::ostringstream csv;
    write_csv(csv, run_bench(s));
    std::istringstream in(csv.str());
    std::string out, line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      std::istringstream cells(line);
      std::string point, samples, messages, bytes;
      std::getline(cells, point, ',');
      std::getline(cells, samples, ',');
      std::getline(cells, messages, ',');
      std::getline(cells, bytes, ',');
      out += samples + "," + messages + "," + bytes + ";";
    }
    return out;
  };
  const auto first = columns();
  const auto second = columns();
  return {first == second && first.find(",0,") == std::string::npos,
          (first == second ? "identical" : "different") + std::string(" columns (samples,messages,bytes): ") + first};
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"mosden acceptance run"};
  std::vector<int> only;
  app.add_option("--only", only, "criteria to run (default: all)");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"aggregation oracle", aggregation_oracle},
      {"batching reduction", batching},
      {"decision rule", decision_rule},
      {"scaling 13 sensors x 30 subscriptions", scaling},
      {"push/pull round trip", push_pull_round_trip},
      {"subscription expiry", expiry},
      {"plugin conformance", plugin_conformance},
      {"eviction", eviction},
      {"peer chain", peer_chain},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), number) == only.end()) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("CRITERION %2d %-40s %s  %s\n", number, criteria[i].first.c_str(), v.pass ? "PASS" : "FAIL",
                v.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
