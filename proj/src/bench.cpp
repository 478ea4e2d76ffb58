#include "mosden/bench.hpp"

#include <sys/resource.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <thread>

#include "mosden/errors.hpp"
#include "mosden/histogram.hpp"
#include "mosden/log.hpp"
#include "mosden/net.hpp"
#include "mosden/node.hpp"
#include "mosden/registry.hpp"
#include "mosden/server.hpp"
#include "mosden/sim.hpp"

namespace fs = std::filesystem;

namespace mosden {

namespace {

constexpr std::int64_t kMockEpochMs = 1'700'000'000'000;

double cpu_ms() {
  rusage ru{};
  getrusage(RUSAGE_SELF, &ru);
  auto ms = [](const timeval& tv) { return static_cast<double>(tv.tv_sec) * 1e3 + static_cast<double>(tv.tv_usec) / 1e3; };
  return ms(ru.ru_utime) + ms(ru.ru_stime);
}

std::int64_t get_int(const Json& j, const char* key, std::int64_t fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_number_integer()) throw ScenarioError(std::string(key) + " must be an integer");
  return it->get<std::int64_t>();
}

std::string fmt(double v, int precision = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

} // namespace

Scenario scenario_from_json(const Json& j) {
  if (!j.is_object()) throw ScenarioError("scenario must be a JSON object");
  static const std::vector<std::string> known = {
      "axis",     "points",       "duration_s", "sampling_ms",       "cost_model", "clock",
      "seed",     "sensors",      "queries",    "query_interval_ms", "payload",    "window",
      "aggregations", "emit_interval_ms", "sim_kind", "healthz_probe_ms", "plugin_command", "description"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ScenarioError("unknown scenario key '" + key + "'");
  }
  Scenario s;
  try {
    const auto axis = j.at("axis").get<std::string>();
    if (axis == "sensors") s.axis = BenchAxis::Sensors;
    else if (axis == "queries") s.axis = BenchAxis::Queries;
    else throw ScenarioError("axis must be \"sensors\" or \"queries\"");
    s.points = j.at("points").get<std::vector<std::int64_t>>();
    s.duration_s = j.at("duration_s").get<double>();
    s.sampling_ms = get_int(j, "sampling_ms", 1000);
    if (auto it = j.find("cost_model"); it != j.end()) s.cost_model = cost_parameters_from_json(*it, "/cost_model");
    const auto clock = j.value("clock", std::string("real"));
    if (clock == "real") s.clock = BenchClock::Real;
    else if (clock == "mock") s.clock = BenchClock::Mock;
    else throw ScenarioError("clock must be \"real\" or \"mock\"");
    s.seed = get_int(j, "seed", 1);
    s.sensors = get_int(j, "sensors", 1);
    s.queries = get_int(j, "queries", 0);
    s.query_interval_ms = get_int(j, "query_interval_ms", 60'000);
    const auto payload = j.value("payload", std::string("processed"));
    if (payload == "processed") s.payload = PayloadKind::Processed;
    else if (payload == "raw") s.payload = PayloadKind::Raw;
    else throw ScenarioError("payload must be \"processed\" or \"raw\"");
    if (auto it = j.find("window"); it != j.end()) s.window = window_from_json(*it, "/window");
    if (auto it = j.find("aggregations"); it != j.end()) s.aggregations = aggregations_from_json(*it, "/aggregations");
    if (auto it = j.find("emit_interval_ms"); it != j.end()) s.emit_interval_ms = it->get<std::int64_t>();
    s.sim_kind = j.value("sim_kind", std::string("sine"));
    s.healthz_probe_ms = get_int(j, "healthz_probe_ms", 100);
    if (auto it = j.find("plugin_command"); it != j.end()) s.plugin_command = fs::path(it->get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ScenarioError(std::string("bad scenario: ") + e.what());
  } catch (const ScenarioError&) {
    throw;
  } catch (const Error& e) {
    throw ScenarioError(std::string("bad scenario: ") + e.what());
  }
  if (s.points.empty()) throw ScenarioError("points must be non-empty");
  for (auto p : s.points) {
    if (p < 0) throw ScenarioError("points must be non-negative");
  }
  if (!(s.duration_s > 0)) throw ScenarioError("duration_s must be > 0");
  if (s.sampling_ms <= 0 || s.query_interval_ms <= 0) throw ScenarioError("intervals must be > 0");
  if (s.sensors < 1 && s.axis == BenchAxis::Queries) throw ScenarioError("the queries axis needs at least one sensor");
  return s;
}

Scenario load_scenario(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot read scenario " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return scenario_from_json(parse_json(text));
  } catch (const Error& e) {
    throw ScenarioError(path.string() + ": " + e.what());
  }
}

BenchRow run_point(const Scenario& s, std::int64_t point) {
  BenchRow row;
  row.point = point;
  const double cpu_start = cpu_ms();
  std::optional<fs::path> plugin_dir;
  try {
    const std::int64_t n_sensors = s.axis == BenchAxis::Sensors ? point : s.sensors;
    const std::int64_t n_queries = s.axis == BenchAxis::Queries ? point : s.queries;
    const auto duration_ms = static_cast<std::int64_t>(s.duration_s * 1000.0);
    std::shared_ptr<Clock> clock;
    if (s.clock == BenchClock::Mock) clock = std::make_shared<ManualClock>(kMockEpochMs);
    else clock = system_clock();

    Registry registry(std::nullopt, clock);
    RegistryServer registry_server(registry);
    registry_server.start("127.0.0.1", 0);

    NodeConfig cfg;
    cfg.node_id = "bench";
    cfg.cost_model = s.cost_model;
    cfg.registry_url = registry_server.base_url();
    cfg.heartbeat_ms = 10'000;
    if (s.plugin_command) {
      plugin_dir = fs::temp_directory_path() / ("mosden-bench-" + std::to_string(::getpid()) + "-" + std::to_string(point));
      fs::create_directories(*plugin_dir / "sim");
      write_sim_plugin_manifest(*plugin_dir / "sim", *s.plugin_command);
      cfg.plugin_dir = plugin_dir;
    }
    Node node(cfg, clock);
    NodeServer node_server(node);
    node_server.start();

    const auto emit = s.emit_interval_ms.value_or(s.query_interval_ms);
    std::vector<Aggregation> aggs = s.aggregations;
    if (aggs.empty()) aggs.push_back(Aggregation{"temp", AggFn::Avg});
    std::int64_t history = 64;
    if (s.window.kind == WindowKind::Count) history = std::max(history, s.window.size);
    else history = std::max(history, s.window.size / s.sampling_ms + 2);
    for (std::int64_t i = 0; i < n_sensors; ++i) {
      SimProfile p = sim_profile_from_config(ConfigMap{{"seed", std::to_string(s.seed + i)}, {"kind", s.sim_kind}});
      p.sampling_ms = s.sampling_ms;
      p.offset = 20.0;
      p.amplitude = 5.0;
      VirtualSensorDefinition vsd;
      vsd.name = "vs" + std::to_string(i);
      vsd.binding = make_reference_binding(p, s.plugin_command ? Transport::Subprocess : Transport::InProcess,
                                           s.plugin_command.value_or(fs::path()));
      vsd.binding.config["type"] = "temperature";
      vsd.sampling_interval_ms = s.sampling_ms;
      vsd.window = s.window;
      vsd.aggregations = aggs;
      vsd.emit_interval_ms = emit;
      vsd.history_size = history;
      node.activate(vsd);
    }
    if (n_queries > 0 && !node.register_with_registry()) throw RemoteUnreachable("node could not register");

    std::vector<std::string> request_ids;
    for (std::int64_t q = 0; q < n_queries; ++q) {
      UserRequest r;
      r.id = "q" + std::to_string(q);
      r.criteria["vs_name"] = "vs" + std::to_string(q % n_sensors);
      r.interval_ms = s.query_interval_ms;
      r.duration_ms = duration_ms;
      r.payload = s.payload;
      try {
        auto result = registry.dispatch(r, registry_server.ingest_url());
        row.losses += result.failures.size();
        request_ids.push_back(result.request_id);
      } catch (const NoMatch&) {
        ++row.losses;
      }
    }

    LatencyHistogram healthz;
    if (s.clock == BenchClock::Mock) {
      node.advance_to(kMockEpochMs + duration_ms);
    } else {
      node.start();
      const auto url = parse_url(node_server.base_url());
      const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(duration_ms);
      while (std::chrono::steady_clock::now() < deadline) {
        const auto t0 = std::chrono::steady_clock::now();
        auto res = http_get(url, "/healthz");
        const auto t1 = std::chrono::steady_clock::now();
        if (res && res->status == 200) {
          healthz.record_us(std::chrono::duration_cast<std::chrono::microseconds>(t1 - t0).count());
        } else {
          healthz.record_us(std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::seconds(10)).count());
        }
        std::this_thread::sleep_until(std::min(deadline, t1 + std::chrono::milliseconds(s.healthz_probe_ms)));
      }
      node.stop();
    }

    const auto metrics = node.metrics();
    row.samples_ok = metrics.at("samples_ok").get<std::uint64_t>();
    row.messages_sent = metrics.at("messages_sent").get<std::uint64_t>();
    row.bytes_sent = metrics.at("bytes_sent").get<std::uint64_t>();
    row.l1_mean_ms = metrics.at("l1_ms").at("mean_ms").get<double>();
    row.l1_p95_ms = metrics.at("l1_ms").at("p95_ms").get<double>();
    row.l2_mean_ms = metrics.at("l2_ms").at("mean_ms").get<double>();
    row.l2_p95_ms = metrics.at("l2_ms").at("p95_ms").get<double>();
    const auto energy = account(metrics, s.cost_model);
    row.e_alpha_realized = energy.e_alpha;
    row.e_beta_realized = energy.e_beta;
    row.healthz_p95_ms = healthz.summary().p95_ms;
    for (const auto& id : request_ids) row.ingested += registry.results(id).size();
    row.losses += metrics.at("delivery_drops").get<std::uint64_t>();
    if (row.messages_sent > row.ingested) row.losses += row.messages_sent - row.ingested;

    // Verdict for one subscriber interval of one sensor.
    std::int64_t raw_bytes = 0;
    if (n_sensors > 0) {
      if (auto store = node.store("vs0"); store && store->latest()) {
        raw_bytes = static_cast<std::int64_t>(serialize_stream_element(store->schema(), *store->latest()).size());
      }
    }
    const std::int64_t agg_bytes =
        row.messages_sent > 0 ? static_cast<std::int64_t>(row.bytes_sent / row.messages_sent) : raw_bytes;
    const std::int64_t n = std::max<std::int64_t>(1, s.query_interval_ms / s.sampling_ms);
    row.verdict = plan(s.cost_model, n, raw_bytes, agg_bytes).strategy;
  } catch (const std::exception& e) {
    row.status = std::string("error: ") + e.what();
    log().error("bench point {} failed: {}", point, e.what());
  }
  if (plugin_dir) {
    std::error_code ec;
    fs::remove_all(*plugin_dir, ec);
  }
  row.wall_cpu_ms = cpu_ms() - cpu_start;
  return row;
}

std::vector<BenchRow> run_bench(const Scenario& s) {
  std::vector<BenchRow> rows;
  for (auto p : s.points) {
    log().info("bench point {}", p);
    rows.push_back(run_point(s, p));
  }
  return rows;
}

std::string bench_csv_header() {
  return "point,samples_ok,messages_sent,bytes_sent,l1_mean_ms,l1_p95_ms,l2_mean_ms,l2_p95_ms,"
         "e_alpha_realized,e_beta_realized,wall_cpu_ms,status,ingested,losses,healthz_p95_ms";
}

void write_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << bench_csv_header() << "\r\n";
  for (const auto& r : rows) {
    out << r.point << ',' << r.samples_ok << ',' << r.messages_sent << ',' << r.bytes_sent << ','
        << fmt(r.l1_mean_ms) << ',' << fmt(r.l1_p95_ms) << ',' << fmt(r.l2_mean_ms) << ',' << fmt(r.l2_p95_ms) << ','
        << fmt(r.e_alpha_realized, 6) << ',' << fmt(r.e_beta_realized, 6) << ',' << fmt(r.wall_cpu_ms, 1) << ','
        << csv_field(r.status) << ',' << r.ingested << ',' << r.losses << ',' << fmt(r.healthz_p95_ms) << "\r\n";
  }
}

std::string summary_text(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  out << "loopback only; no network variability is modeled. CPU is process CPU time in ms.\n";
  for (const auto& r : rows) {
    out << "point " << r.point << ": " << r.status << ", samples_ok=" << r.samples_ok
        << ", messages_sent=" << r.messages_sent << ", p95 L2=" << fmt(r.l2_p95_ms) << " ms"
        << ", losses=" << r.losses << ", decide -> " << to_string(r.verdict) << '\n';
  }
  return out.str();
}

std::string emit_report(const std::vector<BenchRow>& rows, const fs::path& csv_path) {
  if (rows.empty()) throw ScenarioError("no rows to report");
  std::ofstream out(csv_path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot write " + csv_path.string());
  write_csv(out, rows);
  out.flush();
  if (!out) throw IoError("write to " + csv_path.string() + " failed");
  return summary_text(rows);
}

} // namespace mosden
