#pragma once

// Experiment runner: boots a node and a registry on loopback per point,
// applies sensor or query load and reports counters, latencies and energy.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mosden/model.hpp"
#include "mosden/offload.hpp"

namespace mosden {

enum class BenchAxis { Sensors, Queries };
enum class BenchClock { Real, Mock };

struct Scenario {
  BenchAxis axis = BenchAxis::Sensors;
  std::vector<std::int64_t> points;
  double duration_s = 60.0;
  std::int64_t sampling_ms = 1000;
  CostParameters cost_model;
  BenchClock clock = BenchClock::Real;
  std::int64_t seed = 1;
  /// Load held fixed on the other axis.
  std::int64_t sensors = 1;
  std::int64_t queries = 0;
  std::int64_t query_interval_ms = 60'000;
  PayloadKind payload = PayloadKind::Processed;
  WindowSpec window{WindowKind::Time, 60'000};
  std::vector<Aggregation> aggregations;       ///< default: avg of the sim field
  std::optional<std::int64_t> emit_interval_ms; ///< default: query_interval_ms
  std::string sim_kind = "sine";
  std::int64_t healthz_probe_ms = 100;          ///< real clock only
  std::optional<std::filesystem::path> plugin_command; ///< subprocess reference plugin
};

/// Throws ScenarioError.
Scenario scenario_from_json(const Json& j);
Scenario load_scenario(const std::filesystem::path& path);

struct BenchRow {
  std::int64_t point = 0;
  std::uint64_t samples_ok = 0;
  std::uint64_t messages_sent = 0;
  std::uint64_t bytes_sent = 0;
  double l1_mean_ms = 0, l1_p95_ms = 0;
  double l2_mean_ms = 0, l2_p95_ms = 0;
  double e_alpha_realized = 0, e_beta_realized = 0;
  double wall_cpu_ms = 0;
  std::string status = "ok";
  /// Deliveries stored by the registry.
  std::uint64_t ingested = 0;
  /// Dropped deliveries, failed dispatches and sent-but-not-ingested messages.
  std::uint64_t losses = 0;
  double healthz_p95_ms = 0;
  Strategy verdict = Strategy::ForwardRaw;
};

BenchRow run_point(const Scenario& s, std::int64_t point);
std::vector<BenchRow> run_bench(const Scenario& s);

/// Fixed CSV header line (no trailing newline).
std::string bench_csv_header();
void write_csv(std::ostream& out, const std::vector<BenchRow>& rows);
/// Writes the CSV and returns the summary text. Throws IoError.
std::string emit_report(const std::vector<BenchRow>& rows, const std::filesystem::path& csv_path);
std::string summary_text(const std::vector<BenchRow>& rows);

} // namespace mosden
