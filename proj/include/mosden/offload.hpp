#pragma once

// Synthetic energy model for the "process locally or forward raw" choice.
//
// The model is affine and unitless:
//   local   = c_proc_per_sample * n + c_radio_wake + c_per_byte * aggregate_bytes
//   forward = n * (c_radio_wake + c_per_byte * raw_bytes_per_sample)
// and local processing wins only when it is strictly cheaper.

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mosden/model.hpp"

namespace mosden {

enum class Strategy { ProcessLocally, ForwardRaw };

std::string_view to_string(Strategy s);

/// Processing (`e_alpha`) and communication (`e_beta`) energy of one strategy
/// or of a realized run. `breakdown` components sum to `total()`.
struct EnergyEstimate {
  double e_alpha = 0.0;
  double e_beta = 0.0;
  std::vector<std::pair<std::string, double>> breakdown;

  double total() const { return e_alpha + e_beta; }
  double component(std::string_view name) const;
};

Json to_json(const EnergyEstimate& e);

/// Plan-level comparison: `e_alpha` is the full cost of processing locally
/// and sending one aggregate, `e_beta` the cost of forwarding every raw sample.
struct Estimate {
  double e_alpha = 0.0;
  double e_beta = 0.0;
};

Estimate estimate(const CostParameters& params, std::int64_t n_samples, std::int64_t raw_bytes_per_sample,
                  std::int64_t aggregate_bytes);

/// ProcessLocally iff e_alpha < e_beta; equality goes to ForwardRaw.
Strategy decide(double e_alpha, double e_beta);

struct TransmissionPlan {
  Strategy strategy = Strategy::ForwardRaw;
  EnergyEstimate process_locally;
  EnergyEstimate forward_raw;
};

TransmissionPlan plan(const CostParameters& params, std::int64_t n_samples, std::int64_t raw_bytes_per_sample,
                      std::int64_t aggregate_bytes);

struct CounterSnapshot {
  std::uint64_t samples_processed = 0;
  std::uint64_t messages_sent = 0;
  std::uint64_t bytes_sent = 0;
};

/// Reads the totals out of a node /metrics document.
CounterSnapshot counters_from_metrics(const Json& metrics);

/// Realized energy of a run from its counters.
EnergyEstimate account(const CounterSnapshot& counters, const CostParameters& params);
EnergyEstimate account(const Json& metrics, const CostParameters& params);

} // namespace mosden
