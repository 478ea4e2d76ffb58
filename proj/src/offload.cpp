#include "mosden/offload.hpp"

#include "mosden/errors.hpp"

namespace mosden {

std::string_view to_string(Strategy s) {
  return s == Strategy::ProcessLocally ? "process_locally" : "forward_raw";
}

double EnergyEstimate::component(std::string_view name) const {
  for (const auto& [k, v] : breakdown) {
    if (k == name) return v;
  }
  return 0.0;
}

Json to_json(const EnergyEstimate& e) {
  Json breakdown = Json::object();
  for (const auto& [k, v] : e.breakdown) breakdown[k] = v;
  Json j = Json::object();
  j["e_alpha"] = e.e_alpha;
  j["e_beta"] = e.e_beta;
  j["breakdown"] = std::move(breakdown);
  return j;
}

namespace {

void check_inputs(const CostParameters& params, std::int64_t n, std::int64_t raw, std::int64_t agg) {
  params.validate();
  if (n < 0) throw NegativeInput("n_samples must be >= 0");
  if (raw < 0) throw NegativeInput("raw_bytes_per_sample must be >= 0");
  if (agg < 0) throw NegativeInput("aggregate_bytes must be >= 0");
}

EnergyEstimate make(double processing, double radio_wake, double bytes) {
  EnergyEstimate e;
  e.e_alpha = processing;
  e.e_beta = radio_wake + bytes;
  e.breakdown = {{"processing", processing}, {"radio_wake", radio_wake}, {"bytes", bytes}};
  return e;
}

} // namespace

TransmissionPlan plan(const CostParameters& params, std::int64_t n_samples, std::int64_t raw_bytes_per_sample,
                      std::int64_t aggregate_bytes) {
  check_inputs(params, n_samples, raw_bytes_per_sample, aggregate_bytes);
  const auto n = static_cast<double>(n_samples);
  TransmissionPlan p;
  p.process_locally = make(params.c_proc_per_sample * n, params.c_radio_wake,
                           params.c_per_byte * static_cast<double>(aggregate_bytes));
  p.forward_raw = make(0.0, n * params.c_radio_wake, n * params.c_per_byte * static_cast<double>(raw_bytes_per_sample));
  p.strategy = decide(p.process_locally.total(), p.forward_raw.total());
  return p;
}

Estimate estimate(const CostParameters& params, std::int64_t n_samples, std::int64_t raw_bytes_per_sample,
                  std::int64_t aggregate_bytes) {
  check_inputs(params, n_samples, raw_bytes_per_sample, aggregate_bytes);
  const auto n = static_cast<double>(n_samples);
  Estimate e;
  e.e_alpha = params.c_proc_per_sample * n + params.c_radio_wake +
              params.c_per_byte * static_cast<double>(aggregate_bytes);
  e.e_beta = n * (params.c_radio_wake + params.c_per_byte * static_cast<double>(raw_bytes_per_sample));
  return e;
}

Strategy decide(double e_alpha, double e_beta) {
  return e_alpha < e_beta ? Strategy::ProcessLocally : Strategy::ForwardRaw;
}

CounterSnapshot counters_from_metrics(const Json& metrics) {
  if (!metrics.is_object()) throw SchemaError("", "metrics must be an object");
  auto get = [&](const char* key) -> std::uint64_t {
    auto it = metrics.find(key);
    if (it == metrics.end() || !it->is_number_unsigned()) {
      throw SchemaError(std::string("/") + key, "expected a non-negative integer counter");
    }
    return it->get<std::uint64_t>();
  };
  CounterSnapshot c;
  c.samples_processed = get("samples_ok");
  c.messages_sent = get("messages_sent");
  c.bytes_sent = get("bytes_sent");
  return c;
}

EnergyEstimate account(const CounterSnapshot& counters, const CostParameters& params) {
  params.validate();
  return make(params.c_proc_per_sample * static_cast<double>(counters.samples_processed),
              params.c_radio_wake * static_cast<double>(counters.messages_sent),
              params.c_per_byte * static_cast<double>(counters.bytes_sent));
}

EnergyEstimate account(const Json& metrics, const CostParameters& params) {
  return account(counters_from_metrics(metrics), params);
}

} // namespace mosden
