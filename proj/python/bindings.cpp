// Python bindings. Documents cross the boundary as JSON text; the mosden
// package decodes them.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <optional>
#include <string>

#include "mosden/bench.hpp"
#include "mosden/errors.hpp"
#include "mosden/node.hpp"
#include "mosden/offload.hpp"
#include "mosden/registry.hpp"
#include "mosden/server.hpp"
#include "mosden/sim.hpp"
#include "mosden/stream.hpp"

namespace py = pybind11;
using mosden::Json;

namespace {

std::string evaluate_window(const std::string& schema_json, const std::string& elements_json,
                            const std::string& window_param, const std::string& aggs_json, std::int64_t now) {
  const auto schema = mosden::schema_from_json(mosden::parse_json(schema_json));
  std::vector<mosden::StreamElement> elements;
  for (const auto& e : mosden::parse_json(elements_json)) elements.push_back(mosden::element_from_json(schema, e));
  const auto window = mosden::parse_window_param(window_param);
  const auto aggs = mosden::aggregations_from_json(mosden::parse_json(aggs_json));
  mosden::check_aggregations(schema, aggs);
  auto selection = mosden::select_window(elements, window, now);
  return mosden::to_json(mosden::aggregate("", schema, selection, aggs, now)).dump();
}

std::string plan(const std::string& cost_json, std::int64_t n, std::int64_t raw_bytes, std::int64_t agg_bytes) {
  const auto params = mosden::cost_parameters_from_json(mosden::parse_json(cost_json));
  const auto p = mosden::plan(params, n, raw_bytes, agg_bytes);
  Json j = Json::object();
  j["strategy"] = mosden::to_string(p.strategy);
  j["process_locally"] = mosden::to_json(p.process_locally);
  j["forward_raw"] = mosden::to_json(p.forward_raw);
  return j.dump();
}

std::string sim_readings(const std::string& config_json, std::int64_t count) {
  mosden::ConfigMap config;
  const auto doc = mosden::parse_json(config_json);
  for (const auto& [k, v] : doc.items()) {
    config[k] = v.is_string() ? v.get<std::string>() : v.dump();
  }
  const auto profile = mosden::sim_profile_from_config(config);
  const auto schema = profile.schema();
  Json arr = Json::array();
  for (std::int64_t i = 0; i < count; ++i) arr.push_back(mosden::element_to_json(schema, mosden::next_value(profile, i)));
  return arr.dump();
}

/// A node with its HTTP front end. A manual clock is used when `start_ms`
/// is given; such nodes are driven with advance_to().
class PyNode {
public:
  PyNode(const std::string& config_json, std::optional<std::int64_t> start_ms) {
    auto config = mosden::node_config_from_json(mosden::parse_json(config_json));
    std::shared_ptr<mosden::Clock> clock = mosden::system_clock();
    if (start_ms) clock = std::make_shared<mosden::ManualClock>(*start_ms);
    node_ = std::make_unique<mosden::Node>(std::move(config), clock);
    server_ = std::make_unique<mosden::NodeServer>(*node_);
  }
  ~PyNode() { close(); }

  void activate(const std::string& vsd_json) { node_->activate(mosden::parse_vsd(vsd_json)); }
  void deactivate(const std::string& name) { node_->deactivate(name); }
  std::string serve() {
    server_->start();
    return server_->base_url();
  }
  void start() { node_->start(); }
  void advance_to(std::int64_t t) { node_->advance_to(t); }
  std::string sensors() const {
    Json arr = Json::array();
    for (const auto& d : node_->list_sensors()) arr.push_back(mosden::to_json(d));
    return arr.dump();
  }
  std::string pull(const std::string& name, const std::string& mode, std::optional<std::string> window,
                   std::optional<std::uint64_t> since_seq) const {
    mosden::PullRequest r;
    r.mode = mosden::pull_mode_from_string(mode);
    if (window) r.window = mosden::parse_window_param(*window);
    r.since_seq = since_seq;
    return node_->pull_data(name, r).dump();
  }
  std::string subscribe(const std::string& sub_json) {
    return mosden::to_json(node_->create_subscription(mosden::subscription_from_json(mosden::parse_json(sub_json))))
        .dump();
  }
  std::string metrics() const { return node_->metrics().dump(); }
  std::int64_t now_ms() const { return node_->clock()->now_ms(); }
  void close() {
    if (server_) server_->stop();
    if (node_) node_->stop();
  }

private:
  std::unique_ptr<mosden::Node> node_;
  std::unique_ptr<mosden::NodeServer> server_;
};

class PyRegistry {
public:
  explicit PyRegistry(std::optional<std::string> data_dir) {
    std::optional<std::filesystem::path> dir;
    if (data_dir) dir = *data_dir;
    registry_ = std::make_unique<mosden::Registry>(dir);
    server_ = std::make_unique<mosden::RegistryServer>(*registry_);
  }
  ~PyRegistry() { close(); }

  std::string serve(const std::string& host, int port) {
    server_->start(host, port);
    return server_->base_url();
  }
  std::string records() const {
    Json arr = Json::array();
    for (const auto& r : registry_->records()) arr.push_back(mosden::to_json(r));
    return arr.dump();
  }
  std::string dispatch(const std::string& request_json) {
    auto request = mosden::user_request_from_json(mosden::parse_json(request_json));
    return mosden::to_json(registry_->dispatch(std::move(request), server_->ingest_url())).dump();
  }
  std::string results(const std::string& id) const {
    Json arr = Json::array();
    for (auto& r : registry_->results(id)) arr.push_back(std::move(r));
    return arr.dump();
  }
  void close() {
    if (server_) server_->stop();
  }

private:
  std::unique_ptr<mosden::Registry> registry_;
  std::unique_ptr<mosden::RegistryServer> server_;
};

std::string run_bench(const std::string& scenario_json) {
  const auto scenario = mosden::scenario_from_json(mosden::parse_json(scenario_json));
  std::vector<mosden::BenchRow> rows;
  {
    py::gil_scoped_release release;
    rows = mosden::run_bench(scenario);
  }
  std::ostringstream csv;
  mosden::write_csv(csv, rows);
  return csv.str();
}

} // namespace

PYBIND11_MODULE(_mosden, m) {
  m.doc() = "MOSDEN edge middleware core";

  static py::exception<mosden::Error> error(m, "MosdenError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const mosden::Error& e) {
      py::set_error(error, (e.code() + ": " + e.what()).c_str());
    }
  });

  m.def("canonical_vsd", [](const std::string& text) { return mosden::serialize_vsd(mosden::parse_vsd(text)); },
        py::arg("document"));
  m.def("evaluate_window", &evaluate_window, py::arg("schema"), py::arg("elements"), py::arg("window"),
        py::arg("aggregations"), py::arg("now"));
  m.def("decide", [](double a, double b) { return std::string(mosden::to_string(mosden::decide(a, b))); },
        py::arg("e_alpha"), py::arg("e_beta"));
  m.def("plan", &plan, py::arg("cost_model"), py::arg("n_samples"), py::arg("raw_bytes_per_sample"),
        py::arg("aggregate_bytes"));
  m.def("sim_readings", &sim_readings, py::arg("config"), py::arg("count"));
  m.def("run_bench", &run_bench, py::arg("scenario"));
  m.def("bench_csv_header", &mosden::bench_csv_header);

  py::class_<PyNode>(m, "Node")
      .def(py::init<const std::string&, std::optional<std::int64_t>>(), py::arg("config"),
           py::arg("start_ms") = py::none())
      .def("activate", &PyNode::activate, py::call_guard<py::gil_scoped_release>())
      .def("deactivate", &PyNode::deactivate, py::call_guard<py::gil_scoped_release>())
      .def("serve", &PyNode::serve)
      .def("start", &PyNode::start)
      .def("advance_to", &PyNode::advance_to, py::call_guard<py::gil_scoped_release>())
      .def("sensors", &PyNode::sensors)
      .def("pull", &PyNode::pull, py::arg("vs_name"), py::arg("mode") = "latest", py::arg("window") = py::none(),
           py::arg("since_seq") = py::none())
      .def("subscribe", &PyNode::subscribe, py::call_guard<py::gil_scoped_release>())
      .def("metrics", &PyNode::metrics)
      .def("now_ms", &PyNode::now_ms)
      .def("close", &PyNode::close, py::call_guard<py::gil_scoped_release>());

  py::class_<PyRegistry>(m, "Registry")
      .def(py::init<std::optional<std::string>>(), py::arg("data_dir") = py::none())
      .def("serve", &PyRegistry::serve, py::arg("host") = "127.0.0.1", py::arg("port") = 0)
      .def("records", &PyRegistry::records)
      .def("dispatch", &PyRegistry::dispatch, py::call_guard<py::gil_scoped_release>())
      .def("results", &PyRegistry::results)
      .def("close", &PyRegistry::close, py::call_guard<py::gil_scoped_release>());
}
