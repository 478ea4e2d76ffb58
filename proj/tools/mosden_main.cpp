// mosden node | registry | bench

#include <csignal>
#include <iostream>
#include <pthread.h>

#include <CLI11.hpp>

#include "mosden/bench.hpp"
#include "mosden/errors.hpp"
#include "mosden/log.hpp"
#include "mosden/node.hpp"
#include "mosden/registry.hpp"
#include "mosden/server.hpp"

namespace {

sigset_t shutdown_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  return set;
}

void wait_for_shutdown(const sigset_t& set) {
  int sig = 0;
  sigwait(&set, &sig);
  mosden::log().info("received signal {}, shutting down", sig);
}

std::pair<std::string, int> split_listen(const std::string& listen) {
  auto colon = listen.rfind(':');
  if (colon == std::string::npos) throw mosden::ConfigError("--listen must be host:port");
  try {
    return {listen.substr(0, colon), std::stoi(listen.substr(colon + 1))};
  } catch (const std::exception&) {
    throw mosden::ConfigError("bad port in --listen " + listen);
  }
}

int run_node(const std::string& config_path, const sigset_t& signals) {
  auto config = mosden::load_node_config(config_path);
  mosden::Node node(config);
  if (config.vsd_dir) {
    auto failures = node.activate_dir(*config.vsd_dir);
    if (!failures.empty()) std::cerr << failures.size() << " virtual sensor(s) failed to activate\n";
  }
  mosden::NodeServer server(node);
  server.start();
  node.start();
  std::cout << "node " << config.node_id << " serving on " << server.base_url() << std::endl;
  wait_for_shutdown(signals);
  node.stop();
  server.stop();
  return 0;
}

int run_registry(const std::string& listen, const std::string& data_dir, const sigset_t& signals) {
  auto [host, port] = split_listen(listen);
  mosden::Registry registry{std::filesystem::path(data_dir)};
  mosden::RegistryServer server(registry);
  server.start(host, port);
  std::cout << "registry serving on " << server.base_url() << std::endl;
  wait_for_shutdown(signals);
  server.stop();
  return 0;
}

int run_bench(const std::string& scenario_path, const std::string& out) {
  auto scenario = mosden::load_scenario(scenario_path);
  auto rows = mosden::run_bench(scenario);
  std::cout << mosden::emit_report(rows, out);
  for (const auto& r : rows) {
    if (r.status != "ok") return 2;
  }
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"MOSDEN edge middleware"};
  app.require_subcommand(1);

  std::string config_path;
  auto* node_cmd = app.add_subcommand("node", "Run a middleware node");
  node_cmd->add_option("--config", config_path, "Node configuration (JSON)")->required()->check(CLI::ExistingFile);

  std::string listen = "127.0.0.1:8700";
  std::string data_dir;
  auto* registry_cmd = app.add_subcommand("registry", "Run the sensor registry");
  registry_cmd->add_option("--listen", listen, "host:port to listen on");
  registry_cmd->add_option("--data", data_dir, "Directory for the snapshot and result logs")->required();

  std::string scenario_path;
  std::string out = "bench.csv";
  auto* bench_cmd = app.add_subcommand("bench", "Run a benchmark scenario");
  bench_cmd->add_option("--scenario", scenario_path, "Scenario (JSON)")->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--out", out, "CSV report path");

  CLI11_PARSE(app, argc, argv);

  // Block shutdown signals before any thread starts so sigwait sees them.
  const auto signals = shutdown_signals();
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  try {
    if (*node_cmd) return run_node(config_path, signals);
    if (*registry_cmd) return run_registry(listen, data_dir, signals);
    if (*bench_cmd) return run_bench(scenario_path, out);
  } catch (const mosden::Error& e) {
    std::cerr << "error: " << e.code() << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
