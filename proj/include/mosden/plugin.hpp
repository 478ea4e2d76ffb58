#pragma once

// Plugin host: discovery, the three-call plugin contract, transports and the
// per-plugin lifecycle handle.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "mosden/clock.hpp"
#include "mosden/model.hpp"

namespace mosden {

/// Value of the manifest `action` key every plugin must declare.
inline constexpr std::string_view kPluginAction = "mosden.plugin.pick_plugin/1";
/// Value of the `protocol` key in the stdio handshake line.
inline constexpr std::string_view kPluginProtocol = "mosden-plugin/1";

struct PluginManifest {
  std::string plugin_id;
  std::string version;
  std::string action;
  std::int64_t size_bytes = 0;
  std::vector<std::string> categories;
  std::vector<std::string> command;
  std::filesystem::path dir; ///< directory holding plugin.json

  bool operator==(const PluginManifest&) const = default;
};

/// Throws SchemaError, or Error{"ActionMismatch"} for a wrong action string.
PluginManifest manifest_from_json(const Json& j, std::filesystem::path dir = {});
Json to_json(const PluginManifest& m);

struct DiscoveryWarning {
  std::filesystem::path path;
  std::string code; ///< e.g. ActionMismatch, SchemaError, DuplicatePluginId
  std::string detail;
};

struct DiscoveryResult {
  std::vector<PluginManifest> manifests;
  std::vector<DiscoveryWarning> warnings;
};

/// One manifest per subdirectory holding a valid plugin.json. Invalid ones
/// are skipped and reported; only an unreadable `plugin_dir` throws IoError.
DiscoveryResult discover_plugins(const std::filesystem::path& plugin_dir);

/// The contract every plugin implements, whichever transport carries it.
///
/// Implementations signal a rejected configuration by throwing
/// PluginRejectedConfig. get_readings may return nullopt when the plugin has
/// no new reading to offer.
class Plugin {
public:
  virtual ~Plugin() = default;
  virtual void set_configuration(const ConfigMap& config) = 0;
  virtual Schema get_data_structure() = 0;
  virtual std::optional<StreamElement> get_readings() = 0;
};

struct PluginContext {
  std::shared_ptr<Clock> clock = system_clock();
};

using PluginFactory = std::function<std::unique_ptr<Plugin>()>;
using InProcessFactory = std::function<std::unique_ptr<Plugin>(const PluginContext&)>;

struct HostOptions {
  std::chrono::milliseconds call_timeout{5000};
  int max_restarts = 3;
  std::int64_t restart_backoff_ms = 1000;
};

/// Runs every call of `inner` on a helper thread and gives up after
/// `timeout`. After a timeout the wrapper is poisoned: every further call
/// throws PluginTimeout and the stalled call is abandoned.
std::unique_ptr<Plugin> with_call_timeout(std::unique_ptr<Plugin> inner, std::chrono::milliseconds timeout);

// --- stdio transport ------------------------------------------------------

struct SubprocessOptions {
  std::vector<std::string> argv;
  std::filesystem::path working_dir;
  std::chrono::milliseconds call_timeout{5000};
};

/// Host side of the stdio protocol: launches the plugin process and proxies
/// the three calls as newline-delimited JSON. Throws PluginTimeout /
/// PluginProtocolError; a timed-out process is killed.
std::unique_ptr<Plugin> launch_subprocess_plugin(const SubprocessOptions& options);

/// Plugin side of the stdio protocol: writes the handshake, then answers
/// requests from `in` until EOF. Returns a process exit code.
int serve_stdio(Plugin& plugin, std::string_view plugin_id, std::string_view version, std::istream& in,
                std::ostream& out);

// --- lifecycle ------------------------------------------------------------

enum class PluginState { Configured, Initialized, Running, Stopped, Failed };

std::string_view to_string(PluginState s);
bool is_legal_transition(PluginState from, PluginState to);

/// Host-side handle for one activation of a plugin.
///
/// Legal transitions are configured -> initialized -> running -> stopped and
/// any -> failed. restart() replaces a failed instance with a fresh one and
/// walks it back to running; the schema fetched on first activation is
/// immutable and a restarted plugin must report the same one.
class PluginHandle {
public:
  PluginHandle(PluginBinding binding, PluginFactory factory, HostOptions options = {},
               std::shared_ptr<Clock> clock = system_clock());

  PluginHandle(const PluginHandle&) = delete;
  PluginHandle& operator=(const PluginHandle&) = delete;

  void set_configuration(const ConfigMap& config);
  const Schema& get_data_structure();
  void start();
  /// Validated reading. Throws SchemaViolation for a non-conforming element
  /// (the handle stays running), PluginTimeout / PluginProtocolError (the
  /// handle becomes failed), InvalidPluginState outside running.
  std::optional<StreamElement> get_readings();
  void stop();

  /// Configure, fetch schema and start in one go.
  void activate();
  bool can_restart() const { return restarts_ < options_.max_restarts; }
  void restart();

  PluginState state() const { return state_; }
  const Schema& schema() const { return schema_; }
  const PluginBinding& binding() const { return binding_; }
  std::int64_t last_used_ms() const { return last_used_; }
  int restarts() const { return restarts_; }
  const HostOptions& options() const { return options_; }

private:
  void transition(PluginState to);
  template <typename F>
  auto guarded(F&& call) -> decltype(call());

  PluginBinding binding_;
  PluginFactory factory_;
  HostOptions options_;
  std::shared_ptr<Clock> clock_;
  std::unique_ptr<Plugin> instance_;
  PluginState state_ = PluginState::Configured;
  bool configured_ = false;
  Schema schema_;
  bool schema_known_ = false;
  std::int64_t last_used_ = 0;
  int restarts_ = 0;
};

// --- catalog and eviction -------------------------------------------------

struct EvictionCandidate {
  std::string plugin_id;
  std::int64_t size_bytes = 0;
  std::int64_t last_used = 0;
  bool active = false;
};

/// Least-recently-used non-active plugins to drop until the non-active
/// footprint fits `budget_bytes`, in eviction order.
std::vector<std::string> select_evictions(std::vector<EvictionCandidate> candidates, std::int64_t budget_bytes);

/// Table of known plugins: on-disk manifests plus in-process factories,
/// with LRU/binding bookkeeping. Thread-safe.
class PluginCatalog {
public:
  explicit PluginCatalog(std::optional<std::filesystem::path> plugin_dir = std::nullopt,
                         std::shared_ptr<Clock> clock = system_clock());

  DiscoveryResult rescan();
  /// Copies a plugin directory into plugin_dir, rescans, then enforces
  /// `budget_bytes` if given.
  PluginManifest install(const std::filesystem::path& source_dir, std::optional<std::int64_t> budget_bytes);

  void register_in_process(const std::string& plugin_id, InProcessFactory factory);

  std::optional<PluginManifest> manifest(const std::string& plugin_id) const;
  std::vector<PluginManifest> manifests() const;
  bool contains(const PluginBinding& binding) const;

  /// Throws UnknownPlugin.
  PluginFactory factory_for(const PluginBinding& binding, const PluginContext& ctx, const HostOptions& options) const;

  void bind(const std::string& plugin_id);
  void unbind(const std::string& plugin_id);
  void touch(const std::string& plugin_id, std::int64_t now_ms);
  bool is_bound(const std::string& plugin_id) const;

  /// Deletes evicted plugin directories (failures are logged) and forgets them.
  std::vector<std::string> evict_unused(std::int64_t budget_bytes, std::int64_t now_ms);

  const std::optional<std::filesystem::path>& plugin_dir() const { return plugin_dir_; }

private:
  struct Entry {
    PluginManifest manifest;
    std::int64_t last_used = 0;
  };

  std::optional<std::filesystem::path> plugin_dir_;
  std::shared_ptr<Clock> clock_;
  mutable std::shared_mutex mu_;
  std::map<std::string, Entry> disk_;
  std::map<std::string, InProcessFactory> in_process_;
  std::map<std::string, int> bound_;
};

} // namespace mosden
