#include "mosden/plugin.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <iterator>
#include <mutex>
#include <set>
#include <thread>

#include "mosden/errors.hpp"
#include "mosden/log.hpp"

namespace fs = std::filesystem;

namespace mosden {

// --- manifest / discovery -------------------------------------------------

PluginManifest manifest_from_json(const Json& j, fs::path dir) {
  if (!j.is_object()) throw SchemaError("", "manifest must be an object");
  PluginManifest m;
  m.dir = std::move(dir);
  auto str = [&](const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) throw SchemaError(std::string("/") + key, "expected a string");
    return it->get<std::string>();
  };
  auto str_list = [&](const char* key) {
    std::vector<std::string> out;
    auto it = j.find(key);
    if (it == j.end()) return out;
    if (!it->is_array()) throw SchemaError(std::string("/") + key, "expected an array of strings");
    for (const auto& v : *it) {
      if (!v.is_string()) throw SchemaError(std::string("/") + key, "expected an array of strings");
      out.push_back(v.get<std::string>());
    }
    return out;
  };
  m.plugin_id = str("plugin_id");
  if (m.plugin_id.empty()) throw SchemaError("/plugin_id", "must be non-empty");
  m.version = str("version");
  m.action = str("action");
  auto size = j.find("size_bytes");
  if (size == j.end() || !size->is_number_integer() || size->get<std::int64_t>() < 0) {
    throw SchemaError("/size_bytes", "expected a non-negative integer");
  }
  m.size_bytes = size->get<std::int64_t>();
  m.categories = str_list("categories");
  m.command = str_list("command");
  if (m.action != kPluginAction) {
    throw Error("ActionMismatch", "action '" + m.action + "' is not '" + std::string(kPluginAction) + "'");
  }
  return m;
}

Json to_json(const PluginManifest& m) {
  Json j = Json::object();
  j["plugin_id"] = m.plugin_id;
  j["version"] = m.version;
  j["action"] = m.action;
  j["size_bytes"] = m.size_bytes;
  j["categories"] = m.categories;
  j["command"] = m.command;
  return j;
}

DiscoveryResult discover_plugins(const fs::path& plugin_dir) {
  std::error_code ec;
  if (!fs::is_directory(plugin_dir, ec)) throw IoError("plugin directory " + plugin_dir.string() + " is not readable");
  std::vector<fs::path> subdirs;
  for (fs::directory_iterator it(plugin_dir, ec), end; !ec && it != end; it.increment(ec)) {
    if (it->is_directory()) subdirs.push_back(it->path());
  }
  if (ec) throw IoError("cannot list " + plugin_dir.string() + ": " + ec.message());
  std::sort(subdirs.begin(), subdirs.end());

  DiscoveryResult result;
  std::set<std::string> seen;
  for (const auto& dir : subdirs) {
    const auto file = dir / "plugin.json";
    if (!fs::exists(file)) continue;
    try {
      std::ifstream in(file);
      std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      auto manifest = manifest_from_json(parse_json(text), dir);
      if (!seen.insert(manifest.plugin_id).second) {
        result.warnings.push_back({file, "DuplicatePluginId", "plugin_id '" + manifest.plugin_id + "' already seen"});
        continue;
      }
      result.manifests.push_back(std::move(manifest));
    } catch (const Error& e) {
      result.warnings.push_back({file, e.code(), e.what()});
    }
  }
  for (const auto& w : result.warnings) log().warn("plugin discovery: {}: {} ({})", w.path.string(), w.code, w.detail);
  return result;
}

// --- call timeout ---------------------------------------------------------

namespace {

class TimedPlugin final : public Plugin {
public:
  TimedPlugin(std::unique_ptr<Plugin> inner, std::chrono::milliseconds timeout)
      : inner_(std::move(inner)), timeout_(timeout) {}

  void set_configuration(const ConfigMap& config) override {
    call<int>([config](Plugin& p) {
      p.set_configuration(config);
      return 0;
    });
  }

  Schema get_data_structure() override {
    return call<Schema>([](Plugin& p) { return p.get_data_structure(); });
  }

  std::optional<StreamElement> get_readings() override {
    return call<std::optional<StreamElement>>([](Plugin& p) { return p.get_readings(); });
  }

private:
  template <typename R, typename F>
  R call(F fn) {
    if (poisoned_) throw PluginTimeout("plugin did not answer an earlier call");
    std::promise<R> promise;
    auto future = promise.get_future();
    std::thread worker([inner = inner_, fn = std::move(fn), promise = std::move(promise)]() mutable {
      try {
        promise.set_value(fn(*inner));
      } catch (...) {
        promise.set_exception(std::current_exception());
      }
    });
    if (future.wait_for(timeout_) != std::future_status::ready) {
      worker.detach();
      poisoned_ = true;
      throw PluginTimeout("no answer within " + std::to_string(timeout_.count()) + " ms");
    }
    worker.join();
    return future.get();
  }

  std::shared_ptr<Plugin> inner_;
  std::chrono::milliseconds timeout_;
  bool poisoned_ = false;
};

} // namespace

std::unique_ptr<Plugin> with_call_timeout(std::unique_ptr<Plugin> inner, std::chrono::milliseconds timeout) {
  return std::make_unique<TimedPlugin>(std::move(inner), timeout);
}

// --- handle ---------------------------------------------------------------

std::string_view to_string(PluginState s) {
  switch (s) {
  case PluginState::Configured: return "configured";
  case PluginState::Initialized: return "initialized";
  case PluginState::Running: return "running";
  case PluginState::Stopped: return "stopped";
  case PluginState::Failed: return "failed";
  }
  return "?";
}

bool is_legal_transition(PluginState from, PluginState to) {
  if (to == PluginState::Failed) return true;
  return (from == PluginState::Configured && to == PluginState::Initialized) ||
         (from == PluginState::Initialized && to == PluginState::Running) ||
         (from == PluginState::Running && to == PluginState::Stopped);
}

PluginHandle::PluginHandle(PluginBinding binding, PluginFactory factory, HostOptions options,
                           std::shared_ptr<Clock> clock)
    : binding_(std::move(binding)), factory_(std::move(factory)), options_(options), clock_(std::move(clock)) {
  last_used_ = clock_->now_ms();
  instance_ = factory_();
}

void PluginHandle::transition(PluginState to) {
  if (!is_legal_transition(state_, to)) {
    throw InvalidPluginState("illegal transition " + std::string(to_string(state_)) + " -> " +
                             std::string(to_string(to)));
  }
  state_ = to;
}

template <typename F>
auto PluginHandle::guarded(F&& call) -> decltype(call()) {
  last_used_ = clock_->now_ms();
  try {
    return call();
  } catch (const PluginTimeout&) {
    state_ = PluginState::Failed;
    throw;
  } catch (const PluginProtocolError&) {
    state_ = PluginState::Failed;
    throw;
  } catch (const PluginRejectedConfig&) {
    throw;
  } catch (const SchemaViolation&) {
    throw;
  } catch (const Error&) {
    state_ = PluginState::Failed;
    throw;
  } catch (const std::exception& e) {
    state_ = PluginState::Failed;
    throw PluginProtocolError(std::string("plugin raised: ") + e.what());
  }
}

void PluginHandle::set_configuration(const ConfigMap& config) {
  if (state_ != PluginState::Configured && state_ != PluginState::Initialized) {
    throw InvalidPluginState("set_configuration in state " + std::string(to_string(state_)));
  }
  guarded([&] { instance_->set_configuration(config); });
  configured_ = true;
}

const Schema& PluginHandle::get_data_structure() {
  if (state_ != PluginState::Configured || !configured_) {
    throw InvalidPluginState("get_data_structure requires a configured plugin, state is " +
                             std::string(to_string(state_)));
  }
  auto schema = guarded([&] { return instance_->get_data_structure(); });
  try {
    check_schema(schema);
  } catch (const InvariantError& e) {
    state_ = PluginState::Failed;
    throw PluginProtocolError(std::string("invalid schema from plugin: ") + e.what());
  }
  if (schema_known_ && schema != schema_) {
    state_ = PluginState::Failed;
    throw PluginProtocolError("plugin changed its schema across a restart");
  }
  schema_ = std::move(schema);
  schema_known_ = true;
  transition(PluginState::Initialized);
  return schema_;
}

void PluginHandle::start() { transition(PluginState::Running); }

std::optional<StreamElement> PluginHandle::get_readings() {
  if (state_ != PluginState::Running) {
    throw InvalidPluginState("get_readings in state " + std::string(to_string(state_)));
  }
  auto element = guarded([&] { return instance_->get_readings(); });
  if (element) {
    auto violations = validate_element_against_schema(schema_, *element);
    if (!violations.empty()) throw SchemaViolation(violations.front().detail);
  }
  return element;
}

void PluginHandle::stop() {
  // Only a running plugin moves to stopped; a handle that never started (or
  // failed) keeps its state and just releases the instance.
  if (state_ == PluginState::Running) transition(PluginState::Stopped);
  instance_.reset();
}

void PluginHandle::activate() {
  set_configuration(binding_.config);
  get_data_structure();
  start();
}

void PluginHandle::restart() {
  if (state_ != PluginState::Failed) throw InvalidPluginState("restart requires a failed plugin");
  if (!can_restart()) throw InvalidPluginState("restart cap reached");
  ++restarts_;
  instance_.reset();
  configured_ = false;
  try {
    instance_ = factory_();
  } catch (const Error&) {
    state_ = PluginState::Failed;
    throw;
  }
  state_ = PluginState::Configured;
  activate();
}

// --- catalog --------------------------------------------------------------

std::vector<std::string> select_evictions(std::vector<EvictionCandidate> candidates, std::int64_t budget_bytes) {
  std::erase_if(candidates, [](const EvictionCandidate& c) { return c.active; });
  std::int64_t total = 0;
  for (const auto& c : candidates) total += c.size_bytes;
  std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
    return a.last_used != b.last_used ? a.last_used < b.last_used : a.plugin_id < b.plugin_id;
  });
  std::vector<std::string> evicted;
  for (const auto& c : candidates) {
    if (total <= budget_bytes) break;
    evicted.push_back(c.plugin_id);
    total -= c.size_bytes;
  }
  return evicted;
}

PluginCatalog::PluginCatalog(std::optional<fs::path> plugin_dir, std::shared_ptr<Clock> clock)
    : plugin_dir_(std::move(plugin_dir)), clock_(std::move(clock)) {}

DiscoveryResult PluginCatalog::rescan() {
  if (!plugin_dir_) return {};
  auto result = discover_plugins(*plugin_dir_);
  const auto now = clock_->now_ms();
  std::unique_lock lock(mu_);
  std::map<std::string, Entry> next;
  for (const auto& m : result.manifests) {
    auto old = disk_.find(m.plugin_id);
    next[m.plugin_id] = Entry{m, old != disk_.end() ? old->second.last_used : now};
  }
  disk_ = std::move(next);
  return result;
}

PluginManifest PluginCatalog::install(const fs::path& source_dir, std::optional<std::int64_t> budget_bytes) {
  if (!plugin_dir_) throw ConfigError("no plugin directory configured");
  std::ifstream in(source_dir / "plugin.json");
  if (!in) throw IoError("no plugin.json in " + source_dir.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto manifest = manifest_from_json(parse_json(text), source_dir);
  const auto target = *plugin_dir_ / source_dir.filename();
  std::error_code ec;
  fs::create_directories(*plugin_dir_, ec);
  if (fs::absolute(source_dir) != fs::absolute(target)) {
    fs::copy(source_dir, target, fs::copy_options::recursive | fs::copy_options::overwrite_existing, ec);
    if (ec) throw IoError("cannot install plugin into " + target.string() + ": " + ec.message());
  }
  rescan();
  touch(manifest.plugin_id, clock_->now_ms());
  if (budget_bytes) evict_unused(*budget_bytes, clock_->now_ms());
  auto installed = this->manifest(manifest.plugin_id);
  return installed ? *installed : manifest;
}

void PluginCatalog::register_in_process(const std::string& plugin_id, InProcessFactory factory) {
  std::unique_lock lock(mu_);
  in_process_[plugin_id] = std::move(factory);
}

std::optional<PluginManifest> PluginCatalog::manifest(const std::string& plugin_id) const {
  std::shared_lock lock(mu_);
  auto it = disk_.find(plugin_id);
  if (it == disk_.end()) return std::nullopt;
  return it->second.manifest;
}

std::vector<PluginManifest> PluginCatalog::manifests() const {
  std::shared_lock lock(mu_);
  std::vector<PluginManifest> out;
  for (const auto& [id, e] : disk_) out.push_back(e.manifest);
  return out;
}

bool PluginCatalog::contains(const PluginBinding& binding) const {
  std::shared_lock lock(mu_);
  return binding.transport == Transport::InProcess ? in_process_.count(binding.plugin_id) > 0
                                                   : disk_.count(binding.plugin_id) > 0;
}

PluginFactory PluginCatalog::factory_for(const PluginBinding& binding, const PluginContext& ctx,
                                         const HostOptions& options) const {
  std::shared_lock lock(mu_);
  if (binding.transport == Transport::InProcess) {
    auto it = in_process_.find(binding.plugin_id);
    if (it == in_process_.end()) throw UnknownPlugin("no in-process plugin '" + binding.plugin_id + "'");
    return [make = it->second, ctx, timeout = options.call_timeout] {
      return with_call_timeout(make(ctx), timeout);
    };
  }
  auto it = disk_.find(binding.plugin_id);
  if (it == disk_.end()) throw UnknownPlugin("no installed plugin '" + binding.plugin_id + "'");
  SubprocessOptions sub;
  sub.argv = binding.command.empty() ? it->second.manifest.command : binding.command;
  sub.working_dir = it->second.manifest.dir;
  sub.call_timeout = options.call_timeout;
  if (sub.argv.empty()) throw UnknownPlugin("plugin '" + binding.plugin_id + "' declares no command");
  return [sub] { return launch_subprocess_plugin(sub); };
}

void PluginCatalog::bind(const std::string& plugin_id) {
  std::unique_lock lock(mu_);
  ++bound_[plugin_id];
  if (auto it = disk_.find(plugin_id); it != disk_.end()) it->second.last_used = clock_->now_ms();
}

void PluginCatalog::unbind(const std::string& plugin_id) {
  std::unique_lock lock(mu_);
  auto it = bound_.find(plugin_id);
  if (it != bound_.end() && --it->second <= 0) bound_.erase(it);
  if (auto d = disk_.find(plugin_id); d != disk_.end()) d->second.last_used = clock_->now_ms();
}

void PluginCatalog::touch(const std::string& plugin_id, std::int64_t now_ms) {
  std::unique_lock lock(mu_);
  if (auto it = disk_.find(plugin_id); it != disk_.end()) it->second.last_used = std::max(it->second.last_used, now_ms);
}

bool PluginCatalog::is_bound(const std::string& plugin_id) const {
  std::shared_lock lock(mu_);
  return bound_.count(plugin_id) > 0;
}

std::vector<std::string> PluginCatalog::evict_unused(std::int64_t budget_bytes, std::int64_t now_ms) {
  std::unique_lock lock(mu_);
  std::vector<EvictionCandidate> candidates;
  for (const auto& [id, e] : disk_) {
    candidates.push_back({id, e.manifest.size_bytes, e.last_used, bound_.count(id) > 0});
  }
  auto evicted = select_evictions(std::move(candidates), budget_bytes);
  for (const auto& id : evicted) {
    auto it = disk_.find(id);
    std::error_code ec;
    fs::remove_all(it->second.manifest.dir, ec);
    if (ec) log().warn("evict {}: cannot remove {}: {}", id, it->second.manifest.dir.string(), ec.message());
    disk_.erase(it);
  }
  if (!evicted.empty()) log().info("evicted {} unused plugin(s) at {}", evicted.size(), now_ms);
  return evicted;
}

} // namespace mosden
