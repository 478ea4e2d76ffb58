// Newline-delimited JSON over a child process's stdin/stdout.
//
// Handshake (plugin -> host, first line):
//   {"protocol":"mosden-plugin/1","plugin_id":...,"version":...}
// Requests (host -> plugin), one outstanding at a time:
//   {"op":"set_configuration","config":{...}} | {"op":"get_data_structure"} | {"op":"get_readings"}
// Replies:
//   {"ok":true,"result":...} | {"ok":false,"error":str}

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <mutex>
#include <thread>

#include "mosden/errors.hpp"
#include "mosden/log.hpp"
#include "mosden/plugin.hpp"

namespace mosden {

namespace {

void ignore_sigpipe_once() {
  static std::once_flag flag;
  std::call_once(flag, [] { ::signal(SIGPIPE, SIG_IGN); });
}

class SubprocessPlugin final : public Plugin {
public:
  explicit SubprocessPlugin(const SubprocessOptions& options) : timeout_(options.call_timeout) {
    ignore_sigpipe_once();
    spawn(options);
    auto hello = read_message("handshake");
    if (!hello.is_object() || hello.value("protocol", "") != kPluginProtocol) {
      kill_child();
      throw PluginProtocolError("bad handshake: " + hello.dump());
    }
    plugin_id_ = hello.value("plugin_id", "");
  }

  ~SubprocessPlugin() override { shutdown(); }

  void set_configuration(const ConfigMap& config) override {
    Json req = Json::object();
    req["op"] = "set_configuration";
    Json cfg = Json::object();
    for (const auto& [k, v] : config) cfg[k] = v;
    req["config"] = std::move(cfg);
    auto reply = exchange(req);
    if (!reply.at("ok").get<bool>()) {
      throw PluginRejectedConfig(reply.value("key", ""), reply.value("error", "configuration rejected"));
    }
  }

  Schema get_data_structure() override {
    auto reply = exchange(Json{{"op", "get_data_structure"}});
    require_ok(reply);
    try {
      schema_ = schema_from_json(reply.at("result"), "/result");
    } catch (const DocumentError& e) {
      throw PluginProtocolError(std::string("bad schema: ") + e.what());
    }
    return schema_;
  }

  std::optional<StreamElement> get_readings() override {
    auto reply = exchange(Json{{"op", "get_readings"}});
    require_ok(reply);
    const Json& result = reply.at("result");
    if (result.is_null()) return std::nullopt;
    try {
      return element_from_json(schema_, result);
    } catch (const TypeMismatch& e) {
      throw SchemaViolation(e.what());
    } catch (const DocumentError& e) {
      throw PluginProtocolError(std::string("bad element: ") + e.what());
    }
  }

private:
  void spawn(const SubprocessOptions& options) {
    if (options.argv.empty()) throw PluginProtocolError("empty plugin command");
    int to_child[2];
    int from_child[2];
    if (::pipe2(to_child, O_CLOEXEC) != 0) throw IoError(std::string("pipe: ") + std::strerror(errno));
    if (::pipe2(from_child, O_CLOEXEC) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw IoError(std::string("pipe: ") + std::strerror(errno));
    }
    std::vector<std::string> args = options.argv;
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    const std::string cwd = options.working_dir.string();

    pid_ = ::fork();
    if (pid_ < 0) throw IoError(std::string("fork: ") + std::strerror(errno));
    if (pid_ == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      if (!cwd.empty() && ::chdir(cwd.c_str()) != 0) ::_exit(126);
      ::execvp(argv[0], argv.data());
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    to_child_ = to_child[1];
    from_child_ = from_child[0];
    log().debug("launched plugin {} as pid {}", options.argv.front(), pid_);
  }

  static void require_ok(const Json& reply) {
    if (!reply.at("ok").get<bool>()) throw PluginProtocolError("plugin error: " + reply.value("error", "unspecified"));
  }

  Json exchange(const Json& request) {
    if (pid_ <= 0) throw PluginProtocolError("plugin process is not running");
    const std::string line = request.dump() + "\n";
    std::size_t written = 0;
    while (written < line.size()) {
      auto n = ::write(to_child_, line.data() + written, line.size() - written);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) {
        kill_child();
        throw PluginProtocolError("plugin process closed its input");
      }
      written += static_cast<std::size_t>(n);
    }
    auto reply = read_message(request.value("op", "request"));
    if (!reply.is_object() || !reply.contains("ok") || !reply["ok"].is_boolean() ||
        (reply["ok"].get<bool>() && !reply.contains("result"))) {
      throw PluginProtocolError("malformed reply: " + reply.dump());
    }
    return reply;
  }

  Json read_message(const std::string& what) {
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    for (;;) {
      if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        try {
          return Json::parse(line);
        } catch (const nlohmann::json::parse_error&) {
          throw PluginProtocolError("unparseable " + what + " line: " + line);
        }
      }
      auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (remaining.count() <= 0) {
        kill_child();
        throw PluginTimeout("no " + what + " reply within " + std::to_string(timeout_.count()) + " ms");
      }
      pollfd pfd{from_child_, POLLIN, 0};
      int rc = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
      if (rc < 0 && errno == EINTR) continue;
      if (rc == 0) continue;
      char chunk[4096];
      auto n = ::read(from_child_, chunk, sizeof chunk);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) {
        kill_child();
        throw PluginProtocolError("plugin process exited during " + what);
      }
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  void kill_child() {
    if (pid_ > 0) {
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, nullptr, 0);
      pid_ = -1;
    }
    close_fds();
  }

  void close_fds() {
    if (to_child_ >= 0) ::close(to_child_);
    if (from_child_ >= 0) ::close(from_child_);
    to_child_ = from_child_ = -1;
  }

  void shutdown() {
    if (pid_ > 0) {
      if (to_child_ >= 0) {
        ::close(to_child_);
        to_child_ = -1;
      }
      for (int i = 0; i < 50; ++i) {
        if (::waitpid(pid_, nullptr, WNOHANG) == pid_) {
          pid_ = -1;
          break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
      }
    }
    kill_child();
  }

  std::chrono::milliseconds timeout_;
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  std::string plugin_id_;
  Schema schema_;
};

Json raw_element_json(const Schema& schema, const StreamElement& e) {
  // Serialized as-is, without validation, so the host sees exactly what the
  // plugin produced.
  Json values = Json::object();
  for (std::size_t i = 0; i < e.values.size(); ++i) {
    const std::string name = i < schema.size() ? schema[i].name() : "_extra_" + std::to_string(i);
    values[name] = to_json(e.values[i]);
  }
  Json j = Json::object();
  j["timestamp"] = e.timestamp;
  j["values"] = std::move(values);
  return j;
}

} // namespace

std::unique_ptr<Plugin> launch_subprocess_plugin(const SubprocessOptions& options) {
  return std::make_unique<SubprocessPlugin>(options);
}

int serve_stdio(Plugin& plugin, std::string_view plugin_id, std::string_view version, std::istream& in,
                std::ostream& out) {
  auto send = [&out](const Json& j) { out << j.dump() << '\n' << std::flush; };
  Json hello = Json::object();
  hello["protocol"] = kPluginProtocol;
  hello["plugin_id"] = plugin_id;
  hello["version"] = version;
  send(hello);

  Schema schema;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Json reply = Json::object();
    try {
      auto req = Json::parse(line);
      const auto op = req.value("op", "");
      if (op == "set_configuration") {
        ConfigMap config;
        for (auto it = req.at("config").begin(); it != req.at("config").end(); ++it) {
          config[it.key()] = it.value().get<std::string>();
        }
        plugin.set_configuration(config);
        reply["ok"] = true;
        reply["result"] = nullptr;
      } else if (op == "get_data_structure") {
        schema = plugin.get_data_structure();
        reply["ok"] = true;
        reply["result"] = to_json(schema);
      } else if (op == "get_readings") {
        auto element = plugin.get_readings();
        reply["ok"] = true;
        reply["result"] = element ? raw_element_json(schema, *element) : Json(nullptr);
      } else {
        reply["ok"] = false;
        reply["error"] = "unknown op '" + op + "'";
      }
    } catch (const PluginRejectedConfig& e) {
      reply = Json::object();
      reply["ok"] = false;
      reply["error"] = e.what();
      if (!e.key().empty()) reply["key"] = e.key();
    } catch (const std::exception& e) {
      reply = Json::object();
      reply["ok"] = false;
      reply["error"] = e.what();
    }
    send(reply);
  }
  return 0;
}

} // namespace mosden
