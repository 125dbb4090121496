#pragma once

// HTTP front end and shared CLI plumbing. Every endpoint is a thin
// adapter: parse, call the library, serialize with the same functions the
// CLI uses, so wire output and library output cannot drift apart.

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "prov/capture.hpp"
#include "prov/engine.hpp"
#include "prov/storage.hpp"

namespace httplib {
class Server;
}

namespace prov {

struct ServiceConfig {
  std::string listen = "127.0.0.1:8080";
  BackendConfig storage{"memory", ""};
  std::vector<std::string> executors = {"mock:ok"};  // wire-addressable whitelist
};

// key=value lines, '#' comments; keys: listen, backend, root, executors
// (comma-separated). Errors: BadConfig.
ServiceConfig parse_service_config(const std::string& text);

// Reads the file at `path`, or at $PROVKERNEL_CONFIG when path is empty.
// Errors: BadConfig (missing/unreadable file, bad content).
ServiceConfig load_service_config(const std::string& path);

// Builds an executor from its wire name, refusing anything the whitelist
// does not cover. A whitelist entry matches its exact name, or acts as a
// prefix when it ends with ':' (so "mock:fail:" admits any fail target).
// Known forms: "mock:ok", "mock:fail:<node>", "subprocess:<path>".
// Errors: ExecutorRejected.
std::unique_ptr<Executor> make_executor(const std::string& name,
                                        const std::vector<std::string>& whitelist);

// Runs one local program per task. The program gets a JSON document on
// stdin — {"inputs":[<data refs>], "node":"<id>", "outputs":[names],
// "process_ref":"..."} — must read it to EOF, and answers on stdout with
// {"outputs":[{"name":...,"payload":<base64>}], "log"?} or
// {"error":{"code":...,"message":...}}. Nonzero exit or garbage output is
// reported as an executor fault.
class SubprocessExecutor : public Executor {
 public:
  explicit SubprocessExecutor(std::string path) : path_(std::move(path)) {}
  Outcome run(const WorkflowNode& node, const std::vector<DataRef>& inputs) override;

 private:
  std::string path_;
};

// Request bindings: {"param": <data ref object>} or {"param": "raw text"}
// (the text becomes an inline payload, hashed here). Errors: MalformedInput.
std::map<ParamName, DataRef> parse_bindings(const json& doc);

// Highest recorded version of an item. Errors: UnknownItem.
VersionTag latest_version(Storage& store, const std::string& item_id);

class Service {
 public:
  // Opens the storage backend and wires all routes.
  // Errors: BadConfig, BackendUnavailable.
  explicit Service(ServiceConfig config);
  ~Service();

  // Binds the configured listen address (port 0 picks a free one) and
  // returns the actual port. Errors: AddressInUse, BadConfig.
  int bind();

  // Serves until stop(); call bind() first.
  void serve();
  void stop();

  CaptureService& capture() { return capture_; }
  Storage& store() { return *store_; }
  const ServiceConfig& config() const { return config_; }

 private:
  void routes();

  ServiceConfig config_;
  std::unique_ptr<Storage> store_;
  CaptureService capture_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace prov
