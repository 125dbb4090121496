#include "prov/service.hpp"

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include <httplib.h>

#include "prov/harness.hpp"
#include "prov/opm.hpp"
#include "prov/query.hpp"
#include "prov/reconstruct.hpp"
#include "prov/util.hpp"
#include "prov/validate.hpp"

namespace prov {

namespace {

std::string trim(const std::string& text) {
  auto begin = text.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  auto end = text.find_last_not_of(" \t\r");
  return text.substr(begin, end - begin + 1);
}

}  // namespace

ServiceConfig parse_service_config(const std::string& text) {
  ServiceConfig config;
  bool executors_set = false;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::BadConfig, "expected key=value, got: " + line);
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key == "listen") {
      config.listen = value;
    } else if (key == "backend") {
      config.storage.backend = value;
    } else if (key == "root") {
      config.storage.root = value;
    } else if (key == "executors") {
      executors_set = true;
      config.executors.clear();
      std::istringstream parts(value);
      std::string part;
      while (std::getline(parts, part, ',')) {
        part = trim(part);
        if (!part.empty()) config.executors.push_back(part);
      }
    } else {
      throw Error(ErrorKind::BadConfig, "unknown config key: " + key);
    }
  }
  (void)executors_set;  // an explicit empty list stays empty: nothing runs
  return config;
}

ServiceConfig load_service_config(const std::string& path) {
  std::string from = path;
  if (from.empty()) {
    const char* env = std::getenv("PROVKERNEL_CONFIG");
    if (!env || !*env) {
      throw Error(ErrorKind::BadConfig, "no config path given and PROVKERNEL_CONFIG unset");
    }
    from = env;
  }
  std::ifstream in(from);
  if (!in) throw Error(ErrorKind::BadConfig, "cannot read config file: " + from);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_service_config(text.str());
}

namespace {

bool whitelisted(const std::string& name, const std::vector<std::string>& whitelist) {
  for (const auto& entry : whitelist) {
    if (entry == name) return true;
    if (!entry.empty() && entry.back() == ':' && name.rfind(entry, 0) == 0 &&
        name.size() > entry.size()) {
      return true;
    }
  }
  return false;
}

// Feeds the request to the child and collects everything it prints. The
// child must read stdin to EOF before answering or a large request could
// stall both sides.
std::pair<int, std::string> run_process(const std::string& path, const std::string& input) {
  std::signal(SIGPIPE, SIG_IGN);
  int to_child[2];
  int from_child[2];
  if (pipe(to_child) != 0 || pipe(from_child) != 0) {
    throw std::runtime_error("pipe failed");
  }
  pid_t pid = fork();
  if (pid < 0) throw std::runtime_error("fork failed");
  if (pid == 0) {
    dup2(to_child[0], 0);
    dup2(from_child[1], 1);
    close(to_child[0]);
    close(to_child[1]);
    close(from_child[0]);
    close(from_child[1]);
    execl(path.c_str(), path.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(to_child[0]);
  close(from_child[1]);
  std::size_t off = 0;
  while (off < input.size()) {
    ssize_t n = write(to_child[1], input.data() + off, input.size() - off);
    if (n <= 0) break;  // child quit early; still collect its reply
    off += static_cast<std::size_t>(n);
  }
  close(to_child[1]);
  std::string output;
  char buf[4096];
  ssize_t n;
  while ((n = read(from_child[0], buf, sizeof buf)) > 0) output.append(buf, n);
  close(from_child[0]);
  int status = 0;
  waitpid(pid, &status, 0);
  int code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  return {code, output};
}

}  // namespace

Outcome SubprocessExecutor::run(const WorkflowNode& node, const std::vector<DataRef>& inputs) {
  json request;
  json in_list = json::array();
  for (const auto& ref : inputs) in_list.push_back(data_ref_to_json(ref));
  request["inputs"] = std::move(in_list);
  request["node"] = node.id;
  request["outputs"] = node.declared_outputs;
  request["process_ref"] = node.process_ref;

  auto [code, raw] = run_process(path_, request.dump());
  if (code != 0) {
    throw std::runtime_error(path_ + " exited with " + std::to_string(code));
  }
  json reply = json::parse(raw, nullptr, false);
  if (reply.is_discarded() || !reply.is_object()) {
    throw std::runtime_error(path_ + " wrote invalid JSON");
  }
  Outcome outcome;
  try {
    if (reply.contains("error")) {
      outcome.error = ErrorRecord{reply.at("error").value("code", "error"),
                                  reply.at("error").value("message", "")};
      return outcome;
    }
    for (const auto& entry : reply.value("outputs", json::array())) {
      outcome.outputs.push_back(make_data_ref(entry.at("name").get<std::string>(),
                                              base64_decode(entry.at("payload").get<std::string>())));
    }
    outcome.log_text = reply.value("log", "");
  } catch (const json::exception& e) {
    throw std::runtime_error(path_ + " reply malformed: " + e.what());
  }
  return outcome;
}

std::unique_ptr<Executor> make_executor(const std::string& name,
                                        const std::vector<std::string>& whitelist) {
  if (!whitelisted(name, whitelist)) {
    throw Error(ErrorKind::ExecutorRejected, "executor not allowed by config: " + name);
  }
  if (name == "mock:ok") {
    return std::make_unique<MockExecutor>(MockExecutor::hash_inputs());
  }
  if (name.rfind("mock:fail:", 0) == 0) {
    std::string node = name.substr(10);
    if (node.empty()) throw Error(ErrorKind::ExecutorRejected, "mock:fail: needs a node id");
    return std::make_unique<MockExecutor>(MockExecutor::fail_at(node));
  }
  if (name.rfind("mock:drift:", 0) == 0) {
    auto rest = name.substr(11);
    auto colon = rest.find(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 >= rest.size()) {
      throw Error(ErrorKind::ExecutorRejected, "mock:drift: needs <node>:<tag>");
    }
    return std::make_unique<MockExecutor>(
        MockExecutor::drift(rest.substr(0, colon), rest.substr(colon + 1)));
  }
  if (name.rfind("subprocess:", 0) == 0) {
    std::string path = name.substr(11);
    if (path.empty()) throw Error(ErrorKind::ExecutorRejected, "subprocess: needs a path");
    return std::make_unique<SubprocessExecutor>(path);
  }
  throw Error(ErrorKind::ExecutorRejected, "unknown executor: " + name);
}

std::map<ParamName, DataRef> parse_bindings(const json& doc) {
  std::map<ParamName, DataRef> bindings;
  if (doc.is_null()) return bindings;
  if (!doc.is_object()) {
    throw Error(ErrorKind::MalformedInput, "bindings must be an object keyed by param");
  }
  for (const auto& [param, value] : doc.items()) {
    if (value.is_string()) {
      bindings[param] = make_data_ref(param, value.get<std::string>());
    } else if (value.is_object()) {
      try {
        if (value.contains("payload") && !value.contains("hash")) {
          std::optional<std::string> uri;
          if (value.contains("uri")) uri = value.at("uri").get<std::string>();
          bindings[param] =
              make_data_ref(param, base64_decode(value.at("payload").get<std::string>()), uri);
        } else {
          json fixed = value;
          fixed["name"] = param;
          bindings[param] = data_ref_from_json(fixed);
        }
      } catch (const json::exception& e) {
        throw Error(ErrorKind::MalformedInput,
                    "binding " + param + " malformed: " + e.what());
      }
    } else {
      throw Error(ErrorKind::MalformedInput,
                  "binding " + param + " must be text or a data ref");
    }
  }
  return bindings;
}

VersionTag latest_version(Storage& store, const std::string& item_id) {
  return load_state(store, item_id).versions.size();
}

namespace {

int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotFound:
    case ErrorKind::UnknownItem:
    case ErrorKind::UnknownVersion:
    case ErrorKind::UnknownExecution:
    case ErrorKind::UnknownNode:
    case ErrorKind::UnknownArtifact:
      return 404;
    case ErrorKind::Internal:
    case ErrorKind::BackendUnavailable:
      return 500;
    default:
      return 400;
  }
}

void send_json(httplib::Response& res, const json& doc, int status = 200) {
  res.status = status;
  res.set_content(doc.dump(2) + "\n", "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
  json doc;
  doc["error"] = to_string(e.kind());
  doc["message"] = e.message();
  if (!e.details().empty()) doc["violations"] = e.details();
  send_json(res, doc, http_status(e.kind()));
}

json parse_body(const httplib::Request& req) {
  json doc = json::parse(req.body, nullptr, false);
  if (doc.is_discarded()) {
    throw Error(ErrorKind::MalformedInput, "request body is not valid JSON");
  }
  return doc;
}

using JsonHandler = std::function<json(const httplib::Request&)>;

httplib::Server::Handler guard(JsonHandler fn) {
  return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
    try {
      send_json(res, fn(req));
    } catch (const Error& e) {
      send_error(res, e);
    } catch (const std::exception& e) {
      send_error(res, Error(ErrorKind::Internal, e.what()));
    }
  };
}

using XmlHandler = std::function<std::string(const httplib::Request&)>;

httplib::Server::Handler guard_xml(XmlHandler fn) {
  return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
    try {
      res.set_content(fn(req), "application/xml");
    } catch (const Error& e) {
      send_error(res, e);
    } catch (const std::exception& e) {
      send_error(res, Error(ErrorKind::Internal, e.what()));
    }
  };
}

std::pair<std::string, int> split_listen(const std::string& listen) {
  auto colon = listen.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 >= listen.size()) {
    throw Error(ErrorKind::BadConfig, "listen must be host:port, got: " + listen);
  }
  int port = 0;
  try {
    std::size_t used = 0;
    port = std::stoi(listen.substr(colon + 1), &used);
    if (used != listen.size() - colon - 1) throw std::invalid_argument("");
  } catch (const std::exception&) {
    throw Error(ErrorKind::BadConfig, "bad listen port in: " + listen);
  }
  if (port < 0 || port > 65535) {
    throw Error(ErrorKind::BadConfig, "listen port out of range: " + listen);
  }
  return {listen.substr(0, colon), port};
}

VersionTag version_or_latest(const httplib::Request& req, Storage& store,
                             const std::string& item_id) {
  if (!req.has_param("version")) return latest_version(store, item_id);
  try {
    return std::stoull(req.get_param_value("version"));
  } catch (const std::exception&) {
    throw Error(ErrorKind::MalformedInput,
                "bad version: " + req.get_param_value("version"));
  }
}

VersionTag version_or_latest(const json& body, Storage& store, const std::string& item_id) {
  if (!body.contains("version") || body.at("version").is_null()) {
    return latest_version(store, item_id);
  }
  if (!body.at("version").is_number_unsigned()) {
    throw Error(ErrorKind::MalformedInput, "version must be a positive integer");
  }
  return body.at("version").get<VersionTag>();
}

}  // namespace

Service::Service(ServiceConfig config)
    : config_(std::move(config)),
      store_(open_backend(config_.storage)),
      capture_(*store_),
      server_(std::make_unique<httplib::Server>()) {
  routes();
}

Service::~Service() { stop(); }

int Service::bind() {
  auto [host, port] = split_listen(config_.listen);
  if (port == 0) {
    int actual = server_->bind_to_any_port(host);
    if (actual < 0) throw Error(ErrorKind::AddressInUse, "cannot bind " + config_.listen);
    return actual;
  }
  if (!server_->bind_to_port(host, port)) {
    throw Error(ErrorKind::AddressInUse, "cannot bind " + config_.listen);
  }
  return port;
}

void Service::serve() { server_->listen_after_bind(); }

void Service::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

void Service::routes() {
  server_->Post("/items", guard([this](const httplib::Request& req) {
    json body = parse_body(req);
    WorkflowSpec spec = spec_from_json(body.at("spec"));
    Descriptions descriptions;
    if (body.contains("descriptions")) {
      descriptions = descriptions_from_json(body.at("descriptions"));
    }
    std::string item = capture_.register_item(spec, descriptions);
    return json{{"item", item}};
  }));

  server_->Post("/items/:id/versions", guard([this](const httplib::Request& req) {
    std::string item = req.path_params.at("id");
    json body = parse_body(req);
    VersionTag version;
    if (body.contains("edits")) {
      VersionTag base = body.contains("base_version")
                            ? body.at("base_version").get<VersionTag>()
                            : latest_version(*store_, item);
      version = derive(capture_, item, base, edits_from_json(body.at("edits")));
    } else {
      VersionTag base = body.contains("derived_from")
                            ? body.at("derived_from").get<VersionTag>()
                            : latest_version(*store_, item);
      version = capture_.record_spec_version(item, spec_from_json(body.at("spec")), base);
    }
    return json{{"version", version}};
  }));

  server_->Post("/items/:id/executions", guard([this](const httplib::Request& req) {
    std::string item = req.path_params.at("id");
    json body = parse_body(req);
    VersionTag version = version_or_latest(body, *store_, item);
    std::string executor_name = body.at("executor").get<std::string>();
    auto executor = make_executor(executor_name, config_.executors);
    auto bindings = parse_bindings(body.value("bindings", json()));

    ExecutionId exec;
    if (body.contains("scope") || body.contains("source")) {
      ReplayOptions options;
      options.bindings = bindings;
      if (body.contains("scope")) {
        options.scope = body.at("scope").get<std::vector<NodeId>>();
      }
      if (body.contains("source")) {
        options.source = ExecutionId::parse(body.at("source").get<std::string>());
      }
      exec = replay(capture_, item, version, *executor, options);
    } else {
      Engine engine(capture_);
      exec = engine.execute(item, version, *executor, bindings, {"service", ""});
    }
    const RunState& run = load_state(*store_, item).runs.at(exec.run_seq);
    return json{{"exec", exec.to_string()},
                {"status", run.status ? to_string(*run.status) : "open"}};
  }));

  server_->Get("/items/:id/pipeline", guard([this](const httplib::Request& req) {
    std::string item = req.path_params.at("id");
    VersionTag version = version_or_latest(req, *store_, item);
    if (req.has_param("node")) {
      std::vector<NodeId> nodes;
      std::istringstream parts(req.get_param_value("node"));
      std::string part;
      while (std::getline(parts, part, ',')) {
        if (!part.empty()) nodes.push_back(part);
      }
      return fragment_to_json(get_subpipeline(*store_, item, version, nodes));
    }
    return spec_to_json(get_pipeline(*store_, item, version));
  }));

  server_->Get("/items/:id/executions", guard([this](const httplib::Request& req) {
    std::string item = req.path_params.at("id");
    bool include_open =
        req.has_param("open") && req.get_param_value("open") != "false";
    return execution_rows_to_json(list_executions(*store_, item, include_open));
  }));

  server_->Get("/items/:id/errors", guard([this](const httplib::Request& req) {
    std::string item = req.path_params.at("id");
    std::optional<ExecutionId> exec;
    if (req.has_param("exec")) {
      try {
        exec = ExecutionId{item, std::stoull(req.get_param_value("exec"))};
      } catch (const std::exception&) {
        throw Error(ErrorKind::MalformedInput,
                    "bad exec: " + req.get_param_value("exec"));
      }
    }
    return error_rows_to_json(get_errors(*store_, item, exec));
  }));

  server_->Post("/annotations", guard([this](const httplib::Request& req) {
    capture_.annotate(annotation_from_json(parse_body(req)));
    return json{{"recorded", true}};
  }));

  server_->Get("/annotations", guard([this](const httplib::Request& req) {
    std::string query = req.get_param_value("q");
    std::optional<std::string> scope;
    if (req.has_param("item")) scope = req.get_param_value("item");
    return annotations_to_json(search_annotations(*store_, query, scope));
  }));

  server_->Get("/executions/:id/opm", guard_xml([this](const httplib::Request& req) {
    ExecutionId exec = ExecutionId::parse(req.path_params.at("id"));
    return export_xml(to_opm(*store_, exec));
  }));

  server_->Post("/opm/import", guard_xml([this](const httplib::Request& req) {
    // Round-trips through the model so the reply is the canonical form.
    return export_xml(import_xml(req.body));
  }));

  server_->Post("/validate/blueprint", guard([this](const httplib::Request& req) {
    json body = parse_body(req);
    return report_to_json(validate_blueprint(spec_from_json(body.at("spec")),
                                             spec_from_json(body.at("blueprint"))));
  }));

  server_->Post("/validate/offline", guard([this](const httplib::Request& req) {
    json body = parse_body(req);
    ExecutionId exec = ExecutionId::parse(body.at("exec").get<std::string>());
    return report_to_json(
        validate_offline(*store_, exec, reference_from_json(body.at("ref"))));
  }));

  server_->Post("/validate/online", guard([this](const httplib::Request& req) {
    json body = parse_body(req);
    std::string item = body.at("item").get<std::string>();
    VersionTag version = version_or_latest(body, *store_, item);
    auto executor = make_executor(body.at("executor").get<std::string>(), config_.executors);
    auto [exec, report] = validate_online(capture_, item, version, *executor,
                                          reference_from_json(body.at("ref")));
    return json{{"exec", exec.to_string()}, {"report", report_to_json(report)}};
  }));

  server_->Get("/executions/:a/compare/:b", guard([this](const httplib::Request& req) {
    ExecutionId a = ExecutionId::parse(req.path_params.at("a"));
    ExecutionId b = ExecutionId::parse(req.path_params.at("b"));
    return comparison_to_json(compare_executions(*store_, a, b));
  }));
}

}  // namespace prov
