#include "prov/capture.hpp"

#include <algorithm>
#include <set>

namespace prov {

json run_inputs_to_json(const RunInputs& inputs) {
  json doc;
  doc["agent"] = json{{"host", inputs.agent.host}, {"name", inputs.agent.name}};
  json bindings = json::object();
  for (const auto& [name, ref] : inputs.bindings) bindings[name] = data_ref_to_json(ref);
  doc["bindings"] = bindings;
  if (!inputs.scope.empty()) doc["scope"] = inputs.scope;
  if (inputs.replay_of) doc["replay_of"] = inputs.replay_of->to_string();
  return doc;
}

RunInputs run_inputs_from_json(const json& doc) {
  try {
    RunInputs inputs;
    inputs.agent.name = doc.at("agent").value("name", "");
    inputs.agent.host = doc.at("agent").value("host", "");
    for (const auto& [name, ref] : doc.at("bindings").items()) {
      inputs.bindings[name] = data_ref_from_json(ref);
    }
    if (doc.contains("scope")) inputs.scope = doc.at("scope").get<std::vector<std::string>>();
    if (doc.contains("replay_of")) {
      inputs.replay_of = ExecutionId::parse(doc.at("replay_of").get<std::string>());
    }
    return inputs;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedInput, std::string("bad run inputs: ") + e.what());
  }
}

StoragePath event_path(const std::string& item_id, std::uint64_t seq) {
  return {item_id, ClusterKind::Event, {pad_seq(seq)}};
}

StoragePath workflow_path(const std::string& item_id, VersionTag version) {
  return {item_id, ClusterKind::Workflow, {pad_seq(version)}};
}

StoragePath outcome_path(const ExecutionId& exec, const NodeId& node) {
  return {exec.item_id, ClusterKind::Outcome, {pad_seq(exec.run_seq), node}};
}

StoragePath run_inputs_path(const ExecutionId& exec) {
  return {exec.item_id, ClusterKind::View, {"inputs", pad_seq(exec.run_seq)}};
}

StoragePath descriptions_path(const std::string& item_id) {
  return {item_id, ClusterKind::Property, {"descriptions"}};
}

std::vector<Event> load_events(Storage& store, const std::string& item_id) {
  auto paths = store.list(item_id, ClusterKind::Event);
  if (paths.empty()) {
    throw Error(ErrorKind::UnknownItem, "no such item: " + item_id);
  }
  std::vector<Event> events;
  events.reserve(paths.size());
  for (const auto& path : paths) {
    events.push_back(event_from_json(json::parse(store.get(path).payload)));
  }
  return events;
}

namespace {

VersionTag version_from_ref(const std::string& ref) {
  auto pos = ref.rfind('/');
  std::string tail = pos == std::string::npos ? ref : ref.substr(pos + 1);
  try {
    return std::stoull(tail);
  } catch (const std::exception&) {
    throw Error(ErrorKind::Internal, "bad workflow ref on event: " + ref);
  }
}

}  // namespace

ItemState fold_state(const std::string& item_id, const std::vector<Event>& events) {
  ItemState state;
  state.item_id = item_id;
  for (size_t i = 0; i < events.size(); ++i) {
    const Event& event = events[i];
    if (event.seq != i) {
      throw Error(ErrorKind::Internal,
                  "event log gap on " + item_id + " at seq " + std::to_string(i));
    }
    switch (event.kind) {
      case EventKind::SpecRecorded:
        state.versions.push_back(state.versions.size() + 1);
        break;
      case EventKind::ExecutionStarted: {
        RunState run;
        run.run_seq = event.run_seq.value_or(state.runs.size() + 1);
        run.version = event.ref ? version_from_ref(*event.ref) : 1;
        run.started_at = event.timestamp;
        state.runs[run.run_seq] = std::move(run);
        break;
      }
      case EventKind::ActivityTransition: {
        if (!event.run_seq || !event.node || !event.to_state) break;
        auto it = state.runs.find(*event.run_seq);
        if (it != state.runs.end()) {
          it->second.node_states[*event.node] = *event.to_state;
        }
        break;
      }
      case EventKind::ExecutionFinished: {
        if (!event.run_seq) break;
        auto it = state.runs.find(*event.run_seq);
        if (it != state.runs.end()) {
          it->second.status = event.status.value_or(ExecutionStatus::Failed);
          it->second.finished_at = event.timestamp;
        }
        break;
      }
      case EventKind::AnnotationAdded:
        if (event.annotation) state.annotations.push_back(*event.annotation);
        break;
      case EventKind::ValidationRun:
        if (event.ref) state.validation_refs.push_back(*event.ref);
        break;
    }
  }
  state.next_seq = events.size();
  return state;
}

ItemState load_state(Storage& store, const std::string& item_id) {
  return fold_state(item_id, load_events(store, item_id));
}

WorkflowSpec load_spec(Storage& store, const std::string& item_id, VersionTag version) {
  StoragePath path = workflow_path(item_id, version);
  if (!store.exists(path)) {
    if (store.list(item_id, ClusterKind::Event).empty()) {
      throw Error(ErrorKind::UnknownItem, "no such item: " + item_id);
    }
    throw Error(ErrorKind::UnknownVersion,
                item_id + " has no version " + std::to_string(version));
  }
  return spec_from_json(json::parse(store.get(path).payload));
}

Descriptions load_descriptions(Storage& store, const std::string& item_id) {
  StoragePath path = descriptions_path(item_id);
  if (!store.exists(path)) return {};
  return descriptions_from_json(json::parse(store.get(path).payload));
}

Outcome load_outcome(Storage& store, const ExecutionId& exec, const NodeId& node) {
  StoragePath path = outcome_path(exec, node);
  if (!store.exists(path)) {
    throw Error(ErrorKind::MissingOutcome,
                "no outcome for " + node + " in " + exec.to_string());
  }
  return outcome_from_json(json::parse(store.get(path).payload));
}

RunInputs load_run_inputs(Storage& store, const ExecutionId& exec) {
  StoragePath path = run_inputs_path(exec);
  if (!store.exists(path)) {
    throw Error(ErrorKind::UnknownExecution, "no such execution: " + exec.to_string());
  }
  return run_inputs_from_json(json::parse(store.get(path).payload));
}

CaptureService::CaptureService(Storage& store, Clock clock)
    : store_(store), clock_(clock ? std::move(clock) : Clock(&now_millis)) {}

std::mutex& CaptureService::item_mutex(const std::string& item_id) {
  std::lock_guard<std::mutex> lock(registry_mutex_);
  auto& slot = item_mutexes_[item_id];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

void CaptureService::append_event(Event event) {
  StorageRecord record;
  record.path = event_path(event.item_id, event.seq);
  record.payload = event_to_json(event).dump();
  record.content_type = "event";
  store_.put(record);
}

std::string CaptureService::register_item(const WorkflowSpec& spec,
                                          const Descriptions& descriptions) {
  auto outcome = validate_spec(spec);
  if (!outcome.ok()) {
    std::vector<std::string> details;
    for (const auto& violation : outcome.violations) details.push_back(violation.message);
    throw Error(ErrorKind::InvalidSpec, outcome.violations.front().message)
        .with_details(std::move(details));
  }
  std::string item_id = new_item_id();
  std::lock_guard<std::mutex> lock(item_mutex(item_id));

  WorkflowSpec stored = spec;
  stored.version = 1;
  stored.derived_from.reset();
  store_.put({workflow_path(item_id, 1), canonical_spec_bytes(stored), "spec"});
  store_.put({descriptions_path(item_id), descriptions_to_json(descriptions).dump(),
              "property"});

  Event event;
  event.item_id = item_id;
  event.seq = 0;
  event.timestamp = now_stamp();
  event.kind = EventKind::SpecRecorded;
  event.ref = workflow_path(item_id, 1).render();
  append_event(std::move(event));
  return item_id;
}

VersionTag CaptureService::record_spec_version(const std::string& item_id, WorkflowSpec spec,
                                               VersionTag derived_from) {
  auto outcome = validate_spec(spec);
  if (!outcome.ok()) {
    std::vector<std::string> details;
    for (const auto& violation : outcome.violations) details.push_back(violation.message);
    throw Error(ErrorKind::InvalidSpec, outcome.violations.front().message)
        .with_details(std::move(details));
  }
  std::lock_guard<std::mutex> lock(item_mutex(item_id));
  ItemState state = load_state(store_, item_id);
  if (std::find(state.versions.begin(), state.versions.end(), derived_from) ==
      state.versions.end()) {
    throw Error(ErrorKind::UnknownVersion,
                item_id + " has no version " + std::to_string(derived_from));
  }
  VersionTag version = state.versions.back() + 1;
  spec.version = version;
  spec.derived_from = {{item_id, derived_from}};
  store_.put({workflow_path(item_id, version), canonical_spec_bytes(spec), "spec"});

  Event event;
  event.item_id = item_id;
  event.seq = state.next_seq;
  event.timestamp = now_stamp();
  event.kind = EventKind::SpecRecorded;
  event.ref = workflow_path(item_id, version).render();
  append_event(std::move(event));
  return version;
}

ExecutionId CaptureService::begin_execution(const std::string& item_id, VersionTag version,
                                            const AgentDescription& agent,
                                            const BeginOptions& options) {
  std::lock_guard<std::mutex> lock(item_mutex(item_id));
  ItemState state = load_state(store_, item_id);
  WorkflowSpec spec = load_spec(store_, item_id, version);
  WorkflowSpec flat = expand(spec);

  std::set<NodeId> scope(options.scope.begin(), options.scope.end());
  for (const auto& node : scope) {
    if (!flat.find_node(node)) {
      throw Error(ErrorKind::UnknownNode, "no node " + node + " in version " +
                                              std::to_string(version) + " of " + item_id);
    }
  }
  if (options.replay_of) {
    if (options.replay_of->item_id != item_id || !state.runs.count(options.replay_of->run_seq)) {
      throw Error(ErrorKind::UnknownExecution,
                  "no such execution: " + options.replay_of->to_string());
    }
  }

  ExecutionId exec{item_id, state.runs.empty() ? 1 : state.runs.rbegin()->first + 1};

  RunInputs inputs;
  inputs.agent = agent;
  inputs.bindings = options.bindings;
  inputs.scope.assign(scope.begin(), scope.end());
  inputs.replay_of = options.replay_of;
  store_.put({run_inputs_path(exec), run_inputs_to_json(inputs).dump(), "view"});

  std::uint64_t seq = state.next_seq;
  Event started;
  started.item_id = item_id;
  started.seq = seq++;
  started.timestamp = now_stamp();
  started.kind = EventKind::ExecutionStarted;
  started.run_seq = exec.run_seq;
  started.ref = workflow_path(item_id, version).render();
  append_event(std::move(started));

  std::vector<NodeId> init_nodes;
  if (scope.empty()) {
    for (const auto& node : flat.nodes) init_nodes.push_back(node.id);
    std::sort(init_nodes.begin(), init_nodes.end());
  } else {
    init_nodes.assign(scope.begin(), scope.end());
  }
  for (const auto& node : init_nodes) {
    Event init;
    init.item_id = item_id;
    init.seq = seq++;
    init.timestamp = now_stamp();
    init.kind = EventKind::ActivityTransition;
    init.run_seq = exec.run_seq;
    init.node = node;
    init.to_state = ActivityState::Waiting;
    append_event(std::move(init));
  }
  return exec;
}

void CaptureService::record_transition(const ExecutionId& exec, const NodeId& node,
                                       ActivityState to, std::optional<Outcome> outcome) {
  std::lock_guard<std::mutex> lock(item_mutex(exec.item_id));
  ItemState state;
  try {
    state = load_state(store_, exec.item_id);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::UnknownItem) {
      throw Error(ErrorKind::UnknownExecution, "no such execution: " + exec.to_string());
    }
    throw;
  }
  auto run_it = state.runs.find(exec.run_seq);
  if (run_it == state.runs.end()) {
    throw Error(ErrorKind::UnknownExecution, "no such execution: " + exec.to_string());
  }
  RunState& run = run_it->second;
  if (run.finished()) {
    throw Error(ErrorKind::AlreadyFinished, exec.to_string() + " already finished");
  }

  WorkflowSpec flat = expand(load_spec(store_, exec.item_id, run.version));
  if (!flat.find_node(node)) {
    throw Error(ErrorKind::UnknownNode,
                "no node " + node + " in version " + std::to_string(run.version));
  }
  std::optional<ActivityState> from;
  if (auto it = run.node_states.find(node); it != run.node_states.end()) from = it->second;
  if (!transition_allowed(from, to)) {
    std::string from_name = from ? to_string(*from) : "(none)";
    throw Error(ErrorKind::IllegalTransition,
                node + ": " + from_name + " -> " + to_string(to));
  }

  bool terminal = is_terminal(to);
  if (terminal && !outcome) {
    throw Error(ErrorKind::MissingOutcome,
                "terminal transition of " + node + " needs an outcome");
  }
  if (!terminal && outcome) {
    throw Error(ErrorKind::MalformedInput,
                "outcome only accompanies Completed or Failed");
  }

  std::optional<std::string> ref;
  if (terminal) {
    outcome->node = node;
    outcome->execution = exec;
    if (to == ActivityState::Failed && !outcome->error) {
      throw Error(ErrorKind::MalformedInput, "Failed outcome needs an error record");
    }
    if (to == ActivityState::Completed && outcome->error) {
      throw Error(ErrorKind::MalformedInput, "Completed outcome cannot carry an error");
    }
    std::set<ParamName> names;
    for (const auto& out : outcome->outputs) {
      if (!names.insert(out.name).second) {
        throw Error(ErrorKind::MalformedInput,
                    "duplicate output " + out.name + " on " + node);
      }
    }
    StoragePath path = outcome_path(exec, node);
    store_.put({path, outcome_to_json(*outcome).dump(), "outcome"});
    ref = path.render();
  }

  Event event;
  event.item_id = exec.item_id;
  event.seq = state.next_seq;
  event.timestamp = now_stamp();
  event.kind = EventKind::ActivityTransition;
  event.run_seq = exec.run_seq;
  event.node = node;
  event.from_state = from;
  event.to_state = to;
  event.ref = ref;
  append_event(std::move(event));
}

void CaptureService::end_execution(const ExecutionId& exec, ExecutionStatus status) {
  std::lock_guard<std::mutex> lock(item_mutex(exec.item_id));
  ItemState state;
  try {
    state = load_state(store_, exec.item_id);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::UnknownItem) {
      throw Error(ErrorKind::UnknownExecution, "no such execution: " + exec.to_string());
    }
    throw;
  }
  auto run_it = state.runs.find(exec.run_seq);
  if (run_it == state.runs.end()) {
    throw Error(ErrorKind::UnknownExecution, "no such execution: " + exec.to_string());
  }
  if (run_it->second.finished()) {
    throw Error(ErrorKind::AlreadyFinished, exec.to_string() + " already finished");
  }
  if (status == ExecutionStatus::Succeeded) {
    for (const auto& [node, node_state] : run_it->second.node_states) {
      if (node_state != ActivityState::Completed) {
        throw Error(ErrorKind::StatusMismatch,
                    "cannot mark Succeeded: " + node + " is " + to_string(node_state));
      }
    }
  }

  Event event;
  event.item_id = exec.item_id;
  event.seq = state.next_seq;
  event.timestamp = now_stamp();
  event.kind = EventKind::ExecutionFinished;
  event.run_seq = exec.run_seq;
  event.status = status;
  append_event(std::move(event));
}

void CaptureService::annotate(Annotation annotation) {
  std::lock_guard<std::mutex> lock(item_mutex(annotation.item_id));
  ItemState state = load_state(store_, annotation.item_id);
  if (annotation.version &&
      std::find(state.versions.begin(), state.versions.end(), *annotation.version) ==
          state.versions.end()) {
    throw Error(ErrorKind::UnknownVersion,
                annotation.item_id + " has no version " + std::to_string(*annotation.version));
  }
  if (annotation.node) {
    VersionTag version = annotation.version.value_or(state.versions.back());
    WorkflowSpec spec = load_spec(store_, annotation.item_id, version);
    if (!spec.find_node(*annotation.node)) {
      throw Error(ErrorKind::UnknownNode, "no node " + *annotation.node + " in version " +
                                              std::to_string(version));
    }
  }
  annotation.created_at = now_stamp();

  Event event;
  event.item_id = annotation.item_id;
  event.seq = state.next_seq;
  event.timestamp = annotation.created_at;
  event.kind = EventKind::AnnotationAdded;
  event.annotation = std::move(annotation);
  append_event(std::move(event));
}

void CaptureService::record_validation(const std::string& item_id,
                                       const std::string& report_ref) {
  std::lock_guard<std::mutex> lock(item_mutex(item_id));
  ItemState state = load_state(store_, item_id);
  Event event;
  event.item_id = item_id;
  event.seq = state.next_seq;
  event.timestamp = now_stamp();
  event.kind = EventKind::ValidationRun;
  event.ref = report_ref;
  append_event(std::move(event));
}

}  // namespace prov
