#include "prov/engine.hpp"

#include <algorithm>
#include <functional>
#include <queue>
#include <set>

namespace prov {

namespace {

Error invalid_spec_error(const ValidationOutcome& outcome) {
  std::vector<std::string> details;
  for (const auto& violation : outcome.violations) details.push_back(violation.message);
  return Error(ErrorKind::InvalidSpec, outcome.violations.front().message)
      .with_details(std::move(details));
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (const auto& part : parts) {
    if (!out.empty()) out += sep;
    out += part;
  }
  return out;
}

}  // namespace

std::vector<NodeId> plan(const WorkflowSpec& spec) {
  auto outcome = validate_spec(spec);
  if (!outcome.ok()) throw invalid_spec_error(outcome);
  return plan_expanded(expand(spec));
}

std::vector<NodeId> plan_expanded(const WorkflowSpec& flat) {
  std::map<NodeId, int> indegree;
  std::map<NodeId, std::vector<NodeId>> out;
  for (const auto& node : flat.nodes) indegree[node.id] = 0;
  for (const auto& [from, to] : flat.edges) {
    out[from].push_back(to);
    indegree[to]++;
  }
  std::priority_queue<NodeId, std::vector<NodeId>, std::greater<NodeId>> ready;
  for (const auto& [id, degree] : indegree) {
    if (degree == 0) ready.push(id);
  }
  std::vector<NodeId> order;
  while (!ready.empty()) {
    NodeId cur = ready.top();
    ready.pop();
    order.push_back(cur);
    for (const auto& next : out[cur]) {
      if (--indegree[next] == 0) ready.push(next);
    }
  }
  if (order.size() != flat.nodes.size()) {
    throw Error(ErrorKind::Internal, "plan over a cyclic graph");
  }
  return order;
}

ResolvedInputs resolve_inputs(Storage& store, const WorkflowSpec& flat,
                              const std::vector<NodeId>& order, const RunInputs& run_inputs,
                              const ExecutionId& exec, const NodeId& node) {
  const WorkflowNode* spec_node = flat.find_node(node);
  if (!spec_node) {
    throw Error(ErrorKind::UnknownNode, "no node " + node + " in spec");
  }
  const bool scoped = !run_inputs.scope.empty();
  std::set<NodeId> scope(run_inputs.scope.begin(), run_inputs.scope.end());
  auto fresh = [&](const NodeId& id) { return !scoped || scope.count(id) > 0; };

  std::map<NodeId, size_t> position;
  for (size_t i = 0; i < order.size(); ++i) position[order[i]] = i;
  std::vector<NodeId> preds = flat.predecessors(node);
  std::sort(preds.begin(), preds.end(), [&](const NodeId& a, const NodeId& b) {
    return position[a] < position[b];
  });

  // Outcome lookups, cached per producer.
  std::map<std::string, std::optional<Outcome>> cache;
  auto outputs_of = [&](const ExecutionId& run, const NodeId& producer) -> const Outcome* {
    std::string key = run.to_string() + "/" + producer;
    auto it = cache.find(key);
    if (it == cache.end()) {
      std::optional<Outcome> loaded;
      StoragePath path = outcome_path(run, producer);
      if (store.exists(path)) {
        loaded = outcome_from_json(json::parse(store.get(path).payload));
      }
      it = cache.emplace(key, std::move(loaded)).first;
    }
    return it->second ? &*it->second : nullptr;
  };
  auto find_output = [](const Outcome& outcome, const ParamName& name) -> const DataRef* {
    for (const auto& ref : outcome.outputs) {
      if (ref.name == name) return &ref;
    }
    return nullptr;
  };

  ResolvedInputs result;
  for (const auto& param : spec_node->declared_inputs) {
    // 1. Fresh outputs produced by this run's own nodes, earliest producer
    //    in plan order first.
    std::vector<std::pair<NodeId, const DataRef*>> producers;
    for (const auto& pred : preds) {
      if (!fresh(pred)) continue;
      if (const Outcome* outcome = outputs_of(exec, pred)) {
        if (const DataRef* ref = find_output(*outcome, param)) {
          producers.emplace_back(pred, ref);
        }
      }
    }
    if (!producers.empty()) {
      if (producers.size() > 1) {
        std::vector<std::string> names;
        for (const auto& [id, ref] : producers) names.push_back(id);
        result.notes.push_back("input " + param + ": multiple producers (" +
                               join(names, ",") + "); using " + producers.front().first);
      }
      result.inputs.push_back(*producers.front().second);
      continue;
    }

    // 2. Caller bindings: the head's on a full run, anything on a scoped one.
    bool binding_ok = scoped || node == flat.head;
    if (binding_ok) {
      if (auto it = run_inputs.bindings.find(param); it != run_inputs.bindings.end()) {
        DataRef ref = it->second;
        ref.name = param;
        result.inputs.push_back(std::move(ref));
        continue;
      }
    }

    // 3. On a scoped run, the source execution supplies what out-of-scope
    //    predecessors produced back then, then its own recorded bindings.
    if (scoped && run_inputs.replay_of) {
      std::vector<std::pair<NodeId, const DataRef*>> old_producers;
      for (const auto& pred : preds) {
        if (fresh(pred)) continue;
        if (const Outcome* outcome = outputs_of(*run_inputs.replay_of, pred)) {
          if (const DataRef* ref = find_output(*outcome, param)) {
            old_producers.emplace_back(pred, ref);
          }
        }
      }
      if (!old_producers.empty()) {
        if (old_producers.size() > 1) {
          std::vector<std::string> names;
          for (const auto& [id, ref] : old_producers) names.push_back(id);
          result.notes.push_back("input " + param + ": multiple source producers (" +
                                 join(names, ",") + "); using " +
                                 old_producers.front().first);
        }
        result.inputs.push_back(*old_producers.front().second);
        continue;
      }
      RunInputs source_inputs = load_run_inputs(store, *run_inputs.replay_of);
      if (auto it = source_inputs.bindings.find(param); it != source_inputs.bindings.end()) {
        DataRef ref = it->second;
        ref.name = param;
        result.inputs.push_back(std::move(ref));
        continue;
      }
    }

    result.missing.push_back(param);
  }
  return result;
}

ExecutionId Engine::execute(const std::string& item_id, VersionTag version,
                            Executor& executor,
                            const std::map<ParamName, DataRef>& input_bindings,
                            const AgentDescription& agent) {
  Storage& store = capture_.store();
  WorkflowSpec flat = expand(load_spec(store, item_id, version));

  // Everything statically unsatisfiable is rejected before any event.
  const WorkflowNode* head = flat.find_node(flat.head);
  std::vector<std::string> unbound;
  for (const auto& param : head->declared_inputs) {
    if (!input_bindings.count(param)) unbound.push_back(param);
  }
  if (!unbound.empty()) {
    throw Error(ErrorKind::MissingInput,
                "head inputs unbound: " + join(unbound, ","));
  }
  for (const auto& node : flat.nodes) {
    if (node.id == flat.head) continue;
    auto preds = flat.predecessors(node.id);
    for (const auto& param : node.declared_inputs) {
      bool produced = false;
      for (const auto& pred : preds) {
        const WorkflowNode* p = flat.find_node(pred);
        if (p && std::find(p->declared_outputs.begin(), p->declared_outputs.end(), param) !=
                     p->declared_outputs.end()) {
          produced = true;
          break;
        }
      }
      if (!produced) {
        throw Error(ErrorKind::MissingInput,
                    "no producer for input " + param + " of node " + node.id);
      }
    }
  }

  CaptureService::BeginOptions options;
  options.bindings = input_bindings;
  return run_nodes(item_id, version, executor, options, agent);
}

ExecutionId Engine::execute_scoped(const std::string& item_id, VersionTag version,
                                   Executor& executor,
                                   const std::map<ParamName, DataRef>& input_bindings,
                                   const std::vector<NodeId>& scope,
                                   const std::optional<ExecutionId>& source,
                                   const AgentDescription& agent) {
  if (scope.empty()) {
    throw Error(ErrorKind::EmptyExecution, "scope selects no node");
  }
  Storage& store = capture_.store();
  WorkflowSpec flat = expand(load_spec(store, item_id, version));
  std::set<NodeId> in_scope(scope.begin(), scope.end());
  for (const auto& node : in_scope) {
    if (!flat.find_node(node)) {
      throw Error(ErrorKind::UnknownNode,
                  "no node " + node + " in version " + std::to_string(version));
    }
  }
  RunInputs source_inputs;
  if (source) {
    if (source->item_id != item_id) {
      throw Error(ErrorKind::UnknownExecution,
                  "source execution belongs to another item: " + source->to_string());
    }
    ItemState state = load_state(store, item_id);
    if (!state.runs.count(source->run_seq)) {
      throw Error(ErrorKind::UnknownExecution, "no such execution: " + source->to_string());
    }
    source_inputs = load_run_inputs(store, *source);
  }

  // Feasibility check against what actually exists: fresh producers are
  // taken on faith (they run first), everything else must be present now.
  std::vector<std::string> unresolved;
  for (const auto& id : in_scope) {
    const WorkflowNode* node = flat.find_node(id);
    auto preds = flat.predecessors(id);
    for (const auto& param : node->declared_inputs) {
      bool ok = false;
      for (const auto& pred : preds) {
        if (!in_scope.count(pred)) continue;
        const WorkflowNode* p = flat.find_node(pred);
        if (std::find(p->declared_outputs.begin(), p->declared_outputs.end(), param) !=
            p->declared_outputs.end()) {
          ok = true;
          break;
        }
      }
      if (!ok && input_bindings.count(param)) ok = true;
      if (!ok && source) {
        for (const auto& pred : preds) {
          if (in_scope.count(pred)) continue;
          StoragePath path = outcome_path(*source, pred);
          if (!store.exists(path)) continue;
          Outcome outcome = outcome_from_json(json::parse(store.get(path).payload));
          for (const auto& ref : outcome.outputs) {
            if (ref.name == param) {
              ok = true;
              break;
            }
          }
          if (ok) break;
        }
        if (!ok && source_inputs.bindings.count(param)) ok = true;
      }
      if (!ok) unresolved.push_back("input " + param + " of node " + id);
    }
  }
  if (!unresolved.empty()) {
    throw Error(ErrorKind::UnresolvableInputs, join(unresolved, "; "));
  }

  CaptureService::BeginOptions options;
  options.bindings = input_bindings;
  options.scope.assign(in_scope.begin(), in_scope.end());
  options.replay_of = source;
  return run_nodes(item_id, version, executor, options, agent);
}

ExecutionId Engine::run_nodes(const std::string& item_id, VersionTag version,
                              Executor& executor,
                              const CaptureService::BeginOptions& options,
                              const AgentDescription& agent) {
  ExecutionId exec = capture_.begin_execution(item_id, version, agent, options);
  Storage& store = capture_.store();
  WorkflowSpec flat = expand(load_spec(store, item_id, version));
  std::vector<NodeId> order = plan_expanded(flat);
  RunInputs run_inputs = load_run_inputs(store, exec);

  std::set<NodeId> in_run;
  if (options.scope.empty()) {
    for (const auto& node : flat.nodes) in_run.insert(node.id);
  } else {
    in_run.insert(options.scope.begin(), options.scope.end());
  }

  std::map<NodeId, ActivityState> local;
  for (const auto& id : in_run) local[id] = ActivityState::Waiting;

  bool any_failed = false;
  for (const auto& node : order) {
    if (!in_run.count(node)) continue;
    bool blocked = false;
    for (const auto& pred : flat.predecessors(node)) {
      if (in_run.count(pred) && local[pred] != ActivityState::Completed) {
        blocked = true;
        break;
      }
    }
    if (blocked) continue;  // stays Waiting; "jobs wait" on failed branches
    bool failed = !run_single(exec, flat, order, run_inputs, node, executor);
    local[node] = failed ? ActivityState::Failed : ActivityState::Completed;
    any_failed = any_failed || failed;
  }
  capture_.end_execution(exec,
                         any_failed ? ExecutionStatus::Failed : ExecutionStatus::Succeeded);
  return exec;
}

bool Engine::run_single(const ExecutionId& exec, const WorkflowSpec& flat,
                        const std::vector<NodeId>& order, const RunInputs& run_inputs,
                        const NodeId& node, Executor& executor) {
  capture_.record_transition(exec, node, ActivityState::Started);
  ResolvedInputs resolved =
      resolve_inputs(capture_.store(), flat, order, run_inputs, exec, node);

  Outcome outcome;
  if (!resolved.missing.empty()) {
    outcome.error = ErrorRecord{"missing-input",
                                "unresolved inputs: " + join(resolved.missing, ",")};
  } else {
    try {
      outcome = executor.run(*flat.find_node(node), resolved.inputs);
    } catch (const std::exception& e) {
      outcome = Outcome{};
      outcome.error = ErrorRecord{"executor-fault", e.what()};
    }
    std::set<ParamName> names;
    for (const auto& ref : outcome.outputs) {
      if (!names.insert(ref.name).second) {
        outcome.outputs.clear();
        outcome.error = ErrorRecord{"executor-fault", "duplicate output " + ref.name};
        break;
      }
    }
  }
  for (const auto& note : resolved.notes) {
    if (!outcome.log_text.empty()) outcome.log_text += "\n";
    outcome.log_text += note;
  }
  bool completed = !outcome.error.has_value();
  capture_.record_transition(
      exec, node, completed ? ActivityState::Completed : ActivityState::Failed,
      std::move(outcome));
  return completed;
}

void Engine::suspend(const ExecutionId& exec, const NodeId& node) {
  capture_.record_transition(exec, node, ActivityState::Suspended);
}

void Engine::interrupt(const ExecutionId& exec, const NodeId& node) {
  capture_.record_transition(exec, node, ActivityState::Interrupted);
}

void Engine::resume(const ExecutionId& exec, const NodeId& node, Executor& executor) {
  Storage& store = capture_.store();
  ItemState state = load_state(store, exec.item_id);
  auto run_it = state.runs.find(exec.run_seq);
  if (run_it == state.runs.end()) {
    throw Error(ErrorKind::UnknownExecution, "no such execution: " + exec.to_string());
  }
  auto node_it = run_it->second.node_states.find(node);
  if (node_it == run_it->second.node_states.end() ||
      (node_it->second != ActivityState::Suspended &&
       node_it->second != ActivityState::Interrupted)) {
    throw Error(ErrorKind::IllegalTransition,
                "resume needs Suspended or Interrupted, " + node + " is " +
                    (node_it == run_it->second.node_states.end()
                         ? "uninitialized"
                         : to_string(node_it->second)));
  }
  WorkflowSpec flat = expand(load_spec(store, exec.item_id, run_it->second.version));
  std::vector<NodeId> order = plan_expanded(flat);
  RunInputs run_inputs = load_run_inputs(store, exec);
  run_single(exec, flat, order, run_inputs, node, executor);
}

}  // namespace prov
