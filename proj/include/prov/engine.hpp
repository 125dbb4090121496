#pragma once

#include <map>
#include <string>
#include <vector>

#include "prov/capture.hpp"
#include "prov/model.hpp"

namespace prov {

// Supplied by the embedder; the engine neither schedules nor allocates
// resources, it only asks for one node to be run with resolved inputs.
class Executor {
 public:
  virtual ~Executor() = default;
  virtual Outcome run(const WorkflowNode& node, const std::vector<DataRef>& inputs) = 0;
};

// Deterministic topological order of the expanded spec: among ready nodes
// the lexicographically smallest id goes first.
// Errors: InvalidSpec (first violation named, all in details).
std::vector<NodeId> plan(const WorkflowSpec& spec);

// plan() without re-validating/re-expanding; `flat` must be expanded and
// acyclic.
std::vector<NodeId> plan_expanded(const WorkflowSpec& flat);

// How one node's declared inputs were satisfied for a given run.
struct ResolvedInputs {
  std::vector<DataRef> inputs;        // in declared_inputs order
  std::vector<std::string> notes;     // ambiguity flags, appended to the log
  std::vector<ParamName> missing;     // declared but unsatisfiable
};

// Single authority on input routing, shared by execution, replay and the
// OPM exporter. Fresh outputs of this run's own nodes win (earliest
// producer in plan order); then caller bindings (head only on a full run,
// any node on a scoped one); then, on a scoped run, the source run's
// recorded outputs and bindings.
ResolvedInputs resolve_inputs(Storage& store, const WorkflowSpec& flat,
                              const std::vector<NodeId>& order, const RunInputs& run_inputs,
                              const ExecutionId& exec, const NodeId& node);

class Engine {
 public:
  explicit Engine(CaptureService& capture) : capture_(capture) {}

  // Full run: every node of the expanded spec, serially in plan order.
  // On a node failure its dependents never leave Waiting; independent
  // branches still run; final status Failed. Errors: UnknownItem,
  // UnknownVersion, MissingInput (pre-flight, before any event).
  ExecutionId execute(const std::string& item_id, VersionTag version, Executor& executor,
                      const std::map<ParamName, DataRef>& input_bindings,
                      const AgentDescription& agent = {"engine", ""});

  // Scoped re-run: executes exactly `scope`, satisfying inputs from the
  // source execution (when given) where no in-scope producer exists.
  // Errors as above plus UnknownExecution, EmptyExecution,
  // UnresolvableInputs.
  ExecutionId execute_scoped(const std::string& item_id, VersionTag version,
                             Executor& executor,
                             const std::map<ParamName, DataRef>& input_bindings,
                             const std::vector<NodeId>& scope,
                             const std::optional<ExecutionId>& source,
                             const AgentDescription& agent = {"engine", ""});

  // Manual lifecycle controls for a node of an open execution.
  void suspend(const ExecutionId& exec, const NodeId& node);
  void interrupt(const ExecutionId& exec, const NodeId& node);
  // Records the restart and re-invokes the executor for that node.
  void resume(const ExecutionId& exec, const NodeId& node, Executor& executor);

 private:
  ExecutionId run_nodes(const std::string& item_id, VersionTag version, Executor& executor,
                        const CaptureService::BeginOptions& options,
                        const AgentDescription& agent);
  // Started -> executor -> terminal transition; true on Completed.
  bool run_single(const ExecutionId& exec, const WorkflowSpec& flat,
                  const std::vector<NodeId>& order, const RunInputs& run_inputs,
                  const NodeId& node, Executor& executor);

  CaptureService& capture_;
};

}  // namespace prov
