#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "prov/model.hpp"
#include "prov/storage.hpp"
#include "prov/util.hpp"

namespace prov {

// Everything recorded when an execution begins: who ran it, the caller-
// supplied input bindings, and (for partial re-runs) which nodes run and
// which prior execution supplies the rest.
struct RunInputs {
  AgentDescription agent;
  std::map<ParamName, DataRef> bindings;
  std::vector<NodeId> scope;  // empty = every node of the expanded spec
  std::optional<ExecutionId> replay_of;
};

json run_inputs_to_json(const RunInputs& inputs);
RunInputs run_inputs_from_json(const json& doc);

struct RunState {
  std::uint64_t run_seq = 0;
  VersionTag version = 1;
  std::map<NodeId, ActivityState> node_states;
  std::optional<ExecutionStatus> status;  // present once finished
  std::string started_at;
  std::string finished_at;

  bool finished() const { return status.has_value(); }
};

// Pure fold over an Item's event list; everything a reader needs that is
// not payload data. Rebuildable from the Event records alone.
struct ItemState {
  std::string item_id;
  std::vector<VersionTag> versions;
  std::map<std::uint64_t, RunState> runs;
  std::vector<Annotation> annotations;      // in append order
  std::vector<std::string> validation_refs; // storage paths of stored reports
  std::uint64_t next_seq = 0;
};

// Read-side helpers shared by capture, engine and query.
std::vector<Event> load_events(Storage& store, const std::string& item_id);
ItemState fold_state(const std::string& item_id, const std::vector<Event>& events);
ItemState load_state(Storage& store, const std::string& item_id);
WorkflowSpec load_spec(Storage& store, const std::string& item_id, VersionTag version);
Descriptions load_descriptions(Storage& store, const std::string& item_id);
Outcome load_outcome(Storage& store, const ExecutionId& exec, const NodeId& node);
RunInputs load_run_inputs(Storage& store, const ExecutionId& exec);

// Storage layout helpers (the single place path shapes are defined).
StoragePath event_path(const std::string& item_id, std::uint64_t seq);
StoragePath workflow_path(const std::string& item_id, VersionTag version);
StoragePath outcome_path(const ExecutionId& exec, const NodeId& node);
StoragePath run_inputs_path(const ExecutionId& exec);
StoragePath descriptions_path(const std::string& item_id);

// The write-side API. All records flow through the storage handle given
// at construction; per-item appends are serialized internally, so writers
// sharing one Storage must share one CaptureService.
class CaptureService {
 public:
  using Clock = std::function<std::int64_t()>;  // epoch millis

  explicit CaptureService(Storage& store, Clock clock = {});

  struct BeginOptions {
    std::map<ParamName, DataRef> bindings;
    std::vector<NodeId> scope;
    std::optional<ExecutionId> replay_of;
  };

  // Persists the spec as version 1 and seeds the event log (seq 0).
  // Errors: InvalidSpec (violations in details), BackendUnavailable.
  std::string register_item(const WorkflowSpec& spec, const Descriptions& descriptions);

  // Errors: UnknownItem, UnknownVersion, InvalidSpec.
  VersionTag record_spec_version(const std::string& item_id, WorkflowSpec spec,
                                 VersionTag derived_from);

  // Initializes every node in scope (default: all) to Waiting.
  // Errors: UnknownItem, UnknownVersion, UnknownNode, UnknownExecution.
  ExecutionId begin_execution(const std::string& item_id, VersionTag version,
                              const AgentDescription& agent,
                              const BeginOptions& options = {});

  // Outcome is required (and only legal) on Completed/Failed; a Failed
  // outcome must carry its error record.
  // Errors: UnknownExecution, AlreadyFinished, UnknownNode,
  // IllegalTransition, MissingOutcome, MalformedInput.
  void record_transition(const ExecutionId& exec, const NodeId& node, ActivityState to,
                         std::optional<Outcome> outcome = std::nullopt);

  // Succeeded demands every initialized node Completed (StatusMismatch).
  // Errors: UnknownExecution, AlreadyFinished, StatusMismatch.
  void end_execution(const ExecutionId& exec, ExecutionStatus status);

  // created_at is stamped here. Errors: UnknownItem, UnknownVersion,
  // UnknownNode.
  void annotate(Annotation annotation);

  // Appends a ValidationRun event pointing at a stored report (used by
  // the validation module).
  void record_validation(const std::string& item_id, const std::string& report_ref);

  Storage& store() { return store_; }
  std::string now_stamp() const { return format_utc_millis(clock_()); }

 private:
  std::mutex& item_mutex(const std::string& item_id);
  void append_event(Event event);  // assigns nothing; caller sets seq

  Storage& store_;
  Clock clock_;
  std::mutex registry_mutex_;
  std::map<std::string, std::unique_ptr<std::mutex>> item_mutexes_;
};

}  // namespace prov
