#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "prov/errors.hpp"

namespace prov {

using json = nlohmann::json;

// Node identifiers are user-supplied strings, unique within one spec.
// Valid ids match [A-Za-z0-9_.-]+ ("." and ".." are rejected so that
// rendered storage paths stay unambiguous on a filesystem).
using NodeId = std::string;
using ParamName = std::string;

// Store-assigned monotone version number; the first recorded spec is 1.
using VersionTag = std::uint64_t;

bool valid_node_id(const std::string& id);

enum class NodeKind { Single, Composite };

const char* to_string(NodeKind kind);
NodeKind node_kind_from_string(const std::string& text);

struct WorkflowNode {
  NodeId id;
  NodeKind kind = NodeKind::Single;
  std::string process_ref;            // script/executable identifier
  std::vector<NodeId> children;       // non-empty iff Composite
  std::map<std::string, std::string> metadata;
  std::vector<ParamName> declared_inputs;
  std::vector<ParamName> declared_outputs;
};

// The versioned DAG pipeline description. Edge (from, to) means "to"
// depends on "from".
struct WorkflowSpec {
  std::string spec_id;
  std::string name;
  VersionTag version = 1;
  NodeId head;
  std::vector<WorkflowNode> nodes;
  std::vector<std::pair<NodeId, NodeId>> edges;
  std::optional<std::pair<std::string, VersionTag>> derived_from;

  const WorkflowNode* find_node(const NodeId& id) const;
  std::vector<NodeId> predecessors(const NodeId& id) const;
  std::vector<NodeId> successors(const NodeId& id) const;
};

// Reference to a piece of data moved through a workflow: a named payload
// identified by its content digest. The payload itself may live off-store.
struct DataRef {
  ParamName name;
  std::string content_hash;  // 64 hex chars
  std::optional<std::string> uri;
  std::optional<std::string> inline_payload;
};

// Builds a DataRef around an inline payload, computing its digest.
DataRef make_data_ref(ParamName name, std::string payload,
                      std::optional<std::string> uri = std::nullopt);

struct AgentDescription {
  std::string name;
  std::string host;
};

struct ActivityDescription {
  NodeId node;
  std::string description;
  std::vector<ParamName> expected_inputs;
  std::vector<ParamName> expected_outputs;
};

struct OutcomeDescription {
  NodeId node;
  std::vector<ParamName> expected_outputs;
};

struct CollectionDescription {
  std::string name;
  std::vector<ParamName> members;
};

struct Descriptions {
  std::vector<AgentDescription> agents;
  std::vector<ActivityDescription> activities;
  std::vector<OutcomeDescription> outcome_schemas;
  std::vector<CollectionDescription> collections;
};

// Per-task lifecycle. Waiting -> Started; Started -> Completed | Failed |
// Suspended | Interrupted; Suspended -> Started; Interrupted -> Started |
// Failed. Completed and Failed are terminal. Initialization (no prior
// state) admits only Waiting.
enum class ActivityState { Waiting, Started, Suspended, Interrupted, Completed, Failed };

const char* to_string(ActivityState state);
ActivityState activity_state_from_string(const std::string& text);

bool transition_allowed(std::optional<ActivityState> from, ActivityState to);
bool is_terminal(ActivityState state);

enum class ExecutionStatus { Succeeded, Failed, Aborted };

const char* to_string(ExecutionStatus status);
ExecutionStatus execution_status_from_string(const std::string& text);

// Identifies one run of an Item's workflow: run_seq starts at 1 and
// increments per ExecutionStarted event.
struct ExecutionId {
  std::string item_id;
  std::uint64_t run_seq = 0;

  std::string to_string() const;
  static ExecutionId parse(const std::string& text);

  friend bool operator==(const ExecutionId&, const ExecutionId&) = default;
};

enum class EventKind {
  SpecRecorded,
  ExecutionStarted,
  ActivityTransition,
  ExecutionFinished,
  AnnotationAdded,
  ValidationRun,
};

const char* to_string(EventKind kind);
EventKind event_kind_from_string(const std::string& text);

struct ErrorRecord {
  std::string code;
  std::string message;
};

// The recorded result of one activity execution.
struct Outcome {
  NodeId node;
  ExecutionId execution;
  std::vector<DataRef> outputs;
  std::string log_text;
  std::optional<ErrorRecord> error;  // present iff the activity Failed
};

struct Annotation {
  std::string author;
  std::string created_at;  // UTC, millisecond precision
  std::string item_id;
  std::optional<VersionTag> version;
  std::optional<NodeId> node;
  std::string text;
};

// One immutable record in an Item's history. Sequence numbers are dense
// (0,1,2,...); the sequence number, never the timestamp, orders events.
struct Event {
  std::string item_id;
  std::uint64_t seq = 0;
  std::string timestamp;
  EventKind kind = EventKind::SpecRecorded;
  std::optional<std::uint64_t> run_seq;  // ExecutionStarted/Finished/Transition
  std::optional<NodeId> node;
  std::optional<ActivityState> from_state;  // absent on initialization
  std::optional<ActivityState> to_state;
  std::optional<std::string> ref;  // rendered StoragePath of associated data
  std::optional<ExecutionStatus> status;  // ExecutionFinished only
  std::optional<Annotation> annotation;   // AnnotationAdded only
};

// CRISTAL-style tracking unit: descriptions plus the accumulated history.
struct Item {
  std::string item_id;
  std::vector<VersionTag> spec_versions;
  Descriptions descriptions;
  std::map<std::string, std::string> properties;
  std::vector<std::uint64_t> event_seqs;
};

struct Violation {
  std::string message;
  std::string where;  // offending node id or "from->to" edge

  friend bool operator==(const Violation&, const Violation&) = default;
};

struct ValidationOutcome {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
};

// Checks every structural invariant of a spec; violations are data, not
// faults. The first violation is the most fundamental one (see ordering
// in the implementation), which callers use for error naming.
ValidationOutcome validate_spec(const WorkflowSpec& spec);

// Replaces every Composite node by its child subgraph. Edges into the
// composite attach to children with no intra-composite predecessors;
// edges out attach from children with no intra-composite successors.
// Idempotent. Throws Error(CompositeCycle) if the flattened edge
// relation is cyclic, Error(InvalidSpec) on structural damage that
// makes expansion meaningless.
WorkflowSpec expand(const WorkflowSpec& spec);

// Digest over the structural content of a spec: head, nodes and edges in
// canonical order. Identity fields (spec_id, name) and lineage fields
// (version, derived_from) are excluded, so a spec and the blueprint it
// was copied from fingerprint identically.
std::string spec_fingerprint(const WorkflowSpec& spec);

// Canonical JSON: object keys sorted, nodes sorted by id, edges sorted
// lexicographically. This exact byte form is the on-wire spec format.
json spec_to_json(const WorkflowSpec& spec);
WorkflowSpec spec_from_json(const json& doc);
std::string canonical_spec_bytes(const WorkflowSpec& spec);

json data_ref_to_json(const DataRef& ref);
DataRef data_ref_from_json(const json& doc);

json outcome_to_json(const Outcome& outcome);
Outcome outcome_from_json(const json& doc);

json descriptions_to_json(const Descriptions& descriptions);
Descriptions descriptions_from_json(const json& doc);

json annotation_to_json(const Annotation& annotation);
Annotation annotation_from_json(const json& doc);

json event_to_json(const Event& event);
Event event_from_json(const json& doc);

json violations_to_json(const ValidationOutcome& outcome);

}  // namespace prov
