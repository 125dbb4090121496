#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "prov/capture.hpp"
#include "prov/engine.hpp"
#include "prov/model.hpp"

namespace prov {

// A spec version together with the recorded events that led to it:
// every SpecRecorded and AnnotationAdded up to and including the one
// that created the version.
struct Reconstruction {
  WorkflowSpec spec;
  std::vector<Event> trace;
};

// Errors: UnknownItem, UnknownVersion.
Reconstruction reconstruct(Storage& store, const std::string& item_id, VersionTag version);

struct ReplayOptions {
  std::vector<NodeId> scope;              // empty = whole pipeline
  std::map<ParamName, DataRef> bindings;  // explicit inputs; win over the source's
  std::optional<ExecutionId> source;  // default: latest Succeeded complete run of `version`
};

// Re-executes a pipeline or part of it. A scoped replay runs exactly the
// requested nodes; out-of-scope ancestors feed it with their recorded
// outputs from the source execution. Errors: UnknownItem, UnknownVersion,
// UnknownNode, UnknownExecution, UnresolvableInputs.
ExecutionId replay(CaptureService& capture, const std::string& item_id, VersionTag version,
                   Executor& executor, const ReplayOptions& options = {});

// The closed edit algebra used by derive, so every derived version's
// audit trail can be re-applied mechanically.
struct Edit {
  enum class Op { AddNode, RemoveNode, AddEdge, RemoveEdge, SetMetadata, SetProcessRef };

  Op op = Op::AddNode;
  WorkflowNode node;                           // AddNode
  NodeId target;                               // RemoveNode/SetMetadata/SetProcessRef
  std::pair<NodeId, NodeId> edge;              // AddEdge/RemoveEdge
  std::map<std::string, std::string> metadata; // SetMetadata (replaces the map)
  std::string process_ref;                     // SetProcessRef
};

const char* to_string(Edit::Op op);
Edit::Op edit_op_from_string(const std::string& text);

json edits_to_json(const std::vector<Edit>& edits);
std::vector<Edit> edits_from_json(const json& doc);

// Pure application; throws InvalidSpec when an edit addresses a node or
// edge the spec does not have.
WorkflowSpec apply_edits(WorkflowSpec spec, const std::vector<Edit>& edits);

// Records the edited spec as a new version derived from base_version and
// stores the edit list beside it for audit.
// Errors: UnknownItem, UnknownVersion, InvalidSpec (first violated
// invariant named).
VersionTag derive(CaptureService& capture, const std::string& item_id,
                  VersionTag base_version, const std::vector<Edit>& edits);

StoragePath edits_path(const std::string& item_id, VersionTag version);

}  // namespace prov
