#pragma once

#include <optional>
#include <string>
#include <vector>

#include "prov/capture.hpp"
#include "prov/model.hpp"

namespace prov {

// Ancestor-closed slice of one spec version. `entries` are the fragment's
// nodes with no predecessor inside it.
struct Fragment {
  WorkflowSpec spec;
  std::vector<NodeId> entries;
};

struct ExecutionRow {
  ExecutionId exec;
  VersionTag version = 1;
  std::optional<ExecutionStatus> status;  // absent while the run is open
  std::string started_at;
  std::string finished_at;
};

struct ErrorRow {
  ExecutionId exec;
  NodeId node;
  ErrorRecord error;
  std::string timestamp;
};

struct NodeComparison {
  NodeId node;
  std::string verdict;  // only-a | only-b | state-differs | outputs-differ | outputs-equal
  std::optional<ActivityState> state_a;
  std::optional<ActivityState> state_b;
  std::vector<std::pair<ParamName, std::string>> outputs_a;  // (name, hash), sorted
  std::vector<std::pair<ParamName, std::string>> outputs_b;
};

struct ComparisonReport {
  ExecutionId a;
  ExecutionId b;
  bool same_fingerprint = false;
  std::vector<NodeComparison> nodes;  // sorted by node id
};

// Errors: UnknownItem, UnknownVersion.
WorkflowSpec get_pipeline(Storage& store, const std::string& item_id, VersionTag version);

// Requested nodes plus all their ancestors in the expanded spec, with the
// induced edges. Errors: UnknownItem, UnknownVersion, UnknownNode.
Fragment get_subpipeline(Storage& store, const std::string& item_id, VersionTag version,
                         const std::vector<NodeId>& nodes);

// Chronological by run_seq; open runs only with the flag. Errors: UnknownItem.
std::vector<ExecutionRow> list_executions(Storage& store, const std::string& item_id,
                                          bool include_open);

// Every Failed outcome's error, in event order, optionally one run only.
// Errors: UnknownItem, UnknownExecution.
std::vector<ErrorRow> get_errors(Storage& store, const std::string& item_id,
                                 const std::optional<ExecutionId>& exec = std::nullopt);

// Case-insensitive substring match ("" matches everything), ordered by
// (item, event seq). Unknown scope yields an empty list, never an error.
std::vector<Annotation> search_annotations(Storage& store, const std::string& text_query,
                                           const std::optional<std::string>& scope = std::nullopt);

// Node-by-node diff of two finished runs, plus spec fingerprint equality.
// Errors: UnknownExecution, ExecutionOpen.
ComparisonReport compare_executions(Storage& store, const ExecutionId& a,
                                    const ExecutionId& b);

// Deterministic JSON renderings shared by the CLI and the service.
json fragment_to_json(const Fragment& fragment);
json execution_rows_to_json(const std::vector<ExecutionRow>& rows);
json error_rows_to_json(const std::vector<ErrorRow>& rows);
json annotations_to_json(const std::vector<Annotation>& annotations);
json comparison_to_json(const ComparisonReport& report);

}  // namespace prov
