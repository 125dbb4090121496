#pragma once

// Two flavours of checking: blueprint validation compares a pipeline
// definition against a reference specification, and offline/online
// validation compares what an execution actually produced against a
// reference dataset of expected content hashes.

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "prov/capture.hpp"
#include "prov/engine.hpp"
#include "prov/model.hpp"

namespace prov {

// Expected content hashes per node, kept in listed order.
struct ReferenceDataset {
  std::string name;
  std::map<NodeId, std::vector<std::pair<ParamName, std::string>>> expected;
};

json reference_to_json(const ReferenceDataset& ref);
ReferenceDataset reference_from_json(const json& doc);

enum class ValidationMode { Blueprint, Offline, Online };
enum class FindingKind { Match, Mismatch, Missing, Extra };
enum class Verdict { Pass, Fail };

const char* to_string(ValidationMode mode);
const char* to_string(FindingKind kind);
const char* to_string(Verdict verdict);

struct Finding {
  std::string location;  // node id, "node/param", "edge a->b", or "head"
  FindingKind kind = FindingKind::Match;
  std::string detail;

  friend bool operator==(const Finding&, const Finding&) = default;
};

struct ValidationReport {
  ValidationMode mode = ValidationMode::Blueprint;
  std::string item_id;              // blueprint: the candidate's spec_id
  VersionTag version = 0;           // blueprint: the candidate's version
  std::optional<ExecutionId> exec;  // offline / online subject
  std::vector<Finding> findings;
  Verdict verdict = Verdict::Pass;
};

json report_to_json(const ValidationReport& report);

// Field-by-field comparison of the expanded graphs, matched by node id.
// The verdict is fingerprint equality, which coincides with an empty
// finding list; differences only on the candidate side (extra nodes or
// edges) still fail here, unlike dataset validation below.
ValidationReport validate_blueprint(const WorkflowSpec& spec, const WorkflowSpec& blueprint);

// Compares the recorded outputs of a finished execution against `ref`.
// Nodes the dataset never mentions are ignored; unexpected outputs at a
// mentioned node are reported as Extra but do not fail the verdict.
// Read-only: never writes to the store.
ValidationReport validate_offline(Storage& store, const ExecutionId& exec,
                                  const ReferenceDataset& ref);

// Full replay of the given version, then an offline check of what the
// fresh execution produced.
std::pair<ExecutionId, ValidationReport> validate_online(CaptureService& capture,
                                                         const std::string& item_id,
                                                         VersionTag version,
                                                         Executor& executor,
                                                         const ReferenceDataset& ref);

}  // namespace prov
