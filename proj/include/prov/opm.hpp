#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>

#include "prov/capture.hpp"
#include "prov/model.hpp"

namespace prov {

enum class OpmEdgeKind { Used, WasGeneratedBy, WasControlledBy, WasTriggeredBy, WasDerivedFrom };

// XML element names ("used", "wasGeneratedBy", ...).
const char* to_string(OpmEdgeKind kind);
OpmEdgeKind opm_edge_kind_from_string(const std::string& text);

struct OpmProcess {
  std::string id;
  std::string label;
  std::set<std::string> accounts;

  friend bool operator==(const OpmProcess&, const OpmProcess&) = default;
};

struct OpmArtifact {
  std::string id;
  std::string hash;
  std::optional<std::string> uri;
  std::set<std::string> accounts;

  friend bool operator==(const OpmArtifact&, const OpmArtifact&) = default;
};

struct OpmAgent {
  std::string id;
  std::string label;
  std::set<std::string> accounts;

  friend bool operator==(const OpmAgent&, const OpmAgent&) = default;
};

// Effect/cause point backward in time, OPM-style: used(P,A) reads "process
// P (effect) used artifact A (cause)". Role is "" when absent; it is
// mandatory for Used/WasGeneratedBy/WasControlledBy.
struct OpmEdge {
  OpmEdgeKind kind = OpmEdgeKind::Used;
  std::string effect;
  std::string cause;
  std::string role;
  std::set<std::string> accounts;

  friend auto operator<=>(const OpmEdge&, const OpmEdge&) = default;
};

// Keyed containers keep the graph canonical by construction: equality is
// structural and export order is fully determined.
struct OpmGraph {
  std::map<std::string, OpmProcess> processes;
  std::map<std::string, OpmArtifact> artifacts;
  std::map<std::string, OpmAgent> agents;
  std::set<OpmEdge> edges;
  std::set<std::string> accounts;

  friend bool operator==(const OpmGraph&, const OpmGraph&) = default;
};

// Maps one recorded execution onto an OPM graph: each node that started
// becomes a process, every distinct payload digest one artifact, the run's
// agent one agent, all under a single account "run-<N>".
// Errors: UnknownExecution, EmptyExecution.
OpmGraph to_opm(Storage& store, const ExecutionId& exec);

// Checks endpoint existence and typing, role presence, account references,
// and per-account acyclicity of the Used/WasGeneratedBy/WasTriggeredBy
// subgraph. Violations are data.
ValidationOutcome validate_opm(const OpmGraph& graph);

// Deterministic UTF-8 document; same graph, same bytes.
// Errors: InvalidGraph when the graph fails validate_opm.
std::string export_xml(const OpmGraph& graph);

// Inverse of export_xml on valid graphs. Errors: MalformedXml on unparsable
// input, SchemaViolation naming the offending element or reference,
// InvalidGraph when the parsed graph fails validate_opm.
OpmGraph import_xml(const std::string& bytes);

// Ancestors of an artifact: backward over WasGeneratedBy, then Used and
// WasDerivedFrom, to the origins. The artifact itself is excluded unless a
// cycle leads back to it. Errors: UnknownArtifact.
std::set<std::string> lineage(const OpmGraph& graph, const std::string& artifact_id);

}  // namespace prov
