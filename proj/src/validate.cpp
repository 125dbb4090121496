#include "prov/validate.hpp"

#include <algorithm>
#include <set>

#include "prov/reconstruct.hpp"

namespace prov {

const char* to_string(ValidationMode mode) {
  switch (mode) {
    case ValidationMode::Blueprint: return "Blueprint";
    case ValidationMode::Offline: return "Offline";
    case ValidationMode::Online: return "Online";
  }
  return "Blueprint";
}

const char* to_string(FindingKind kind) {
  switch (kind) {
    case FindingKind::Match: return "Match";
    case FindingKind::Mismatch: return "Mismatch";
    case FindingKind::Missing: return "Missing";
    case FindingKind::Extra: return "Extra";
  }
  return "Match";
}

const char* to_string(Verdict verdict) {
  return verdict == Verdict::Pass ? "Pass" : "Fail";
}

namespace {

void check_reference(const ReferenceDataset& ref) {
  for (const auto& [node, entries] : ref.expected) {
    if (node.empty()) {
      throw Error(ErrorKind::MalformedInput, "reference dataset has an empty node id");
    }
    for (const auto& [param, hash] : entries) {
      if (param.empty()) {
        throw Error(ErrorKind::MalformedInput,
                    "reference dataset has an empty param name under " + node);
      }
    }
  }
}

}  // namespace

json reference_to_json(const ReferenceDataset& ref) {
  json expected = json::object();
  for (const auto& [node, entries] : ref.expected) {
    json list = json::array();
    for (const auto& [param, hash] : entries) {
      list.push_back(json{{"hash", hash}, {"param", param}});
    }
    expected[node] = std::move(list);
  }
  json doc;
  doc["expected"] = std::move(expected);
  doc["name"] = ref.name;
  return doc;
}

ReferenceDataset reference_from_json(const json& doc) {
  try {
    ReferenceDataset ref;
    ref.name = doc.value("name", "");
    for (const auto& [node, list] : doc.at("expected").items()) {
      auto& entries = ref.expected[node];
      for (const auto& entry : list) {
        entries.emplace_back(entry.at("param").get<std::string>(),
                             entry.at("hash").get<std::string>());
      }
    }
    check_reference(ref);
    return ref;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedInput,
                std::string("bad reference dataset: ") + e.what());
  }
}

json report_to_json(const ValidationReport& report) {
  json findings = json::array();
  for (const auto& finding : report.findings) {
    findings.push_back(json{{"detail", finding.detail},
                            {"kind", to_string(finding.kind)},
                            {"location", finding.location}});
  }
  json doc;
  doc["findings"] = std::move(findings);
  doc["mode"] = to_string(report.mode);
  if (report.exec) {
    doc["subject"] = json{{"exec", report.exec->to_string()}};
  } else {
    doc["subject"] = json{{"spec", report.item_id}, {"version", report.version}};
  }
  doc["verdict"] = to_string(report.verdict);
  return doc;
}

namespace {

WorkflowSpec checked_expand(const WorkflowSpec& spec, const char* which) {
  auto outcome = validate_spec(spec);
  if (!outcome.ok()) {
    std::vector<std::string> details;
    for (const auto& violation : outcome.violations) details.push_back(violation.message);
    throw Error(ErrorKind::InvalidSpec,
                std::string(which) + ": " + outcome.violations.front().message)
        .with_details(std::move(details));
  }
  return expand(spec);
}

std::string join_list(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& part : parts) {
    if (!out.empty()) out += ",";
    out += part;
  }
  return out;
}

}  // namespace

ValidationReport validate_blueprint(const WorkflowSpec& spec, const WorkflowSpec& blueprint) {
  WorkflowSpec candidate = checked_expand(spec, "spec");
  WorkflowSpec reference = checked_expand(blueprint, "blueprint");

  ValidationReport report;
  report.mode = ValidationMode::Blueprint;
  report.item_id = spec.spec_id;
  report.version = spec.version;

  if (candidate.head != reference.head) {
    report.findings.push_back({"head", FindingKind::Mismatch,
                               "head differs: " + candidate.head + " != " + reference.head});
  }

  std::map<NodeId, const WorkflowNode*> in_candidate;
  std::map<NodeId, const WorkflowNode*> in_reference;
  for (const auto& node : candidate.nodes) in_candidate[node.id] = &node;
  for (const auto& node : reference.nodes) in_reference[node.id] = &node;

  std::set<NodeId> all_ids;
  for (const auto& [id, node] : in_candidate) all_ids.insert(id);
  for (const auto& [id, node] : in_reference) all_ids.insert(id);

  for (const auto& id : all_ids) {
    auto cand = in_candidate.find(id);
    auto refn = in_reference.find(id);
    if (cand == in_candidate.end()) {
      report.findings.push_back({id, FindingKind::Missing, "node missing from spec"});
      continue;
    }
    if (refn == in_reference.end()) {
      report.findings.push_back({id, FindingKind::Extra, "node absent from blueprint"});
      continue;
    }
    const WorkflowNode& a = *cand->second;
    const WorkflowNode& b = *refn->second;
    if (a.process_ref != b.process_ref) {
      report.findings.push_back({id, FindingKind::Mismatch,
                                 "process_ref differs: " + a.process_ref + " != " +
                                     b.process_ref});
    }
    if (a.metadata != b.metadata) {
      report.findings.push_back({id, FindingKind::Mismatch, "metadata differs"});
    }
    if (a.declared_inputs != b.declared_inputs) {
      report.findings.push_back({id, FindingKind::Mismatch,
                                 "declared inputs differ: [" + join_list(a.declared_inputs) +
                                     "] != [" + join_list(b.declared_inputs) + "]"});
    }
    if (a.declared_outputs != b.declared_outputs) {
      report.findings.push_back(
          {id, FindingKind::Mismatch,
           "declared outputs differ: [" + join_list(a.declared_outputs) + "] != [" +
               join_list(b.declared_outputs) + "]"});
    }
  }

  std::set<std::pair<NodeId, NodeId>> cand_edges(candidate.edges.begin(),
                                                 candidate.edges.end());
  std::set<std::pair<NodeId, NodeId>> ref_edges(reference.edges.begin(),
                                                reference.edges.end());
  for (const auto& [from, to] : ref_edges) {
    if (!cand_edges.count({from, to})) {
      report.findings.push_back(
          {"edge " + from + "->" + to, FindingKind::Missing, "edge missing from spec"});
    }
  }
  for (const auto& [from, to] : cand_edges) {
    if (!ref_edges.count({from, to})) {
      report.findings.push_back(
          {"edge " + from + "->" + to, FindingKind::Extra, "edge absent from blueprint"});
    }
  }

  report.verdict = spec_fingerprint(candidate) == spec_fingerprint(reference)
                       ? Verdict::Pass
                       : Verdict::Fail;
  return report;
}

ValidationReport validate_offline(Storage& store, const ExecutionId& exec,
                                  const ReferenceDataset& ref) {
  check_reference(ref);
  ItemState state;
  try {
    state = load_state(store, exec.item_id);
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
  const RunState& run = run_it->second;
  if (!run.status) {
    throw Error(ErrorKind::ExecutionOpen, "execution still open: " + exec.to_string());
  }

  // What each node actually produced, from its recorded outcome.
  std::map<NodeId, std::map<ParamName, std::string>> produced;
  for (const auto& [node, activity] : run.node_states) {
    if (!is_terminal(activity)) continue;
    Outcome outcome = load_outcome(store, exec, node);
    for (const auto& output : outcome.outputs) produced[node][output.name] = output.content_hash;
  }

  ValidationReport report;
  report.mode = ValidationMode::Offline;
  report.item_id = exec.item_id;
  report.exec = exec;

  for (const auto& [node, entries] : ref.expected) {
    auto prod = produced.find(node);
    std::set<ParamName> listed;
    for (const auto& [param, hash] : entries) {
      listed.insert(param);
      std::string location = node + "/" + param;
      if (prod == produced.end() || !prod->second.count(param)) {
        report.findings.push_back({location, FindingKind::Missing, "never produced"});
      } else if (prod->second.at(param) == hash) {
        report.findings.push_back({location, FindingKind::Match, ""});
      } else {
        report.findings.push_back({location, FindingKind::Mismatch,
                                   "expected " + hash + ", recorded " +
                                       prod->second.at(param)});
      }
    }
    if (prod != produced.end()) {
      for (const auto& [param, hash] : prod->second) {
        if (!listed.count(param)) {
          report.findings.push_back(
              {node + "/" + param, FindingKind::Extra, "output not in reference"});
        }
      }
    }
  }

  bool failed = std::any_of(report.findings.begin(), report.findings.end(),
                            [](const Finding& finding) {
                              return finding.kind == FindingKind::Mismatch ||
                                     finding.kind == FindingKind::Missing;
                            });
  report.verdict = failed ? Verdict::Fail : Verdict::Pass;
  return report;
}

std::pair<ExecutionId, ValidationReport> validate_online(CaptureService& capture,
                                                         const std::string& item_id,
                                                         VersionTag version,
                                                         Executor& executor,
                                                         const ReferenceDataset& ref) {
  check_reference(ref);
  ExecutionId exec = replay(capture, item_id, version, executor, {});
  ValidationReport report = validate_offline(capture.store(), exec, ref);
  report.mode = ValidationMode::Online;
  return {exec, report};
}

}  // namespace prov
