#include "prov/opm.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "prov/engine.hpp"

namespace prov {

const char* to_string(OpmEdgeKind kind) {
  switch (kind) {
    case OpmEdgeKind::Used: return "used";
    case OpmEdgeKind::WasGeneratedBy: return "wasGeneratedBy";
    case OpmEdgeKind::WasControlledBy: return "wasControlledBy";
    case OpmEdgeKind::WasTriggeredBy: return "wasTriggeredBy";
    case OpmEdgeKind::WasDerivedFrom: return "wasDerivedFrom";
  }
  return "used";
}

OpmEdgeKind opm_edge_kind_from_string(const std::string& text) {
  if (text == "used") return OpmEdgeKind::Used;
  if (text == "wasGeneratedBy") return OpmEdgeKind::WasGeneratedBy;
  if (text == "wasControlledBy") return OpmEdgeKind::WasControlledBy;
  if (text == "wasTriggeredBy") return OpmEdgeKind::WasTriggeredBy;
  if (text == "wasDerivedFrom") return OpmEdgeKind::WasDerivedFrom;
  throw Error(ErrorKind::MalformedInput, "unknown dependency kind: " + text);
}

OpmGraph to_opm(Storage& store, const ExecutionId& exec) {
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
  if (run.node_states.empty()) {
    throw Error(ErrorKind::EmptyExecution,
                exec.to_string() + " recorded no transitions");
  }
  WorkflowSpec flat = expand(load_spec(store, exec.item_id, run.version));
  std::vector<NodeId> order = plan_expanded(flat);
  RunInputs run_inputs = load_run_inputs(store, exec);

  OpmGraph graph;
  const std::string account = "run-" + std::to_string(exec.run_seq);
  graph.accounts.insert(account);

  std::string agent_label = run_inputs.agent.name.empty() ? "anonymous" : run_inputs.agent.name;
  std::string agent_id = "agent-" + agent_label;
  graph.agents[agent_id] = {agent_id, agent_label, {account}};

  auto ensure_artifact = [&](const DataRef& ref) {
    std::string id = "art-" + ref.content_hash;
    auto it = graph.artifacts.find(id);
    if (it == graph.artifacts.end()) {
      graph.artifacts[id] = {id, ref.content_hash, ref.uri, {account}};
    } else {
      it->second.accounts.insert(account);
    }
    return id;
  };

  std::set<NodeId> ran;
  for (const auto& [node, node_state] : run.node_states) {
    if (node_state != ActivityState::Waiting) ran.insert(node);
  }

  for (const auto& node : order) {
    if (!ran.count(node)) continue;
    std::string process_id = "proc-" + node;
    graph.processes[process_id] = {process_id, node, {account}};
    graph.edges.insert(
        {OpmEdgeKind::WasControlledBy, process_id, agent_id, "controller", {account}});

    ResolvedInputs resolved = resolve_inputs(store, flat, order, run_inputs, exec, node);
    std::vector<std::string> input_ids;
    for (const auto& ref : resolved.inputs) {
      std::string art = ensure_artifact(ref);
      input_ids.push_back(art);
      graph.edges.insert({OpmEdgeKind::Used, process_id, art, ref.name, {account}});
    }

    StoragePath path = outcome_path(exec, node);
    if (store.exists(path)) {
      Outcome outcome = outcome_from_json(json::parse(store.get(path).payload));
      for (const auto& ref : outcome.outputs) {
        std::string art = ensure_artifact(ref);
        graph.edges.insert(
            {OpmEdgeKind::WasGeneratedBy, art, process_id, ref.name, {account}});
        for (const auto& input : input_ids) {
          graph.edges.insert({OpmEdgeKind::WasDerivedFrom, art, input, "", {account}});
        }
      }
    }
  }

  for (const auto& [from, to] : flat.edges) {
    if (ran.count(from) && ran.count(to)) {
      graph.edges.insert(
          {OpmEdgeKind::WasTriggeredBy, "proc-" + to, "proc-" + from, "", {account}});
    }
  }
  return graph;
}

namespace {

enum class NodeType { Process, Artifact, Agent, Missing };

NodeType node_type(const OpmGraph& graph, const std::string& id) {
  if (graph.processes.count(id)) return NodeType::Process;
  if (graph.artifacts.count(id)) return NodeType::Artifact;
  if (graph.agents.count(id)) return NodeType::Agent;
  return NodeType::Missing;
}

std::string edge_label(const OpmEdge& edge) {
  return std::string(to_string(edge.kind)) + "(" + edge.effect + "," + edge.cause + ")";
}

}  // namespace

ValidationOutcome validate_opm(const OpmGraph& graph) {
  ValidationOutcome result;
  auto violate = [&result](std::string message, std::string where) {
    result.violations.push_back({std::move(message), std::move(where)});
  };

  auto check_id = [&](const std::string& key, const std::string& id, const char* what) {
    if (id.empty()) violate(std::string("empty ") + what + " id", key);
    else if (key != id) violate(std::string(what) + " keyed under wrong id: " + id, key);
  };
  for (const auto& [key, process] : graph.processes) check_id(key, process.id, "process");
  for (const auto& [key, artifact] : graph.artifacts) check_id(key, artifact.id, "artifact");
  for (const auto& [key, agent] : graph.agents) check_id(key, agent.id, "agent");

  for (const auto& [id, artifact] : graph.artifacts) {
    if (graph.processes.count(id)) violate("id used by process and artifact: " + id, id);
  }
  for (const auto& [id, agent] : graph.agents) {
    if (graph.processes.count(id) || graph.artifacts.count(id)) {
      violate("agent id collides with another node: " + id, id);
    }
  }

  auto check_accounts = [&](const std::set<std::string>& accounts, const std::string& where) {
    for (const auto& account : accounts) {
      if (!graph.accounts.count(account)) {
        violate("unknown account: " + account, where);
      }
    }
  };
  for (const auto& [id, process] : graph.processes) check_accounts(process.accounts, id);
  for (const auto& [id, artifact] : graph.artifacts) check_accounts(artifact.accounts, id);
  for (const auto& [id, agent] : graph.agents) check_accounts(agent.accounts, id);

  for (const auto& edge : graph.edges) {
    NodeType effect = node_type(graph, edge.effect);
    NodeType cause = node_type(graph, edge.cause);
    if (effect == NodeType::Missing) {
      violate("unknown edge endpoint: " + edge.effect, edge_label(edge));
      continue;
    }
    if (cause == NodeType::Missing) {
      violate("unknown edge endpoint: " + edge.cause, edge_label(edge));
      continue;
    }
    NodeType want_effect = NodeType::Process;
    NodeType want_cause = NodeType::Artifact;
    switch (edge.kind) {
      case OpmEdgeKind::Used: break;
      case OpmEdgeKind::WasGeneratedBy:
        want_effect = NodeType::Artifact;
        want_cause = NodeType::Process;
        break;
      case OpmEdgeKind::WasControlledBy:
        want_cause = NodeType::Agent;
        break;
      case OpmEdgeKind::WasTriggeredBy:
        want_cause = NodeType::Process;
        break;
      case OpmEdgeKind::WasDerivedFrom:
        want_effect = NodeType::Artifact;
        break;
    }
    if (effect != want_effect || cause != want_cause) {
      violate("endpoint type mismatch on " + edge_label(edge), edge_label(edge));
    }
    bool needs_role = edge.kind == OpmEdgeKind::Used ||
                      edge.kind == OpmEdgeKind::WasGeneratedBy ||
                      edge.kind == OpmEdgeKind::WasControlledBy;
    if (needs_role && edge.role.empty()) {
      violate("role required on " + edge_label(edge), edge_label(edge));
    }
    check_accounts(edge.accounts, edge_label(edge));
  }

  // Per-account causality must be acyclic over used/wasGeneratedBy/
  // wasTriggeredBy, or the account tells an impossible story.
  for (const auto& account : graph.accounts) {
    std::map<std::string, std::vector<std::string>> forward;
    std::map<std::string, int> indegree;
    for (const auto& edge : graph.edges) {
      if (!edge.accounts.count(account)) continue;
      if (edge.kind != OpmEdgeKind::Used && edge.kind != OpmEdgeKind::WasGeneratedBy &&
          edge.kind != OpmEdgeKind::WasTriggeredBy) {
        continue;
      }
      forward[edge.effect].push_back(edge.cause);
      indegree[edge.effect];
      indegree[edge.cause]++;
    }
    std::deque<std::string> ready;
    for (const auto& [id, degree] : indegree) {
      if (degree == 0) ready.push_back(id);
    }
    size_t processed = 0;
    while (!ready.empty()) {
      std::string cur = ready.front();
      ready.pop_front();
      ++processed;
      for (const auto& next : forward[cur]) {
        if (--indegree[next] == 0) ready.push_back(next);
      }
    }
    if (processed != indegree.size()) {
      violate("account cycle: " + account, account);
    }
  }
  return result;
}

namespace {

std::string xml_escape(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

void append_account_refs(std::string& out, const std::set<std::string>& accounts,
                         const char* indent) {
  for (const auto& account : accounts) {
    out += indent;
    out += "<account ref=\"" + xml_escape(account) + "\"/>\n";
  }
}

}  // namespace

std::string export_xml(const OpmGraph& graph) {
  auto outcome = validate_opm(graph);
  if (!outcome.ok()) {
    std::vector<std::string> details;
    for (const auto& violation : outcome.violations) details.push_back(violation.message);
    throw Error(ErrorKind::InvalidGraph, outcome.violations.front().message)
        .with_details(std::move(details));
  }

  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<opmGraph>\n";

  if (graph.processes.empty()) {
    out += "  <processes/>\n";
  } else {
    out += "  <processes>\n";
    for (const auto& [id, process] : graph.processes) {
      out += "    <process id=\"" + xml_escape(id) + "\">\n";
      out += "      <label>" + xml_escape(process.label) + "</label>\n";
      append_account_refs(out, process.accounts, "      ");
      out += "    </process>\n";
    }
    out += "  </processes>\n";
  }

  if (graph.artifacts.empty()) {
    out += "  <artifacts/>\n";
  } else {
    out += "  <artifacts>\n";
    for (const auto& [id, artifact] : graph.artifacts) {
      out += "    <artifact id=\"" + xml_escape(id) + "\">\n";
      out += "      <hash>" + xml_escape(artifact.hash) + "</hash>\n";
      if (artifact.uri) {
        out += "      <uri>" + xml_escape(*artifact.uri) + "</uri>\n";
      }
      append_account_refs(out, artifact.accounts, "      ");
      out += "    </artifact>\n";
    }
    out += "  </artifacts>\n";
  }

  if (graph.agents.empty()) {
    out += "  <agents/>\n";
  } else {
    out += "  <agents>\n";
    for (const auto& [id, agent] : graph.agents) {
      out += "    <agent id=\"" + xml_escape(id) + "\">\n";
      out += "      <label>" + xml_escape(agent.label) + "</label>\n";
      append_account_refs(out, agent.accounts, "      ");
      out += "    </agent>\n";
    }
    out += "  </agents>\n";
  }

  if (graph.edges.empty()) {
    out += "  <dependencies/>\n";
  } else {
    out += "  <dependencies>\n";
    for (const auto& edge : graph.edges) {
      const char* name = to_string(edge.kind);
      out += std::string("    <") + name + ">\n";
      out += "      <effect ref=\"" + xml_escape(edge.effect) + "\"/>\n";
      out += "      <cause ref=\"" + xml_escape(edge.cause) + "\"/>\n";
      if (!edge.role.empty()) {
        out += "      <role value=\"" + xml_escape(edge.role) + "\"/>\n";
      }
      append_account_refs(out, edge.accounts, "      ");
      out += std::string("    </") + name + ">\n";
    }
    out += "  </dependencies>\n";
  }

  if (!graph.accounts.empty()) {
    out += "  <accounts>\n";
    for (const auto& account : graph.accounts) {
      out += "    <account id=\"" + xml_escape(account) + "\"/>\n";
    }
    out += "  </accounts>\n";
  }

  out += "</opmGraph>\n";
  return out;
}

namespace {

namespace pt = boost::property_tree;

// A required singleton attribute; every other attribute is rejected.
std::string only_attr(const pt::ptree& element, const char* name,
                      const std::string& context) {
  std::optional<std::string> value;
  if (auto attrs = element.get_child_optional("<xmlattr>")) {
    for (const auto& [key, attr] : *attrs) {
      if (key == name && !value) {
        value = attr.get_value<std::string>();
      } else {
        throw Error(ErrorKind::SchemaViolation,
                    "unexpected attribute " + key + " on " + context);
      }
    }
  }
  if (!value) {
    throw Error(ErrorKind::SchemaViolation, context + " missing " + name + " attribute");
  }
  return *value;
}

bool skippable(const std::string& key) {
  return key == "<xmlcomment>";
}

std::set<std::string> parse_account_ref(const pt::ptree& element, const std::string& context,
                                        std::set<std::string>& into) {
  into.insert(only_attr(element, "ref", context));
  return into;
}

}  // namespace

OpmGraph import_xml(const std::string& bytes) {
  pt::ptree tree;
  std::istringstream in(bytes);
  try {
    pt::read_xml(in, tree, pt::xml_parser::trim_whitespace);
  } catch (const pt::xml_parser_error& e) {
    throw Error(ErrorKind::MalformedXml, e.what());
  }

  const pt::ptree* root = nullptr;
  for (const auto& [key, child] : tree) {
    if (skippable(key)) continue;
    if (key == "opmGraph" && !root) {
      root = &child;
      continue;
    }
    throw Error(ErrorKind::SchemaViolation, "unexpected element: " + key);
  }
  if (!root) {
    throw Error(ErrorKind::SchemaViolation, "missing opmGraph root");
  }

  OpmGraph graph;
  const pt::ptree* dependencies = nullptr;

  for (const auto& [key, child] : *root) {
    if (skippable(key)) continue;
    if (key == "<xmlattr>") {
      throw Error(ErrorKind::SchemaViolation, "unexpected attribute on opmGraph");
    }
    if (key == "processes") {
      for (const auto& [name, element] : child) {
        if (skippable(name)) continue;
        if (name != "process") {
          throw Error(ErrorKind::SchemaViolation, "unexpected element in processes: " + name);
        }
        OpmProcess process;
        process.id = only_attr(element, "id", "process");
        bool saw_label = false;
        for (const auto& [part, sub] : element) {
          if (skippable(part) || part == "<xmlattr>") continue;
          if (part == "label" && !saw_label) {
            process.label = sub.get_value<std::string>();
            saw_label = true;
          } else if (part == "account") {
            parse_account_ref(sub, "account of process " + process.id, process.accounts);
          } else {
            throw Error(ErrorKind::SchemaViolation,
                        "unexpected element in process " + process.id + ": " + part);
          }
        }
        if (!graph.processes.emplace(process.id, process).second) {
          throw Error(ErrorKind::SchemaViolation, "duplicate process id: " + process.id);
        }
      }
    } else if (key == "artifacts") {
      for (const auto& [name, element] : child) {
        if (skippable(name)) continue;
        if (name != "artifact") {
          throw Error(ErrorKind::SchemaViolation, "unexpected element in artifacts: " + name);
        }
        OpmArtifact artifact;
        artifact.id = only_attr(element, "id", "artifact");
        bool saw_hash = false;
        for (const auto& [part, sub] : element) {
          if (skippable(part) || part == "<xmlattr>") continue;
          if (part == "hash" && !saw_hash) {
            artifact.hash = sub.get_value<std::string>();
            saw_hash = true;
          } else if (part == "uri" && !artifact.uri) {
            artifact.uri = sub.get_value<std::string>();
          } else if (part == "account") {
            parse_account_ref(sub, "account of artifact " + artifact.id, artifact.accounts);
          } else {
            throw Error(ErrorKind::SchemaViolation,
                        "unexpected element in artifact " + artifact.id + ": " + part);
          }
        }
        if (!graph.artifacts.emplace(artifact.id, artifact).second) {
          throw Error(ErrorKind::SchemaViolation, "duplicate artifact id: " + artifact.id);
        }
      }
    } else if (key == "agents") {
      for (const auto& [name, element] : child) {
        if (skippable(name)) continue;
        if (name != "agent") {
          throw Error(ErrorKind::SchemaViolation, "unexpected element in agents: " + name);
        }
        OpmAgent agent;
        agent.id = only_attr(element, "id", "agent");
        bool saw_label = false;
        for (const auto& [part, sub] : element) {
          if (skippable(part) || part == "<xmlattr>") continue;
          if (part == "label" && !saw_label) {
            agent.label = sub.get_value<std::string>();
            saw_label = true;
          } else if (part == "account") {
            parse_account_ref(sub, "account of agent " + agent.id, agent.accounts);
          } else {
            throw Error(ErrorKind::SchemaViolation,
                        "unexpected element in agent " + agent.id + ": " + part);
          }
        }
        if (!graph.agents.emplace(agent.id, agent).second) {
          throw Error(ErrorKind::SchemaViolation, "duplicate agent id: " + agent.id);
        }
      }
    } else if (key == "accounts") {
      for (const auto& [name, element] : child) {
        if (skippable(name)) continue;
        if (name != "account") {
          throw Error(ErrorKind::SchemaViolation, "unexpected element in accounts: " + name);
        }
        graph.accounts.insert(only_attr(element, "id", "account"));
      }
    } else if (key == "dependencies" && !dependencies) {
      dependencies = &child;
    } else {
      throw Error(ErrorKind::SchemaViolation, "unexpected element: " + key);
    }
  }

  // Dependencies resolve after every node is known, whatever the document
  // order was.
  if (dependencies) {
    for (const auto& [name, element] : *dependencies) {
      if (skippable(name)) continue;
      OpmEdge edge;
      try {
        edge.kind = opm_edge_kind_from_string(name);
      } catch (const Error&) {
        throw Error(ErrorKind::SchemaViolation, "unexpected dependency element: " + name);
      }
      std::optional<std::string> effect;
      std::optional<std::string> cause;
      bool saw_role = false;
      for (const auto& [part, sub] : element) {
        if (skippable(part) || part == "<xmlattr>") continue;
        if (part == "effect" && !effect) {
          effect = only_attr(sub, "ref", std::string("effect of ") + name);
        } else if (part == "cause" && !cause) {
          cause = only_attr(sub, "ref", std::string("cause of ") + name);
        } else if (part == "role" && !saw_role) {
          edge.role = only_attr(sub, "value", std::string("role of ") + name);
          saw_role = true;
        } else if (part == "account") {
          parse_account_ref(sub, std::string("account of ") + name, edge.accounts);
        } else {
          throw Error(ErrorKind::SchemaViolation,
                      std::string("unexpected element in ") + name + ": " + part);
        }
      }
      if (!effect || !cause) {
        throw Error(ErrorKind::SchemaViolation,
                    std::string(name) + " needs both effect and cause");
      }
      edge.effect = *effect;
      edge.cause = *cause;
      if (node_type(graph, edge.effect) == NodeType::Missing) {
        throw Error(ErrorKind::SchemaViolation, "unknown reference: " + edge.effect);
      }
      if (node_type(graph, edge.cause) == NodeType::Missing) {
        throw Error(ErrorKind::SchemaViolation, "unknown reference: " + edge.cause);
      }
      graph.edges.insert(std::move(edge));
    }
  }

  auto outcome = validate_opm(graph);
  if (!outcome.ok()) {
    std::vector<std::string> details;
    for (const auto& violation : outcome.violations) details.push_back(violation.message);
    throw Error(ErrorKind::InvalidGraph, outcome.violations.front().message)
        .with_details(std::move(details));
  }
  return graph;
}

std::set<std::string> lineage(const OpmGraph& graph, const std::string& artifact_id) {
  if (!graph.artifacts.count(artifact_id)) {
    throw Error(ErrorKind::UnknownArtifact, "no artifact " + artifact_id);
  }
  // Backward reachability over the data edges; control edges
  // (wasControlledBy, wasTriggeredBy) do not carry lineage.
  std::map<std::string, std::vector<std::string>> parents;
  for (const auto& edge : graph.edges) {
    if (edge.kind == OpmEdgeKind::Used || edge.kind == OpmEdgeKind::WasGeneratedBy ||
        edge.kind == OpmEdgeKind::WasDerivedFrom) {
      parents[edge.effect].push_back(edge.cause);
    }
  }
  std::set<std::string> result;
  std::deque<std::string> frontier{artifact_id};
  while (!frontier.empty()) {
    std::string cur = frontier.front();
    frontier.pop_front();
    for (const auto& parent : parents[cur]) {
      if (result.insert(parent).second) frontier.push_back(parent);
    }
  }
  return result;
}

}  // namespace prov
