#include "prov/model.hpp"

#include <algorithm>
#include <deque>
#include <set>

#include "prov/util.hpp"

namespace prov {

bool valid_node_id(const std::string& id) {
  if (id.empty() || id == "." || id == "..") return false;
  for (char c : id) {
    bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
              (c >= '0' && c <= '9') || c == '_' || c == '.' || c == '-';
    if (!ok) return false;
  }
  return true;
}

const char* to_string(NodeKind kind) {
  return kind == NodeKind::Single ? "Single" : "Composite";
}

NodeKind node_kind_from_string(const std::string& text) {
  if (text == "Single") return NodeKind::Single;
  if (text == "Composite") return NodeKind::Composite;
  throw Error(ErrorKind::MalformedInput, "unknown node kind: " + text);
}

const WorkflowNode* WorkflowSpec::find_node(const NodeId& id) const {
  for (const auto& node : nodes) {
    if (node.id == id) return &node;
  }
  return nullptr;
}

std::vector<NodeId> WorkflowSpec::predecessors(const NodeId& id) const {
  std::vector<NodeId> out;
  for (const auto& [from, to] : edges) {
    if (to == id) out.push_back(from);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<NodeId> WorkflowSpec::successors(const NodeId& id) const {
  std::vector<NodeId> out;
  for (const auto& [from, to] : edges) {
    if (from == id) out.push_back(to);
  }
  std::sort(out.begin(), out.end());
  return out;
}

DataRef make_data_ref(ParamName name, std::string payload,
                      std::optional<std::string> uri) {
  DataRef ref;
  ref.name = std::move(name);
  ref.content_hash = sha256_hex(payload);
  ref.inline_payload = std::move(payload);
  ref.uri = std::move(uri);
  return ref;
}

const char* to_string(ActivityState state) {
  switch (state) {
    case ActivityState::Waiting: return "Waiting";
    case ActivityState::Started: return "Started";
    case ActivityState::Suspended: return "Suspended";
    case ActivityState::Interrupted: return "Interrupted";
    case ActivityState::Completed: return "Completed";
    case ActivityState::Failed: return "Failed";
  }
  return "Waiting";
}

ActivityState activity_state_from_string(const std::string& text) {
  if (text == "Waiting") return ActivityState::Waiting;
  if (text == "Started") return ActivityState::Started;
  if (text == "Suspended") return ActivityState::Suspended;
  if (text == "Interrupted") return ActivityState::Interrupted;
  if (text == "Completed") return ActivityState::Completed;
  if (text == "Failed") return ActivityState::Failed;
  throw Error(ErrorKind::MalformedInput, "unknown activity state: " + text);
}

bool transition_allowed(std::optional<ActivityState> from, ActivityState to) {
  if (!from.has_value()) return to == ActivityState::Waiting;
  switch (*from) {
    case ActivityState::Waiting:
      return to == ActivityState::Started;
    case ActivityState::Started:
      return to == ActivityState::Completed || to == ActivityState::Failed ||
             to == ActivityState::Suspended || to == ActivityState::Interrupted;
    case ActivityState::Suspended:
      return to == ActivityState::Started;
    case ActivityState::Interrupted:
      return to == ActivityState::Started || to == ActivityState::Failed;
    case ActivityState::Completed:
    case ActivityState::Failed:
      return false;
  }
  return false;
}

bool is_terminal(ActivityState state) {
  return state == ActivityState::Completed || state == ActivityState::Failed;
}

const char* to_string(ExecutionStatus status) {
  switch (status) {
    case ExecutionStatus::Succeeded: return "Succeeded";
    case ExecutionStatus::Failed: return "Failed";
    case ExecutionStatus::Aborted: return "Aborted";
  }
  return "Failed";
}

ExecutionStatus execution_status_from_string(const std::string& text) {
  if (text == "Succeeded") return ExecutionStatus::Succeeded;
  if (text == "Failed") return ExecutionStatus::Failed;
  if (text == "Aborted") return ExecutionStatus::Aborted;
  throw Error(ErrorKind::MalformedInput, "unknown execution status: " + text);
}

std::string ExecutionId::to_string() const {
  return item_id + ":" + std::to_string(run_seq);
}

ExecutionId ExecutionId::parse(const std::string& text) {
  auto pos = text.rfind(':');
  if (pos == std::string::npos || pos == 0 || pos + 1 >= text.size()) {
    throw Error(ErrorKind::MalformedInput, "bad execution id: " + text);
  }
  ExecutionId id;
  id.item_id = text.substr(0, pos);
  const std::string seq = text.substr(pos + 1);
  if (seq.find_first_not_of("0123456789") != std::string::npos) {
    throw Error(ErrorKind::MalformedInput, "bad execution id: " + text);
  }
  try {
    id.run_seq = std::stoull(seq);
  } catch (const std::exception&) {
    throw Error(ErrorKind::MalformedInput, "bad execution id: " + text);
  }
  return id;
}

const char* to_string(EventKind kind) {
  switch (kind) {
    case EventKind::SpecRecorded: return "SpecRecorded";
    case EventKind::ExecutionStarted: return "ExecutionStarted";
    case EventKind::ActivityTransition: return "ActivityTransition";
    case EventKind::ExecutionFinished: return "ExecutionFinished";
    case EventKind::AnnotationAdded: return "AnnotationAdded";
    case EventKind::ValidationRun: return "ValidationRun";
  }
  return "SpecRecorded";
}

EventKind event_kind_from_string(const std::string& text) {
  if (text == "SpecRecorded") return EventKind::SpecRecorded;
  if (text == "ExecutionStarted") return EventKind::ExecutionStarted;
  if (text == "ActivityTransition") return EventKind::ActivityTransition;
  if (text == "ExecutionFinished") return EventKind::ExecutionFinished;
  if (text == "AnnotationAdded") return EventKind::AnnotationAdded;
  if (text == "ValidationRun") return EventKind::ValidationRun;
  throw Error(ErrorKind::MalformedInput, "unknown event kind: " + text);
}

namespace {

std::string edge_label(const NodeId& from, const NodeId& to) {
  return from + "->" + to;
}

// Composite expansion without the final acyclicity check. Assumes the
// structural invariants checked by validate_spec hold; throws
// Error(InvalidSpec) where they do not.
WorkflowSpec expand_structural(const WorkflowSpec& spec) {
  std::map<NodeId, WorkflowNode> nodes;
  for (const auto& node : spec.nodes) {
    if (!nodes.emplace(node.id, node).second) {
      throw Error(ErrorKind::InvalidSpec, "duplicate node id: " + node.id);
    }
  }
  std::set<std::pair<NodeId, NodeId>> edges(spec.edges.begin(), spec.edges.end());
  NodeId head = spec.head;

  for (;;) {
    auto it = std::find_if(nodes.begin(), nodes.end(), [](const auto& kv) {
      return kv.second.kind == NodeKind::Composite;
    });
    if (it == nodes.end()) break;
    const WorkflowNode composite = it->second;
    const NodeId cid = composite.id;

    std::set<NodeId> member(composite.children.begin(), composite.children.end());
    if (member.empty()) {
      throw Error(ErrorKind::InvalidSpec, "composite node has no children: " + cid);
    }
    if (member.count(cid)) {
      throw Error(ErrorKind::InvalidSpec, "composite contains itself: " + cid);
    }
    for (const auto& child : member) {
      if (!nodes.count(child)) {
        throw Error(ErrorKind::InvalidSpec,
                    "unknown child " + child + " of composite " + cid);
      }
    }

    // Boundary children, judged by edges between members only.
    std::vector<NodeId> entries;
    std::vector<NodeId> exits;
    for (const auto& child : member) {
      bool has_intra_pred = false;
      bool has_intra_succ = false;
      for (const auto& [from, to] : edges) {
        if (to == child && member.count(from)) has_intra_pred = true;
        if (from == child && member.count(to)) has_intra_succ = true;
      }
      if (!has_intra_pred) entries.push_back(child);
      if (!has_intra_succ) exits.push_back(child);
    }

    std::set<std::pair<NodeId, NodeId>> next_edges;
    for (const auto& [from, to] : edges) {
      if (from == cid && to == cid) continue;
      if (from == cid) {
        for (const auto& exit : exits) next_edges.emplace(exit, to);
      } else if (to == cid) {
        for (const auto& entry : entries) next_edges.emplace(from, entry);
      } else {
        next_edges.emplace(from, to);
      }
    }
    edges = std::move(next_edges);
    nodes.erase(cid);

    // A composite nested inside another: splice the children upward.
    for (auto& [id, node] : nodes) {
      if (node.kind != NodeKind::Composite) continue;
      auto child_it = std::find(node.children.begin(), node.children.end(), cid);
      if (child_it != node.children.end()) {
        child_it = node.children.erase(child_it);
        node.children.insert(child_it, composite.children.begin(),
                             composite.children.end());
      }
    }

    if (head == cid) {
      // A composite head only stays addressable if it has a unique entry;
      // otherwise the dangling head is reported by validation.
      if (entries.size() == 1) head = entries.front();
    }
  }

  WorkflowSpec out;
  out.spec_id = spec.spec_id;
  out.name = spec.name;
  out.version = spec.version;
  out.derived_from = spec.derived_from;
  out.head = head;
  for (auto& [id, node] : nodes) out.nodes.push_back(std::move(node));
  out.edges.assign(edges.begin(), edges.end());
  return out;
}

// Kahn's algorithm; returns the ids left on a cycle (empty when acyclic).
std::vector<NodeId> cycle_members(const WorkflowSpec& spec) {
  std::map<NodeId, int> indegree;
  std::map<NodeId, std::vector<NodeId>> out;
  for (const auto& node : spec.nodes) indegree[node.id] = 0;
  for (const auto& [from, to] : spec.edges) {
    out[from].push_back(to);
    indegree[to]++;
  }
  std::deque<NodeId> ready;
  for (const auto& [id, deg] : indegree) {
    if (deg == 0) ready.push_back(id);
  }
  size_t processed = 0;
  while (!ready.empty()) {
    NodeId cur = ready.front();
    ready.pop_front();
    ++processed;
    for (const auto& next : out[cur]) {
      if (--indegree[next] == 0) ready.push_back(next);
    }
  }
  std::vector<NodeId> members;
  if (processed != spec.nodes.size()) {
    for (const auto& [id, deg] : indegree) {
      if (deg > 0) members.push_back(id);
    }
  }
  return members;
}

std::string join_ids(const std::vector<NodeId>& ids) {
  std::string out;
  for (const auto& id : ids) {
    if (!out.empty()) out += ",";
    out += id;
  }
  return out;
}

}  // namespace

ValidationOutcome validate_spec(const WorkflowSpec& spec) {
  ValidationOutcome result;
  auto violate = [&result](std::string message, std::string where) {
    result.violations.push_back({std::move(message), std::move(where)});
  };

  std::set<NodeId> ids;
  for (const auto& node : spec.nodes) {
    if (!valid_node_id(node.id)) {
      violate("invalid node id: \"" + node.id + "\"", node.id);
    } else if (!ids.insert(node.id).second) {
      violate("duplicate node id: " + node.id, node.id);
    }
  }

  if (!ids.count(spec.head)) {
    violate("head missing: " + spec.head, spec.head);
  }

  std::map<NodeId, NodeId> parent_of;  // child -> owning composite
  for (const auto& node : spec.nodes) {
    if (node.kind == NodeKind::Single) {
      if (!node.children.empty()) {
        violate("single node has children: " + node.id, node.id);
      }
      if (node.process_ref.empty()) {
        violate("single node missing process_ref: " + node.id, node.id);
      }
    } else {
      if (node.children.empty()) {
        violate("composite node has no children: " + node.id, node.id);
      }
      std::set<NodeId> seen;
      for (const auto& child : node.children) {
        if (!ids.count(child)) {
          violate("unknown child " + child + " of composite " + node.id, node.id);
          continue;
        }
        if (child == node.id) {
          violate("composite contains itself: " + node.id, node.id);
          continue;
        }
        if (!seen.insert(child).second) {
          violate("duplicate child " + child + " of composite " + node.id, node.id);
          continue;
        }
        auto [it, fresh] = parent_of.emplace(child, node.id);
        if (!fresh) {
          violate("child " + child + " under two composites", child);
        }
      }
    }
    std::set<ParamName> in_seen;
    for (const auto& param : node.declared_inputs) {
      if (param.empty()) violate("empty input name on node " + node.id, node.id);
      if (!in_seen.insert(param).second) {
        violate("duplicate declared input " + param + " on node " + node.id, node.id);
      }
    }
    std::set<ParamName> out_seen;
    for (const auto& param : node.declared_outputs) {
      if (param.empty()) violate("empty output name on node " + node.id, node.id);
      if (!out_seen.insert(param).second) {
        violate("duplicate declared output " + param + " on node " + node.id, node.id);
      }
    }
  }

  // Composite containment must be acyclic or expansion never terminates.
  {
    std::set<NodeId> on_cycle;
    for (const auto& [child, parent] : parent_of) {
      std::set<NodeId> seen;
      NodeId cur = child;
      while (parent_of.count(cur)) {
        if (!seen.insert(cur).second) {
          on_cycle.insert(cur);
          break;
        }
        cur = parent_of.at(cur);
      }
    }
    if (!on_cycle.empty()) {
      std::vector<NodeId> members(on_cycle.begin(), on_cycle.end());
      violate("composite containment cycle through " + join_ids(members),
              members.front());
    }
  }

  std::set<std::pair<NodeId, NodeId>> edge_set;
  for (const auto& [from, to] : spec.edges) {
    if (!ids.count(from)) violate("unknown edge endpoint: " + from, edge_label(from, to));
    if (!ids.count(to)) violate("unknown edge endpoint: " + to, edge_label(from, to));
    if (from == to) violate("self edge: " + from, edge_label(from, to));
    edge_set.emplace(from, to);
  }

  if (!result.ok()) return result;

  WorkflowSpec flat = expand_structural(spec);

  auto cycle = cycle_members(flat);
  if (!cycle.empty()) {
    std::sort(cycle.begin(), cycle.end());
    violate("cycle through " + join_ids(cycle), cycle.front());
    return result;
  }

  if (!flat.find_node(flat.head)) {
    violate("head missing after expansion: " + flat.head, flat.head);
    return result;
  }

  for (const auto& [from, to] : flat.edges) {
    if (to == flat.head) {
      violate("head has predecessor", edge_label(from, to));
    }
  }

  // Reachability from the head over the expanded edge relation.
  std::set<NodeId> reached;
  std::deque<NodeId> frontier{flat.head};
  reached.insert(flat.head);
  while (!frontier.empty()) {
    NodeId cur = frontier.front();
    frontier.pop_front();
    for (const auto& [from, to] : flat.edges) {
      if (from == cur && reached.insert(to).second) frontier.push_back(to);
    }
  }
  for (const auto& node : flat.nodes) {
    if (!reached.count(node.id)) {
      violate("unreachable node: " + node.id, node.id);
    }
  }
  return result;
}

WorkflowSpec expand(const WorkflowSpec& spec) {
  WorkflowSpec flat = expand_structural(spec);
  auto cycle = cycle_members(flat);
  if (!cycle.empty()) {
    std::sort(cycle.begin(), cycle.end());
    throw Error(ErrorKind::CompositeCycle,
                "expansion produced a cycle through " + join_ids(cycle));
  }
  return flat;
}

namespace {

json node_to_json(const WorkflowNode& node) {
  json doc;
  doc["children"] = node.children;
  doc["declared_inputs"] = node.declared_inputs;
  doc["declared_outputs"] = node.declared_outputs;
  doc["id"] = node.id;
  doc["kind"] = to_string(node.kind);
  doc["metadata"] = node.metadata;
  doc["process_ref"] = node.process_ref;
  return doc;
}

WorkflowNode node_from_json(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorKind::MalformedInput, "node must be an object");
  WorkflowNode node;
  node.id = doc.at("id").get<std::string>();
  node.kind = node_kind_from_string(doc.value("kind", "Single"));
  node.process_ref = doc.value("process_ref", "");
  if (doc.contains("children")) node.children = doc.at("children").get<std::vector<std::string>>();
  if (doc.contains("metadata")) {
    node.metadata = doc.at("metadata").get<std::map<std::string, std::string>>();
  }
  if (doc.contains("declared_inputs")) {
    node.declared_inputs = doc.at("declared_inputs").get<std::vector<std::string>>();
  }
  if (doc.contains("declared_outputs")) {
    node.declared_outputs = doc.at("declared_outputs").get<std::vector<std::string>>();
  }
  return node;
}

// Structure-only document: what spec_fingerprint digests.
json spec_structure_json(const WorkflowSpec& spec) {
  json doc;
  std::vector<const WorkflowNode*> ordered;
  for (const auto& node : spec.nodes) ordered.push_back(&node);
  std::sort(ordered.begin(), ordered.end(),
            [](const WorkflowNode* a, const WorkflowNode* b) { return a->id < b->id; });
  json nodes = json::array();
  for (const auto* node : ordered) nodes.push_back(node_to_json(*node));
  auto edges = spec.edges;
  std::sort(edges.begin(), edges.end());
  json edge_doc = json::array();
  for (const auto& [from, to] : edges) edge_doc.push_back(json::array({from, to}));
  doc["edges"] = edge_doc;
  doc["head"] = spec.head;
  doc["nodes"] = nodes;
  return doc;
}

}  // namespace

json spec_to_json(const WorkflowSpec& spec) {
  json doc = spec_structure_json(spec);
  doc["name"] = spec.name;
  doc["spec_id"] = spec.spec_id;
  doc["version"] = spec.version;
  if (spec.derived_from) {
    json lineage;
    lineage["spec_id"] = spec.derived_from->first;
    lineage["version"] = spec.derived_from->second;
    doc["derived_from"] = lineage;
  }
  return doc;
}

WorkflowSpec spec_from_json(const json& doc) {
  try {
    if (!doc.is_object()) throw Error(ErrorKind::MalformedInput, "spec must be an object");
    WorkflowSpec spec;
    spec.spec_id = doc.value("spec_id", "");
    spec.name = doc.value("name", "");
    spec.version = doc.value("version", VersionTag{1});
    spec.head = doc.at("head").get<std::string>();
    for (const auto& node : doc.at("nodes")) spec.nodes.push_back(node_from_json(node));
    if (doc.contains("edges")) {
      for (const auto& edge : doc.at("edges")) {
        if (!edge.is_array() || edge.size() != 2) {
          throw Error(ErrorKind::MalformedInput, "edge must be a [from, to] pair");
        }
        spec.edges.emplace_back(edge[0].get<std::string>(), edge[1].get<std::string>());
      }
    }
    if (doc.contains("derived_from") && !doc.at("derived_from").is_null()) {
      const auto& lineage = doc.at("derived_from");
      spec.derived_from = {lineage.at("spec_id").get<std::string>(),
                           lineage.at("version").get<VersionTag>()};
    }
    return spec;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedInput, std::string("bad spec document: ") + e.what());
  }
}

std::string canonical_spec_bytes(const WorkflowSpec& spec) {
  return spec_to_json(spec).dump();
}

std::string spec_fingerprint(const WorkflowSpec& spec) {
  return sha256_hex(spec_structure_json(spec).dump());
}

json data_ref_to_json(const DataRef& ref) {
  json doc;
  doc["hash"] = ref.content_hash;
  doc["name"] = ref.name;
  if (ref.uri) doc["uri"] = *ref.uri;
  if (ref.inline_payload) doc["payload"] = base64_encode(*ref.inline_payload);
  return doc;
}

DataRef data_ref_from_json(const json& doc) {
  try {
    DataRef ref;
    ref.name = doc.at("name").get<std::string>();
    if (doc.contains("uri")) ref.uri = doc.at("uri").get<std::string>();
    if (doc.contains("payload")) {
      ref.inline_payload = base64_decode(doc.at("payload").get<std::string>());
      ref.content_hash = sha256_hex(*ref.inline_payload);
      if (doc.contains("hash") && doc.at("hash").get<std::string>() != ref.content_hash) {
        throw Error(ErrorKind::MalformedInput,
                    "payload digest mismatch for data ref " + ref.name);
      }
    } else {
      ref.content_hash = doc.at("hash").get<std::string>();
    }
    return ref;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedInput, std::string("bad data ref: ") + e.what());
  }
}

json outcome_to_json(const Outcome& outcome) {
  json doc;
  doc["exec"] = outcome.execution.run_seq;
  doc["item"] = outcome.execution.item_id;
  doc["log"] = outcome.log_text;
  doc["node"] = outcome.node;
  json outputs = json::array();
  for (const auto& ref : outcome.outputs) outputs.push_back(data_ref_to_json(ref));
  doc["outputs"] = outputs;
  if (outcome.error) {
    doc["error"] = json{{"code", outcome.error->code}, {"message", outcome.error->message}};
  }
  return doc;
}

Outcome outcome_from_json(const json& doc) {
  try {
    Outcome outcome;
    outcome.node = doc.at("node").get<std::string>();
    outcome.execution.item_id = doc.value("item", "");
    outcome.execution.run_seq = doc.value("exec", std::uint64_t{0});
    outcome.log_text = doc.value("log", "");
    if (doc.contains("outputs")) {
      for (const auto& ref : doc.at("outputs")) {
        outcome.outputs.push_back(data_ref_from_json(ref));
      }
    }
    if (doc.contains("error") && !doc.at("error").is_null()) {
      outcome.error = ErrorRecord{doc.at("error").at("code").get<std::string>(),
                                  doc.at("error").at("message").get<std::string>()};
    }
    return outcome;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedInput, std::string("bad outcome: ") + e.what());
  }
}

json descriptions_to_json(const Descriptions& descriptions) {
  json agents = json::array();
  for (const auto& agent : descriptions.agents) {
    agents.push_back(json{{"host", agent.host}, {"name", agent.name}});
  }
  json activities = json::array();
  for (const auto& activity : descriptions.activities) {
    activities.push_back(json{{"description", activity.description},
                              {"inputs", activity.expected_inputs},
                              {"node", activity.node},
                              {"outputs", activity.expected_outputs}});
  }
  json schemas = json::array();
  for (const auto& schema : descriptions.outcome_schemas) {
    schemas.push_back(json{{"node", schema.node}, {"outputs", schema.expected_outputs}});
  }
  json collections = json::array();
  for (const auto& collection : descriptions.collections) {
    collections.push_back(json{{"members", collection.members}, {"name", collection.name}});
  }
  return json{{"activities", activities},
              {"agents", agents},
              {"collections", collections},
              {"outcome_schemas", schemas}};
}

Descriptions descriptions_from_json(const json& doc) {
  try {
    Descriptions out;
    for (const auto& agent : doc.value("agents", json::array())) {
      out.agents.push_back({agent.at("name").get<std::string>(), agent.value("host", "")});
    }
    for (const auto& activity : doc.value("activities", json::array())) {
      ActivityDescription desc;
      desc.node = activity.at("node").get<std::string>();
      desc.description = activity.value("description", "");
      if (activity.contains("inputs")) {
        desc.expected_inputs = activity.at("inputs").get<std::vector<std::string>>();
      }
      if (activity.contains("outputs")) {
        desc.expected_outputs = activity.at("outputs").get<std::vector<std::string>>();
      }
      out.activities.push_back(std::move(desc));
    }
    for (const auto& schema : doc.value("outcome_schemas", json::array())) {
      OutcomeDescription desc;
      desc.node = schema.at("node").get<std::string>();
      if (schema.contains("outputs")) {
        desc.expected_outputs = schema.at("outputs").get<std::vector<std::string>>();
      }
      out.outcome_schemas.push_back(std::move(desc));
    }
    for (const auto& collection : doc.value("collections", json::array())) {
      CollectionDescription desc;
      desc.name = collection.at("name").get<std::string>();
      if (collection.contains("members")) {
        desc.members = collection.at("members").get<std::vector<std::string>>();
      }
      out.collections.push_back(std::move(desc));
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedInput, std::string("bad descriptions: ") + e.what());
  }
}

json annotation_to_json(const Annotation& annotation) {
  json doc;
  doc["author"] = annotation.author;
  doc["created_at"] = annotation.created_at;
  doc["item"] = annotation.item_id;
  doc["text"] = annotation.text;
  if (annotation.version) doc["version"] = *annotation.version;
  if (annotation.node) doc["node"] = *annotation.node;
  return doc;
}

Annotation annotation_from_json(const json& doc) {
  try {
    Annotation annotation;
    annotation.author = doc.value("author", "");
    annotation.created_at = doc.value("created_at", "");
    annotation.item_id = doc.at("item").get<std::string>();
    annotation.text = doc.at("text").get<std::string>();
    if (doc.contains("version")) annotation.version = doc.at("version").get<VersionTag>();
    if (doc.contains("node")) annotation.node = doc.at("node").get<std::string>();
    return annotation;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedInput, std::string("bad annotation: ") + e.what());
  }
}

json event_to_json(const Event& event) {
  json doc;
  doc["item"] = event.item_id;
  doc["kind"] = to_string(event.kind);
  doc["seq"] = event.seq;
  doc["ts"] = event.timestamp;
  if (event.run_seq) doc["exec"] = *event.run_seq;
  if (event.node) doc["node"] = *event.node;
  if (event.from_state) doc["from"] = to_string(*event.from_state);
  if (event.to_state) doc["to"] = to_string(*event.to_state);
  if (event.ref) doc["ref"] = *event.ref;
  if (event.status) doc["status"] = to_string(*event.status);
  if (event.annotation) doc["annotation"] = annotation_to_json(*event.annotation);
  return doc;
}

Event event_from_json(const json& doc) {
  try {
    Event event;
    event.item_id = doc.at("item").get<std::string>();
    event.kind = event_kind_from_string(doc.at("kind").get<std::string>());
    event.seq = doc.at("seq").get<std::uint64_t>();
    event.timestamp = doc.at("ts").get<std::string>();
    if (doc.contains("exec")) event.run_seq = doc.at("exec").get<std::uint64_t>();
    if (doc.contains("node")) event.node = doc.at("node").get<std::string>();
    if (doc.contains("from")) {
      event.from_state = activity_state_from_string(doc.at("from").get<std::string>());
    }
    if (doc.contains("to")) {
      event.to_state = activity_state_from_string(doc.at("to").get<std::string>());
    }
    if (doc.contains("ref")) event.ref = doc.at("ref").get<std::string>();
    if (doc.contains("status")) {
      event.status = execution_status_from_string(doc.at("status").get<std::string>());
    }
    if (doc.contains("annotation")) {
      event.annotation = annotation_from_json(doc.at("annotation"));
    }
    return event;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedInput, std::string("bad event: ") + e.what());
  }
}

json violations_to_json(const ValidationOutcome& outcome) {
  json list = json::array();
  for (const auto& violation : outcome.violations) {
    list.push_back(json{{"message", violation.message}, {"where", violation.where}});
  }
  return json{{"ok", outcome.ok()}, {"violations", list}};
}

}  // namespace prov
