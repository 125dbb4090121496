#include "prov/reconstruct.hpp"

#include <algorithm>
#include <set>

namespace prov {

Reconstruction reconstruct(Storage& store, const std::string& item_id, VersionTag version) {
  Reconstruction result;
  result.spec = load_spec(store, item_id, version);
  std::vector<Event> events = load_events(store, item_id);

  // Versions are assigned densely, so version v was created by the v-th
  // SpecRecorded event.
  std::uint64_t seen = 0;
  std::optional<std::uint64_t> cutoff;
  for (const Event& event : events) {
    if (event.kind == EventKind::SpecRecorded && ++seen == version) {
      cutoff = event.seq;
      break;
    }
  }
  if (!cutoff) {
    throw Error(ErrorKind::UnknownVersion,
                item_id + " has no version " + std::to_string(version));
  }
  for (const Event& event : events) {
    if (event.seq > *cutoff) break;
    if (event.kind == EventKind::SpecRecorded || event.kind == EventKind::AnnotationAdded) {
      result.trace.push_back(event);
    }
  }
  return result;
}

ExecutionId replay(CaptureService& capture, const std::string& item_id, VersionTag version,
                   Executor& executor, const ReplayOptions& options) {
  Storage& store = capture.store();
  ItemState state = load_state(store, item_id);
  load_spec(store, item_id, version);  // surfaces UnknownVersion early

  std::optional<ExecutionId> source = options.source;
  if (source) {
    if (source->item_id != item_id || !state.runs.count(source->run_seq)) {
      throw Error(ErrorKind::UnknownExecution, "no such execution: " + source->to_string());
    }
  } else {
    // Latest Succeeded complete run of this version. Partial (scoped) runs
    // make poor sources: they recorded neither head bindings nor outcomes
    // outside their scope.
    std::size_t full_size = expand(load_spec(store, item_id, version)).nodes.size();
    for (auto it = state.runs.rbegin(); it != state.runs.rend(); ++it) {
      const RunState& run = it->second;
      if (run.version == version && run.status &&
          *run.status == ExecutionStatus::Succeeded &&
          run.node_states.size() == full_size) {
        source = ExecutionId{item_id, it->first};
        break;
      }
    }
  }

  Engine engine(capture);
  AgentDescription agent{"replay", ""};
  if (!options.scope.empty()) {
    return engine.execute_scoped(item_id, version, executor, options.bindings,
                                 options.scope, source, agent);
  }

  // Full replay: the source's recorded bindings, overridden by explicit ones.
  std::map<ParamName, DataRef> bindings;
  if (source) bindings = load_run_inputs(store, *source).bindings;
  for (const auto& [name, ref] : options.bindings) bindings[name] = ref;
  if (source) {
    std::vector<NodeId> all_nodes;
    WorkflowSpec flat = expand(load_spec(store, item_id, version));
    for (const auto& node : flat.nodes) all_nodes.push_back(node.id);
    return engine.execute_scoped(item_id, version, executor, bindings, all_nodes, source,
                                 agent);
  }
  try {
    return engine.execute(item_id, version, executor, bindings, agent);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::MissingInput) {
      throw Error(ErrorKind::UnresolvableInputs, e.message());
    }
    throw;
  }
}

const char* to_string(Edit::Op op) {
  switch (op) {
    case Edit::Op::AddNode: return "AddNode";
    case Edit::Op::RemoveNode: return "RemoveNode";
    case Edit::Op::AddEdge: return "AddEdge";
    case Edit::Op::RemoveEdge: return "RemoveEdge";
    case Edit::Op::SetMetadata: return "SetMetadata";
    case Edit::Op::SetProcessRef: return "SetProcessRef";
  }
  return "AddNode";
}

Edit::Op edit_op_from_string(const std::string& text) {
  if (text == "AddNode") return Edit::Op::AddNode;
  if (text == "RemoveNode") return Edit::Op::RemoveNode;
  if (text == "AddEdge") return Edit::Op::AddEdge;
  if (text == "RemoveEdge") return Edit::Op::RemoveEdge;
  if (text == "SetMetadata") return Edit::Op::SetMetadata;
  if (text == "SetProcessRef") return Edit::Op::SetProcessRef;
  throw Error(ErrorKind::MalformedInput, "unknown edit op: " + text);
}

namespace {

json node_payload(const WorkflowNode& node) {
  // Reuses the spec serialization shape for a single node.
  WorkflowSpec carrier;
  carrier.nodes.push_back(node);
  return spec_to_json(carrier).at("nodes").at(0);
}

WorkflowNode node_from_payload(const json& doc) {
  json carrier;
  carrier["head"] = "";
  carrier["nodes"] = json::array({doc});
  return spec_from_json(carrier).nodes.at(0);
}

}  // namespace

json edits_to_json(const std::vector<Edit>& edits) {
  json list = json::array();
  for (const Edit& edit : edits) {
    json doc;
    doc["op"] = to_string(edit.op);
    switch (edit.op) {
      case Edit::Op::AddNode:
        doc["payload"] = node_payload(edit.node);
        break;
      case Edit::Op::RemoveNode:
        doc["target"] = edit.target;
        break;
      case Edit::Op::AddEdge:
      case Edit::Op::RemoveEdge:
        doc["payload"] = json{{"from", edit.edge.first}, {"to", edit.edge.second}};
        break;
      case Edit::Op::SetMetadata:
        doc["target"] = edit.target;
        doc["payload"] = edit.metadata;
        break;
      case Edit::Op::SetProcessRef:
        doc["target"] = edit.target;
        doc["payload"] = edit.process_ref;
        break;
    }
    list.push_back(std::move(doc));
  }
  return list;
}

std::vector<Edit> edits_from_json(const json& doc) {
  try {
    std::vector<Edit> edits;
    for (const auto& entry : doc) {
      Edit edit;
      edit.op = edit_op_from_string(entry.at("op").get<std::string>());
      switch (edit.op) {
        case Edit::Op::AddNode:
          edit.node = node_from_payload(entry.at("payload"));
          break;
        case Edit::Op::RemoveNode:
          edit.target = entry.at("target").get<std::string>();
          break;
        case Edit::Op::AddEdge:
        case Edit::Op::RemoveEdge:
          edit.edge = {entry.at("payload").at("from").get<std::string>(),
                       entry.at("payload").at("to").get<std::string>()};
          break;
        case Edit::Op::SetMetadata:
          edit.target = entry.at("target").get<std::string>();
          edit.metadata =
              entry.at("payload").get<std::map<std::string, std::string>>();
          break;
        case Edit::Op::SetProcessRef:
          edit.target = entry.at("target").get<std::string>();
          edit.process_ref = entry.at("payload").get<std::string>();
          break;
      }
      edits.push_back(std::move(edit));
    }
    return edits;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedInput, std::string("bad edit list: ") + e.what());
  }
}

WorkflowSpec apply_edits(WorkflowSpec spec, const std::vector<Edit>& edits) {
  auto find_mut = [&spec](const NodeId& id) -> WorkflowNode* {
    for (auto& node : spec.nodes) {
      if (node.id == id) return &node;
    }
    return nullptr;
  };
  for (const Edit& edit : edits) {
    switch (edit.op) {
      case Edit::Op::AddNode:
        spec.nodes.push_back(edit.node);
        break;
      case Edit::Op::RemoveNode: {
        if (!find_mut(edit.target)) {
          throw Error(ErrorKind::InvalidSpec, "edit targets unknown node: " + edit.target);
        }
        std::erase_if(spec.nodes,
                      [&](const WorkflowNode& node) { return node.id == edit.target; });
        std::erase_if(spec.edges, [&](const std::pair<NodeId, NodeId>& edge) {
          return edge.first == edit.target || edge.second == edit.target;
        });
        for (auto& node : spec.nodes) {
          std::erase(node.children, edit.target);
        }
        break;
      }
      case Edit::Op::AddEdge:
        spec.edges.push_back(edit.edge);
        break;
      case Edit::Op::RemoveEdge: {
        auto it = std::find(spec.edges.begin(), spec.edges.end(), edit.edge);
        if (it == spec.edges.end()) {
          throw Error(ErrorKind::InvalidSpec, "edit removes unknown edge: " +
                                                  edit.edge.first + "->" + edit.edge.second);
        }
        spec.edges.erase(it);
        break;
      }
      case Edit::Op::SetMetadata: {
        WorkflowNode* node = find_mut(edit.target);
        if (!node) {
          throw Error(ErrorKind::InvalidSpec, "edit targets unknown node: " + edit.target);
        }
        node->metadata = edit.metadata;
        break;
      }
      case Edit::Op::SetProcessRef: {
        WorkflowNode* node = find_mut(edit.target);
        if (!node) {
          throw Error(ErrorKind::InvalidSpec, "edit targets unknown node: " + edit.target);
        }
        node->process_ref = edit.process_ref;
        break;
      }
    }
  }
  return spec;
}

StoragePath edits_path(const std::string& item_id, VersionTag version) {
  return {item_id, ClusterKind::View, {"edits", pad_seq(version)}};
}

VersionTag derive(CaptureService& capture, const std::string& item_id,
                  VersionTag base_version, const std::vector<Edit>& edits) {
  Storage& store = capture.store();
  WorkflowSpec base = load_spec(store, item_id, base_version);
  WorkflowSpec derived = apply_edits(std::move(base), edits);
  VersionTag version = capture.record_spec_version(item_id, std::move(derived), base_version);
  store.put({edits_path(item_id, version), edits_to_json(edits).dump(), "view"});
  return version;
}

}  // namespace prov
