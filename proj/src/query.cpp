#include "prov/query.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <set>

namespace prov {

WorkflowSpec get_pipeline(Storage& store, const std::string& item_id, VersionTag version) {
  return load_spec(store, item_id, version);
}

Fragment get_subpipeline(Storage& store, const std::string& item_id, VersionTag version,
                         const std::vector<NodeId>& nodes) {
  WorkflowSpec flat = expand(load_spec(store, item_id, version));
  for (const auto& node : nodes) {
    if (!flat.find_node(node)) {
      throw Error(ErrorKind::UnknownNode,
                  "no node " + node + " in version " + std::to_string(version));
    }
  }

  // Dependency closure: walk the edges backward from the request.
  std::set<NodeId> keep(nodes.begin(), nodes.end());
  std::deque<NodeId> frontier(nodes.begin(), nodes.end());
  while (!frontier.empty()) {
    NodeId cur = frontier.front();
    frontier.pop_front();
    for (const auto& [from, to] : flat.edges) {
      if (to == cur && keep.insert(from).second) frontier.push_back(from);
    }
  }

  Fragment fragment;
  fragment.spec.spec_id = flat.spec_id;
  fragment.spec.name = flat.name;
  fragment.spec.version = flat.version;
  fragment.spec.derived_from = flat.derived_from;
  for (const auto& node : flat.nodes) {
    if (keep.count(node.id)) fragment.spec.nodes.push_back(node);
  }
  for (const auto& edge : flat.edges) {
    if (keep.count(edge.first) && keep.count(edge.second)) {
      fragment.spec.edges.push_back(edge);
    }
  }
  fragment.spec.head = keep.count(flat.head) ? flat.head : "";

  std::set<NodeId> with_pred;
  for (const auto& [from, to] : fragment.spec.edges) with_pred.insert(to);
  for (const auto& node : fragment.spec.nodes) {
    if (!with_pred.count(node.id)) fragment.entries.push_back(node.id);
  }
  std::sort(fragment.entries.begin(), fragment.entries.end());
  return fragment;
}

std::vector<ExecutionRow> list_executions(Storage& store, const std::string& item_id,
                                          bool include_open) {
  ItemState state = load_state(store, item_id);
  std::vector<ExecutionRow> rows;
  for (const auto& [run_seq, run] : state.runs) {
    if (!run.finished() && !include_open) continue;
    ExecutionRow row;
    row.exec = {item_id, run_seq};
    row.version = run.version;
    row.status = run.status;
    row.started_at = run.started_at;
    row.finished_at = run.finished_at;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<ErrorRow> get_errors(Storage& store, const std::string& item_id,
                                 const std::optional<ExecutionId>& exec) {
  std::vector<Event> events = load_events(store, item_id);
  if (exec) {
    if (exec->item_id != item_id) {
      throw Error(ErrorKind::UnknownExecution, "no such execution: " + exec->to_string());
    }
    ItemState state = fold_state(item_id, events);
    if (!state.runs.count(exec->run_seq)) {
      throw Error(ErrorKind::UnknownExecution, "no such execution: " + exec->to_string());
    }
  }
  std::vector<ErrorRow> rows;
  for (const Event& event : events) {
    if (event.kind != EventKind::ActivityTransition || !event.to_state ||
        *event.to_state != ActivityState::Failed || !event.run_seq || !event.node) {
      continue;
    }
    if (exec && *event.run_seq != exec->run_seq) continue;
    ExecutionId run{item_id, *event.run_seq};
    ErrorRow row;
    row.exec = run;
    row.node = *event.node;
    row.timestamp = event.timestamp;
    StoragePath path = outcome_path(run, *event.node);
    if (store.exists(path)) {
      Outcome outcome = outcome_from_json(json::parse(store.get(path).payload));
      if (outcome.error) row.error = *outcome.error;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<Annotation> search_annotations(Storage& store, const std::string& text_query,
                                           const std::optional<std::string>& scope) {
  auto lowered = [](std::string text) {
    std::transform(text.begin(), text.end(), text.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return text;
  };
  const std::string needle = lowered(text_query);

  std::vector<std::string> items;
  if (scope) {
    items.push_back(*scope);
  } else {
    items = store.list_items();
  }

  std::vector<Annotation> hits;
  for (const auto& item : items) {
    std::vector<Event> events;
    try {
      events = load_events(store, item);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::UnknownItem) continue;
      throw;
    }
    for (const Event& event : events) {
      if (event.kind != EventKind::AnnotationAdded || !event.annotation) continue;
      if (needle.empty() ||
          lowered(event.annotation->text).find(needle) != std::string::npos) {
        hits.push_back(*event.annotation);
      }
    }
  }
  return hits;
}

namespace {

std::vector<std::pair<ParamName, std::string>> output_hashes(Storage& store,
                                                             const ExecutionId& exec,
                                                             const NodeId& node) {
  std::vector<std::pair<ParamName, std::string>> out;
  StoragePath path = outcome_path(exec, node);
  if (!store.exists(path)) return out;
  Outcome outcome = outcome_from_json(json::parse(store.get(path).payload));
  for (const auto& ref : outcome.outputs) out.emplace_back(ref.name, ref.content_hash);
  std::sort(out.begin(), out.end());
  return out;
}

const RunState& finished_run(const ItemState& state, const ExecutionId& exec) {
  auto it = state.runs.find(exec.run_seq);
  if (it == state.runs.end()) {
    throw Error(ErrorKind::UnknownExecution, "no such execution: " + exec.to_string());
  }
  if (!it->second.finished()) {
    throw Error(ErrorKind::ExecutionOpen, exec.to_string() + " is still open");
  }
  return it->second;
}

ItemState state_for_exec(Storage& store, const ExecutionId& exec) {
  try {
    return load_state(store, exec.item_id);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::UnknownItem) {
      throw Error(ErrorKind::UnknownExecution, "no such execution: " + exec.to_string());
    }
    throw;
  }
}

}  // namespace

ComparisonReport compare_executions(Storage& store, const ExecutionId& a,
                                    const ExecutionId& b) {
  ItemState state_a = state_for_exec(store, a);
  ItemState state_b = a.item_id == b.item_id ? state_a : state_for_exec(store, b);
  const RunState& run_a = finished_run(state_a, a);
  const RunState& run_b = finished_run(state_b, b);

  ComparisonReport report;
  report.a = a;
  report.b = b;
  report.same_fingerprint =
      spec_fingerprint(load_spec(store, a.item_id, run_a.version)) ==
      spec_fingerprint(load_spec(store, b.item_id, run_b.version));

  std::set<NodeId> all_nodes;
  for (const auto& [node, node_state] : run_a.node_states) all_nodes.insert(node);
  for (const auto& [node, node_state] : run_b.node_states) all_nodes.insert(node);

  for (const auto& node : all_nodes) {
    NodeComparison row;
    row.node = node;
    auto in_a = run_a.node_states.find(node);
    auto in_b = run_b.node_states.find(node);
    if (in_a != run_a.node_states.end()) row.state_a = in_a->second;
    if (in_b != run_b.node_states.end()) row.state_b = in_b->second;
    if (!row.state_a) {
      row.verdict = "only-b";
    } else if (!row.state_b) {
      row.verdict = "only-a";
    } else if (*row.state_a != *row.state_b) {
      row.verdict = "state-differs";
    } else {
      row.outputs_a = output_hashes(store, a, node);
      row.outputs_b = output_hashes(store, b, node);
      row.verdict = row.outputs_a == row.outputs_b ? "outputs-equal" : "outputs-differ";
    }
    report.nodes.push_back(std::move(row));
  }
  return report;
}

json fragment_to_json(const Fragment& fragment) {
  json doc;
  doc["entries"] = fragment.entries;
  doc["spec"] = spec_to_json(fragment.spec);
  return doc;
}

json execution_rows_to_json(const std::vector<ExecutionRow>& rows) {
  json list = json::array();
  for (const auto& row : rows) {
    json doc;
    doc["exec"] = row.exec.to_string();
    doc["version"] = row.version;
    doc["status"] = row.status ? to_string(*row.status) : "open";
    doc["started_at"] = row.started_at;
    if (row.status) doc["finished_at"] = row.finished_at;
    list.push_back(std::move(doc));
  }
  return list;
}

json error_rows_to_json(const std::vector<ErrorRow>& rows) {
  json list = json::array();
  for (const auto& row : rows) {
    json doc;
    doc["exec"] = row.exec.to_string();
    doc["node"] = row.node;
    doc["code"] = row.error.code;
    doc["message"] = row.error.message;
    doc["ts"] = row.timestamp;
    list.push_back(std::move(doc));
  }
  return list;
}

json annotations_to_json(const std::vector<Annotation>& annotations) {
  json list = json::array();
  for (const auto& annotation : annotations) list.push_back(annotation_to_json(annotation));
  return list;
}

json comparison_to_json(const ComparisonReport& report) {
  json doc;
  doc["a"] = report.a.to_string();
  doc["b"] = report.b.to_string();
  doc["same_fingerprint"] = report.same_fingerprint;
  json nodes = json::array();
  for (const auto& row : report.nodes) {
    json entry;
    entry["node"] = row.node;
    entry["verdict"] = row.verdict;
    if (row.state_a) entry["state_a"] = to_string(*row.state_a);
    if (row.state_b) entry["state_b"] = to_string(*row.state_b);
    auto hashes = [](const std::vector<std::pair<ParamName, std::string>>& list) {
      json out = json::object();
      for (const auto& [name, hash] : list) out[name] = hash;
      return out;
    };
    if (!row.outputs_a.empty()) entry["outputs_a"] = hashes(row.outputs_a);
    if (!row.outputs_b.empty()) entry["outputs_b"] = hashes(row.outputs_b);
    nodes.push_back(std::move(entry));
  }
  doc["nodes"] = nodes;
  return doc;
}

}  // namespace prov
