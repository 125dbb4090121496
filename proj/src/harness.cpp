#include "prov/harness.hpp"

#include <algorithm>
#include <random>

#include "prov/util.hpp"

namespace prov {

namespace {

std::string node_digest(const NodeId& node, std::vector<std::string> input_hashes,
                        const std::string& tag) {
  std::sort(input_hashes.begin(), input_hashes.end());
  std::string joined;
  for (const auto& hash : input_hashes) {
    if (!joined.empty()) joined += ",";
    joined += hash;
  }
  return sha256_hex(node + "\n" + joined + "\n" + tag);
}

std::vector<DataRef> outputs_for(const WorkflowNode& node, const std::string& digest) {
  std::vector<ParamName> names = node.declared_outputs;
  if (names.empty()) names.push_back("out");
  std::vector<DataRef> outputs;
  for (const auto& name : names) {
    DataRef ref;
    ref.name = name;
    ref.content_hash = sha256_hex(digest + ":" + name);
    outputs.push_back(std::move(ref));
  }
  return outputs;
}

}  // namespace

Outcome MockExecutor::run(const WorkflowNode& node, const std::vector<DataRef>& inputs) {
  Outcome outcome;
  if (policy_ == Policy::FailAt && node.id == target_) {
    outcome.error = ErrorRecord{"injected", "injected fault at " + node.id};
    return outcome;
  }
  std::vector<std::string> input_hashes;
  if (policy_ != Policy::AlwaysOk) {
    for (const auto& input : inputs) input_hashes.push_back(input.content_hash);
  }
  std::string tag = (policy_ == Policy::Drift && node.id == target_) ? tag_ : "";
  outcome.outputs = outputs_for(node, node_digest(node.id, std::move(input_hashes), tag));
  return outcome;
}

std::map<NodeId, std::map<ParamName, std::string>> propagate_hashes(
    const WorkflowSpec& flat, const std::map<ParamName, std::string>& binding_hashes,
    MockExecutor& executor) {
  // Who declares each output name.
  std::map<ParamName, const WorkflowNode*> producer;
  for (const auto& node : flat.nodes) {
    for (const auto& name : node.declared_outputs) producer[name] = &node;
  }

  std::map<NodeId, std::map<ParamName, std::string>> done;
  bool progressed = true;
  while (progressed) {
    progressed = false;
    for (const auto& node : flat.nodes) {
      if (done.count(node.id)) continue;
      std::vector<DataRef> inputs;
      bool ready = true;
      for (const auto& name : node.declared_inputs) {
        DataRef ref;
        ref.name = name;
        auto made_by = producer.find(name);
        if (made_by != producer.end()) {
          if (!done.count(made_by->second->id)) {
            ready = false;
            break;
          }
          ref.content_hash = done.at(made_by->second->id).at(name);
        } else if (node.id == flat.head && binding_hashes.count(name)) {
          ref.content_hash = binding_hashes.at(name);
        } else {
          ready = false;
          break;
        }
        inputs.push_back(std::move(ref));
      }
      if (!ready) continue;
      Outcome out = executor.run(node, inputs);
      if (out.error) continue;  // an injected fault: dependents starve
      for (const auto& ref : out.outputs) done[node.id][ref.name] = ref.content_hash;
      progressed = true;
    }
  }
  return done;
}

WorkflowSpec gen_dag(std::uint64_t seed, std::size_t n) {
  if (n < 1 || n > 8) {
    throw Error(ErrorKind::TooLarge, "gen_dag handles 1..8 nodes, got " + std::to_string(n));
  }
  std::mt19937_64 rng(seed);
  WorkflowSpec spec;
  spec.spec_id = "gen" + std::to_string(seed);
  spec.name = "generated-dag";
  spec.version = 1;
  spec.head = "n0";

  for (std::size_t i = 0; i < n; ++i) {
    WorkflowNode node;
    node.id = "n" + std::to_string(i);
    node.kind = NodeKind::Single;
    node.process_ref = "proc://" + node.id;
    node.declared_outputs = {"out_" + node.id};
    spec.nodes.push_back(std::move(node));
  }
  spec.nodes[0].declared_inputs = {"in"};

  for (std::size_t i = 1; i < n; ++i) {
    std::set<std::size_t> preds;
    preds.insert(rng() % i);  // guarantees reachability from n0
    for (std::size_t j = 0; j < i; ++j) {
      if (rng() % 3 == 0) preds.insert(j);
    }
    for (std::size_t j : preds) {
      spec.edges.emplace_back("n" + std::to_string(j), "n" + std::to_string(i));
      spec.nodes[i].declared_inputs.push_back("out_n" + std::to_string(j));
    }
    std::sort(spec.nodes[i].declared_inputs.begin(), spec.nodes[i].declared_inputs.end());
  }
  std::sort(spec.edges.begin(), spec.edges.end());
  return spec;
}

OpmGraph gen_opm(std::uint64_t seed, std::size_t n) {
  if (n < 1 || n > 50) {
    throw Error(ErrorKind::TooLarge, "gen_opm handles 1..50 elements, got " + std::to_string(n));
  }
  std::mt19937_64 rng(seed);
  OpmGraph graph;

  std::size_t account_count = rng() % 3;
  for (std::size_t a = 0; a < account_count; ++a) {
    graph.accounts.insert("acc" + std::to_string(a));
  }
  auto some_accounts = [&]() {
    std::set<std::string> refs;
    for (const auto& account : graph.accounts) {
      if (rng() % 2 == 0) refs.insert(account);
    }
    return refs;
  };

  // Element k is a process, artifact, or agent; the first two are pinned so
  // edges always have somewhere to go.
  std::vector<std::pair<char, std::string>> elements;
  for (std::size_t k = 0; k < n; ++k) {
    char kind = k == 0 ? 'p' : (k == 1 ? 'a' : "pag"[rng() % 3]);
    std::string id = std::string(1, kind) + std::to_string(k);
    elements.emplace_back(kind, id);
    if (kind == 'p') {
      graph.processes[id] = OpmProcess{id, "step " + std::to_string(k), some_accounts()};
    } else if (kind == 'a') {
      graph.artifacts[id] =
          OpmArtifact{id, sha256_hex("blob" + std::to_string(seed) + ":" + id),
                      rng() % 2 ? std::optional<std::string>("file:///" + id) : std::nullopt,
                      some_accounts()};
    } else {
      graph.agents[id] = OpmAgent{id, "operator " + std::to_string(k), some_accounts()};
    }
  }

  // Dependencies only ever point from a later element to an earlier one, so
  // no account can close a cycle.
  for (std::size_t k = 1; k < n; ++k) {
    std::size_t tries = rng() % 3;
    for (std::size_t t = 0; t < tries; ++t) {
      std::size_t j = rng() % k;
      char from = elements[k].first;
      char to = elements[j].first;
      OpmEdge edge;
      edge.effect = elements[k].second;
      edge.cause = elements[j].second;
      edge.accounts = some_accounts();
      if (from == 'p' && to == 'a') {
        edge.kind = OpmEdgeKind::Used;
        edge.role = "in" + std::to_string(t);
      } else if (from == 'a' && to == 'p') {
        edge.kind = OpmEdgeKind::WasGeneratedBy;
        edge.role = "out" + std::to_string(t);
      } else if (from == 'p' && to == 'g') {
        edge.kind = OpmEdgeKind::WasControlledBy;
        edge.role = "controller";
      } else if (from == 'p' && to == 'p') {
        edge.kind = OpmEdgeKind::WasTriggeredBy;
      } else if (from == 'a' && to == 'a') {
        edge.kind = OpmEdgeKind::WasDerivedFrom;
      } else {
        continue;  // agents cause nothing else
      }
      graph.edges.insert(std::move(edge));
    }
  }
  return graph;
}

std::set<std::vector<NodeId>> brute_force_topo_orders(const WorkflowSpec& flat) {
  if (flat.nodes.size() > 8) {
    throw Error(ErrorKind::TooLarge, "brute force capped at 8 nodes");
  }
  std::vector<NodeId> ids;
  for (const auto& node : flat.nodes) ids.push_back(node.id);
  std::sort(ids.begin(), ids.end());

  std::set<std::vector<NodeId>> orders;
  do {
    std::map<NodeId, std::size_t> position;
    for (std::size_t i = 0; i < ids.size(); ++i) position[ids[i]] = i;
    bool respects = true;
    for (const auto& [from, to] : flat.edges) {
      if (position.at(from) >= position.at(to)) {
        respects = false;
        break;
      }
    }
    if (respects) orders.insert(ids);
  } while (std::next_permutation(ids.begin(), ids.end()));
  return orders;
}

namespace {

// Warshall closure over an index map — deliberately not the BFS the real
// lineage query uses.
std::vector<std::vector<bool>> closure(std::size_t n,
                                       const std::vector<std::pair<std::size_t, std::size_t>>& arcs) {
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
  for (const auto& [from, to] : arcs) reach[from][to] = true;
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!reach[i][k]) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (reach[k][j]) reach[i][j] = true;
      }
    }
  }
  return reach;
}

}  // namespace

std::set<std::string> brute_force_ancestry(const OpmGraph& graph,
                                           const std::string& artifact_id) {
  if (!graph.artifacts.count(artifact_id)) {
    throw Error(ErrorKind::UnknownArtifact, "no such artifact: " + artifact_id);
  }
  std::map<std::string, std::size_t> index;
  std::vector<std::string> ids;
  auto add = [&](const std::string& id) {
    if (index.emplace(id, ids.size()).second) ids.push_back(id);
  };
  for (const auto& [id, process] : graph.processes) add(id);
  for (const auto& [id, artifact] : graph.artifacts) add(id);
  for (const auto& [id, agent] : graph.agents) add(id);
  if (ids.size() > 128) throw Error(ErrorKind::TooLarge, "brute force capped at 128 elements");

  std::vector<std::pair<std::size_t, std::size_t>> arcs;
  for (const auto& edge : graph.edges) {
    if (edge.kind == OpmEdgeKind::Used || edge.kind == OpmEdgeKind::WasGeneratedBy ||
        edge.kind == OpmEdgeKind::WasDerivedFrom) {
      arcs.emplace_back(index.at(edge.effect), index.at(edge.cause));
    }
  }
  auto reach = closure(ids.size(), arcs);

  std::set<std::string> ancestors;
  std::size_t start = index.at(artifact_id);
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (reach[start][j]) ancestors.insert(ids[j]);
  }
  if (!reach[start][start]) ancestors.erase(artifact_id);
  return ancestors;
}

std::set<NodeId> brute_force_upstream(const WorkflowSpec& flat, const NodeId& node) {
  if (flat.nodes.size() > 8) {
    throw Error(ErrorKind::TooLarge, "brute force capped at 8 nodes");
  }
  std::map<NodeId, std::size_t> index;
  std::vector<NodeId> ids;
  for (const auto& entry : flat.nodes) {
    index[entry.id] = ids.size();
    ids.push_back(entry.id);
  }
  if (!index.count(node)) throw Error(ErrorKind::UnknownNode, "no such node: " + node);

  std::vector<std::pair<std::size_t, std::size_t>> arcs;
  for (const auto& [from, to] : flat.edges) arcs.emplace_back(index.at(from), index.at(to));
  auto reach = closure(ids.size(), arcs);

  std::set<NodeId> upstream{node};
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (reach[i][index.at(node)]) upstream.insert(ids[i]);
  }
  return upstream;
}

}  // namespace prov
