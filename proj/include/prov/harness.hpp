#pragma once

// Test plumbing: deterministic mock executors, random-but-reproducible
// generators, and brute-force oracles the property suites check the real
// implementations against. Not linked into the production library.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "prov/engine.hpp"
#include "prov/opm.hpp"

namespace prov {

// Deterministic stand-in for real task execution. Output hashes follow a
// fixed propagation law so tests can predict them without running anything:
//   h(node) = sha256(node_id \n comma-joined sorted input hashes \n tag)
//   hash(node, param) = sha256(h(node) ":" param)
// AlwaysOk ignores inputs (constant per node); HashInputs propagates them;
// Drift applies `tag` at one node only; FailAt returns an outcome whose
// error code is "injected" at one node and behaves like HashInputs
// elsewhere. Nodes with no declared outputs produce a single "out".
class MockExecutor : public Executor {
 public:
  enum class Policy { AlwaysOk, FailAt, Drift, HashInputs };

  static MockExecutor always_ok() { return MockExecutor(Policy::AlwaysOk, "", ""); }
  static MockExecutor hash_inputs() { return MockExecutor(Policy::HashInputs, "", ""); }
  static MockExecutor fail_at(NodeId node) {
    return MockExecutor(Policy::FailAt, std::move(node), "");
  }
  static MockExecutor drift(NodeId node, std::string tag) {
    return MockExecutor(Policy::Drift, std::move(node), std::move(tag));
  }

  Outcome run(const WorkflowNode& node, const std::vector<DataRef>& inputs) override;

  Policy policy() const { return policy_; }

 private:
  MockExecutor(Policy policy, NodeId target, std::string tag)
      : policy_(policy), target_(std::move(target)), tag_(std::move(tag)) {}

  Policy policy_;
  NodeId target_;
  std::string tag_;
};

// The propagation law applied to a whole expanded spec without touching the
// engine: resolves each declared input from its declaring producer (or from
// `bindings` at the head), computes every reachable node's output hashes,
// and leaves out nodes whose inputs never materialize — which doubles as
// the blocked-set oracle under FailAt. Assumes each input name has at most
// one producer, which generated DAGs guarantee.
std::map<NodeId, std::map<ParamName, std::string>> propagate_hashes(
    const WorkflowSpec& flat, const std::map<ParamName, std::string>& binding_hashes,
    MockExecutor& executor);

// Random valid workflow: n Single nodes n0..n{n-1}, node 0 the head with
// one declared input "in", every later node wired to at least one earlier
// one so reachability holds by construction. Deterministic per seed.
// Errors: TooLarge (n outside 1..8).
WorkflowSpec gen_dag(std::uint64_t seed, std::size_t n);

// Random valid OPM graph with up to n elements across the three kinds,
// edges always pointing from higher to lower index so every account stays
// acyclic. Deterministic per seed. Errors: TooLarge (n outside 1..50).
OpmGraph gen_opm(std::uint64_t seed, std::size_t n);

// Exhaustive oracle for plan(): every permutation of the node ids that
// respects the edges. Errors: TooLarge (more than 8 nodes).
std::set<std::vector<NodeId>> brute_force_topo_orders(const WorkflowSpec& flat);

// Exhaustive oracle for lineage(): transitive-closure reachability from an
// artifact over used/wasGeneratedBy/wasDerivedFrom, start excluded unless
// it sits on a cycle. Errors: UnknownArtifact, TooLarge (over 128 elements).
std::set<std::string> brute_force_ancestry(const OpmGraph& graph, const std::string& artifact_id);

// Exhaustive oracle for get_subpipeline(): the target plus every node with
// a path to it. Errors: UnknownNode, TooLarge (more than 8 nodes).
std::set<NodeId> brute_force_upstream(const WorkflowSpec& flat, const NodeId& node);

}  // namespace prov
