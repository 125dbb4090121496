#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "prov/engine.hpp"
#include "prov/errors.hpp"
#include "prov/harness.hpp"
#include "prov/util.hpp"

#include "common.hpp"

using namespace prov;
using fixtures::Bench;
using fixtures::chain;
using fixtures::diamond;
using fixtures::step;
using fixtures::subject_bindings;

namespace {

// Expected digests for the mock executor over the frozen fixtures, computed
// with an independent script and pinned here.
const char* kChainRaw =
    "9b633915b97713c8a9291a5ff8259cd7892dc0eb058976dd2dbf151119dea6d2";
const char* kChainNorm =
    "663c6f281d0503522155ee6e5d503a76c34cfab1e8db1b3bcdb76d96b74e2245";
const char* kChainSummary =
    "e0b1fc41e722ff3fe9401f5a7d02300e9b3cca19464009da55a4fd09fbe70a63";
const char* kDiamondRaw =
    "02dca5c589f70af175da410d949e91fb2b27df59a73bc788674137d958d59c40";
const char* kDiamondBout =
    "c9dc6bb15694e281d073207d7a05c0b4faaa5f028f81d4a971fc3c9a2905d796";
const char* kDiamondCout =
    "42eb9ecb724c90bbbc6370f42f7de8ba9a06def69a375e4942efd14b312c0a00";
const char* kDiamondSummary =
    "9da704931c33e2f7bb7013711fb0ba9dce92feaa772c19526b564dfe45c8caca";

std::string output_hash(Storage& store, const ExecutionId& exec, const NodeId& node,
                        const ParamName& param) {
  Outcome outcome = load_outcome(store, exec, node);
  for (const auto& ref : outcome.outputs) {
    if (ref.name == param) return ref.content_hash;
  }
  return "<absent:" + node + "/" + param + ">";
}

std::vector<NodeId> started_order(Storage& store, const std::string& item,
                                  std::uint64_t run_seq) {
  std::vector<NodeId> order;
  for (const Event& event : load_events(store, item)) {
    if (event.kind == EventKind::ActivityTransition && event.run_seq == run_seq &&
        event.to_state == ActivityState::Started) {
      order.push_back(*event.node);
    }
  }
  return order;
}

struct ThrowingExecutor final : Executor {
  Outcome run(const WorkflowNode& node, const std::vector<DataRef>&) override {
    throw std::runtime_error("no license seat for " + node.process_ref);
  }
};

struct DoubledOutputExecutor final : Executor {
  Outcome run(const WorkflowNode&, const std::vector<DataRef>&) override {
    Outcome outcome;
    outcome.outputs.push_back(make_data_ref("twin", "a"));
    outcome.outputs.push_back(make_data_ref("twin", "b"));
    return outcome;
  }
};

}  // namespace

TEST_CASE("plan walks dependencies smallest-id first") {
  CHECK(plan(diamond()) == std::vector<NodeId>{"A", "B", "C", "D"});
  CHECK(plan(chain()) == std::vector<NodeId>{"acquire", "normalize", "report"});

  // Declaration order must not matter, only ids and edges.
  WorkflowSpec reversed;
  reversed.head = "Z";
  reversed.nodes.push_back(step("X", "proc://X", {}, {}));
  reversed.nodes.push_back(step("Y", "proc://Y", {}, {}));
  reversed.nodes.push_back(step("Z", "proc://Z", {}, {}));
  reversed.edges = {{"Y", "X"}, {"Z", "Y"}};
  CHECK(plan(reversed) == std::vector<NodeId>{"Z", "Y", "X"});

  WorkflowSpec lone;
  lone.head = "only";
  lone.nodes.push_back(step("only", "proc://only", {}, {}));
  CHECK(plan(lone) == std::vector<NodeId>{"only"});
}

TEST_CASE("a clean diamond run completes every node with the frozen digests") {
  Bench bench;
  std::string item = bench.capture.register_item(diamond(), {});
  Engine engine(bench.capture);
  MockExecutor executor = MockExecutor::hash_inputs();

  ExecutionId exec = engine.execute(item, 1, executor, subject_bindings());

  ItemState state = load_state(*bench.store, item);
  const RunState& run = state.runs.at(exec.run_seq);
  CHECK(run.status == ExecutionStatus::Succeeded);
  for (const auto& [node, node_state] : run.node_states) {
    CHECK(node_state == ActivityState::Completed);
  }

  CHECK(started_order(*bench.store, item, exec.run_seq) ==
        std::vector<NodeId>{"A", "B", "C", "D"});

  CHECK(output_hash(*bench.store, exec, "A", "raw") == kDiamondRaw);
  CHECK(output_hash(*bench.store, exec, "B", "bout") == kDiamondBout);
  CHECK(output_hash(*bench.store, exec, "C", "cout") == kDiamondCout);
  CHECK(output_hash(*bench.store, exec, "D", "summary") == kDiamondSummary);
}

TEST_CASE("the chain pipeline reproduces its frozen digests") {
  Bench bench;
  std::string item = bench.capture.register_item(chain(), {});
  Engine engine(bench.capture);
  MockExecutor executor = MockExecutor::hash_inputs();

  ExecutionId exec = engine.execute(item, 1, executor, subject_bindings());
  CHECK(output_hash(*bench.store, exec, "acquire", "raw") == kChainRaw);
  CHECK(output_hash(*bench.store, exec, "normalize", "norm") == kChainNorm);
  CHECK(output_hash(*bench.store, exec, "report", "summary") == kChainSummary);

  // Same version, same executor: byte-identical results on a second run.
  ExecutionId again = engine.execute(item, 1, executor, subject_bindings());
  CHECK(output_hash(*bench.store, again, "report", "summary") == kChainSummary);
}

TEST_CASE("a failing node blocks its dependents and nothing else") {
  Bench bench;
  std::string item = bench.capture.register_item(diamond(), {});
  Engine engine(bench.capture);
  MockExecutor executor = MockExecutor::fail_at("B");

  ExecutionId exec = engine.execute(item, 1, executor, subject_bindings());

  const RunState& run = load_state(*bench.store, item).runs.at(exec.run_seq);
  CHECK(run.status == ExecutionStatus::Failed);
  CHECK(run.node_states.at("A") == ActivityState::Completed);
  CHECK(run.node_states.at("B") == ActivityState::Failed);
  CHECK(run.node_states.at("C") == ActivityState::Completed);
  CHECK(run.node_states.at("D") == ActivityState::Waiting);

  Outcome failed = load_outcome(*bench.store, exec, "B");
  REQUIRE(failed.error.has_value());
  CHECK(failed.error->code == "injected");
  CHECK(failed.error->message == "injected fault at B");

  // D never reached a terminal state, so it has no outcome record.
  CHECK_FALSE(bench.store->exists(outcome_path(exec, "D")));
}

TEST_CASE("unbound head inputs fail before any event is written") {
  Bench bench;
  std::string item = bench.capture.register_item(diamond(), {});
  Engine engine(bench.capture);
  MockExecutor executor = MockExecutor::hash_inputs();

  CHECK_THROWS_WITH_AS(engine.execute(item, 1, executor, {}),
                       "MissingInput: head inputs unbound: in", Error);

  // Only the registration event exists; no run was opened.
  CHECK(load_events(*bench.store, item).size() == 1);
  CHECK(load_state(*bench.store, item).runs.empty());
}

TEST_CASE("an input no predecessor produces fails preflight") {
  WorkflowSpec spec = diamond();
  spec.nodes.push_back(step("E", "proc://E", {"mystery"}, {}));
  spec.edges.push_back({"A", "E"});
  REQUIRE(validate_spec(spec).ok());

  Bench bench;
  std::string item = bench.capture.register_item(spec, {});
  Engine engine(bench.capture);
  MockExecutor executor = MockExecutor::hash_inputs();

  CHECK_THROWS_WITH_AS(engine.execute(item, 1, executor, subject_bindings()),
                       "MissingInput: no producer for input mystery of node E", Error);
  CHECK(load_state(*bench.store, item).runs.empty());
}

TEST_CASE("suspend, resume, and interrupt drive the documented lifecycle") {
  Bench bench;
  WorkflowSpec lone;
  lone.head = "only";
  lone.nodes.push_back(step("only", "proc://only", {}, {"out"}));
  std::string item = bench.capture.register_item(lone, {});

  Engine engine(bench.capture);
  MockExecutor executor = MockExecutor::hash_inputs();

  ExecutionId exec = bench.capture.begin_execution(item, 1, {"operator", ""}, {});
  bench.capture.record_transition(exec, "only", ActivityState::Started);
  engine.suspend(exec, "only");
  CHECK(load_state(*bench.store, item).runs.at(1).node_states.at("only") ==
        ActivityState::Suspended);

  engine.resume(exec, "only", executor);
  const RunState& run = load_state(*bench.store, item).runs.at(1);
  CHECK(run.node_states.at("only") == ActivityState::Completed);

  // The full recorded path: Waiting, Started, Suspended, Started, Completed.
  std::vector<ActivityState> path;
  for (const Event& event : load_events(*bench.store, item)) {
    if (event.kind == EventKind::ActivityTransition) path.push_back(*event.to_state);
  }
  CHECK(path == std::vector<ActivityState>{ActivityState::Waiting, ActivityState::Started,
                                           ActivityState::Suspended, ActivityState::Started,
                                           ActivityState::Completed});
  bench.capture.end_execution(exec, ExecutionStatus::Succeeded);
}

TEST_CASE("suspending a node that never started is illegal") {
  Bench bench;
  std::string item = bench.capture.register_item(diamond(), {});
  Engine engine(bench.capture);
  ExecutionId exec = bench.capture.begin_execution(item, 1, {"operator", ""}, {});

  CHECK_THROWS_WITH_AS(engine.suspend(exec, "B"),
                       "IllegalTransition: B: Waiting -> Suspended", Error);
}

TEST_CASE("resume demands a resumable state") {
  Bench bench;
  std::string item = bench.capture.register_item(diamond(), {});
  Engine engine(bench.capture);
  MockExecutor executor = MockExecutor::hash_inputs();
  ExecutionId exec = bench.capture.begin_execution(item, 1, {"operator", ""}, {});

  CHECK_THROWS_WITH_AS(engine.resume(exec, "B", executor),
                       "IllegalTransition: resume needs Suspended or Interrupted, "
                       "B is Waiting",
                       Error);
}

TEST_CASE("an interrupted node may be failed outright") {
  Bench bench;
  std::string item = bench.capture.register_item(diamond(), {});
  Engine engine(bench.capture);
  ExecutionId exec = bench.capture.begin_execution(item, 1, {"operator", ""}, {});

  bench.capture.record_transition(exec, "A", ActivityState::Started);
  engine.interrupt(exec, "A");
  Outcome aborted;
  aborted.error = ErrorRecord{"operator-abort", "cancelled at the console"};
  bench.capture.record_transition(exec, "A", ActivityState::Failed, aborted);
  CHECK(load_state(*bench.store, item).runs.at(1).node_states.at("A") ==
        ActivityState::Failed);
}

TEST_CASE("executor exceptions are recorded as executor faults") {
  Bench bench;
  WorkflowSpec spec = chain();
  std::string item = bench.capture.register_item(spec, {});
  Engine engine(bench.capture);
  ThrowingExecutor executor;

  ExecutionId exec = engine.execute(item, 1, executor, subject_bindings());
  const RunState& run = load_state(*bench.store, item).runs.at(exec.run_seq);
  CHECK(run.status == ExecutionStatus::Failed);
  CHECK(run.node_states.at("acquire") == ActivityState::Failed);
  CHECK(run.node_states.at("normalize") == ActivityState::Waiting);

  Outcome outcome = load_outcome(*bench.store, exec, "acquire");
  REQUIRE(outcome.error.has_value());
  CHECK(outcome.error->code == "executor-fault");
  CHECK(outcome.error->message == "no license seat for proc://acquire");
}

TEST_CASE("duplicate outputs from an executor are an executor fault") {
  Bench bench;
  WorkflowSpec lone;
  lone.head = "only";
  lone.nodes.push_back(step("only", "proc://only", {}, {"twin"}));
  std::string item = bench.capture.register_item(lone, {});
  Engine engine(bench.capture);
  DoubledOutputExecutor executor;

  ExecutionId exec = engine.execute(item, 1, executor, {});
  Outcome outcome = load_outcome(*bench.store, exec, "only");
  REQUIRE(outcome.error.has_value());
  CHECK(outcome.error->code == "executor-fault");
  CHECK(outcome.error->message == "duplicate output twin");
  CHECK(outcome.outputs.empty());
}

TEST_CASE("competing producers resolve to the earliest and leave a note") {
  WorkflowSpec spec;
  spec.head = "A";
  spec.nodes.push_back(step("A", "proc://A", {"in"}, {"raw"}));
  spec.nodes.push_back(step("B", "proc://B", {"raw"}, {"shared"}));
  spec.nodes.push_back(step("C", "proc://C", {"raw"}, {"shared"}));
  spec.nodes.push_back(step("D", "proc://D", {"shared"}, {"dout"}));
  spec.edges = {{"A", "B"}, {"A", "C"}, {"B", "D"}, {"C", "D"}};
  REQUIRE(validate_spec(spec).ok());

  Bench bench;
  std::string item = bench.capture.register_item(spec, {});
  Engine engine(bench.capture);
  MockExecutor executor = MockExecutor::hash_inputs();
  ExecutionId exec = engine.execute(item, 1, executor, subject_bindings());

  Outcome outcome = load_outcome(*bench.store, exec, "D");
  CHECK(outcome.log_text ==
        "input shared: multiple producers (B,C); using B");

  // D consumed B's output, so its digest is fully determined by B's.
  std::string shared = output_hash(*bench.store, exec, "B", "shared");
  std::string expected =
      sha256_hex(sha256_hex("D\n" + shared + "\n") + ":dout");
  CHECK(output_hash(*bench.store, exec, "D", "dout") == expected);
}

TEST_CASE("scoped execution validates scope and source up front") {
  Bench bench;
  std::string item = bench.capture.register_item(diamond(), {});
  Engine engine(bench.capture);
  MockExecutor executor = MockExecutor::hash_inputs();

  CHECK_THROWS_WITH_AS(
      engine.execute_scoped(item, 1, executor, {}, {}, std::nullopt),
      "EmptyExecution: scope selects no node", Error);

  CHECK_THROWS_AS(engine.execute_scoped(item, 1, executor, {}, {"Z"}, std::nullopt),
                  Error);

  ExecutionId foreign{"other-item", 1};
  try {
    engine.execute_scoped(item, 1, executor, {}, {"D"}, foreign);
    FAIL("expected UnknownExecution");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnknownExecution);
  }

  CHECK_THROWS_WITH_AS(
      engine.execute_scoped(item, 1, executor, {}, {"D"}, std::nullopt),
      "UnresolvableInputs: input bout of node D; input cout of node D", Error);

  // None of the rejected attempts opened a run.
  CHECK(load_state(*bench.store, item).runs.empty());
}

TEST_CASE("a scoped run pulls out-of-scope inputs from its source") {
  Bench bench;
  std::string item = bench.capture.register_item(diamond(), {});
  Engine engine(bench.capture);
  MockExecutor executor = MockExecutor::hash_inputs();

  ExecutionId full = engine.execute(item, 1, executor, subject_bindings());
  ExecutionId partial =
      engine.execute_scoped(item, 1, executor, {}, {"D"}, full);

  const RunState& run = load_state(*bench.store, item).runs.at(partial.run_seq);
  CHECK(run.status == ExecutionStatus::Succeeded);
  CHECK(run.node_states.size() == 1);
  CHECK(run.node_states.at("D") == ActivityState::Completed);

  // Same inputs, pure executor: the re-run reproduces the original digest.
  CHECK(output_hash(*bench.store, partial, "D", "summary") == kDiamondSummary);
}

TEST_CASE("a scoped run accepts caller bindings for interior nodes") {
  Bench bench;
  std::string item = bench.capture.register_item(diamond(), {});
  Engine engine(bench.capture);
  MockExecutor executor = MockExecutor::hash_inputs();

  std::map<ParamName, DataRef> bindings;
  bindings["bout"] = make_data_ref("bout", "handmade-b");
  bindings["cout"] = make_data_ref("cout", "handmade-c");
  ExecutionId exec =
      engine.execute_scoped(item, 1, executor, bindings, {"D"}, std::nullopt);

  const RunState& run = load_state(*bench.store, item).runs.at(exec.run_seq);
  CHECK(run.status == ExecutionStatus::Succeeded);

  std::vector<std::string> hashes = {bindings.at("bout").content_hash,
                                     bindings.at("cout").content_hash};
  std::sort(hashes.begin(), hashes.end());
  std::string expected =
      sha256_hex(sha256_hex("D\n" + hashes[0] + "," + hashes[1] + "\n") + ":summary");
  CHECK(output_hash(*bench.store, exec, "D", "summary") == expected);
}

TEST_CASE("generated dags start nodes in plan order, after their predecessors") {
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    WorkflowSpec spec = gen_dag(seed, 1 + seed % 6);
    Bench bench;
    std::string item = bench.capture.register_item(spec, {});
    Engine engine(bench.capture);
    MockExecutor executor = MockExecutor::hash_inputs();
    ExecutionId exec = engine.execute(item, 1, executor, subject_bindings());

    std::vector<NodeId> order = started_order(*bench.store, item, exec.run_seq);
    CHECK(order == plan(spec));
    CHECK(brute_force_topo_orders(spec).count(order) == 1);

    // No node starts before all of its predecessors completed.
    std::set<NodeId> completed;
    for (const Event& event : load_events(*bench.store, item)) {
      if (event.kind != EventKind::ActivityTransition) continue;
      if (event.to_state == ActivityState::Started) {
        for (const NodeId& pred : spec.predecessors(*event.node)) {
          CHECK(completed.count(pred) == 1);
        }
      }
      if (event.to_state == ActivityState::Completed) completed.insert(*event.node);
    }
  }
}
