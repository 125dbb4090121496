#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "prov/engine.hpp"
#include "prov/errors.hpp"
#include "prov/harness.hpp"
#include "prov/validate.hpp"

#include "common.hpp"

using namespace prov;
using fixtures::Bench;
using fixtures::diamond;
using fixtures::step;
using fixtures::subject_bindings;

namespace {

// Pinned mock-executor digests for the diamond with the standard binding.
const char* kDiamondRaw =
    "02dca5c589f70af175da410d949e91fb2b27df59a73bc788674137d958d59c40";
const char* kDiamondBout =
    "c9dc6bb15694e281d073207d7a05c0b4faaa5f028f81d4a971fc3c9a2905d796";
const char* kDiamondCout =
    "42eb9ecb724c90bbbc6370f42f7de8ba9a06def69a375e4942efd14b312c0a00";
const char* kDiamondSummary =
    "9da704931c33e2f7bb7013711fb0ba9dce92feaa772c19526b564dfe45c8caca";

ReferenceDataset diamond_reference() {
  ReferenceDataset ref;
  ref.name = "diamond-baseline";
  ref.expected["A"] = {{"raw", kDiamondRaw}};
  ref.expected["B"] = {{"bout", kDiamondBout}};
  ref.expected["C"] = {{"cout", kDiamondCout}};
  ref.expected["D"] = {{"summary", kDiamondSummary}};
  return ref;
}

bool verdict_matches_findings(const ValidationReport& report) {
  bool failing = std::any_of(
      report.findings.begin(), report.findings.end(), [](const Finding& finding) {
        return finding.kind == FindingKind::Mismatch || finding.kind == FindingKind::Missing;
      });
  return (report.verdict == Verdict::Fail) == failing;
}

const Finding* find_at(const ValidationReport& report, const std::string& location) {
  for (const auto& finding : report.findings) {
    if (finding.location == location) return &finding;
  }
  return nullptr;
}

}  // namespace

TEST_CASE("a spec validated against itself passes with no findings") {
  ValidationReport report = validate_blueprint(diamond(), diamond());
  CHECK(report.verdict == Verdict::Pass);
  CHECK(report.findings.empty());
  CHECK(report.mode == ValidationMode::Blueprint);
  CHECK(report.item_id == "diamond");
  CHECK(report.version == 1);
}

TEST_CASE("field drift in the candidate is located node by node") {
  WorkflowSpec blueprint = diamond();

  SUBCASE("a swapped process binary") {
    WorkflowSpec candidate = diamond();
    candidate.nodes[2].process_ref = "proc://C-patched";
    ValidationReport report = validate_blueprint(candidate, blueprint);
    CHECK(report.verdict == Verdict::Fail);
    REQUIRE(report.findings.size() == 1);
    CHECK(report.findings[0] ==
          Finding{"C", FindingKind::Mismatch,
                  "process_ref differs: proc://C-patched != proc://C"});
  }

  SUBCASE("tuned metadata") {
    WorkflowSpec candidate = diamond();
    candidate.nodes[2].metadata["threshold"] = "0.7";
    ValidationReport report = validate_blueprint(candidate, blueprint);
    CHECK(report.verdict == Verdict::Fail);
    REQUIRE(report.findings.size() == 1);
    CHECK(report.findings[0] == Finding{"C", FindingKind::Mismatch, "metadata differs"});
  }

  SUBCASE("a widened input list") {
    WorkflowSpec candidate = diamond();
    candidate.nodes[3].declared_inputs = {"bout", "cout", "qc"};
    ValidationReport report = validate_blueprint(candidate, blueprint);
    CHECK(report.verdict == Verdict::Fail);
    REQUIRE(report.findings.size() == 1);
    CHECK(report.findings[0].detail ==
          "declared inputs differ: [bout,cout,qc] != [bout,cout]");
  }

  SUBCASE("a renamed output") {
    WorkflowSpec candidate = diamond();
    candidate.nodes[0].declared_outputs = {"raw2"};
    ValidationReport report = validate_blueprint(candidate, blueprint);
    CHECK(report.verdict == Verdict::Fail);
    const Finding* finding = find_at(report, "A");
    REQUIRE(finding != nullptr);
    CHECK(finding->detail == "declared outputs differ: [raw2] != [raw]");
  }
}

TEST_CASE("structural drift names nodes, edges and the head") {
  WorkflowSpec blueprint = diamond();

  SUBCASE("an extra candidate edge fails even though nothing is missing") {
    WorkflowSpec candidate = diamond();
    candidate.edges.push_back({"A", "D"});
    ValidationReport report = validate_blueprint(candidate, blueprint);
    CHECK(report.verdict == Verdict::Fail);
    REQUIRE(report.findings.size() == 1);
    CHECK(report.findings[0] ==
          Finding{"edge A->D", FindingKind::Extra, "edge absent from blueprint"});
  }

  SUBCASE("a dropped terminal node") {
    WorkflowSpec candidate = diamond();
    candidate.nodes.pop_back();  // D
    candidate.edges = {{"A", "B"}, {"A", "C"}};
    ValidationReport report = validate_blueprint(candidate, blueprint);
    CHECK(report.verdict == Verdict::Fail);
    const Finding* node_finding = find_at(report, "D");
    REQUIRE(node_finding != nullptr);
    CHECK(node_finding->kind == FindingKind::Missing);
    CHECK(node_finding->detail == "node missing from spec");
    CHECK(find_at(report, "edge B->D") != nullptr);
    CHECK(find_at(report, "edge C->D") != nullptr);
  }

  SUBCASE("a grafted extra node") {
    WorkflowSpec candidate = diamond();
    candidate.nodes.push_back(step("E", "proc://E", {"summary"}, {"archive"}));
    candidate.edges.push_back({"D", "E"});
    ValidationReport report = validate_blueprint(candidate, blueprint);
    CHECK(report.verdict == Verdict::Fail);
    const Finding* finding = find_at(report, "E");
    REQUIRE(finding != nullptr);
    CHECK(finding->kind == FindingKind::Extra);
    CHECK(finding->detail == "node absent from blueprint");
  }

  SUBCASE("a different head") {
    WorkflowSpec candidate;
    candidate.spec_id = "solo";
    candidate.name = "solo";
    candidate.head = "X";
    candidate.nodes = {step("X", "proc://X", {"in"}, {"out"})};
    WorkflowSpec reference = candidate;
    reference.head = "Y";
    reference.nodes = {step("Y", "proc://Y", {"in"}, {"out"})};
    ValidationReport report = validate_blueprint(candidate, reference);
    const Finding* finding = find_at(report, "head");
    REQUIRE(finding != nullptr);
    CHECK(finding->detail == "head differs: X != Y");
  }
}

TEST_CASE("invalid inputs are rejected before any comparison") {
  WorkflowSpec cyclic;
  cyclic.spec_id = "loop";
  cyclic.name = "loop";
  cyclic.head = "A";
  cyclic.nodes = {step("A", "proc://A", {"in"}, {"x"}),
                  step("B", "proc://B", {"x"}, {"in"})};
  cyclic.edges = {{"A", "B"}, {"B", "A"}};

  CHECK_THROWS_WITH_AS(validate_blueprint(cyclic, diamond()),
                       "InvalidSpec: spec: cycle through A,B", Error);
  CHECK_THROWS_WITH_AS(validate_blueprint(diamond(), cyclic),
                       "InvalidSpec: blueprint: cycle through A,B", Error);
}

TEST_CASE("grouping stages into a composite does not change the verdict") {
  // Flat reference: A -> s1 -> s2 -> B.
  WorkflowSpec flat;
  flat.spec_id = "study";
  flat.name = "study";
  flat.head = "A";
  flat.nodes = {step("A", "proc://A", {"in"}, {"raw"}),
                step("s1", "proc://s1", {"raw"}, {"m1"}),
                step("s2", "proc://s2", {"m1"}, {"m2"}),
                step("B", "proc://B", {"m2"}, {"out"})};
  flat.edges = {{"A", "s1"}, {"s1", "s2"}, {"s2", "B"}};

  // Same pipeline with the middle stages grouped under a composite.
  WorkflowSpec grouped = flat;
  WorkflowNode group;
  group.id = "middle";
  group.kind = NodeKind::Composite;
  group.children = {"s1", "s2"};
  grouped.nodes.push_back(group);
  grouped.edges = {{"A", "middle"}, {"middle", "B"}};

  CHECK(validate_spec(grouped).ok());
  ValidationReport report = validate_blueprint(grouped, flat);
  CHECK(report.verdict == Verdict::Pass);
  CHECK(report.findings.empty());
  CHECK(spec_fingerprint(expand(grouped)) == spec_fingerprint(expand(flat)));
}

TEST_CASE("generated pipelines validate against themselves and the verdict tracks the fingerprint") {
  for (unsigned seed = 1; seed <= 20; ++seed) {
    WorkflowSpec spec = gen_dag(seed, 1 + seed % 8);
    ValidationReport self = validate_blueprint(spec, spec);
    CHECK(self.verdict == Verdict::Pass);
    CHECK(self.findings.empty());

    WorkflowSpec other = gen_dag(seed + 100, 1 + (seed + 3) % 8);
    ValidationReport cross = validate_blueprint(spec, other);
    bool same = spec_fingerprint(expand(spec)) == spec_fingerprint(expand(other));
    CHECK((cross.verdict == Verdict::Pass) == same);
    CHECK(cross.findings.empty() == same);
  }
}

TEST_CASE("an execution passes against the dataset built from its own outputs") {
  Bench bench;
  std::string item = bench.capture.register_item(diamond(), {});
  Engine engine(bench.capture);
  MockExecutor executor = MockExecutor::hash_inputs();
  ExecutionId exec = engine.execute(item, 1, executor, subject_bindings());

  ValidationReport report = validate_offline(*bench.store, exec, diamond_reference());
  CHECK(report.verdict == Verdict::Pass);
  CHECK(report.mode == ValidationMode::Offline);
  REQUIRE(report.exec.has_value());
  CHECK(*report.exec == exec);
  REQUIRE(report.findings.size() == 4);
  for (const auto& finding : report.findings) {
    CHECK(finding.kind == FindingKind::Match);
    CHECK(finding.detail == "");
  }
  CHECK(find_at(report, "A/raw") != nullptr);
  CHECK(find_at(report, "D/summary") != nullptr);
  CHECK(verdict_matches_findings(report));
}

TEST_CASE("one tampered expectation yields exactly one mismatch") {
  Bench bench;
  std::string item = bench.capture.register_item(diamond(), {});
  Engine engine(bench.capture);
  MockExecutor executor = MockExecutor::hash_inputs();
  ExecutionId exec = engine.execute(item, 1, executor, subject_bindings());

  ReferenceDataset ref = diamond_reference();
  ref.expected["C"] = {{"cout", "deadbeef"}};
  ValidationReport report = validate_offline(*bench.store, exec, ref);
  CHECK(report.verdict == Verdict::Fail);
  const Finding* finding = find_at(report, "C/cout");
  REQUIRE(finding != nullptr);
  CHECK(finding->kind == FindingKind::Mismatch);
  CHECK(finding->detail ==
        std::string("expected deadbeef, recorded ") + kDiamondCout);

  std::size_t mismatches = 0;
  for (const auto& entry : report.findings) {
    if (entry.kind == FindingKind::Mismatch) ++mismatches;
  }
  CHECK(mismatches == 1);
  CHECK(verdict_matches_findings(report));
}

TEST_CASE("expectations about nodes that never ran come back as missing") {
  Bench bench;
  std::string item = bench.capture.register_item(diamond(), {});
  Engine engine(bench.capture);
  MockExecutor failing = MockExecutor::fail_at("B");
  ExecutionId exec = engine.execute(item, 1, failing, subject_bindings());

  ValidationReport report = validate_offline(*bench.store, exec, diamond_reference());
  CHECK(report.verdict == Verdict::Fail);
  CHECK(*find_at(report, "A/raw") == Finding{"A/raw", FindingKind::Match, ""});
  CHECK(*find_at(report, "C/cout") == Finding{"C/cout", FindingKind::Match, ""});
  CHECK(*find_at(report, "B/bout") ==
        Finding{"B/bout", FindingKind::Missing, "never produced"});
  CHECK(*find_at(report, "D/summary") ==
        Finding{"D/summary", FindingKind::Missing, "never produced"});
  CHECK(verdict_matches_findings(report));
}

TEST_CASE("outputs the dataset does not mention are noted but benign") {
  WorkflowSpec spec;
  spec.spec_id = "wide";
  spec.name = "wide";
  spec.head = "A";
  spec.nodes = {step("A", "proc://A", {"in"}, {"raw", "trace"})};

  Bench bench;
  std::string item = bench.capture.register_item(spec, {});
  Engine engine(bench.capture);
  MockExecutor executor = MockExecutor::hash_inputs();
  ExecutionId exec = engine.execute(item, 1, executor, subject_bindings());

  ReferenceDataset ref;
  ref.name = "only-raw";
  for (const auto& output : load_outcome(*bench.store, exec, "A").outputs) {
    if (output.name == "raw") ref.expected["A"] = {{"raw", output.content_hash}};
  }
  REQUIRE(ref.expected.count("A") == 1);

  ValidationReport report = validate_offline(*bench.store, exec, ref);
  CHECK(report.verdict == Verdict::Pass);
  const Finding* extra = find_at(report, "A/trace");
  REQUIRE(extra != nullptr);
  CHECK(extra->kind == FindingKind::Extra);
  CHECK(extra->detail == "output not in reference");
  CHECK(verdict_matches_findings(report));
}

TEST_CASE("open and unknown executions cannot be validated") {
  Bench bench;
  std::string item = bench.capture.register_item(diamond(), {});

  CaptureService::BeginOptions options;
  options.bindings = subject_bindings();
  ExecutionId open = bench.capture.begin_execution(item, 1, {"tester", ""}, options);
  CHECK_THROWS_WITH_AS(validate_offline(*bench.store, open, diamond_reference()),
                       doctest::Contains("execution still open: "), Error);

  ExecutionId ghost{item, 9};
  CHECK_THROWS_WITH_AS(validate_offline(*bench.store, ghost, diamond_reference()),
                       doctest::Contains("no such execution: "), Error);
  CHECK_THROWS_WITH_AS(
      validate_offline(*bench.store, ExecutionId{"nobody", 1}, diamond_reference()),
      "UnknownExecution: no such execution: nobody:1", Error);
}

TEST_CASE("offline validation never writes to the store") {
  Bench bench;
  std::string item = bench.capture.register_item(diamond(), {});
  Engine engine(bench.capture);
  MockExecutor executor = MockExecutor::hash_inputs();
  ExecutionId exec = engine.execute(item, 1, executor, subject_bindings());

  auto snapshot = [&] {
    std::vector<std::pair<std::string, std::string>> records;
    for (ClusterKind kind : {ClusterKind::Property, ClusterKind::Event, ClusterKind::View,
                             ClusterKind::Outcome, ClusterKind::Workflow,
                             ClusterKind::Collection}) {
      for (const auto& path : bench.store->list(item, kind)) {
        records.emplace_back(path.render(), bench.store->get(path).payload);
      }
    }
    return records;
  };

  auto before = snapshot();
  validate_offline(*bench.store, exec, diamond_reference());
  ReferenceDataset tampered = diamond_reference();
  tampered.expected["A"] = {{"raw", "not-it"}};
  validate_offline(*bench.store, exec, tampered);
  CHECK(snapshot() == before);
}

TEST_CASE("reference datasets survive their json round trip") {
  ReferenceDataset ref = diamond_reference();
  json doc = reference_to_json(ref);
  CHECK(doc.at("name") == "diamond-baseline");
  CHECK(doc.at("expected").at("A").at(0).at("param") == "raw");
  CHECK(doc.at("expected").at("A").at(0).at("hash") == kDiamondRaw);

  ReferenceDataset back = reference_from_json(doc);
  CHECK(back.name == ref.name);
  CHECK(back.expected == ref.expected);

  CHECK_THROWS_WITH_AS(reference_from_json(json::parse(R"({"expected": 5})")),
                       doctest::Contains("bad reference dataset"), Error);
  CHECK_THROWS_WITH_AS(
      reference_from_json(json::parse(R"({"expected": {"": []}})")),
      "MalformedInput: reference dataset has an empty node id", Error);
  CHECK_THROWS_WITH_AS(
      reference_from_json(
          json::parse(R"({"expected": {"A": [{"param": "", "hash": "h"}]}})")),
      "MalformedInput: reference dataset has an empty param name under A", Error);
}

TEST_CASE("online validation replays and passes while nothing drifts") {
  Bench bench;
  std::string item = bench.capture.register_item(diamond(), {});
  Engine engine(bench.capture);
  MockExecutor executor = MockExecutor::hash_inputs();
  engine.execute(item, 1, executor, subject_bindings());

  auto [exec, report] = validate_online(bench.capture, item, 1, executor,
                                        diamond_reference());
  CHECK(exec.run_seq == 2);
  CHECK(report.mode == ValidationMode::Online);
  CHECK(report.verdict == Verdict::Pass);
  REQUIRE(report.exec.has_value());
  CHECK(*report.exec == exec);
}

TEST_CASE("online validation catches a drifted stage and its downstream") {
  Bench bench;
  std::string item = bench.capture.register_item(diamond(), {});
  Engine engine(bench.capture);
  MockExecutor executor = MockExecutor::hash_inputs();
  engine.execute(item, 1, executor, subject_bindings());

  MockExecutor drifted = MockExecutor::drift("C", "v2");
  auto [exec, report] =
      validate_online(bench.capture, item, 1, drifted, diamond_reference());
  CHECK(report.verdict == Verdict::Fail);
  CHECK(find_at(report, "A/raw")->kind == FindingKind::Match);
  CHECK(find_at(report, "B/bout")->kind == FindingKind::Match);
  CHECK(find_at(report, "C/cout")->kind == FindingKind::Mismatch);
  CHECK(find_at(report, "D/summary")->kind == FindingKind::Mismatch);
  CHECK(verdict_matches_findings(report));
}

TEST_CASE("online validation reports a faulty stage as missing output") {
  Bench bench;
  std::string item = bench.capture.register_item(diamond(), {});
  Engine engine(bench.capture);
  MockExecutor executor = MockExecutor::hash_inputs();
  engine.execute(item, 1, executor, subject_bindings());

  MockExecutor failing = MockExecutor::fail_at("B");
  auto [exec, report] =
      validate_online(bench.capture, item, 1, failing, diamond_reference());
  CHECK(report.verdict == Verdict::Fail);
  CHECK(find_at(report, "B/bout")->kind == FindingKind::Missing);
  CHECK(find_at(report, "D/summary")->kind == FindingKind::Missing);
  CHECK(find_at(report, "A/raw")->kind == FindingKind::Match);
}

TEST_CASE("reports serialize with their subject and findings") {
  ValidationReport blueprint = validate_blueprint(diamond(), diamond());
  json doc = report_to_json(blueprint);
  CHECK(doc.at("mode") == "Blueprint");
  CHECK(doc.at("verdict") == "Pass");
  CHECK(doc.at("subject") == json{{"spec", "diamond"}, {"version", 1}});
  CHECK(doc.at("findings").is_array());
  CHECK(doc.at("findings").empty());

  Bench bench;
  std::string item = bench.capture.register_item(diamond(), {});
  Engine engine(bench.capture);
  MockExecutor failing = MockExecutor::fail_at("B");
  ExecutionId exec = engine.execute(item, 1, failing, subject_bindings());
  json offline = report_to_json(validate_offline(*bench.store, exec, diamond_reference()));
  CHECK(offline.at("mode") == "Offline");
  CHECK(offline.at("verdict") == "Fail");
  CHECK(offline.at("subject") == json{{"exec", exec.to_string()}});
  bool saw_missing = false;
  for (const auto& finding : offline.at("findings")) {
    CHECK(finding.contains("detail"));
    CHECK(finding.contains("kind"));
    CHECK(finding.contains("location"));
    if (finding.at("kind") == "Missing") saw_missing = true;
  }
  CHECK(saw_missing);
}
