#pragma once

// Shared fixtures: the two specs most tests run against, a memory-backed
// capture stack with a deterministic clock, and a self-cleaning temp dir
// for file-backend tests.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "prov/capture.hpp"
#include "prov/engine.hpp"
#include "prov/model.hpp"
#include "prov/storage.hpp"

namespace fixtures {

inline prov::WorkflowNode step(std::string id, std::string ref,
                               std::vector<std::string> ins,
                               std::vector<std::string> outs) {
  prov::WorkflowNode node;
  node.id = std::move(id);
  node.process_ref = std::move(ref);
  node.declared_inputs = std::move(ins);
  node.declared_outputs = std::move(outs);
  return node;
}

// A -> B, A -> C, B -> D, C -> D: fan-out then fan-in.
inline prov::WorkflowSpec diamond() {
  prov::WorkflowSpec spec;
  spec.spec_id = "diamond";
  spec.name = "diamond";
  spec.head = "A";
  spec.nodes.push_back(step("A", "proc://A", {"in"}, {"raw"}));
  spec.nodes.push_back(step("B", "proc://B", {"raw"}, {"bout"}));
  spec.nodes.push_back(step("C", "proc://C", {"raw"}, {"cout"}));
  spec.nodes.push_back(step("D", "proc://D", {"bout", "cout"}, {"summary"}));
  spec.edges = {{"A", "B"}, {"A", "C"}, {"B", "D"}, {"C", "D"}};
  return spec;
}

inline prov::WorkflowSpec chain() {
  prov::WorkflowSpec spec;
  spec.spec_id = "chain";
  spec.name = "chain";
  spec.head = "acquire";
  spec.nodes.push_back(step("acquire", "proc://acquire", {"in"}, {"raw"}));
  spec.nodes.push_back(step("normalize", "proc://normalize", {"raw"}, {"norm"}));
  spec.nodes.push_back(step("report", "proc://report", {"norm"}, {"summary"}));
  spec.edges = {{"acquire", "normalize"}, {"normalize", "report"}};
  return spec;
}

inline std::map<prov::ParamName, prov::DataRef> subject_bindings() {
  std::map<prov::ParamName, prov::DataRef> bindings;
  bindings["in"] = prov::make_data_ref("in", "subject-042 scan");
  return bindings;
}

// Memory store plus capture service whose clock ticks 1000, 1001, ... so
// recorded timestamps are identical from run to run.
struct Bench {
  Bench()
      : store(prov::open_backend({"memory", ""})),
        capture(*store, [n = std::int64_t{1000}]() mutable { return n++; }) {}

  std::unique_ptr<prov::Storage> store;
  prov::CaptureService capture;
};

struct TempDir {
  TempDir() {
    std::mt19937_64 rng(std::random_device{}());
    path = std::filesystem::temp_directory_path() /
           ("prov-test-" + std::to_string(rng()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path path;
};

}  // namespace fixtures
