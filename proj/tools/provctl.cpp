// Command-line front end over a storage backend: register pipelines, run
// them, browse traces, validate, and exchange OPM documents. Prints JSON
// (or raw XML for the OPM commands); exit 0 on success, 1 on a domain
// error, 2 on usage errors.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "prov/opm.hpp"
#include "prov/query.hpp"
#include "prov/reconstruct.hpp"
#include "prov/service.hpp"
#include "prov/validate.hpp"

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw prov::Error(prov::ErrorKind::BadConfig, "cannot read file: " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

prov::json parse_file(const std::string& path) {
  prov::json doc = prov::json::parse(slurp(path), nullptr, false);
  if (doc.is_discarded()) {
    throw prov::Error(prov::ErrorKind::MalformedInput, "not valid JSON: " + path);
  }
  return doc;
}

void print_json(const prov::json& doc) { std::cout << doc.dump(2) << "\n"; }

struct Ctx {
  std::string config_path;
  std::string backend;
  std::string root;
  std::string executors;

  prov::ServiceConfig resolve() {
    prov::ServiceConfig config;
    if (!config_path.empty() || std::getenv("PROVKERNEL_CONFIG")) {
      config = prov::load_service_config(config_path);
    }
    if (!backend.empty()) config.storage.backend = backend;
    if (!root.empty()) config.storage.root = root;
    if (!executors.empty()) {
      config.executors.clear();
      std::istringstream parts(executors);
      std::string part;
      while (std::getline(parts, part, ',')) {
        if (!part.empty()) config.executors.push_back(part);
      }
    }
    return config;
  }

  std::unique_ptr<prov::Storage> open() { return prov::open_backend(resolve().storage); }
};

prov::VersionTag pick_version(prov::Storage& store, const std::string& item,
                              prov::VersionTag version) {
  return version == 0 ? prov::latest_version(store, item) : version;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"workflow provenance control"};
  app.require_subcommand(1);

  Ctx ctx;
  app.add_option("--config", ctx.config_path, "config file (or $PROVKERNEL_CONFIG)");
  app.add_option("--backend", ctx.backend, "storage backend: memory | file");
  app.add_option("--root", ctx.root, "file backend root directory");
  app.add_option("--executors", ctx.executors, "comma-separated executor whitelist");

  // register
  std::string spec_path, descriptions_path;
  auto* reg = app.add_subcommand("register", "store a new pipeline");
  reg->add_option("--spec", spec_path, "spec JSON file")->required();
  reg->add_option("--descriptions", descriptions_path, "descriptions JSON file");

  // run / replay share most options
  std::string item, executor_name, bindings_path, source, scope_csv, ref_path;
  std::uint64_t version = 0;
  auto add_run_options = [&](CLI::App* cmd, bool with_source) {
    cmd->add_option("--item", item, "item id")->required();
    cmd->add_option("--version", version, "spec version (default: latest)");
    cmd->add_option("--executor", executor_name, "executor name")->required();
    cmd->add_option("--bindings", bindings_path, "JSON file with head input bindings");
    if (with_source) {
      cmd->add_option("--scope", scope_csv, "comma-separated node ids to re-run");
      cmd->add_option("--source", source, "source execution id (item:seq)");
    }
  };
  auto* run = app.add_subcommand("run", "execute a pipeline version");
  add_run_options(run, false);
  auto* replay_cmd = app.add_subcommand("replay", "re-run all or part of a pipeline");
  add_run_options(replay_cmd, true);

  // list
  bool include_open = false;
  auto* list = app.add_subcommand("list", "list executions of an item");
  list->add_option("--item", item, "item id")->required();
  list->add_flag("--open", include_open, "include still-open executions");

  // errors
  std::uint64_t exec_seq = 0;
  bool exec_given = false;
  auto* errors = app.add_subcommand("errors", "failure records of an item");
  errors->add_option("--item", item, "item id")->required();
  errors->add_option("--exec", exec_seq, "restrict to one run seq")
      ->each([&](const std::string&) { exec_given = true; });

  // annotate
  std::string text, author, node;
  bool version_given = false;
  auto* annotate = app.add_subcommand("annotate", "attach a note to a version or node");
  annotate->add_option("--item", item, "item id")->required();
  annotate->add_option("--version", version, "version to annotate")
      ->each([&](const std::string&) { version_given = true; });
  annotate->add_option("--node", node, "node to annotate");
  annotate->add_option("--text", text, "annotation text")->required();
  annotate->add_option("--author", author, "author name");

  // search
  std::string query_text;
  auto* search = app.add_subcommand("search", "find annotations by substring");
  search->add_option("--q", query_text, "query text (empty matches all)");
  search->add_option("--item", item, "restrict to one item");

  // show
  auto* show = app.add_subcommand("show", "spec and history of a version");
  show->add_option("--item", item, "item id")->required();
  show->add_option("--version", version, "version (default: latest)");

  // subpipeline
  auto* subpipeline = app.add_subcommand("subpipeline", "dependency closure of a node");
  subpipeline->add_option("--item", item, "item id")->required();
  subpipeline->add_option("--version", version, "version (default: latest)");
  subpipeline->add_option("--node", node, "target node id")->required();

  // derive
  std::string edits_path_arg;
  std::uint64_t base_version = 0;
  auto* derive_cmd = app.add_subcommand("derive", "new version from an edit list");
  derive_cmd->add_option("--item", item, "item id")->required();
  derive_cmd->add_option("--base", base_version, "base version (default: latest)");
  derive_cmd->add_option("--edits", edits_path_arg, "JSON edit list file")->required();

  // validate-*
  std::string blueprint_path;
  auto* vb = app.add_subcommand("validate-blueprint", "compare a spec against a blueprint");
  vb->add_option("--spec", spec_path, "candidate spec JSON file")->required();
  vb->add_option("--blueprint", blueprint_path, "reference spec JSON file")->required();

  std::string exec_str;
  auto* voff = app.add_subcommand("validate-offline", "check recorded outputs against a reference");
  voff->add_option("--exec", exec_str, "execution id (item:seq)")->required();
  voff->add_option("--ref", ref_path, "reference dataset JSON file")->required();

  auto* von = app.add_subcommand("validate-online", "re-execute and check against a reference");
  von->add_option("--item", item, "item id")->required();
  von->add_option("--version", version, "version (default: latest)");
  von->add_option("--executor", executor_name, "executor name")->required();
  von->add_option("--ref", ref_path, "reference dataset JSON file")->required();

  // OPM exchange
  auto* export_opm = app.add_subcommand("export-opm", "execution as an OPM XML document");
  export_opm->add_option("--exec", exec_str, "execution id (item:seq)")->required();

  std::string xml_path;
  auto* import_opm = app.add_subcommand("import-opm", "parse OPM XML, print canonical form");
  import_opm->add_option("--file", xml_path, "XML file")->required();

  // compare
  std::string exec_a, exec_b;
  auto* compare = app.add_subcommand("compare", "node-by-node diff of two executions");
  compare->add_option("--a", exec_a, "first execution id")->required();
  compare->add_option("--b", exec_b, "second execution id")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*reg) {
      auto store = ctx.open();
      prov::CaptureService capture(*store);
      prov::Descriptions descriptions;
      if (!descriptions_path.empty()) {
        descriptions = prov::descriptions_from_json(parse_file(descriptions_path));
      }
      std::string id = capture.register_item(prov::spec_from_json(parse_file(spec_path)),
                                             descriptions);
      print_json({{"item", id}});
    } else if (*run || *replay_cmd) {
      auto config = ctx.resolve();
      auto store = prov::open_backend(config.storage);
      prov::CaptureService capture(*store);
      auto executor = prov::make_executor(executor_name, config.executors);
      std::map<prov::ParamName, prov::DataRef> bindings;
      if (!bindings_path.empty()) bindings = prov::parse_bindings(parse_file(bindings_path));
      prov::VersionTag v = pick_version(*store, item, version);

      prov::ExecutionId exec;
      if (*replay_cmd) {
        prov::ReplayOptions options;
        options.bindings = std::move(bindings);
        if (!source.empty()) options.source = prov::ExecutionId::parse(source);
        std::istringstream parts(scope_csv);
        std::string part;
        while (std::getline(parts, part, ',')) {
          if (!part.empty()) options.scope.push_back(part);
        }
        exec = prov::replay(capture, item, v, *executor, options);
      } else {
        prov::Engine engine(capture);
        exec = engine.execute(item, v, *executor, bindings, {"cli", ""});
      }
      const auto& run_state = prov::load_state(*store, item).runs.at(exec.run_seq);
      print_json({{"exec", exec.to_string()},
                  {"status", run_state.status ? prov::to_string(*run_state.status) : "open"}});
    } else if (*list) {
      auto store = ctx.open();
      print_json(prov::execution_rows_to_json(
          prov::list_executions(*store, item, include_open)));
    } else if (*errors) {
      auto store = ctx.open();
      std::optional<prov::ExecutionId> exec;
      if (exec_given) exec = prov::ExecutionId{item, exec_seq};
      print_json(prov::error_rows_to_json(prov::get_errors(*store, item, exec)));
    } else if (*annotate) {
      auto store = ctx.open();
      prov::CaptureService capture(*store);
      prov::Annotation note;
      note.item_id = item;
      note.text = text;
      note.author = author;
      if (version_given) note.version = version;
      if (!node.empty()) note.node = node;
      capture.annotate(note);
      print_json({{"recorded", true}});
    } else if (*search) {
      auto store = ctx.open();
      std::optional<std::string> scope;
      if (!item.empty()) scope = item;
      print_json(prov::annotations_to_json(
          prov::search_annotations(*store, query_text, scope)));
    } else if (*show) {
      auto store = ctx.open();
      prov::VersionTag v = pick_version(*store, item, version);
      prov::Reconstruction rec = prov::reconstruct(*store, item, v);
      prov::json trace = prov::json::array();
      for (const auto& event : rec.trace) trace.push_back(prov::event_to_json(event));
      print_json({{"spec", prov::spec_to_json(rec.spec)}, {"trace", trace}});
    } else if (*subpipeline) {
      auto store = ctx.open();
      prov::VersionTag v = pick_version(*store, item, version);
      print_json(prov::fragment_to_json(prov::get_subpipeline(*store, item, v, {node})));
    } else if (*derive_cmd) {
      auto store = ctx.open();
      prov::CaptureService capture(*store);
      prov::VersionTag base = pick_version(*store, item, base_version);
      prov::VersionTag v = prov::derive(capture, item, base,
                                        prov::edits_from_json(parse_file(edits_path_arg)));
      print_json({{"version", v}});
    } else if (*vb) {
      auto report = prov::validate_blueprint(prov::spec_from_json(parse_file(spec_path)),
                                             prov::spec_from_json(parse_file(blueprint_path)));
      print_json(prov::report_to_json(report));
    } else if (*voff) {
      auto store = ctx.open();
      auto report = prov::validate_offline(*store, prov::ExecutionId::parse(exec_str),
                                           prov::reference_from_json(parse_file(ref_path)));
      print_json(prov::report_to_json(report));
    } else if (*von) {
      auto config = ctx.resolve();
      auto store = prov::open_backend(config.storage);
      prov::CaptureService capture(*store);
      auto executor = prov::make_executor(executor_name, config.executors);
      prov::VersionTag v = pick_version(*store, item, version);
      auto [exec, report] = prov::validate_online(
          capture, item, v, *executor, prov::reference_from_json(parse_file(ref_path)));
      print_json({{"exec", exec.to_string()}, {"report", prov::report_to_json(report)}});
    } else if (*export_opm) {
      auto store = ctx.open();
      std::cout << prov::export_xml(prov::to_opm(*store, prov::ExecutionId::parse(exec_str)));
    } else if (*import_opm) {
      std::cout << prov::export_xml(prov::import_xml(slurp(xml_path)));
    } else if (*compare) {
      auto store = ctx.open();
      print_json(prov::comparison_to_json(prov::compare_executions(
          *store, prov::ExecutionId::parse(exec_a), prov::ExecutionId::parse(exec_b))));
    }
  } catch (const prov::Error& e) {
    std::cerr << e.what() << "\n";
    for (const auto& detail : e.details()) std::cerr << "  " << detail << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "Internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
