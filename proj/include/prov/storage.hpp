#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "prov/errors.hpp"

namespace prov {

// The six per-item record families. Event records are write-once; the
// other kinds may be overwritten.
enum class ClusterKind { Property, Event, View, Outcome, Workflow, Collection };

const char* to_string(ClusterKind kind);
ClusterKind cluster_kind_from_string(const std::string& text);

// Path segments share the node-id charset so rendered paths are safe as
// filesystem names on the file backend.
bool valid_path_segment(const std::string& segment);

struct StoragePath {
  std::string item_id;
  ClusterKind kind = ClusterKind::Property;
  std::vector<std::string> subpath;

  // "item_id/Kind/seg1/seg2/...". Total order for list() output.
  std::string render() const;
  static StoragePath parse(const std::string& text);

  friend bool operator==(const StoragePath&, const StoragePath&) = default;
};

// Numeric segments are zero-padded to 12 digits so lexicographic order
// equals numeric order.
std::string pad_seq(std::uint64_t n);

struct StorageRecord {
  StoragePath path;
  std::string payload;       // non-empty
  std::string content_type;  // "spec","event","outcome",...
};

// ClusterStorage interface. Handles are thread-safe; each call is
// individually atomic, there are no cross-record transactions.
class Storage {
 public:
  virtual ~Storage() = default;

  // Errors: MalformedInput on an invalid path or empty payload,
  // ImmutableOverwrite when rewriting an Event path, BackendUnavailable.
  virtual void put(const StorageRecord& record) = 0;

  // Errors: NotFound, BackendUnavailable.
  virtual StorageRecord get(const StoragePath& path) = 0;

  virtual bool exists(const StoragePath& path) = 0;

  // All stored paths under item_id/kind whose subpath starts with
  // subpath_prefix, sorted by rendered form.
  virtual std::vector<StoragePath> list(const std::string& item_id, ClusterKind kind,
                                        const std::vector<std::string>& subpath_prefix = {}) = 0;

  // Item ids with at least one record, sorted.
  virtual std::vector<std::string> list_items() = 0;

  // Flushes and invalidates the handle; later calls raise BackendUnavailable.
  virtual void close() = 0;
};

struct BackendConfig {
  std::string backend;  // "memory" | "file"
  std::string root;     // file backend only
};

// key=value lines, '#' comments. Errors: BadConfig.
BackendConfig parse_backend_config(const std::string& text);

// Errors: BadConfig on an unknown backend name or missing root,
// BackendUnavailable when the file root cannot be prepared.
std::unique_ptr<Storage> open_backend(const BackendConfig& config);

}  // namespace prov
