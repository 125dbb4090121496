#include "prov/storage.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

namespace fs = std::filesystem;

namespace prov {

const char* to_string(ClusterKind kind) {
  switch (kind) {
    case ClusterKind::Property: return "Property";
    case ClusterKind::Event: return "Event";
    case ClusterKind::View: return "View";
    case ClusterKind::Outcome: return "Outcome";
    case ClusterKind::Workflow: return "Workflow";
    case ClusterKind::Collection: return "Collection";
  }
  return "Property";
}

ClusterKind cluster_kind_from_string(const std::string& text) {
  if (text == "Property") return ClusterKind::Property;
  if (text == "Event") return ClusterKind::Event;
  if (text == "View") return ClusterKind::View;
  if (text == "Outcome") return ClusterKind::Outcome;
  if (text == "Workflow") return ClusterKind::Workflow;
  if (text == "Collection") return ClusterKind::Collection;
  throw Error(ErrorKind::MalformedInput, "unknown cluster kind: " + text);
}

bool valid_path_segment(const std::string& segment) {
  if (segment.empty() || segment == "." || segment == "..") return false;
  for (char c : segment) {
    bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
              (c >= '0' && c <= '9') || c == '_' || c == '.' || c == '-';
    if (!ok) return false;
  }
  return true;
}

std::string StoragePath::render() const {
  std::string out = item_id;
  out += '/';
  out += to_string(kind);
  for (const auto& segment : subpath) {
    out += '/';
    out += segment;
  }
  return out;
}

StoragePath StoragePath::parse(const std::string& text) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : text) {
    if (c == '/') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  if (parts.size() < 2) {
    throw Error(ErrorKind::MalformedInput, "bad storage path: " + text);
  }
  StoragePath path;
  path.item_id = parts[0];
  path.kind = cluster_kind_from_string(parts[1]);
  path.subpath.assign(parts.begin() + 2, parts.end());
  if (!valid_path_segment(path.item_id)) {
    throw Error(ErrorKind::MalformedInput, "bad storage path: " + text);
  }
  for (const auto& segment : path.subpath) {
    if (!valid_path_segment(segment)) {
      throw Error(ErrorKind::MalformedInput, "bad storage path: " + text);
    }
  }
  return path;
}

std::string pad_seq(std::uint64_t n) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%012llu", static_cast<unsigned long long>(n));
  return buf;
}

namespace {

void check_record(const StorageRecord& record) {
  if (!valid_path_segment(record.path.item_id)) {
    throw Error(ErrorKind::MalformedInput,
                "bad item id in storage path: \"" + record.path.item_id + "\"");
  }
  for (const auto& segment : record.path.subpath) {
    if (!valid_path_segment(segment)) {
      throw Error(ErrorKind::MalformedInput,
                  "bad path segment: \"" + segment + "\"");
    }
  }
  if (record.payload.empty()) {
    throw Error(ErrorKind::MalformedInput,
                "empty payload at " + record.path.render());
  }
}

bool subpath_has_prefix(const std::vector<std::string>& subpath,
                        const std::vector<std::string>& prefix) {
  if (prefix.size() > subpath.size()) return false;
  return std::equal(prefix.begin(), prefix.end(), subpath.begin());
}

class MemoryStorage final : public Storage {
 public:
  void put(const StorageRecord& record) override {
    check_record(record);
    std::lock_guard<std::mutex> lock(mutex_);
    require_open();
    std::string key = record.path.render();
    auto it = records_.find(key);
    if (it != records_.end() && record.path.kind == ClusterKind::Event) {
      throw Error(ErrorKind::ImmutableOverwrite, "event record exists: " + key);
    }
    records_[key] = record;
  }

  StorageRecord get(const StoragePath& path) override {
    std::lock_guard<std::mutex> lock(mutex_);
    require_open();
    auto it = records_.find(path.render());
    if (it == records_.end()) {
      throw Error(ErrorKind::NotFound, "no record at " + path.render());
    }
    return it->second;
  }

  bool exists(const StoragePath& path) override {
    std::lock_guard<std::mutex> lock(mutex_);
    require_open();
    return records_.count(path.render()) > 0;
  }

  std::vector<StoragePath> list(const std::string& item_id, ClusterKind kind,
                                const std::vector<std::string>& subpath_prefix) override {
    std::lock_guard<std::mutex> lock(mutex_);
    require_open();
    std::vector<StoragePath> out;
    StoragePath probe{item_id, kind, {}};
    std::string low = probe.render();
    // The map is keyed by rendered form, so records of this item/kind form
    // a contiguous key range and arrive already sorted.
    for (auto it = records_.lower_bound(low); it != records_.end(); ++it) {
      const StoragePath& path = it->second.path;
      if (path.item_id != item_id || path.kind != kind) break;
      if (subpath_has_prefix(path.subpath, subpath_prefix)) out.push_back(path);
    }
    return out;
  }

  std::vector<std::string> list_items() override {
    std::lock_guard<std::mutex> lock(mutex_);
    require_open();
    std::vector<std::string> out;
    // Keys of one item share the "item/" prefix and so sit contiguously.
    for (const auto& [key, record] : records_) {
      if (out.empty() || out.back() != record.path.item_id) {
        out.push_back(record.path.item_id);
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  void close() override {
    std::lock_guard<std::mutex> lock(mutex_);
    open_ = false;
    records_.clear();
  }

 private:
  void require_open() const {
    if (!open_) throw Error(ErrorKind::BackendUnavailable, "backend closed");
  }

  std::mutex mutex_;
  bool open_ = true;
  std::map<std::string, StorageRecord> records_;
};

// One payload file per path: root/item/Kind/.../<last>.bin plus a sibling
// <last>.meta holding the content_type. The .bin suffix keeps a record at
// prefix P from colliding with a directory of deeper records under P.
class FileStorage final : public Storage {
 public:
  explicit FileStorage(fs::path root) : root_(std::move(root)) {}

  void put(const StorageRecord& record) override {
    check_record(record);
    std::lock_guard<std::mutex> lock(mutex_);
    require_open();
    fs::path payload_file = file_for(record.path);
    std::error_code ec;
    if (record.path.kind == ClusterKind::Event && fs::exists(payload_file, ec)) {
      throw Error(ErrorKind::ImmutableOverwrite,
                  "event record exists: " + record.path.render());
    }
    fs::create_directories(payload_file.parent_path(), ec);
    if (ec) {
      throw Error(ErrorKind::BackendUnavailable,
                  "cannot create " + payload_file.parent_path().string() + ": " + ec.message());
    }
    // Write-then-rename so readers never observe a half-written record.
    write_atomic(payload_file.string() + ".meta-part", meta_for(record.path), record.content_type);
    write_atomic(payload_file.string() + ".part", payload_file, record.payload);
  }

  StorageRecord get(const StoragePath& path) override {
    std::lock_guard<std::mutex> lock(mutex_);
    require_open();
    fs::path payload_file = file_for(path);
    std::ifstream in(payload_file, std::ios::binary);
    if (!in) {
      throw Error(ErrorKind::NotFound, "no record at " + path.render());
    }
    std::ostringstream payload;
    payload << in.rdbuf();
    if (!in.good() && !in.eof()) {
      throw Error(ErrorKind::BackendUnavailable, "read failed: " + payload_file.string());
    }
    StorageRecord record;
    record.path = path;
    record.payload = payload.str();
    std::ifstream meta(meta_for(path), std::ios::binary);
    if (meta) {
      std::ostringstream tag;
      tag << meta.rdbuf();
      record.content_type = tag.str();
    }
    return record;
  }

  bool exists(const StoragePath& path) override {
    std::lock_guard<std::mutex> lock(mutex_);
    require_open();
    std::error_code ec;
    return fs::exists(file_for(path), ec);
  }

  std::vector<StoragePath> list(const std::string& item_id, ClusterKind kind,
                                const std::vector<std::string>& subpath_prefix) override {
    std::lock_guard<std::mutex> lock(mutex_);
    require_open();
    for (const auto& segment : subpath_prefix) {
      if (!valid_path_segment(segment)) {
        throw Error(ErrorKind::MalformedInput, "bad path segment: \"" + segment + "\"");
      }
    }
    std::vector<StoragePath> out;
    fs::path base = root_ / item_id / to_string(kind);
    for (const auto& segment : subpath_prefix) base /= segment;

    std::error_code ec;
    // The prefix may name a record exactly (".bin" alongside the directory).
    if (!subpath_prefix.empty() && fs::is_regular_file(base.string() + ".bin", ec)) {
      out.push_back({item_id, kind, subpath_prefix});
    }
    if (fs::is_directory(base, ec)) {
      for (fs::recursive_directory_iterator it(base, ec), end; !ec && it != end; it.increment(ec)) {
        if (!it->is_regular_file()) continue;
        fs::path rel = fs::relative(it->path(), root_ / item_id / to_string(kind), ec);
        if (ec || rel.extension() != ".bin") continue;
        StoragePath path{item_id, kind, {}};
        for (const auto& part : rel) path.subpath.push_back(part.string());
        path.subpath.back() = rel.stem().string();
        out.push_back(std::move(path));
      }
    }
    std::sort(out.begin(), out.end(), [](const StoragePath& a, const StoragePath& b) {
      return a.render() < b.render();
    });
    return out;
  }

  std::vector<std::string> list_items() override {
    std::lock_guard<std::mutex> lock(mutex_);
    require_open();
    std::vector<std::string> out;
    std::error_code ec;
    for (fs::directory_iterator it(root_, ec), end; !ec && it != end; it.increment(ec)) {
      if (it->is_directory()) out.push_back(it->path().filename().string());
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  void close() override {
    std::lock_guard<std::mutex> lock(mutex_);
    open_ = false;
  }

 private:
  void require_open() const {
    if (!open_) throw Error(ErrorKind::BackendUnavailable, "backend closed");
  }

  fs::path file_for(const StoragePath& path) const {
    fs::path out = root_ / path.item_id / to_string(path.kind);
    for (size_t i = 0; i + 1 < path.subpath.size(); ++i) out /= path.subpath[i];
    std::string last = path.subpath.empty() ? std::string("_") : path.subpath.back();
    out /= last + ".bin";
    return out;
  }

  fs::path meta_for(const StoragePath& path) const {
    fs::path payload = file_for(path);
    return payload.parent_path() / (payload.stem().string() + ".meta");
  }

  void write_atomic(const fs::path& tmp, const fs::path& target, const std::string& bytes) {
    {
      std::ofstream outf(tmp, std::ios::binary | std::ios::trunc);
      outf.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
      outf.flush();
      if (!outf.good()) {
        std::error_code ec;
        fs::remove(tmp, ec);
        throw Error(ErrorKind::BackendUnavailable, "write failed: " + target.string());
      }
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
      fs::remove(tmp, ec);
      throw Error(ErrorKind::BackendUnavailable, "rename failed: " + target.string());
    }
  }

  std::mutex mutex_;
  bool open_ = true;
  fs::path root_;
};

}  // namespace

BackendConfig parse_backend_config(const std::string& text) {
  BackendConfig config;
  std::istringstream in(text);
  std::string line;
  auto trim = [](std::string s) {
    size_t first = s.find_first_not_of(" \t\r");
    size_t last = s.find_last_not_of(" \t\r");
    return first == std::string::npos ? std::string() : s.substr(first, last - first + 1);
  };
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::BadConfig, "expected key=value, got \"" + line + "\"");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key == "backend") {
      config.backend = value;
    } else if (key == "root") {
      config.root = value;
    } else {
      throw Error(ErrorKind::BadConfig, "unknown config key: " + key);
    }
  }
  if (config.backend.empty()) {
    throw Error(ErrorKind::BadConfig, "config missing backend=");
  }
  return config;
}

std::unique_ptr<Storage> open_backend(const BackendConfig& config) {
  if (config.backend == "memory") {
    return std::make_unique<MemoryStorage>();
  }
  if (config.backend == "file") {
    if (config.root.empty()) {
      throw Error(ErrorKind::BadConfig, "file backend needs root=");
    }
    fs::path root(config.root);
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec || !fs::is_directory(root)) {
      throw Error(ErrorKind::BackendUnavailable,
                  "cannot prepare root " + config.root + (ec ? ": " + ec.message() : ""));
    }
    // Probe writability up front instead of failing on the first put.
    fs::path probe = root / ".probe";
    {
      std::ofstream out(probe, std::ios::binary | std::ios::trunc);
      out << "ok";
      if (!out.good()) {
        throw Error(ErrorKind::BackendUnavailable, "root not writable: " + config.root);
      }
    }
    fs::remove(probe, ec);
    return std::make_unique<FileStorage>(std::move(root));
  }
  throw Error(ErrorKind::BadConfig, "unknown backend: " + config.backend);
}

}  // namespace prov
