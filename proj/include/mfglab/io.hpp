#pragma once

// Output plumbing: CSV emission at full double precision (17 significant
// digits round-trips exactly), content digests and the run manifest.

#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfg {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string format_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

inline void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  for (size_t c = 0; c < table.columns.size(); ++c)
    out << (c ? "," : "") << table.columns[c];
  out << "\n";
  for (const auto& row : table.rows) {
    for (size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << format_g17(row[c]);
    out << "\n";
  }
  if (!out) throw IoError("write failed: " + path.string());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

inline uint64_t fnv1a64(const std::string& bytes) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string digest_hex(const std::string& bytes) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)fnv1a64(bytes));
  return buf;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read: " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

struct ManifestFile {
  std::string path;
  uint64_t bytes = 0;
  std::string digest;
};

struct RunManifest {
  std::string plan_hash;
  std::string tool_version;
  int exit_status = 0;
  std::vector<std::pair<std::string, double>> timings_ms;
  std::vector<ManifestFile> files;
  std::vector<std::string> notes;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["plan_hash"] = plan_hash;
    j["tool_version"] = tool_version;
    j["exit_status"] = exit_status;
    nlohmann::json jt = nlohmann::json::array();
    for (const auto& [name, ms] : timings_ms) jt.push_back({{"stage", name}, {"ms", ms}});
    j["timings"] = jt;
    nlohmann::json jf = nlohmann::json::array();
    for (const auto& f : files)
      jf.push_back({{"path", f.path}, {"bytes", f.bytes}, {"digest", f.digest}});
    j["files"] = jf;
    j["notes"] = notes;
    return j;
  }
};

// registers an emitted file in the manifest with its content digest
inline void manifest_add(RunManifest& man, const std::filesystem::path& root,
                         const std::filesystem::path& file) {
  std::string bytes = read_file(file);
  ManifestFile mf;
  mf.path = std::filesystem::relative(file, root).string();
  mf.bytes = bytes.size();
  mf.digest = digest_hex(bytes);
  man.files.push_back(std::move(mf));
}

}  // namespace mfg
