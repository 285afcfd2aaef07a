#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace relrank {

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

struct FileDigest {
  std::string path;
  std::string sha256;
};

// Provenance record written next to every CLI output.
struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::vector<FileDigest> inputs;
  std::uint64_t seed = 0;
  std::string code_version;
  std::vector<FileDigest> outputs;
  double wall_clock_seconds = 0;

  void add_input(const std::filesystem::path& path);
  void add_output(const std::filesystem::path& path);
};

std::string code_version();

nlohmann::json to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const nlohmann::json& j);
void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);
RunManifest read_manifest(const std::filesystem::path& path);

// Paths whose current digest differs from the recorded one (missing files
// included).
std::vector<std::string> stale_files(const RunManifest& manifest);

}  // namespace relrank
