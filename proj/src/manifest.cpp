#include "relrank/manifest.hpp"

#include <array>
#include <fstream>
#include <iterator>
#include <memory>

#include <fmt/core.h>
#include <openssl/evp.h>

#include "relrank/common.hpp"

#ifndef RELRANK_VERSION
#define RELRANK_VERSION "unknown"
#endif

namespace relrank {
namespace {

struct DigestContext {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx{EVP_MD_CTX_new(),
                                                              &EVP_MD_CTX_free};
  DigestContext() {
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
      throw std::runtime_error("sha256: digest initialization failed");
    }
  }
  void update(const char* data, std::size_t n) { EVP_DigestUpdate(ctx.get(), data, n); }
  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", md[i]);
    return out;
  }
};

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  DigestContext d;
  d.update(bytes.data(), bytes.size());
  return d.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(fmt::format("cannot open {}", path.string()));
  DigestContext d;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    d.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return d.hex();
}

void RunManifest::add_input(const std::filesystem::path& path) {
  inputs.push_back({path.string(), sha256_file(path)});
}

void RunManifest::add_output(const std::filesystem::path& path) {
  outputs.push_back({path.string(), sha256_file(path)});
}

std::string code_version() { return RELRANK_VERSION; }

namespace {

nlohmann::json digests_to_json(const std::vector<FileDigest>& files) {
  auto arr = nlohmann::json::array();
  for (const auto& f : files) arr.push_back({{"path", f.path}, {"sha256", f.sha256}});
  return arr;
}

std::vector<FileDigest> digests_from_json(const nlohmann::json& arr) {
  std::vector<FileDigest> out;
  for (const auto& f : arr) {
    out.push_back({f.at("path").get<std::string>(), f.at("sha256").get<std::string>()});
  }
  return out;
}

}  // namespace

nlohmann::json to_json(const RunManifest& m) {
  return {{"command", m.command},
          {"config", m.config},
          {"inputs", digests_to_json(m.inputs)},
          {"seed", m.seed},
          {"code_version", m.code_version},
          {"outputs", digests_to_json(m.outputs)},
          {"wall_clock_seconds", m.wall_clock_seconds}};
}

RunManifest manifest_from_json(const nlohmann::json& j) {
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.config = j.value("config", nlohmann::json::object());
  m.inputs = digests_from_json(j.at("inputs"));
  m.seed = j.at("seed").get<std::uint64_t>();
  m.code_version = j.at("code_version").get<std::string>();
  m.outputs = digests_from_json(j.at("outputs"));
  m.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
  return m;
}

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw ValidationError(fmt::format("cannot write {}", path.string()));
  out << to_json(manifest).dump(2) << '\n';
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot open {}", path.string()));
  try {
    return manifest_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("{}: malformed manifest: {}", path.string(), e.what()));
  }
}

std::vector<std::string> stale_files(const RunManifest& manifest) {
  std::vector<std::string> stale;
  auto check = [&](const std::vector<FileDigest>& files) {
    for (const auto& f : files) {
      std::error_code ec;
      if (!std::filesystem::exists(f.path, ec) || sha256_file(f.path) != f.sha256) {
        stale.push_back(f.path);
      }
    }
  };
  check(manifest.inputs);
  check(manifest.outputs);
  return stale;
}

}  // namespace relrank
