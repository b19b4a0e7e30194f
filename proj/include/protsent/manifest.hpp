#pragma once

// Run manifests: SHA-256 of every input and output, config hash, seed,
// thread count and tool version. No timestamps or host data, so two runs
// with identical inputs and config produce identical manifests.

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "protsent/common.hpp"
#include "protsent/config.hpp"

namespace protsent {

inline constexpr const char* kToolVersion = "0.1.0";

inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xf];
  }
  return out;
}

inline std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return sha256_hex(bytes);
}

inline std::string config_hash(const RunConfig& cfg) { return sha256_hex(cfg.canonical()); }

class Manifest {
public:
  Manifest(std::string command, const RunConfig& cfg, unsigned threads) {
    json_["command"] = std::move(command);
    json_["tool_version"] = kToolVersion;
    json_["config_hash"] = config_hash(cfg);
    json_["seed"] = cfg.seed();
    json_["threads"] = threads;
    json_["inputs"] = nlohmann::ordered_json::array();
    json_["outputs"] = nlohmann::ordered_json::array();
    json_["counts"] = nlohmann::ordered_json::object();
  }

  /// Inputs are recorded under the path as given.
  void add_input(const std::string& role, const std::string& path) {
    json_["inputs"].push_back({{"role", role}, {"path", path}, {"sha256", sha256_file(path)}});
  }

  /// Outputs are recorded by file name so runs into different directories compare equal.
  void add_output(const std::string& path) {
    json_["outputs"].push_back(
        {{"file", std::filesystem::path(path).filename().string()}, {"sha256", sha256_file(path)}});
  }

  template <typename T>
  void count(const std::string& key, const T& value) {
    json_["counts"][key] = value;
  }

  nlohmann::ordered_json& extra() { return json_; }
  const nlohmann::ordered_json& json() const { return json_; }

  std::string dump() const { return json_.dump(2) + "\n"; }

  void write(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << dump();
  }

private:
  nlohmann::ordered_json json_;
};

}  // namespace protsent
