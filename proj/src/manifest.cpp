#include "tlr/manifest.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>

#include "tlr/corpus.hpp"
#include "tlr/error.hpp"

namespace tlr {

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw RuntimeError("SHA-256 computation failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

std::string sha256_file(const std::filesystem::path& file) { return sha256_hex(read_file(file)); }

namespace {

void hash_into(std::map<std::string, std::string>& into, const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(path)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) into[f.generic_string()] = sha256_file(f);
  } else if (fs::is_regular_file(path)) {
    into[path.generic_string()] = sha256_file(path);
  } else {
    throw ValidationError("input not found: " + path.string());
  }
}

}  // namespace

void RunManifest::hash_input(const std::filesystem::path& path) { hash_into(input_hashes, path); }
void RunManifest::hash_output(const std::filesystem::path& path) { hash_into(output_hashes, path); }

nlohmann::json to_json(const RunManifest& m) {
  return {{"format", "tlr-manifest"},
          {"command", m.command},
          {"argv", m.argv},
          {"config", m.config},
          {"seeds", m.seeds},
          {"input_hashes", m.input_hashes},
          {"output_hashes", m.output_hashes},
          {"version", m.version},
          {"timings_ms", m.timings_ms}};
}

RunManifest manifest_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", "") != "tlr-manifest") throw ValidationError("not a tlr-manifest document");
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.config = j.value("config", nlohmann::json::object());
    m.seeds = j.value("seeds", nlohmann::json::object());
    m.input_hashes = j.value("input_hashes", std::map<std::string, std::string>{});
    m.output_hashes = j.value("output_hashes", std::map<std::string, std::string>{});
    m.version = j.value("version", "");
    m.timings_ms = j.value("timings_ms", std::map<std::string, double>{});
    return m;
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("malformed manifest: ") + ex.what());
  }
}

void StageTimer::lap(const std::string& stage) {
  const auto now = std::chrono::steady_clock::now();
  manifest_.timings_ms[stage] = std::chrono::duration<double, std::milli>(now - start_).count();
  start_ = now;
}

}  // namespace tlr
