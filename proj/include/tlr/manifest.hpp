#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace tlr {

inline constexpr std::string_view kToolVersion = "0.1.0";

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& file);

/// Record of one command run: enough to re-execute it.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;  // arguments after the program name
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json seeds = nlohmann::json::object();
  std::map<std::string, std::string> input_hashes;  // path -> sha256
  std::map<std::string, std::string> output_hashes;
  std::string version{kToolVersion};
  std::map<std::string, double> timings_ms;

  /// Hashes a file, or every regular file below a directory (sorted paths).
  void hash_input(const std::filesystem::path& path);
  void hash_output(const std::filesystem::path& path);
};

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

/// Measures wall time of named stages.
class StageTimer {
 public:
  explicit StageTimer(RunManifest& m) : manifest_(m), start_(std::chrono::steady_clock::now()) {}
  void lap(const std::string& stage);

 private:
  RunManifest& manifest_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace tlr
