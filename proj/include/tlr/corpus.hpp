#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tlr/textproc.hpp"

namespace tlr {

enum class ArtifactKind { Requirement, Code };

std::string_view to_string(ArtifactKind kind);

/// One requirement or code document.
struct Artifact {
  std::string id;
  ArtifactKind kind = ArtifactKind::Requirement;
  std::string path;  // relative to the corpus root, '/' separated
  std::string text;
  std::vector<std::string> tokens;

  bool operator==(const Artifact&) const = default;
};

/// A (requirement, code) pair. Ordered so link sets iterate deterministically.
struct Link {
  std::string req_id;
  std::string code_id;

  auto operator<=>(const Link&) const = default;
  bool operator==(const Link&) const = default;
};

using LinkSet = std::set<Link>;

struct ProjectConfig {
  /// Extensions (lowercase, with dot) ingested from `code/`.
  std::vector<std::string> code_extensions = {".java", ".jsp"};
  /// Subset of code_extensions the structural scanner understands.
  std::vector<std::string> parsable_extensions = {".java"};
  std::string stopword_list = "en-v1";
  std::uint64_t seed = 42;

  bool operator==(const ProjectConfig&) const = default;
};

/// Tokenizer for `mode` under the project's stopword list (the shipped id or
/// a file path). Throws ValidationError when the file is missing.
TokenizerConfig tokenizer_for(const ProjectConfig& config, TextMode mode);

/// Non-fatal findings of a load.
struct LoadReport {
  std::vector<std::string> lossy_decoded;      // paths re-decoded with U+FFFD
  std::vector<std::string> unparsable_code;    // code ids excluded from structural parsing
  std::vector<std::string> skipped_files;      // files under req/ or code/ with other extensions

  bool operator==(const LoadReport&) const = default;
};

/// A validated corpus. Artifacts are sorted by id and immutable after load.
class Project {
 public:
  Project() = default;
  Project(std::string name, std::vector<Artifact> artifacts, LinkSet ground_truth,
          ProjectConfig config, LoadReport report = {});

  const std::string& name() const { return name_; }
  const std::vector<Artifact>& artifacts() const { return artifacts_; }
  const LinkSet& ground_truth() const { return ground_truth_; }
  const ProjectConfig& config() const { return config_; }
  const LoadReport& report() const { return report_; }

  /// nullptr when absent.
  const Artifact* find(std::string_view id) const;
  const Artifact& at(std::string_view id) const;

  /// Ids of each kind, sorted.
  std::vector<std::string> requirement_ids() const;
  std::vector<std::string> code_ids() const;

  /// Whether a code artifact goes through the structural scanner.
  bool is_parsable(const Artifact& artifact) const;

  bool operator==(const Project&) const = default;

 private:
  std::string name_;
  std::vector<Artifact> artifacts_;
  LinkSet ground_truth_;
  ProjectConfig config_;
  LoadReport report_;
};

/// Loads `<root>/req/*.txt`, `<root>/code/**` (configured extensions) and
/// `<root>/links.tsv`. Ids are file stems. Throws ValidationError naming the
/// offending path or id on missing directories, duplicate ids, or unknown
/// link endpoints.
Project load_project(const std::filesystem::path& root, const ProjectConfig& config = {});

/// Parses links.tsv content (`req_id<TAB>code_id` per line). Endpoints may
/// carry a file extension; it is stripped when the stem names an artifact.
LinkSet parse_links(std::string_view content, const std::vector<Artifact>& artifacts,
                    std::string_view source_name = "links.tsv");

std::string write_links(const LinkSet& links);

nlohmann::json project_to_json(const Project& project);
Project project_from_json(const nlohmann::json& j);
void save_project(const Project& project, const std::filesystem::path& file);
Project load_saved_project(const std::filesystem::path& file);

/// Returns `bytes` unchanged when valid UTF-8; otherwise replaces each invalid
/// sequence with U+FFFD and sets `lossy`.
std::string decode_utf8_lossy(std::string_view bytes, bool& lossy);

/// Artifact-id -> dense vector, all of one dimension.
struct EmbeddingTable {
  std::size_t dim = 0;
  std::map<std::string, std::vector<double>> vectors;

  const std::vector<double>* find(std::string_view id) const;
};

/// Reads the vector file format: first line `<count> <dim>`, then
/// `<artifact_id> <v1> ... <v_dim>`. Throws ValidationError on a dimension
/// mismatch, an id unknown to `project`, a non-finite value, or a row count
/// differing from the header.
EmbeddingTable load_embeddings(const std::filesystem::path& path, const Project& project);
EmbeddingTable parse_embeddings(std::string_view content, const Project& project);
std::string write_embeddings(const EmbeddingTable& table);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace tlr
