#include "tlr/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tlr/error.hpp"
#include "tlr/textproc.hpp"

namespace fs = std::filesystem;

namespace tlr {

std::string_view to_string(ArtifactKind kind) {
  return kind == ArtifactKind::Requirement ? "requirement" : "code";
}

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

bool has_extension(const std::vector<std::string>& exts, const std::string& ext) {
  return std::find(exts.begin(), exts.end(), lower(ext)) != exts.end();
}

std::string trim(std::string_view s) {
  auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}


}  // namespace

TokenizerConfig tokenizer_for(const ProjectConfig& config, TextMode mode) {
  if (config.stopword_list == kStopwordListId) return TokenizerConfig::defaults(mode);
  std::ifstream in(config.stopword_list);
  if (!in) throw ValidationError("stopword list not found: " + config.stopword_list);
  TokenizerConfig tc;
  tc.mode = mode;
  tc.stopwords = parse_stopwords(in);
  if (mode == TextMode::Code) {
    const auto& kw = java_keywords();
    tc.stopwords.insert(kw.begin(), kw.end());
  }
  return tc;
}


std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

std::string decode_utf8_lossy(std::string_view bytes, bool& lossy) {
  lossy = false;
  std::string out;
  out.reserve(bytes.size());
  static constexpr std::string_view kReplacement = "\xEF\xBF\xBD";
  std::size_t i = 0;
  while (i < bytes.size()) {
    const auto c = static_cast<unsigned char>(bytes[i]);
    std::size_t len = 0;
    std::uint32_t min_cp = 0;
    if (c < 0x80) {
      out.push_back(static_cast<char>(c));
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      min_cp = 0x80;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      min_cp = 0x800;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      min_cp = 0x10000;
    }
    bool ok = len != 0 && i + len <= bytes.size();
    std::uint32_t cp = 0;
    if (ok) {
      cp = c & (0xFF >> (len + 1));
      for (std::size_t k = 1; k < len; ++k) {
        const auto cc = static_cast<unsigned char>(bytes[i + k]);
        if ((cc & 0xC0) != 0x80) {
          ok = false;
          break;
        }
        cp = (cp << 6) | (cc & 0x3F);
      }
    }
    ok = ok && cp >= min_cp && cp <= 0x10FFFF && !(cp >= 0xD800 && cp <= 0xDFFF);
    if (ok) {
      out.append(bytes.substr(i, len));
      i += len;
    } else {
      out.append(kReplacement);
      lossy = true;
      ++i;
    }
  }
  return out;
}

Project::Project(std::string name, std::vector<Artifact> artifacts, LinkSet ground_truth,
                 ProjectConfig config, LoadReport report)
    : name_(std::move(name)),
      artifacts_(std::move(artifacts)),
      ground_truth_(std::move(ground_truth)),
      config_(std::move(config)),
      report_(std::move(report)) {
  std::sort(artifacts_.begin(), artifacts_.end(),
            [](const Artifact& a, const Artifact& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < artifacts_.size(); ++i) {
    if (artifacts_[i].id.empty()) throw ValidationError("artifact with empty id: " + artifacts_[i].path);
    if (i > 0 && artifacts_[i].id == artifacts_[i - 1].id) {
      throw ValidationError("duplicate artifact id '" + artifacts_[i].id + "': " +
                            artifacts_[i - 1].path + " and " + artifacts_[i].path);
    }
  }
  for (const auto& link : ground_truth_) {
    const Artifact* req = find(link.req_id);
    const Artifact* code = find(link.code_id);
    if (req == nullptr) throw ValidationError("link endpoint not found: " + link.req_id);
    if (code == nullptr) throw ValidationError("link endpoint not found: " + link.code_id);
    if (req->kind != ArtifactKind::Requirement) {
      throw ValidationError("link source is not a requirement: " + link.req_id);
    }
    if (code->kind != ArtifactKind::Code) {
      throw ValidationError("link target is not a code artifact: " + link.code_id);
    }
  }
}

const Artifact* Project::find(std::string_view id) const {
  auto it = std::lower_bound(artifacts_.begin(), artifacts_.end(), id,
                             [](const Artifact& a, std::string_view key) { return a.id < key; });
  return (it != artifacts_.end() && it->id == id) ? &*it : nullptr;
}

const Artifact& Project::at(std::string_view id) const {
  const Artifact* a = find(id);
  if (a == nullptr) throw ValidationError("unknown artifact id: " + std::string(id));
  return *a;
}

std::vector<std::string> Project::requirement_ids() const {
  std::vector<std::string> ids;
  for (const auto& a : artifacts_)
    if (a.kind == ArtifactKind::Requirement) ids.push_back(a.id);
  return ids;
}

std::vector<std::string> Project::code_ids() const {
  std::vector<std::string> ids;
  for (const auto& a : artifacts_)
    if (a.kind == ArtifactKind::Code) ids.push_back(a.id);
  return ids;
}

bool Project::is_parsable(const Artifact& artifact) const {
  return artifact.kind == ArtifactKind::Code &&
         has_extension(config_.parsable_extensions, fs::path(artifact.path).extension().string());
}

LinkSet parse_links(std::string_view content, const std::vector<Artifact>& artifacts,
                    std::string_view source_name) {
  auto resolve = [&](const std::string& raw, std::size_t line_no) -> std::string {
    auto exists = [&](const std::string& id) {
      return std::any_of(artifacts.begin(), artifacts.end(),
                         [&](const Artifact& a) { return a.id == id; });
    };
    if (exists(raw)) return raw;
    const std::string stem = fs::path(raw).stem().string();
    if (stem != raw && exists(stem)) return stem;
    throw ValidationError(std::string(source_name) + ":" + std::to_string(line_no) +
                          ": link endpoint not found: " + raw);
  };

  LinkSet links;
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || trim(line).front() == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ValidationError(std::string(source_name) + ":" + std::to_string(line_no) +
                            ": expected req_id<TAB>code_id");
    }
    Link link{resolve(trim(line.substr(0, tab)), line_no), resolve(trim(line.substr(tab + 1)), line_no)};
    if (!links.insert(link).second) {
      throw ValidationError(std::string(source_name) + ":" + std::to_string(line_no) +
                            ": duplicate link " + link.req_id + " -> " + link.code_id);
    }
  }
  return links;
}

std::string write_links(const LinkSet& links) {
  std::string out;
  for (const auto& l : links) out += l.req_id + "\t" + l.code_id + "\n";
  return out;
}

Project load_project(const fs::path& root, const ProjectConfig& config) {
  const fs::path req_dir = root / "req";
  const fs::path code_dir = root / "code";
  const fs::path links_file = root / "links.tsv";
  if (!fs::is_directory(req_dir)) throw ValidationError("missing directory: " + req_dir.string());
  if (!fs::is_directory(code_dir)) throw ValidationError("missing directory: " + code_dir.string());
  if (!fs::is_regular_file(links_file)) throw ValidationError("missing file: " + links_file.string());

  const TokenizerConfig nl = tokenizer_for(config, TextMode::NaturalLanguage);
  const TokenizerConfig code = tokenizer_for(config, TextMode::Code);

  LoadReport report;
  std::vector<Artifact> artifacts;
  auto ingest = [&](const fs::path& file, ArtifactKind kind) {
    bool lossy = false;
    Artifact a;
    a.id = file.stem().string();
    a.kind = kind;
    a.path = fs::relative(file, root).generic_string();
    a.text = decode_utf8_lossy(read_file(file), lossy);
    a.tokens = tokenize(a.text, kind == ArtifactKind::Requirement ? nl : code);
    if (lossy) report.lossy_decoded.push_back(a.path);
    artifacts.push_back(std::move(a));
  };

  std::vector<fs::path> req_files;
  for (const auto& entry : fs::directory_iterator(req_dir)) {
    if (!entry.is_regular_file()) continue;
    if (lower(entry.path().extension().string()) == ".txt") {
      req_files.push_back(entry.path());
    } else {
      report.skipped_files.push_back(fs::relative(entry.path(), root).generic_string());
    }
  }
  std::vector<fs::path> code_files;
  for (const auto& entry : fs::recursive_directory_iterator(code_dir)) {
    if (!entry.is_regular_file()) continue;
    if (has_extension(config.code_extensions, entry.path().extension().string())) {
      code_files.push_back(entry.path());
    } else {
      report.skipped_files.push_back(fs::relative(entry.path(), root).generic_string());
    }
  }
  std::sort(req_files.begin(), req_files.end());
  std::sort(code_files.begin(), code_files.end());
  for (const auto& f : req_files) ingest(f, ArtifactKind::Requirement);
  for (const auto& f : code_files) ingest(f, ArtifactKind::Code);

  for (const auto& a : artifacts) {
    if (a.kind == ArtifactKind::Code &&
        !has_extension(config.parsable_extensions, fs::path(a.path).extension().string())) {
      report.unparsable_code.push_back(a.id);
    }
  }
  std::sort(report.lossy_decoded.begin(), report.lossy_decoded.end());
  std::sort(report.unparsable_code.begin(), report.unparsable_code.end());
  std::sort(report.skipped_files.begin(), report.skipped_files.end());

  // Duplicate ids are rejected before link parsing so the message names both files.
  {
    std::map<std::string, std::string> seen;
    for (const auto& a : artifacts) {
      auto [it, inserted] = seen.emplace(a.id, a.path);
      if (!inserted) {
        throw ValidationError("duplicate artifact id '" + a.id + "': " + it->second + " and " + a.path);
      }
    }
  }

  LinkSet links = parse_links(read_file(links_file), artifacts, links_file.string());
  return Project(root.filename().empty() ? root.parent_path().filename().string()
                                         : root.filename().string(),
                 std::move(artifacts), std::move(links), config, std::move(report));
}

nlohmann::json project_to_json(const Project& project) {
  using nlohmann::json;
  json artifacts = json::array();
  for (const auto& a : project.artifacts()) {
    artifacts.push_back({{"id", a.id},
                         {"kind", std::string(to_string(a.kind))},
                         {"path", a.path},
                         {"text", a.text},
                         {"tokens", a.tokens}});
  }
  json links = json::array();
  for (const auto& l : project.ground_truth()) links.push_back({l.req_id, l.code_id});
  const auto& c = project.config();
  const auto& r = project.report();
  return {{"format", "tlr-project"},
          {"version", 1},
          {"name", project.name()},
          {"config",
           {{"code_extensions", c.code_extensions},
            {"parsable_extensions", c.parsable_extensions},
            {"stopword_list", c.stopword_list},
            {"seed", c.seed}}},
          {"report",
           {{"lossy_decoded", r.lossy_decoded},
            {"unparsable_code", r.unparsable_code},
            {"skipped_files", r.skipped_files}}},
          {"artifacts", artifacts},
          {"ground_truth", links}};
}

Project project_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "tlr-project") throw ValidationError("not a serialized project");
  ProjectConfig config;
  const auto& c = j.at("config");
  config.code_extensions = c.at("code_extensions").get<std::vector<std::string>>();
  config.parsable_extensions = c.at("parsable_extensions").get<std::vector<std::string>>();
  config.stopword_list = c.at("stopword_list").get<std::string>();
  config.seed = c.at("seed").get<std::uint64_t>();
  LoadReport report;
  const auto& r = j.at("report");
  report.lossy_decoded = r.at("lossy_decoded").get<std::vector<std::string>>();
  report.unparsable_code = r.at("unparsable_code").get<std::vector<std::string>>();
  report.skipped_files = r.at("skipped_files").get<std::vector<std::string>>();
  std::vector<Artifact> artifacts;
  for (const auto& a : j.at("artifacts")) {
    const auto kind = a.at("kind").get<std::string>();
    if (kind != "requirement" && kind != "code") throw ValidationError("unknown artifact kind: " + kind);
    artifacts.push_back({a.at("id").get<std::string>(),
                         kind == "code" ? ArtifactKind::Code : ArtifactKind::Requirement,
                         a.at("path").get<std::string>(), a.at("text").get<std::string>(),
                         a.at("tokens").get<std::vector<std::string>>()});
  }
  LinkSet links;
  for (const auto& l : j.at("ground_truth")) {
    if (!links.insert({l.at(0).get<std::string>(), l.at(1).get<std::string>()}).second) {
      throw ValidationError("duplicate ground-truth link in serialized project");
    }
  }
  return Project(j.at("name").get<std::string>(), std::move(artifacts), std::move(links),
                 std::move(config), std::move(report));
}

void save_project(const Project& project, const fs::path& file) {
  write_file(file, project_to_json(project).dump(1) + "\n");
}

Project load_saved_project(const fs::path& file) {
  return project_from_json(nlohmann::json::parse(read_file(file)));
}

const std::vector<double>* EmbeddingTable::find(std::string_view id) const {
  auto it = vectors.find(std::string(id));
  return it == vectors.end() ? nullptr : &it->second;
}

EmbeddingTable parse_embeddings(std::string_view content, const Project& project) {
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    throw ValidationError("embeddings:" + std::to_string(line_no) + ": " + what);
  };

  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (!trim(line).empty()) return true;
    }
    return false;
  };

  if (!next_line()) fail("empty file");
  std::size_t count = 0;
  EmbeddingTable table;
  {
    std::istringstream header(line);
    long long c = -1, d = -1;
    if (!(header >> c >> d) || c < 0 || d <= 0) fail("header must be '<count> <dim>'");
    count = static_cast<std::size_t>(c);
    table.dim = static_cast<std::size_t>(d);
  }

  while (next_line()) {
    std::istringstream row(line);
    std::string id;
    row >> id;
    if (project.find(id) == nullptr) fail("unknown artifact id: " + id);
    std::vector<double> values;
    std::string field;
    while (row >> field) {
      char* end = nullptr;
      const double v = std::strtod(field.c_str(), &end);
      if (end == field.c_str() || *end != '\0') fail("not a number: " + field);
      if (!std::isfinite(v)) fail("non-finite value for " + id + ": " + field);
      values.push_back(v);
    }
    if (values.size() != table.dim) {
      fail("dimension mismatch for " + id + ": expected " + std::to_string(table.dim) + ", got " +
           std::to_string(values.size()));
    }
    if (!table.vectors.emplace(id, std::move(values)).second) fail("duplicate id: " + id);
  }
  if (table.vectors.size() != count) {
    throw ValidationError("embeddings: header declares " + std::to_string(count) + " rows, found " +
                          std::to_string(table.vectors.size()));
  }
  return table;
}

EmbeddingTable load_embeddings(const fs::path& path, const Project& project) {
  return parse_embeddings(read_file(path), project);
}

std::string write_embeddings(const EmbeddingTable& table) {
  std::ostringstream out;
  out.precision(17);
  out << table.vectors.size() << ' ' << table.dim << '\n';
  for (const auto& [id, v] : table.vectors) {
    out << id;
    for (double x : v) out << ' ' << x;
    out << '\n';
  }
  return out.str();
}

}  // namespace tlr
