#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tlr/corpus.hpp"
#include "tlr/javastruct.hpp"
#include "tlr/textproc.hpp"

namespace tlr::strategies {

enum class EdgeType { Import, Extend, Call, Feedback, FineGrained, Supervision };

inline constexpr std::array<EdgeType, 6> kAllEdgeTypes = {
    EdgeType::Import,   EdgeType::Extend,      EdgeType::Call,
    EdgeType::Feedback, EdgeType::FineGrained, EdgeType::Supervision};

std::string_view to_string(EdgeType t);
EdgeType edge_type_from_string(std::string_view s);

/// Import/Extend/Call connect two code artifacts; the rest run requirement -> code.
bool is_code_to_code(EdgeType t);

struct TypedEdge {
  std::string from;
  std::string to;
  EdgeType type = EdgeType::Import;

  auto operator<=>(const TypedEdge&) const = default;
  bool operator==(const TypedEdge&) const = default;
};

/// Seeded train/validation/test partition of the ground truth.
struct Split {
  LinkSet train;
  LinkSet validation;
  LinkSet test;
  std::uint64_t seed = 0;

  bool operator==(const Split&) const = default;
};

/// Shuffles the links with `seed` and cuts them at round(train*n) and
/// round((train+validation)*n).
Split split_links(const LinkSet& links, std::uint64_t seed, double train = 0.6, double validation = 0.2);

/// Uniform sample without replacement of ceil(fraction * |pool|) links.
/// Throws ValidationError on an empty pool, fraction outside (0,1], or a pool
/// link outside the ground truth.
LinkSet build_feedback_edges(const Project& project, double fraction, std::uint64_t seed,
                             const LinkSet& pool);

/// Similarity of one requirement to one code component, with its rank among
/// the code artifacts whose component is nonempty (1 = most similar, ties
/// share the smallest rank).
struct ComponentScore {
  double similarity = 0.0;
  std::size_t rank = 0;
  std::size_t ranked = 0;  // N_k
  bool present = false;    // false when the component has no tokens
};

struct FineGrainedResult {
  LinkSet edges;
  /// scores[{req, code}][k] for every requirement/code pair.
  std::map<Link, std::array<ComponentScore, java::kComponentCount>> scores;
};

/// Token list of one component: all its strings joined and tokenized in code mode.
std::vector<std::string> component_tokens(const java::CodeStructure& s, java::Component c,
                                          const TokenizerConfig& config);

/// Edge (r, c) iff, for every component k where c is nonempty, the cosine
/// between TF-IDF(r) and TF-IDF(t_k(c)) is positive and c's rank is at most
/// top_fraction * N_k. Code artifacts with no nonempty component get no edge.
/// The vocabulary spans the token lists of all project artifacts.
FineGrainedResult fine_grained_scores(const Project& project,
                                      const std::vector<java::CodeStructure>& structures,
                                      double top_fraction);

LinkSet build_fine_grained_edges(const Project& project,
                                 const std::vector<java::CodeStructure>& structures,
                                 double top_fraction);

/// Typed heterogeneous graph with per-(node, type) adjacency.
class StrategyGraph {
 public:
  StrategyGraph() = default;

  const std::vector<std::string>& req_ids() const { return req_ids_; }
  const std::vector<std::string>& code_ids() const { return code_ids_; }
  const std::set<TypedEdge>& edges() const { return edges_; }

  std::size_t count(EdgeType t) const;
  /// Targets of edges of type `t` leaving `id`, sorted.
  const std::vector<std::string>& out_neighbors(const std::string& id, EdgeType t) const;
  /// Sources of edges of type `t` entering `id`, sorted.
  const std::vector<std::string>& in_neighbors(const std::string& id, EdgeType t) const;

  bool has_edge(const std::string& from, const std::string& to, EdgeType t) const;

  /// Copy keeping only edges whose type is in `keep`.
  StrategyGraph filtered(const std::set<EdgeType>& keep) const;

  bool operator==(const StrategyGraph& o) const {
    return req_ids_ == o.req_ids_ && code_ids_ == o.code_ids_ && edges_ == o.edges_;
  }

 private:
  friend StrategyGraph make_graph(std::vector<std::string> req_ids, std::vector<std::string> code_ids,
                                  std::set<TypedEdge> edges);
  void index();

  std::vector<std::string> req_ids_;
  std::vector<std::string> code_ids_;
  std::set<TypedEdge> edges_;
  std::map<std::pair<std::string, EdgeType>, std::vector<std::string>> out_;
  std::map<std::pair<std::string, EdgeType>, std::vector<std::string>> in_;
};

/// Validates endpoint kinds against the node lists and builds the adjacency.
StrategyGraph make_graph(std::vector<std::string> req_ids, std::vector<std::string> code_ids,
                         std::set<TypedEdge> edges);

StrategyGraph assemble_graph(const Project& project, const std::set<java::DependencyEdge>& dep_edges,
                             const LinkSet& feedback_edges, const LinkSet& fine_edges,
                             const LinkSet& supervision_links);

/// Which auxiliary strategies feed the graph.
struct StrategySet {
  bool dependency = true;
  bool feedback = true;
  bool fine_grained = true;

  static StrategySet all() { return {}; }
  static StrategySet none() { return {false, false, false}; }
  /// Parses "all", "none", or a comma list of dependency/feedback/fine.
  static StrategySet parse(std::string_view text);
  std::string to_string() const;
  std::set<EdgeType> edge_types() const;  // always includes Supervision

  bool operator==(const StrategySet&) const = default;
};

struct ExtractOptions {
  double feedback_fraction = 0.1;
  double top_fraction = 0.2;
  std::uint64_t seed = 42;
  double train_fraction = 0.6;
  double validation_fraction = 0.2;
};

/// Everything produced by strategy extraction for one project.
struct Extraction {
  std::vector<java::CodeStructure> structures;
  std::set<java::DependencyEdge> dependencies;
  Split split;
  LinkSet feedback;
  LinkSet fine_grained;
  StrategyGraph graph;
};

/// Split seed, feedback seed: derive_seed(seed, 0) and derive_seed(seed, 1).
Extraction extract(const Project& project, const ExtractOptions& options = {});

nlohmann::json to_json(const StrategyGraph& g);
nlohmann::json to_json(const Split& s);
nlohmann::json to_json(const Extraction& e, const ExtractOptions& options);

StrategyGraph graph_from_json(const nlohmann::json& j);
Split split_from_json(const nlohmann::json& j);

nlohmann::json links_to_json(const LinkSet& links);
LinkSet links_from_json(const nlohmann::json& j);

}  // namespace tlr::strategies
