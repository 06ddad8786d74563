#include "tlr/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tlr/error.hpp"
#include "tlr/rng.hpp"

namespace tlr::strategies {

std::string_view to_string(EdgeType t) {
  switch (t) {
    case EdgeType::Import: return "import";
    case EdgeType::Extend: return "extend";
    case EdgeType::Call: return "call";
    case EdgeType::Feedback: return "feedback";
    case EdgeType::FineGrained: return "fine_grained";
    case EdgeType::Supervision: return "supervision";
  }
  return "unknown";
}

EdgeType edge_type_from_string(std::string_view s) {
  for (EdgeType t : kAllEdgeTypes) {
    if (to_string(t) == s) return t;
  }
  throw ValidationError("unknown edge type '" + std::string(s) + "'");
}

bool is_code_to_code(EdgeType t) {
  return t == EdgeType::Import || t == EdgeType::Extend || t == EdgeType::Call;
}

Split split_links(const LinkSet& links, std::uint64_t seed, double train, double validation) {
  if (train < 0 || validation < 0 || train + validation > 1.0 + 1e-12) {
    throw ValidationError("split fractions must be non-negative and sum to at most 1");
  }
  std::vector<Link> order(links.begin(), links.end());
  Rng rng(seed);
  rng.shuffle(order);
  const auto n = static_cast<double>(order.size());
  const auto n_train = static_cast<std::size_t>(std::llround(train * n));
  const auto n_val_end = std::min(order.size(), static_cast<std::size_t>(std::llround((train + validation) * n)));
  Split s;
  s.seed = seed;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i < n_train) {
      s.train.insert(order[i]);
    } else if (i < n_val_end) {
      s.validation.insert(order[i]);
    } else {
      s.test.insert(order[i]);
    }
  }
  return s;
}

LinkSet build_feedback_edges(const Project& project, double fraction, std::uint64_t seed,
                             const LinkSet& pool) {
  if (pool.empty()) throw ValidationError("feedback pool is empty");
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ValidationError("feedback fraction must lie in (0, 1]");
  }
  for (const auto& l : pool) {
    if (project.ground_truth().count(l) == 0) {
      throw ValidationError("feedback pool link " + l.req_id + " -> " + l.code_id + " is not in the ground truth");
    }
  }
  // The small epsilon keeps products such as 0.1 * 10 from rounding up to 2.
  auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(pool.size()) - 1e-9));
  k = std::clamp<std::size_t>(k, 1, pool.size());
  std::vector<Link> items(pool.begin(), pool.end());
  Rng rng(seed);
  LinkSet out;
  for (auto idx : rng.sample_distinct(items.size(), k)) out.insert(items[idx]);
  return out;
}

std::vector<std::string> component_tokens(const java::CodeStructure& s, java::Component c,
                                          const TokenizerConfig& config) {
  std::string joined;
  for (const auto& part : s.component(c)) {
    joined += part;
    joined += ' ';
  }
  return tokenize(joined, config);
}

FineGrainedResult fine_grained_scores(const Project& project,
                                      const std::vector<java::CodeStructure>& structures,
                                      double top_fraction) {
  if (!(top_fraction > 0.0 && top_fraction <= 1.0)) {
    throw ValidationError("top fraction must lie in (0, 1]");
  }
  FineGrainedResult result;
  const auto req_ids = project.requirement_ids();
  if (req_ids.empty() || structures.empty()) return result;

  std::vector<std::vector<std::string>> docs;
  docs.reserve(project.artifacts().size());
  for (const auto& a : project.artifacts()) docs.push_back(a.tokens);
  const Vocabulary vocab = build_vocabulary(docs);
  const TokenizerConfig code_config = tokenizer_for(project.config(), TextMode::Code);

  const std::size_t n_code = structures.size();
  // comp[c][k]: TF-IDF of component k of code artifact c (nullopt when empty).
  std::vector<std::array<std::optional<TfidfVector>, java::kComponentCount>> comp(n_code);
  std::array<std::size_t, java::kComponentCount> n_k{};
  for (std::size_t c = 0; c < n_code; ++c) {
    for (std::size_t k = 0; k < java::kComponentCount; ++k) {
      auto toks = component_tokens(structures[c], java::kAllComponents[k], code_config);
      if (toks.empty()) continue;
      comp[c][k] = tfidf(toks, vocab);
      ++n_k[k];
    }
  }

  for (const auto& rid : req_ids) {
    const TfidfVector rv = tfidf(project.at(rid).tokens, vocab);
    std::vector<std::array<ComponentScore, java::kComponentCount>> row(n_code);
    for (std::size_t k = 0; k < java::kComponentCount; ++k) {
      std::vector<double> sims;
      for (std::size_t c = 0; c < n_code; ++c) {
        if (!comp[c][k]) continue;
        row[c][k].present = true;
        row[c][k].similarity = cosine(rv, *comp[c][k]);
        row[c][k].ranked = n_k[k];
        sims.push_back(row[c][k].similarity);
      }
      std::sort(sims.begin(), sims.end(), std::greater<>());
      for (std::size_t c = 0; c < n_code; ++c) {
        if (!row[c][k].present) continue;
        const double s = row[c][k].similarity;
        // Minimum rank: one more than the number of strictly better candidates.
        auto better = std::lower_bound(sims.begin(), sims.end(), s, std::greater<>()) - sims.begin();
        row[c][k].rank = static_cast<std::size_t>(better) + 1;
      }
    }
    for (std::size_t c = 0; c < n_code; ++c) {
      bool any = false;
      bool ok = true;
      for (std::size_t k = 0; k < java::kComponentCount; ++k) {
        const auto& sc = row[c][k];
        if (!sc.present) continue;
        any = true;
        const double limit = top_fraction * static_cast<double>(sc.ranked) + 1e-9;
        if (!(sc.similarity > 0.0) || static_cast<double>(sc.rank) > limit) ok = false;
      }
      Link link{rid, structures[c].artifact_id};
      if (any && ok) result.edges.insert(link);
      result.scores.emplace(std::move(link), row[c]);
    }
  }
  return result;
}

LinkSet build_fine_grained_edges(const Project& project,
                                 const std::vector<java::CodeStructure>& structures,
                                 double top_fraction) {
  return fine_grained_scores(project, structures, top_fraction).edges;
}

// --- StrategyGraph ---------------------------------------------------------

std::size_t StrategyGraph::count(EdgeType t) const {
  return static_cast<std::size_t>(
      std::count_if(edges_.begin(), edges_.end(), [t](const TypedEdge& e) { return e.type == t; }));
}

const std::vector<std::string>& StrategyGraph::out_neighbors(const std::string& id, EdgeType t) const {
  static const std::vector<std::string> empty;
  auto it = out_.find({id, t});
  return it == out_.end() ? empty : it->second;
}

const std::vector<std::string>& StrategyGraph::in_neighbors(const std::string& id, EdgeType t) const {
  static const std::vector<std::string> empty;
  auto it = in_.find({id, t});
  return it == in_.end() ? empty : it->second;
}

bool StrategyGraph::has_edge(const std::string& from, const std::string& to, EdgeType t) const {
  return edges_.count(TypedEdge{from, to, t}) != 0;
}

StrategyGraph StrategyGraph::filtered(const std::set<EdgeType>& keep) const {
  std::set<TypedEdge> kept;
  for (const auto& e : edges_) {
    if (keep.count(e.type) != 0) kept.insert(e);
  }
  return make_graph(req_ids_, code_ids_, std::move(kept));
}

void StrategyGraph::index() {
  out_.clear();
  in_.clear();
  // edges_ is ordered by (from, to, type), so each out list comes out sorted.
  for (const auto& e : edges_) {
    out_[{e.from, e.type}].push_back(e.to);
    in_[{e.to, e.type}].push_back(e.from);
  }
  for (auto& [key, list] : in_) std::sort(list.begin(), list.end());
}

StrategyGraph make_graph(std::vector<std::string> req_ids, std::vector<std::string> code_ids,
                         std::set<TypedEdge> edges) {
  std::sort(req_ids.begin(), req_ids.end());
  std::sort(code_ids.begin(), code_ids.end());
  auto is_req = [&](const std::string& id) { return std::binary_search(req_ids.begin(), req_ids.end(), id); };
  auto is_code = [&](const std::string& id) {
    return std::binary_search(code_ids.begin(), code_ids.end(), id);
  };
  for (const auto& e : edges) {
    const bool ok = is_code_to_code(e.type) ? (is_code(e.from) && is_code(e.to) && e.from != e.to)
                                            : (is_req(e.from) && is_code(e.to));
    if (!ok) {
      throw ValidationError("edge " + e.from + " -> " + e.to + " of type " + std::string(to_string(e.type)) +
                            " has endpoints of the wrong kind");
    }
  }
  StrategyGraph g;
  g.req_ids_ = std::move(req_ids);
  g.code_ids_ = std::move(code_ids);
  g.edges_ = std::move(edges);
  g.index();
  return g;
}

StrategyGraph assemble_graph(const Project& project, const std::set<java::DependencyEdge>& dep_edges,
                             const LinkSet& feedback_edges, const LinkSet& fine_edges,
                             const LinkSet& supervision_links) {
  std::set<TypedEdge> edges;
  for (const auto& d : dep_edges) {
    EdgeType t = d.kind == java::DependencyKind::Import   ? EdgeType::Import
                 : d.kind == java::DependencyKind::Extend ? EdgeType::Extend
                                                          : EdgeType::Call;
    edges.insert({d.from_id, d.to_id, t});
  }
  for (const auto& l : feedback_edges) edges.insert({l.req_id, l.code_id, EdgeType::Feedback});
  for (const auto& l : fine_edges) edges.insert({l.req_id, l.code_id, EdgeType::FineGrained});
  for (const auto& l : supervision_links) edges.insert({l.req_id, l.code_id, EdgeType::Supervision});
  return make_graph(project.requirement_ids(), project.code_ids(), std::move(edges));
}

// --- StrategySet -----------------------------------------------------------

StrategySet StrategySet::parse(std::string_view text) {
  if (text == "all") return all();
  if (text == "none") return none();
  StrategySet s = none();
  std::stringstream ss{std::string(text)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "dependency" || item == "dep") {
      s.dependency = true;
    } else if (item == "feedback") {
      s.feedback = true;
    } else if (item == "fine" || item == "fine_grained") {
      s.fine_grained = true;
    } else {
      throw ValidationError("unknown strategy '" + item + "' (expected all, none, dependency, feedback, fine)");
    }
  }
  return s;
}

std::string StrategySet::to_string() const {
  if (dependency && feedback && fine_grained) return "all";
  std::vector<std::string> parts;
  if (dependency) parts.emplace_back("dependency");
  if (feedback) parts.emplace_back("feedback");
  if (fine_grained) parts.emplace_back("fine");
  if (parts.empty()) return "none";
  std::string out;
  for (const auto& p : parts) out += (out.empty() ? "" : ",") + p;
  return out;
}

std::set<EdgeType> StrategySet::edge_types() const {
  std::set<EdgeType> t{EdgeType::Supervision};
  if (dependency) t.insert({EdgeType::Import, EdgeType::Extend, EdgeType::Call});
  if (feedback) t.insert(EdgeType::Feedback);
  if (fine_grained) t.insert(EdgeType::FineGrained);
  return t;
}

Extraction extract(const Project& project, const ExtractOptions& options) {
  Extraction e;
  e.structures = java::scan_project(project);
  e.dependencies = java::resolve_dependencies(e.structures);
  e.split = split_links(project.ground_truth(), derive_seed(options.seed, 0), options.train_fraction,
                        options.validation_fraction);
  if (!e.split.train.empty() && options.feedback_fraction > 0.0) {
    e.feedback = build_feedback_edges(project, options.feedback_fraction, derive_seed(options.seed, 1),
                                      e.split.train);
  }
  e.fine_grained = build_fine_grained_edges(project, e.structures, options.top_fraction);
  e.graph = assemble_graph(project, e.dependencies, e.feedback, e.fine_grained, e.split.train);
  return e;
}

// --- JSON ------------------------------------------------------------------

nlohmann::json links_to_json(const LinkSet& links) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& l : links) arr.push_back({l.req_id, l.code_id});
  return arr;
}

LinkSet links_from_json(const nlohmann::json& j) {
  LinkSet out;
  for (const auto& item : j) {
    if (!item.is_array() || item.size() != 2) throw ValidationError("link entries must be [req_id, code_id]");
    out.insert({item[0].get<std::string>(), item[1].get<std::string>()});
  }
  return out;
}

nlohmann::json to_json(const StrategyGraph& g) {
  nlohmann::json edges = nlohmann::json::object();
  for (EdgeType t : kAllEdgeTypes) edges[std::string(to_string(t))] = nlohmann::json::array();
  for (const auto& e : g.edges()) edges[std::string(to_string(e.type))].push_back({e.from, e.to});
  nlohmann::json counts = nlohmann::json::object();
  for (EdgeType t : kAllEdgeTypes) counts[std::string(to_string(t))] = g.count(t);
  return {{"format", "tlr-graph"},
          {"version", 1},
          {"nodes", {{"requirement", g.req_ids()}, {"code", g.code_ids()}}},
          {"edge_counts", counts},
          {"edges", edges}};
}

nlohmann::json to_json(const Split& s) {
  return {{"seed", s.seed},
          {"train", links_to_json(s.train)},
          {"validation", links_to_json(s.validation)},
          {"test", links_to_json(s.test)}};
}

nlohmann::json to_json(const Extraction& e, const ExtractOptions& options) {
  nlohmann::json j = to_json(e.graph);
  j["split"] = to_json(e.split);
  j["options"] = {{"feedback_fraction", options.feedback_fraction},
                  {"top_fraction", options.top_fraction},
                  {"seed", options.seed},
                  {"train_fraction", options.train_fraction},
                  {"validation_fraction", options.validation_fraction}};
  return j;
}

StrategyGraph graph_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", "") != "tlr-graph") throw ValidationError("not a tlr-graph document");
    auto reqs = j.at("nodes").at("requirement").get<std::vector<std::string>>();
    auto code = j.at("nodes").at("code").get<std::vector<std::string>>();
    std::set<TypedEdge> edges;
    for (const auto& [name, list] : j.at("edges").items()) {
      const EdgeType t = edge_type_from_string(name);
      for (const auto& pair : list) edges.insert({pair.at(0).get<std::string>(), pair.at(1).get<std::string>(), t});
    }
    return make_graph(std::move(reqs), std::move(code), std::move(edges));
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("malformed graph JSON: ") + ex.what());
  }
}

Split split_from_json(const nlohmann::json& j) {
  try {
    Split s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.train = links_from_json(j.at("train"));
    s.validation = links_from_json(j.at("validation"));
    s.test = links_from_json(j.at("test"));
    return s;
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("malformed split JSON: ") + ex.what());
  }
}

}  // namespace tlr::strategies
