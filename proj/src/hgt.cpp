#include "tlr/hgt.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>

#include "tlr/autodiff.hpp"
#include "tlr/eval.hpp"
#include "tlr/rng.hpp"

namespace tlr::hgt {

using ad::Index;
using strategies::EdgeType;

namespace {

std::string type_name(NodeType t) { return t == NodeType::Requirement ? "req" : "code"; }
std::size_t ti(NodeType t) { return static_cast<std::size_t>(t); }

NodeType source_type(EdgeType e) {
  return strategies::is_code_to_code(e) ? NodeType::Code : NodeType::Requirement;
}

}  // namespace

const std::vector<Relation>& relations() {
  static const std::vector<Relation> rels = [] {
    std::vector<Relation> out;
    for (EdgeType e : {EdgeType::Import, EdgeType::Extend, EdgeType::Call, EdgeType::Feedback, EdgeType::FineGrained}) {
      const NodeType s = source_type(e);
      const std::string base(strategies::to_string(e));
      out.push_back({e, false, s, NodeType::Code, base});
      out.push_back({e, true, NodeType::Code, s, "rev_" + base});
    }
    return out;
  }();
  return rels;
}

// --- config ----------------------------------------------------------------

void ModelConfig::validate() const {
  if (input_dim == 0 || hidden_dim == 0 || heads == 0 || layers == 0) {
    throw ValidationError("model dimensions, heads and layers must be positive");
  }
  if (hidden_dim % heads != 0) throw ValidationError("heads must divide the hidden width");
  if (hidden_dim % 2 != 0) throw ValidationError("hidden width must be even for pooling");
  if (mlp_dims.size() != 4) throw ValidationError("the pair head needs exactly four widths (f1..f4)");
  for (auto d : mlp_dims) {
    if (d == 0) throw ValidationError("MLP widths must be positive");
  }
  if (!scalar_head && mlp_dims.back() % 2 != 0) {
    throw ValidationError("the last MLP width must be even for the inner-product head");
  }
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"input_dim", c.input_dim}, {"hidden_dim", c.hidden_dim},   {"heads", c.heads},
          {"layers", c.layers},       {"mlp_dims", c.mlp_dims},       {"scalar_head", c.scalar_head},
          {"linear_only", c.linear_only}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.mlp_dims = j.at("mlp_dims").get<std::vector<std::size_t>>();
  c.scalar_head = j.at("scalar_head").get<bool>();
  c.linear_only = j.at("linear_only").get<bool>();
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0) || !(clip_norm > 0) || !(negative_ratio > 0)) {
    throw ValidationError("learning rate, clip norm and negative ratio must be positive");
  }
  if (!(threshold > 0 && threshold < 1)) throw ValidationError("threshold must lie in (0, 1)");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},           {"learning_rate", c.learning_rate},   {"clip_norm", c.clip_norm},
          {"neighbor_samples", c.neighbor_samples}, {"negative_ratio", c.negative_ratio},
          {"threshold", c.threshold},     {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.clip_norm = j.at("clip_norm").get<double>();
  c.neighbor_samples = j.at("neighbor_samples").get<std::size_t>();
  c.negative_ratio = j.at("negative_ratio").get<double>();
  c.threshold = j.at("threshold").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

// --- model -----------------------------------------------------------------

std::string Model::input_weight(NodeType t) { return "input.W." + type_name(t); }
std::string Model::input_bias(NodeType t) { return "input.b." + type_name(t); }
std::string Model::query(std::size_t l, std::size_t h, NodeType t) {
  return "layer" + std::to_string(l) + ".Q.h" + std::to_string(h) + "." + type_name(t);
}
std::string Model::key(std::size_t l, std::size_t h, NodeType t) {
  return "layer" + std::to_string(l) + ".K.h" + std::to_string(h) + "." + type_name(t);
}
std::string Model::message_in(std::size_t l, std::size_t h, NodeType t) {
  return "layer" + std::to_string(l) + ".M.h" + std::to_string(h) + "." + type_name(t);
}
std::string Model::attention(std::size_t l, std::size_t h, std::size_t r) {
  return "layer" + std::to_string(l) + ".ATT.h" + std::to_string(h) + "." + relations()[r].name;
}
std::string Model::message(std::size_t l, std::size_t h, std::size_t r) {
  return "layer" + std::to_string(l) + ".MSG.h" + std::to_string(h) + "." + relations()[r].name;
}
std::string Model::mu(std::size_t l, std::size_t r) {
  return "layer" + std::to_string(l) + ".mu." + relations()[r].name;
}
std::string Model::aggregate(std::size_t l, NodeType t) {
  return "layer" + std::to_string(l) + ".A." + type_name(t);
}
std::string Model::pool_weight(NodeType t) { return "pool.W." + type_name(t); }
std::string Model::pool_bias(NodeType t) { return "pool.b." + type_name(t); }
std::string Model::mlp_weight(std::size_t k) { return "f" + std::to_string(k) + ".W"; }
std::string Model::mlp_bias(std::size_t k) { return "f" + std::to_string(k) + ".b"; }

void Model::add(std::string name, Matrix value) {
  index_[name] = params_.size();
  names_.push_back(std::move(name));
  params_.push_back(std::move(value));
}

Model Model::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model m;
  m.config_ = config;
  const auto d = static_cast<Eigen::Index>(config.hidden_dim);
  const auto dh = static_cast<Eigen::Index>(config.hidden_dim / config.heads);
  const auto pooled = d / 2;
  auto gauss = [&](Eigen::Index rows, Eigen::Index cols) {
    Rng rng(derive_seed(seed, m.params_.size()));
    const double sd = 1.0 / std::sqrt(static_cast<double>(rows));
    Matrix w(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) w(r, c) = rng.normal() * sd;
    }
    return w;
  };
  const NodeType types[] = {NodeType::Requirement, NodeType::Code};
  for (NodeType t : types) {
    m.add(input_weight(t), gauss(static_cast<Eigen::Index>(config.input_dim), d));
    m.add(input_bias(t), Matrix::Zero(1, d));
  }
  for (std::size_t l = 0; l < config.layers; ++l) {
    for (std::size_t h = 0; h < config.heads; ++h) {
      for (NodeType t : types) {
        m.add(query(l, h, t), gauss(d, dh));
        m.add(key(l, h, t), gauss(d, dh));
        m.add(message_in(l, h, t), gauss(d, dh));
      }
      for (std::size_t r = 0; r < kRelations; ++r) {
        m.add(attention(l, h, r), gauss(dh, dh));
        m.add(message(l, h, r), gauss(dh, dh));
      }
    }
    for (std::size_t r = 0; r < kRelations; ++r) m.add(mu(l, r), Matrix::Ones(1, 1));
    for (NodeType t : types) m.add(aggregate(l, t), gauss(d, d));
  }
  for (NodeType t : types) {
    m.add(pool_weight(t), gauss(pooled, pooled));
    m.add(pool_bias(t), Matrix::Zero(1, pooled));
  }
  auto in = 2 * pooled;
  for (std::size_t k = 0; k < 4; ++k) {
    const auto out = static_cast<Eigen::Index>(config.mlp_dims[k]);
    m.add(mlp_weight(k + 1), gauss(in, out));
    m.add(mlp_bias(k + 1), Matrix::Zero(1, out));
    in = out;
  }
  m.add(mlp_weight(5), gauss(in, 1));
  m.add(mlp_bias(5), Matrix::Zero(1, 1));
  return m;
}

std::size_t Model::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("model has no tensor named " + name);
  return it->second;
}

const Matrix& Model::param(const std::string& name) const { return params_[index_of(name)]; }
Matrix& Model::param(const std::string& name) { return params_[index_of(name)]; }

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.size());
  return n;
}

bool Model::all_finite() const {
  return std::all_of(params_.begin(), params_.end(), [](const Matrix& p) { return p.allFinite(); });
}

bool Model::operator==(const Model& o) const {
  if (!(config_ == o.config_) || names_ != o.names_) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].rows() != o.params_[i].rows() || params_[i].cols() != o.params_[i].cols()) return false;
    if (params_[i] != o.params_[i]) return false;
  }
  return true;
}

nlohmann::json to_json(const Model& m) {
  nlohmann::json tensors = nlohmann::json::array();
  for (std::size_t i = 0; i < m.size(); ++i) {
    const Matrix& p = m.param(i);
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(p.size()));
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.cols(); ++c) data.push_back(p(r, c));
    }
    tensors.push_back({{"name", m.name(i)}, {"rows", p.rows()}, {"cols", p.cols()}, {"data", data}});
  }
  return {{"format", "tlr-hgt-model"}, {"version", 1}, {"config", to_json(m.config())}, {"tensors", tensors}};
}

Model model_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", "") != "tlr-hgt-model") throw ValidationError("not a tlr-hgt-model document");
    if (j.at("version").get<int>() != 1) throw ValidationError("unsupported model version");
    Model m = Model::init(model_config_from_json(j.at("config")), 0);
    const auto& tensors = j.at("tensors");
    if (tensors.size() != m.size()) throw ValidationError("model tensor count does not match its configuration");
    for (std::size_t i = 0; i < m.size(); ++i) {
      const auto& t = tensors[i];
      const auto name = t.at("name").get<std::string>();
      Matrix& p = m.param(i);
      if (name != m.name(i) || t.at("rows").get<Eigen::Index>() != p.rows() ||
          t.at("cols").get<Eigen::Index>() != p.cols()) {
        throw ValidationError("tensor " + name + " does not match the expected shape manifest");
      }
      const auto data = t.at("data").get<std::vector<double>>();
      if (data.size() != static_cast<std::size_t>(p.size())) throw ValidationError("tensor " + name + " has wrong size");
      std::size_t k = 0;
      for (Eigen::Index r = 0; r < p.rows(); ++r) {
        for (Eigen::Index c = 0; c < p.cols(); ++c) p(r, c) = data[k++];
      }
    }
    return m;
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("malformed model JSON: ") + ex.what());
  }
}

void save_model(const Model& m, const std::filesystem::path& file) { write_file(file, to_json(m).dump()); }

Model load_model(const std::filesystem::path& file) {
  try {
    return model_from_json(nlohmann::json::parse(read_file(file)));
  } catch (const nlohmann::json::parse_error& ex) {
    throw ValidationError("cannot parse model " + file.string() + ": " + ex.what());
  }
}

// --- graph input -----------------------------------------------------------

std::size_t GraphInput::req_index(const std::string& id) const {
  auto it = std::lower_bound(req_ids.begin(), req_ids.end(), id);
  if (it == req_ids.end() || *it != id) throw ValidationError("unknown requirement id " + id);
  return static_cast<std::size_t>(it - req_ids.begin());
}

std::size_t GraphInput::code_index(const std::string& id) const {
  auto it = std::lower_bound(code_ids.begin(), code_ids.end(), id);
  if (it == code_ids.end() || *it != id) throw ValidationError("unknown code id " + id);
  return static_cast<std::size_t>(it - code_ids.begin());
}

GraphInput compile(const strategies::StrategyGraph& graph, const EmbeddingTable& embeddings) {
  GraphInput g;
  g.req_ids = graph.req_ids();
  g.code_ids = graph.code_ids();
  const auto dim = static_cast<Eigen::Index>(embeddings.dim);
  auto fill = [&](const std::vector<std::string>& ids, Matrix& x) {
    x.resize(static_cast<Eigen::Index>(ids.size()), dim);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto* v = embeddings.find(ids[i]);
      if (v == nullptr) throw ValidationError("no embedding for artifact " + ids[i]);
      if (static_cast<Eigen::Index>(v->size()) != dim) throw ValidationError("embedding of " + ids[i] + " has the wrong width");
      for (Eigen::Index c = 0; c < dim; ++c) x(static_cast<Eigen::Index>(i), c) = (*v)[static_cast<std::size_t>(c)];
    }
  };
  fill(g.req_ids, g.x_req);
  fill(g.code_ids, g.x_code);

  const auto& rels = relations();
  for (const auto& e : graph.edges()) {
    if (e.type == EdgeType::Supervision) continue;
    const std::size_t from = strategies::is_code_to_code(e.type) ? g.code_index(e.from) : g.req_index(e.from);
    const std::size_t to = g.code_index(e.to);
    for (std::size_t r = 0; r < kRelations; ++r) {
      if (rels[r].edge != e.type) continue;
      if (rels[r].reverse) {
        g.edges[r].emplace_back(to, from);
      } else {
        g.edges[r].emplace_back(from, to);
      }
    }
  }
  for (auto& list : g.edges) std::sort(list.begin(), list.end());
  return g;
}

std::vector<EdgeLists> sample_neighbors(const GraphInput& g, std::size_t layers, std::size_t per_type,
                                        std::uint64_t seed) {
  std::vector<EdgeLists> out(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    if (per_type == 0) {
      out[l] = g.edges;
      continue;
    }
    Rng rng(derive_seed(seed, l));
    for (std::size_t r = 0; r < kRelations; ++r) {
      // Group incoming edges by target; lists are sorted by source so regroup.
      std::map<std::size_t, std::vector<std::pair<std::size_t, std::size_t>>> by_target;
      for (const auto& e : g.edges[r]) by_target[e.second].push_back(e);
      auto& kept = out[l][r];
      for (auto& [target, list] : by_target) {
        if (list.size() <= per_type) {
          kept.insert(kept.end(), list.begin(), list.end());
        } else {
          for (auto idx : rng.sample_distinct(list.size(), per_type)) kept.push_back(list[idx]);
        }
      }
      std::sort(kept.begin(), kept.end());
    }
  }
  return out;
}

// --- forward graph ---------------------------------------------------------

namespace {

struct Built {
  std::vector<ad::Var> leaves;
  std::array<ad::Var, kNodeTypes> h{};
  std::array<ad::Var, kNodeTypes> p{};
  std::vector<AttentionRecord> attention;
};

Built build(ad::Tape& tape, const Model& model, const GraphInput& g, const std::vector<EdgeLists>& edges,
            bool record_attention) {
  const ModelConfig& cfg = model.config();
  if (edges.size() != cfg.layers) throw ValidationError("edge lists must be given for every layer");
  if (static_cast<std::size_t>(g.x_req.cols()) != cfg.input_dim ||
      static_cast<std::size_t>(g.x_code.cols()) != cfg.input_dim) {
    throw ValidationError("embedding width " + std::to_string(g.x_code.cols()) + " does not match model input width " +
                          std::to_string(cfg.input_dim));
  }
  Built b;
  b.leaves.reserve(model.size());
  for (std::size_t i = 0; i < model.size(); ++i) b.leaves.push_back(tape.leaf(model.param(i)));
  auto P = [&](const std::string& name) { return b.leaves[model.index_of(name)]; };
  auto act = [&](ad::Var v) { return cfg.linear_only ? v : tape.relu(v); };

  const NodeType types[] = {NodeType::Requirement, NodeType::Code};
  const std::array<std::size_t, kNodeTypes> counts = {g.req_ids.size(), g.code_ids.size()};
  std::array<ad::Var, kNodeTypes> h;
  h[0] = tape.add_row(tape.matmul(tape.constant(g.x_req), P(Model::input_weight(NodeType::Requirement))),
                      P(Model::input_bias(NodeType::Requirement)));
  h[1] = tape.add_row(tape.matmul(tape.constant(g.x_code), P(Model::input_weight(NodeType::Code))),
                      P(Model::input_bias(NodeType::Code)));

  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim / cfg.heads));
  const auto& rels = relations();
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    std::array<ad::Var, kNodeTypes> next = h;
    for (NodeType tt : types) {
      std::vector<std::size_t> active;
      for (std::size_t r = 0; r < kRelations; ++r) {
        if (rels[r].target == tt && !edges[l][r].empty()) active.push_back(r);
      }
      if (active.empty() || counts[ti(tt)] == 0) continue;  // no messages: keep the residual only

      std::vector<ad::Var> head_out;
      for (std::size_t head = 0; head < cfg.heads; ++head) {
        std::array<std::optional<ad::Var>, kNodeTypes> k_proj, m_proj;
        const ad::Var q_proj = tape.matmul(h[ti(tt)], P(Model::query(l, head, tt)));
        std::vector<ad::Var> scores, msgs;
        Index seg;
        for (std::size_t r : active) {
          const NodeType st = rels[r].source;
          if (!k_proj[ti(st)]) {
            k_proj[ti(st)] = tape.matmul(h[ti(st)], P(Model::key(l, head, st)));
            m_proj[ti(st)] = tape.matmul(h[ti(st)], P(Model::message_in(l, head, st)));
          }
          Index src, tgt;
          for (const auto& [s, t] : edges[l][r]) {
            src.push_back(s);
            tgt.push_back(t);
          }
          const ad::Var k = tape.matmul(tape.gather_rows(*k_proj[ti(st)], src), P(Model::attention(l, head, r)));
          const ad::Var q = tape.gather_rows(q_proj, tgt);
          ad::Var s = tape.scale(tape.rowwise_dot(q, k), inv_sqrt_dh);
          s = tape.scale_by(s, P(Model::mu(l, r)));
          scores.push_back(s);
          msgs.push_back(tape.matmul(tape.gather_rows(*m_proj[ti(st)], src), P(Model::message(l, head, r))));
          seg.insert(seg.end(), tgt.begin(), tgt.end());
        }
        const ad::Var all_scores = scores.size() == 1 ? scores[0] : tape.concat_rows(scores);
        const ad::Var all_msgs = msgs.size() == 1 ? msgs[0] : tape.concat_rows(msgs);
        const ad::Var alpha = tape.segment_softmax(all_scores, seg, counts[ti(tt)]);
        if (record_attention) {
          AttentionRecord rec;
          rec.layer = l;
          rec.head = head;
          rec.target = tt;
          rec.target_rows = seg;
          const Matrix& av = tape.value(alpha);
          rec.alpha.assign(av.data(), av.data() + av.size());
          b.attention.push_back(std::move(rec));
        }
        head_out.push_back(tape.scatter_add_rows(tape.mul_rows(all_msgs, alpha), seg, counts[ti(tt)]));
      }
      const ad::Var agg = head_out.size() == 1 ? head_out[0] : tape.concat_cols(head_out);
      next[ti(tt)] = tape.add(act(tape.matmul(agg, P(Model::aggregate(l, tt)))), h[ti(tt)]);
    }
    h = next;
  }
  b.h = h;
  for (NodeType t : types) {
    b.p[ti(t)] = tape.add_row(tape.matmul(tape.avg_pool_cols2(h[ti(t)]), P(Model::pool_weight(t))),
                              P(Model::pool_bias(t)));
  }
  return b;
}

ad::Var build_logits(ad::Tape& tape, const Model& model, const Built& b, const PairIndex& pairs) {
  const ModelConfig& cfg = model.config();
  auto P = [&](const std::string& name) { return b.leaves[model.index_of(name)]; };
  auto act = [&](ad::Var v) { return cfg.linear_only ? v : tape.relu(v); };
  Index ri, ci;
  for (const auto& [r, c] : pairs) {
    ri.push_back(r);
    ci.push_back(c);
  }
  ad::Var x = tape.concat_cols({tape.gather_rows(b.p[0], ri), tape.gather_rows(b.p[1], ci)});
  for (std::size_t k = 1; k <= 4; ++k) {
    x = tape.add_row(tape.matmul(x, P(Model::mlp_weight(k))), P(Model::mlp_bias(k)));
    if (k < 4 || cfg.scalar_head) x = act(x);
  }
  if (cfg.scalar_head) return tape.add_row(tape.matmul(x, P(Model::mlp_weight(5))), P(Model::mlp_bias(5)));
  const std::size_t half = cfg.mlp_dims.back() / 2;
  return tape.rowwise_dot(tape.slice_cols(x, 0, half), tape.slice_cols(x, half, half));
}

void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw RuntimeError(std::string("non-finite values in ") + what);
}

}  // namespace

ForwardResult forward(const Model& model, const GraphInput& g, const std::vector<EdgeLists>& edges) {
  ad::Tape tape;
  Built b = build(tape, model, g, edges, true);
  ForwardResult r;
  r.h_req = tape.value(b.h[0]);
  r.h_code = tape.value(b.h[1]);
  r.p_req = tape.value(b.p[0]);
  r.p_code = tape.value(b.p[1]);
  r.attention = std::move(b.attention);
  check_finite(r.h_req, "requirement representations");
  check_finite(r.h_code, "code representations");
  return r;
}

std::vector<double> pair_logits(const Model& model, const GraphInput& g, const std::vector<EdgeLists>& edges,
                                const PairIndex& pairs) {
  if (pairs.empty()) return {};
  ad::Tape tape;
  Built b = build(tape, model, g, edges, false);
  const Matrix& z = tape.value(build_logits(tape, model, b, pairs));
  check_finite(z, "pair logits");
  return {z.data(), z.data() + z.size()};
}

double batch_loss(const Model& model, const GraphInput& g, const std::vector<EdgeLists>& edges,
                  const PairIndex& pairs, const std::vector<double>& labels) {
  ad::Tape tape;
  Built b = build(tape, model, g, edges, false);
  return tape.value(tape.bce_with_logits(build_logits(tape, model, b, pairs), labels))(0, 0);
}

std::pair<double, std::vector<Matrix>> loss_and_gradients(const Model& model, const GraphInput& g,
                                                          const std::vector<EdgeLists>& edges,
                                                          const PairIndex& pairs,
                                                          const std::vector<double>& labels) {
  ad::Tape tape;
  Built b = build(tape, model, g, edges, false);
  const ad::Var loss = tape.bce_with_logits(build_logits(tape, model, b, pairs), labels);
  tape.backward(loss);
  std::vector<Matrix> grads;
  grads.reserve(model.size());
  for (auto leaf : b.leaves) grads.push_back(tape.grad(leaf));
  return {tape.value(loss)(0, 0), std::move(grads)};
}

// --- prediction ------------------------------------------------------------

namespace {

PairIndex index_pairs(const GraphInput& g, const std::vector<Link>& pairs) {
  PairIndex out;
  out.reserve(pairs.size());
  for (const auto& l : pairs) out.emplace_back(g.req_index(l.req_id), g.code_index(l.code_id));
  return out;
}

}  // namespace

std::vector<Prediction> predict(const Model& model, const GraphInput& g, const std::vector<Link>& pairs,
                                const TrainConfig& config) {
  const auto edges = sample_neighbors(g, model.config().layers, config.neighbor_samples, derive_seed(config.seed, 3));
  const auto logits = pair_logits(model, g, edges, index_pairs(g, pairs));
  std::vector<Prediction> out;
  out.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    // Clamp away from exact 0/1 so scores stay inside the open interval.
    const double s = std::clamp(ad::sigmoid(logits[i]), 1e-300, std::nextafter(1.0, 0.0));
    out.push_back({pairs[i].req_id, pairs[i].code_id, s, s >= config.threshold});
  }
  return out;
}

std::vector<Prediction> predict(const Model& model, const strategies::StrategyGraph& graph,
                                const EmbeddingTable& embeddings, const std::vector<Link>& pairs,
                                const TrainConfig& config) {
  return predict(model, compile(graph, embeddings), pairs, config);
}

NegativeSplit split_negatives(const Project& project, std::uint64_t seed, double train, double validation) {
  std::vector<Link> pool;
  for (const auto& r : project.requirement_ids()) {
    for (const auto& c : project.code_ids()) {
      Link l{r, c};
      if (project.ground_truth().count(l) == 0) pool.push_back(std::move(l));
    }
  }
  Rng rng(seed);
  rng.shuffle(pool);
  const auto n = static_cast<double>(pool.size());
  const auto a = static_cast<std::size_t>(std::llround(train * n));
  const auto bnd = std::min(pool.size(), static_cast<std::size_t>(std::llround((train + validation) * n)));
  NegativeSplit s;
  s.train.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(a));
  s.validation.assign(pool.begin() + static_cast<std::ptrdiff_t>(a), pool.begin() + static_cast<std::ptrdiff_t>(bnd));
  s.test.assign(pool.begin() + static_cast<std::ptrdiff_t>(bnd), pool.end());
  for (auto* v : {&s.train, &s.validation, &s.test}) std::sort(v->begin(), v->end());
  return s;
}

nlohmann::json to_json(const EpochLog& e) {
  return {{"epoch", e.epoch},         {"loss", e.loss},         {"grad_norm", e.grad_norm},
          {"clipped", e.clipped},     {"val_precision", e.val_precision},
          {"val_recall", e.val_recall}, {"val_f1", e.val_f1}};
}

// --- training --------------------------------------------------------------

TrainResult train(const ModelConfig& model_config, const GraphInput& g, const strategies::Split& split,
                  const NegativeSplit& negatives, const TrainConfig& config) {
  config.validate();
  if (split.train.empty()) throw ValidationError("training needs at least one supervision link");
  TrainResult result;
  result.model = Model::init(model_config, derive_seed(config.seed, 0));

  std::vector<Link> positives(split.train.begin(), split.train.end());
  const PairIndex pos_index = index_pairs(g, positives);
  const PairIndex neg_pool = index_pairs(g, negatives.train);
  std::vector<Link> val_pairs(split.validation.begin(), split.validation.end());
  val_pairs.insert(val_pairs.end(), negatives.validation.begin(), negatives.validation.end());

  auto n_neg = static_cast<std::size_t>(std::llround(config.negative_ratio * static_cast<double>(positives.size())));
  n_neg = std::min(n_neg, neg_pool.size());

  auto epoch_batch = [&](std::size_t epoch, PairIndex& pairs, std::vector<double>& labels) {
    pairs = pos_index;
    labels.assign(pos_index.size(), 1.0);
    Rng rng(derive_seed(config.seed, 1000 + epoch));
    for (auto idx : rng.sample_distinct(neg_pool.size(), n_neg)) {
      pairs.push_back(neg_pool[idx]);
      labels.push_back(0.0);
    }
  };

  {
    PairIndex pairs;
    std::vector<double> labels;
    epoch_batch(1, pairs, labels);
    const auto edges = sample_neighbors(g, model_config.layers, config.neighbor_samples, derive_seed(config.seed, 2000001));
    result.initial_loss = batch_loss(result.model, g, edges, pairs, labels);
  }

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    PairIndex pairs;
    std::vector<double> labels;
    epoch_batch(epoch, pairs, labels);
    const auto edges =
        sample_neighbors(g, model_config.layers, config.neighbor_samples, derive_seed(config.seed, 2000000 + epoch));
    auto [loss, grads] = loss_and_gradients(result.model, g, edges, pairs, labels);

    EpochLog entry;
    entry.epoch = epoch;
    entry.loss = loss;
    double sq = 0.0;
    for (const auto& gr : grads) sq += gr.squaredNorm();
    entry.grad_norm = std::sqrt(sq);
    if (!std::isfinite(loss) || !std::isfinite(entry.grad_norm)) {
      throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + " (non-finite loss or gradient)",
                             result.model, result.log);
    }
    double factor = config.learning_rate;
    if (entry.grad_norm > config.clip_norm) {
      factor *= config.clip_norm / entry.grad_norm;
      entry.clipped = true;
    }
    Model next = result.model;
    for (std::size_t i = 0; i < next.size(); ++i) next.param(i) -= factor * grads[i];
    if (!next.all_finite()) {
      throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + " (non-finite parameters)",
                             result.model, result.log);
    }
    Model previous = std::exchange(result.model, std::move(next));

    if (!val_pairs.empty()) {
      LinkSet predicted;
      std::vector<Prediction> val;
      try {
        val = predict(result.model, g, val_pairs, config);
      } catch (const RuntimeError& ex) {
        throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + " (" + ex.what() + ")",
                               std::move(previous), result.log);
      }
      for (const auto& p : val) {
        if (p.label) predicted.insert({p.req_id, p.code_id});
      }
      const auto ev = eval::evaluate(predicted, split.validation);
      entry.val_precision = ev.precision;
      entry.val_recall = ev.recall;
      entry.val_f1 = ev.f1;
    }
    result.log.push_back(entry);
  }
  return result;
}

// --- gradient check --------------------------------------------------------

GradientCheckReport gradient_check(const Model& model, const GraphInput& g, const std::vector<EdgeLists>& edges,
                                   const PairIndex& pairs, const std::vector<double>& labels,
                                   const GradientCheckOptions& options) {
  auto [loss, grads] = loss_and_gradients(model, g, edges, pairs, labels);
  (void)loss;
  if (options.tamper) options.tamper(grads);

  GradientCheckReport report;
  Model probe = model;
  for (std::size_t i = 0; i < model.size(); ++i) {
    Matrix& p = probe.param(i);
    const auto n = static_cast<std::size_t>(p.size());
    std::vector<std::uint64_t> entries;
    if (options.max_entries == 0 || options.max_entries >= n) {
      for (std::size_t k = 0; k < n; ++k) entries.push_back(k);
    } else {
      Rng rng(derive_seed(options.seed, i));
      entries = rng.sample_distinct(n, options.max_entries);
    }
    double diff_sq = 0.0;
    double a_sq = 0.0;
    double n_sq = 0.0;
    for (auto k : entries) {
      double* x = p.data() + k;
      const double saved = *x;
      *x = saved + options.step;
      const double lp = batch_loss(probe, g, edges, pairs, labels);
      *x = saved - options.step;
      const double lm = batch_loss(probe, g, edges, pairs, labels);
      *x = saved;
      const double numeric = (lp - lm) / (2.0 * options.step);
      const double analytic = grads[i].data()[k];
      diff_sq += (numeric - analytic) * (numeric - analytic);
      a_sq += analytic * analytic;
      n_sq += numeric * numeric;
    }
    const double rel = std::sqrt(diff_sq) / std::max(std::sqrt(a_sq) + std::sqrt(n_sq), 1e-12);
    report.tensors.push_back({model.name(i), rel, entries.size()});
    if (report.worst_tensor.empty() || rel > report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst_tensor = model.name(i);
    }
  }
  report.passed = report.max_relative_error < options.tolerance;
  return report;
}

// --- substitute embeddings -------------------------------------------------

SubstituteEmbeddings substitute_embeddings(const Project& project, const Vocabulary& vocab, std::size_t dim,
                                           std::uint64_t seed) {
  if (vocab.size() == 0) throw ValidationError("cannot project onto an empty vocabulary");
  if (dim == 0) throw ValidationError("embedding width must be positive");
  const auto d = static_cast<Eigen::Index>(dim);
  Matrix proj(static_cast<Eigen::Index>(vocab.size()), d);
  const double sd = 1.0 / std::sqrt(static_cast<double>(dim));
  for (std::size_t t = 0; t < vocab.size(); ++t) {
    Rng rng(derive_seed(seed, t));
    for (Eigen::Index c = 0; c < d; ++c) proj(static_cast<Eigen::Index>(t), c) = rng.normal() * sd;
  }
  // Orthonormal rows (small vocabularies) or columns (large ones).
  const auto nv = proj.rows();
  if (nv <= d) {
    Eigen::HouseholderQR<Matrix> qr(proj.transpose());
    proj = (qr.householderQ() * Matrix::Identity(d, nv)).transpose();
  } else {
    Eigen::HouseholderQR<Matrix> qr(proj);
    proj = qr.householderQ() * Matrix::Identity(nv, d);
  }
  SubstituteEmbeddings out;
  out.table.dim = dim;
  const auto& artifacts = project.artifacts();
  for (std::size_t a = 0; a < artifacts.size(); ++a) {
    const TfidfVector v = tfidf(artifacts[a].tokens, vocab);
    Eigen::RowVectorXd e = Eigen::RowVectorXd::Zero(d);
    for (const auto& [idx, w] : v.entries) e += w * proj.row(static_cast<Eigen::Index>(idx));
    const double norm = e.norm();
    std::vector<double> values(dim);
    if (norm > 1e-12) {
      for (Eigen::Index c = 0; c < d; ++c) values[static_cast<std::size_t>(c)] = e(c) / norm;
    } else {
      out.zero_vector_ids.push_back(artifacts[a].id);
      Rng rng(derive_seed(~seed, a));
      for (auto& x : values) x = 1e-3 * rng.normal();
    }
    out.table.vectors.emplace(artifacts[a].id, std::move(values));
  }
  return out;
}

}  // namespace tlr::hgt
