#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "tlr/corpus.hpp"
#include "tlr/error.hpp"
#include "tlr/strategies.hpp"
#include "tlr/textproc.hpp"

namespace tlr::hgt {

using Matrix = Eigen::MatrixXd;

enum class NodeType : std::size_t { Requirement = 0, Code = 1 };
inline constexpr std::size_t kNodeTypes = 2;

/// Message-passing relations: each strategy edge type in its own direction
/// and reversed. Supervision edges carry labels only and never pass messages.
struct Relation {
  strategies::EdgeType edge;
  bool reverse;
  NodeType source;
  NodeType target;
  std::string name;
};
const std::vector<Relation>& relations();
inline constexpr std::size_t kRelations = 10;

struct ModelConfig {
  std::size_t input_dim = 64;
  std::size_t hidden_dim = 128;
  std::size_t heads = 4;
  std::size_t layers = 2;
  /// Widths of f1..f4. The input of f1 is twice the pooled width (hidden/2).
  std::vector<std::size_t> mlp_dims = {512, 256, 128, 64};
  /// Use f5 on top of f4 to produce the logit instead of the inner product
  /// of the two halves of f4's output.
  bool scalar_head = false;
  /// Replace every ReLU with the identity (used by gradient checks).
  bool linear_only = false;

  /// Throws ValidationError on inconsistent sizes.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// All learnable tensors, addressed by name, in a fixed order.
class Model {
 public:
  Model() = default;

  /// Weights ~ N(0, 1/fan_in) from derive_seed(seed, tensor index), biases 0, mu 1.
  static Model init(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::size_t size() const { return params_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const Matrix& param(std::size_t i) const { return params_[i]; }
  Matrix& param(std::size_t i) { return params_[i]; }
  const Matrix& param(const std::string& name) const;
  Matrix& param(const std::string& name);
  std::size_t index_of(const std::string& name) const;
  std::size_t parameter_count() const;
  bool all_finite() const;

  bool operator==(const Model& o) const;

  // Tensor names.
  static std::string input_weight(NodeType t);
  static std::string input_bias(NodeType t);
  static std::string query(std::size_t layer, std::size_t head, NodeType t);
  static std::string key(std::size_t layer, std::size_t head, NodeType t);
  static std::string message_in(std::size_t layer, std::size_t head, NodeType t);
  static std::string attention(std::size_t layer, std::size_t head, std::size_t relation);
  static std::string message(std::size_t layer, std::size_t head, std::size_t relation);
  static std::string mu(std::size_t layer, std::size_t relation);
  static std::string aggregate(std::size_t layer, NodeType t);
  static std::string pool_weight(NodeType t);
  static std::string pool_bias(NodeType t);
  static std::string mlp_weight(std::size_t k);  // k = 1..5
  static std::string mlp_bias(std::size_t k);

 private:
  void add(std::string name, Matrix value);

  ModelConfig config_;
  std::vector<std::string> names_;
  std::vector<Matrix> params_;
  std::map<std::string, std::size_t> index_;
};

nlohmann::json to_json(const Model& m);
Model model_from_json(const nlohmann::json& j);
void save_model(const Model& m, const std::filesystem::path& file);
Model load_model(const std::filesystem::path& file);

/// Graph in index form. Edge lists hold (source row, target row) within the
/// node tables of the relation's source and target types.
struct GraphInput {
  std::vector<std::string> req_ids;
  std::vector<std::string> code_ids;
  Matrix x_req;
  Matrix x_code;
  std::array<std::vector<std::pair<std::size_t, std::size_t>>, kRelations> edges;

  std::size_t req_index(const std::string& id) const;
  std::size_t code_index(const std::string& id) const;
};

/// Throws ValidationError when an embedding is missing or of the wrong width.
GraphInput compile(const strategies::StrategyGraph& graph, const EmbeddingTable& embeddings);

using EdgeLists = std::array<std::vector<std::pair<std::size_t, std::size_t>>, kRelations>;

/// Type-aware neighbor sampling: for every target node and relation keep at
/// most `per_type` incoming edges, drawn without replacement with
/// derive_seed(seed, layer). per_type == 0 keeps everything.
std::vector<EdgeLists> sample_neighbors(const GraphInput& g, std::size_t layers, std::size_t per_type,
                                        std::uint64_t seed);

/// Softmax weights of one head over the incoming edges of one node type.
struct AttentionRecord {
  std::size_t layer = 0;
  std::size_t head = 0;
  NodeType target = NodeType::Requirement;
  std::vector<std::size_t> target_rows;
  std::vector<double> alpha;
};

struct ForwardResult {
  Matrix h_req;   // final HGT-layer representations
  Matrix h_code;
  Matrix p_req;   // pooled + projected
  Matrix p_code;
  std::vector<AttentionRecord> attention;
};

/// Index pairs (requirement row, code row).
using PairIndex = std::vector<std::pair<std::size_t, std::size_t>>;

ForwardResult forward(const Model& model, const GraphInput& g, const std::vector<EdgeLists>& edges);

/// Logits for the given pairs.
std::vector<double> pair_logits(const Model& model, const GraphInput& g, const std::vector<EdgeLists>& edges,
                                const PairIndex& pairs);

/// Mean binary cross-entropy of the pairs against the labels.
double batch_loss(const Model& model, const GraphInput& g, const std::vector<EdgeLists>& edges,
                  const PairIndex& pairs, const std::vector<double>& labels);

/// Loss and the gradient of every tensor (same order as the model).
std::pair<double, std::vector<Matrix>> loss_and_gradients(const Model& model, const GraphInput& g,
                                                          const std::vector<EdgeLists>& edges,
                                                          const PairIndex& pairs,
                                                          const std::vector<double>& labels);

struct TrainConfig {
  std::size_t epochs = 100;
  double learning_rate = 1e-2;
  double clip_norm = 5.0;
  std::size_t neighbor_samples = 16;  // per target node and relation; 0 = all
  double negative_ratio = 1.0;
  double threshold = 0.5;
  std::uint64_t seed = 42;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct Prediction {
  std::string req_id;
  std::string code_id;
  double score = 0.0;
  bool label = false;
};

/// Scores the pairs. Neighbor sampling uses derive_seed(config.seed, 3).
std::vector<Prediction> predict(const Model& model, const strategies::StrategyGraph& graph,
                                const EmbeddingTable& embeddings, const std::vector<Link>& pairs,
                                const TrainConfig& config);
std::vector<Prediction> predict(const Model& model, const GraphInput& g, const std::vector<Link>& pairs,
                                const TrainConfig& config);

/// Non-linked requirement/code pairs partitioned like the links.
struct NegativeSplit {
  std::vector<Link> train;
  std::vector<Link> validation;
  std::vector<Link> test;
};

/// Shuffles every requirement x code pair outside the ground truth with
/// `seed` and cuts it 60/20/20 (or the given fractions).
NegativeSplit split_negatives(const Project& project, std::uint64_t seed, double train = 0.6,
                              double validation = 0.2);

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;  // on this epoch's batch, before the update
  double grad_norm = 0.0;
  bool clipped = false;
  double val_precision = 0.0;
  double val_recall = 0.0;
  double val_f1 = 0.0;
};

nlohmann::json to_json(const EpochLog& e);

struct TrainResult {
  Model model;
  std::vector<EpochLog> log;
  double initial_loss = 0.0;
};

/// Thrown when the loss or a parameter becomes non-finite.
class TrainingDiverged : public RuntimeError {
 public:
  TrainingDiverged(const std::string& what, Model last_good, std::vector<EpochLog> log)
      : RuntimeError(what), last_good_(std::move(last_good)), log_(std::move(log)) {}
  const Model& last_good() const { return last_good_; }
  const std::vector<EpochLog>& log() const { return log_; }

 private:
  Model last_good_;
  std::vector<EpochLog> log_;
};

/// Full-batch gradient descent on binary cross-entropy. Each epoch uses the
/// training positives and round(negative_ratio * |positives|) negatives
/// drawn from `negatives.train` with derive_seed(seed, 1000 + epoch).
/// Validation F1 is measured on split.validation against
/// negatives.validation. The model is initialized with derive_seed(seed, 0).
TrainResult train(const ModelConfig& model_config, const GraphInput& g, const strategies::Split& split,
                  const NegativeSplit& negatives, const TrainConfig& config);

struct TensorCheck {
  std::string name;
  double relative_error = 0.0;
  std::size_t entries = 0;
};

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::string worst_tensor;
  std::vector<TensorCheck> tensors;
  bool passed = false;
};

struct GradientCheckOptions {
  double step = 1e-4;
  double tolerance = 1e-4;
  /// Entries checked per tensor (chosen with `seed`); 0 checks every entry.
  std::size_t max_entries = 0;
  std::uint64_t seed = 0;
  /// Applied to the analytic gradients before comparison (negative controls).
  std::function<void(std::vector<Matrix>&)> tamper;
};

/// Compares analytic gradients with central differences, tensor by tensor.
/// The relative error of a tensor is |g_a - g_n| / max(|g_a| + |g_n|, 1e-12)
/// over the checked entries.
GradientCheckReport gradient_check(const Model& model, const GraphInput& g, const std::vector<EdgeLists>& edges,
                                   const PairIndex& pairs, const std::vector<double>& labels,
                                   const GradientCheckOptions& options = {});

struct SubstituteEmbeddings {
  EmbeddingTable table;
  std::vector<std::string> zero_vector_ids;  // replaced with seeded noise
};

/// Random projection of each artifact's TF-IDF vector. Row t of a
/// |vocab| x dim Gaussian matrix is drawn from derive_seed(seed, t); the
/// matrix is then orthonormalized by QR (rows when |vocab| <= dim, which
/// keeps cosines exact; columns otherwise). Results are L2-normalized.
/// Throws ValidationError on an empty vocabulary.
SubstituteEmbeddings substitute_embeddings(const Project& project, const Vocabulary& vocab, std::size_t dim,
                                           std::uint64_t seed);

}  // namespace tlr::hgt
