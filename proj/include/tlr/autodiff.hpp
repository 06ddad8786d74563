#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace tlr::ad {

using Matrix = Eigen::MatrixXd;
using Index = std::vector<std::size_t>;

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

/// Reverse-mode tape over dense matrices. Operations append nodes; backward()
/// walks them in reverse, accumulating gradients into every node.
class Tape {
 public:
  Var constant(Matrix value);
  /// Leaf whose gradient is wanted after backward().
  Var leaf(Matrix value) { return constant(std::move(value)); }

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  const Matrix& grad(Var v) const { return nodes_[v.id].grad; }
  std::size_t size() const { return nodes_.size(); }

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  /// a (m x n) plus the row vector b (1 x n) on every row.
  Var add_row(Var a, Var b);
  Var relu(Var a);
  Var scale(Var a, double factor);
  /// a times the 1x1 value s.
  Var scale_by(Var a, Var s);
  /// out.row(i) = a.row(idx[i]).
  Var gather_rows(Var a, const Index& idx);
  /// out (n_rows x cols) with out.row(idx[i]) += a.row(i).
  Var scatter_add_rows(Var a, const Index& idx, std::size_t n_rows);
  /// m x 1 column of row-wise dot products.
  Var rowwise_dot(Var a, Var b);
  /// a.row(i) * w(i, 0).
  Var mul_rows(Var a, Var w);
  /// Softmax of the column `scores` within each segment (segment[i] in [0, n_segments)).
  Var segment_softmax(Var scores, const Index& segment, std::size_t n_segments);
  Var concat_cols(const std::vector<Var>& parts);
  Var concat_rows(const std::vector<Var>& parts);
  Var slice_cols(Var a, std::size_t start, std::size_t count);
  /// Mean of adjacent column pairs: (m x 2k) -> (m x k).
  Var avg_pool_cols2(Var a);
  /// Mean binary cross-entropy of sigmoid(logits) against 0/1 labels (1x1).
  Var bce_with_logits(Var logits, const std::vector<double>& labels);

  /// Seeds d(out)/d(out) = 1 (out must be 1x1) and propagates to all nodes.
  void backward(Var out);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void(Tape&, std::size_t)> back;
  };
  Var push(Matrix value, std::function<void(Tape&, std::size_t)> back);
  Matrix& g(Var v) { return nodes_[v.id].grad; }
  Matrix& g(std::size_t id) { return nodes_[id].grad; }

  std::vector<Node> nodes_;
};

/// Numerically stable log(1 + exp(x)).
double softplus(double x);
double sigmoid(double x);

}  // namespace tlr::ad
