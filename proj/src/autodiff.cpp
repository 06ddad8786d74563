#include "tlr/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tlr/error.hpp"

namespace tlr::ad {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Var Tape::push(Matrix value, std::function<void(Tape&, std::size_t)> back) {
  Node n;
  n.grad = Matrix::Zero(value.rows(), value.cols());
  n.value = std::move(value);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Matrix value) { return push(std::move(value), nullptr); }

Var Tape::matmul(Var a, Var b) {
  if (value(a).cols() != value(b).rows()) throw RuntimeError("matmul shape mismatch");
  Matrix v = value(a) * value(b);
  return push(std::move(v), [a, b](Tape& t, std::size_t self) {
    const Matrix& go = t.g(self);
    t.g(a).noalias() += go * t.value(b).transpose();
    t.g(b).noalias() += t.value(a).transpose() * go;
  });
}

Var Tape::add(Var a, Var b) {
  if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols()) {
    throw RuntimeError("add shape mismatch");
  }
  return push(value(a) + value(b), [a, b](Tape& t, std::size_t self) {
    t.g(a) += t.g(self);
    t.g(b) += t.g(self);
  });
}

Var Tape::add_row(Var a, Var b) {
  if (value(b).rows() != 1 || value(b).cols() != value(a).cols()) throw RuntimeError("add_row shape mismatch");
  Matrix v = value(a).rowwise() + value(b).row(0);
  return push(std::move(v), [a, b](Tape& t, std::size_t self) {
    t.g(a) += t.g(self);
    t.g(b) += t.g(self).colwise().sum();
  });
}

Var Tape::relu(Var a) {
  Matrix v = value(a).cwiseMax(0.0);
  return push(std::move(v), [a](Tape& t, std::size_t self) {
    t.g(a) += (t.value(a).array() > 0.0).cast<double>().matrix().cwiseProduct(t.g(self));
  });
}

Var Tape::scale(Var a, double factor) {
  return push(value(a) * factor, [a, factor](Tape& t, std::size_t self) { t.g(a) += t.g(self) * factor; });
}

Var Tape::scale_by(Var a, Var s) {
  if (value(s).size() != 1) throw RuntimeError("scale_by expects a 1x1 factor");
  return push(value(a) * value(s)(0, 0), [a, s](Tape& t, std::size_t self) {
    t.g(a) += t.g(self) * t.value(s)(0, 0);
    t.g(s)(0, 0) += t.g(self).cwiseProduct(t.value(a)).sum();
  });
}

Var Tape::gather_rows(Var a, const Index& idx) {
  const Matrix& av = value(a);
  Matrix v(static_cast<Eigen::Index>(idx.size()), av.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= static_cast<std::size_t>(av.rows())) throw RuntimeError("gather_rows index out of range");
    v.row(static_cast<Eigen::Index>(i)) = av.row(static_cast<Eigen::Index>(idx[i]));
  }
  return push(std::move(v), [a, idx](Tape& t, std::size_t self) {
    const Matrix& go = t.g(self);
    Matrix& ga = t.g(a);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      ga.row(static_cast<Eigen::Index>(idx[i])) += go.row(static_cast<Eigen::Index>(i));
    }
  });
}

Var Tape::scatter_add_rows(Var a, const Index& idx, std::size_t n_rows) {
  const Matrix& av = value(a);
  if (static_cast<std::size_t>(av.rows()) != idx.size()) throw RuntimeError("scatter_add_rows size mismatch");
  Matrix v = Matrix::Zero(static_cast<Eigen::Index>(n_rows), av.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= n_rows) throw RuntimeError("scatter_add_rows index out of range");
    v.row(static_cast<Eigen::Index>(idx[i])) += av.row(static_cast<Eigen::Index>(i));
  }
  return push(std::move(v), [a, idx](Tape& t, std::size_t self) {
    const Matrix& go = t.g(self);
    Matrix& ga = t.g(a);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      ga.row(static_cast<Eigen::Index>(i)) += go.row(static_cast<Eigen::Index>(idx[i]));
    }
  });
}

Var Tape::rowwise_dot(Var a, Var b) {
  if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols()) {
    throw RuntimeError("rowwise_dot shape mismatch");
  }
  Matrix v = value(a).cwiseProduct(value(b)).rowwise().sum();
  return push(std::move(v), [a, b](Tape& t, std::size_t self) {
    const Matrix& go = t.g(self);
    t.g(a) += go.col(0).asDiagonal() * t.value(b);
    t.g(b) += go.col(0).asDiagonal() * t.value(a);
  });
}

Var Tape::mul_rows(Var a, Var w) {
  if (value(w).cols() != 1 || value(w).rows() != value(a).rows()) throw RuntimeError("mul_rows shape mismatch");
  Matrix v = value(w).col(0).asDiagonal() * value(a);
  return push(std::move(v), [a, w](Tape& t, std::size_t self) {
    const Matrix& go = t.g(self);
    t.g(a) += t.value(w).col(0).asDiagonal() * go;
    t.g(w) += go.cwiseProduct(t.value(a)).rowwise().sum();
  });
}

Var Tape::segment_softmax(Var scores, const Index& segment, std::size_t n_segments) {
  const Matrix& s = value(scores);
  if (s.cols() != 1 || static_cast<std::size_t>(s.rows()) != segment.size()) {
    throw RuntimeError("segment_softmax shape mismatch");
  }
  std::vector<double> mx(n_segments, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < segment.size(); ++i) mx[segment[i]] = std::max(mx[segment[i]], s(static_cast<Eigen::Index>(i), 0));
  Matrix v(s.rows(), 1);
  std::vector<double> sum(n_segments, 0.0);
  for (std::size_t i = 0; i < segment.size(); ++i) {
    const double e = std::exp(s(static_cast<Eigen::Index>(i), 0) - mx[segment[i]]);
    v(static_cast<Eigen::Index>(i), 0) = e;
    sum[segment[i]] += e;
  }
  for (std::size_t i = 0; i < segment.size(); ++i) v(static_cast<Eigen::Index>(i), 0) /= sum[segment[i]];
  return push(std::move(v), [scores, segment, n_segments](Tape& t, std::size_t self) {
    const Matrix& y = t.nodes_[self].value;
    const Matrix& go = t.g(self);
    std::vector<double> dot(n_segments, 0.0);
    for (std::size_t i = 0; i < segment.size(); ++i) {
      dot[segment[i]] += go(static_cast<Eigen::Index>(i), 0) * y(static_cast<Eigen::Index>(i), 0);
    }
    Matrix& gs = t.g(scores);
    for (std::size_t i = 0; i < segment.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      gs(r, 0) += y(r, 0) * (go(r, 0) - dot[segment[i]]);
    }
  });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw RuntimeError("concat_cols of nothing");
  const Eigen::Index rows = value(parts[0]).rows();
  Eigen::Index cols = 0;
  for (Var p : parts) {
    if (value(p).rows() != rows) throw RuntimeError("concat_cols row mismatch");
    cols += value(p).cols();
  }
  Matrix v(rows, cols);
  Eigen::Index off = 0;
  for (Var p : parts) {
    v.middleCols(off, value(p).cols()) = value(p);
    off += value(p).cols();
  }
  return push(std::move(v), [parts](Tape& t, std::size_t self) {
    Eigen::Index o = 0;
    for (Var p : parts) {
      const auto c = t.value(p).cols();
      t.g(p) += t.g(self).middleCols(o, c);
      o += c;
    }
  });
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw RuntimeError("concat_rows of nothing");
  const Eigen::Index cols = value(parts[0]).cols();
  Eigen::Index rows = 0;
  for (Var p : parts) {
    if (value(p).cols() != cols) throw RuntimeError("concat_rows column mismatch");
    rows += value(p).rows();
  }
  Matrix v(rows, cols);
  Eigen::Index off = 0;
  for (Var p : parts) {
    v.middleRows(off, value(p).rows()) = value(p);
    off += value(p).rows();
  }
  return push(std::move(v), [parts](Tape& t, std::size_t self) {
    Eigen::Index o = 0;
    for (Var p : parts) {
      const auto r = t.value(p).rows();
      t.g(p) += t.g(self).middleRows(o, r);
      o += r;
    }
  });
}

Var Tape::slice_cols(Var a, std::size_t start, std::size_t count) {
  const auto s = static_cast<Eigen::Index>(start);
  const auto c = static_cast<Eigen::Index>(count);
  if (s + c > value(a).cols()) throw RuntimeError("slice_cols out of range");
  Matrix v = value(a).middleCols(s, c);
  return push(std::move(v), [a, s, c](Tape& t, std::size_t self) { t.g(a).middleCols(s, c) += t.g(self); });
}

Var Tape::avg_pool_cols2(Var a) {
  const Matrix& av = value(a);
  if (av.cols() % 2 != 0) throw RuntimeError("avg_pool_cols2 needs an even width");
  const Eigen::Index k = av.cols() / 2;
  Matrix v(av.rows(), k);
  for (Eigen::Index j = 0; j < k; ++j) v.col(j) = 0.5 * (av.col(2 * j) + av.col(2 * j + 1));
  return push(std::move(v), [a, k](Tape& t, std::size_t self) {
    const Matrix& go = t.g(self);
    Matrix& ga = t.g(a);
    for (Eigen::Index j = 0; j < k; ++j) {
      ga.col(2 * j) += 0.5 * go.col(j);
      ga.col(2 * j + 1) += 0.5 * go.col(j);
    }
  });
}

Var Tape::bce_with_logits(Var logits, const std::vector<double>& labels) {
  const Matrix& z = value(logits);
  if (z.cols() != 1 || static_cast<std::size_t>(z.rows()) != labels.size() || labels.empty()) {
    throw RuntimeError("bce_with_logits shape mismatch");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double x = z(static_cast<Eigen::Index>(i), 0);
    // -[y log s(x) + (1-y) log(1-s(x))] = softplus(x) - y x
    loss += softplus(x) - labels[i] * x;
  }
  const double n = static_cast<double>(labels.size());
  Matrix v(1, 1);
  v(0, 0) = loss / n;
  return push(std::move(v), [logits, labels, n](Tape& t, std::size_t self) {
    const double go = t.g(self)(0, 0);
    Matrix& gz = t.g(logits);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      gz(r, 0) += go * (sigmoid(t.value(logits)(r, 0)) - labels[i]) / n;
    }
  });
}

void Tape::backward(Var out) {
  if (value(out).size() != 1) throw RuntimeError("backward needs a scalar output");
  for (auto& n : nodes_) n.grad.setZero();
  g(out)(0, 0) = 1.0;
  for (std::size_t i = out.id + 1; i-- > 0;) {
    if (nodes_[i].back) nodes_[i].back(*this, i);
  }
}

}  // namespace tlr::ad
