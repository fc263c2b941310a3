#pragma once

// Minimal reverse-mode differentiation over dense row-major double matrices.
//
// A Tape records one forward evaluation. Parameters live in a ParameterStore
// that the tape only reads; Tape::backward() accumulates into a GradientSet
// keyed by parameter id, so several tapes can share one store and have their
// gradients reduced afterwards in a fixed order.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace tactile {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using ParamId = std::size_t;

class ParameterStore {
 public:
  ParamId add(std::string name, Matrix init);

  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  const Matrix& value(ParamId id) const { return values_.at(id); }
  Matrix& value(ParamId id) { return values_.at(id); }
  const std::string& name(ParamId id) const { return names_.at(id); }

  /// Throws kInvalidArgument when absent.
  ParamId find(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::size_t scalar_count() const;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
};

/// One gradient matrix per parameter, same shapes as the store.
class GradientSet {
 public:
  GradientSet() = default;
  explicit GradientSet(const ParameterStore& store);

  std::size_t size() const { return grads_.size(); }
  Matrix& operator[](ParamId id) { return grads_.at(id); }
  const Matrix& operator[](ParamId id) const { return grads_.at(id); }

  void zero();
  void add(const GradientSet& other, double scale = 1.0);
  void scale(double s);

 private:
  std::vector<Matrix> grads_;
};

/// Handle to a node on a tape.
struct Var {
  std::size_t index = static_cast<std::size_t>(-1);
};

class Tape {
 public:
  explicit Tape(const ParameterStore& store);

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  const Matrix& value(Var v) const { return nodes_.at(v.index).value; }
  std::size_t size() const { return nodes_.size(); }

  // Leaves
  Var constant(Matrix value);
  Var param(ParamId id);

  // Linear algebra
  Var matmul(Var a, Var b);     // a * b
  Var matmul_nt(Var a, Var b);  // a * b^T
  Var add(Var a, Var b);
  Var add_row(Var a, Var row);  // broadcast a 1 x n row over every row of a
  Var scale(Var a, double s);

  // Pointwise / row-wise
  Var gelu(Var a);
  Var softmax_rows(Var a);
  Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
  /// Inverted dropout; identity when p == 0.
  Var dropout(Var a, double p, std::mt19937_64& rng);

  // Structure
  Var slice_cols(Var a, std::size_t begin, std::size_t count);
  Var concat_cols(std::span<const Var> parts);
  Var concat_rows(std::span<const Var> parts);
  Var gather_rows(Var a, std::span<const std::size_t> rows);
  /// Rows flagged in `mask` are replaced by the single row `row`.
  Var replace_rows(Var a, Var row, const std::vector<char>& mask);

  // Scalar losses (1 x 1 results)
  /// mean((pred - target)^2) over every entry.
  Var mse(Var pred, const Matrix& target);
  /// Mean binary cross-entropy of sigmoid(logits) (n x 1), probabilities
  /// clamped to [1e-7, 1 - 1e-7].
  Var bce_with_logits(Var logits, std::span<const double> labels);
  /// -log(max(softmax(logits)[label], 1e-7)) for a 1 x M logit row.
  Var softmax_cross_entropy(Var logits, std::size_t label);
  Var sum_scalars(std::span<const Var> parts, std::span<const double> weights);

  /// Reverse sweep from a 1 x 1 node; accumulates into `grads`.
  void backward(Var loss, GradientSet& grads);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    ParamId param = static_cast<ParamId>(-1);
    std::function<void(Tape&, std::size_t)> back;
  };

  Var push(Matrix value, bool requires_grad, std::function<void(Tape&, std::size_t)> back);
  Node& node(Var v) { return nodes_.at(v.index); }
  void check(Var v) const;
  Matrix& grad_of(std::size_t i);
  void accumulate(std::size_t i, const Matrix& g);

  const ParameterStore* store_;
  std::vector<Node> nodes_;
};

inline constexpr double kProbClamp = 1e-7;

}  // namespace tactile
