#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace qna::nn {

using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Rng = std::mt19937;

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void accumulate(const Matrix& g) {
    if (grad.size() == 0) grad = Matrix::Zero(value.rows(), value.cols());
    grad += g;
  }
};

/// Handle to a node in a dynamically built computation graph. Copies share
/// the node. Graph edges are recorded only when an input requires gradients
/// and no NoGradGuard is active.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false);

  static Tensor zeros(Eigen::Index rows, Eigen::Index cols, bool requires_grad = false);

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  float item() const { return node_->value(0, 0); }

  void zero_grad() { node_->grad.resize(0, 0); }
  /// Backpropagates from a 1x1 tensor, seeding its gradient with `seed`.
  void backward(float seed = 1.0f);

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Builds a node from `value` that depends on `inputs`. `backward` receives
/// the finished node (with its grad) and must push gradients into parents.
Tensor make_result(Matrix value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward);

// Arithmetic
Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
/// Adds a 1 x n row vector to every row of `a`.
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
/// Adds a constant (non-differentiable) matrix, e.g. an attention mask.
Tensor add_constant(const Tensor& a, const Matrix& c);
/// Multiplies each row i of `a` by the scalar c(i, 0).
Tensor mul_col(const Tensor& a, const Tensor& c);
Tensor one_minus(const Tensor& a);

// Activations
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);
Tensor log(const Tensor& a, float eps = 1e-12f);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps = 1e-12f);

/// Gathers rows of `table` by id.
Tensor embedding(const Tensor& table, std::span<const int> ids);

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count);
Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count);
Tensor concat_cols(const std::vector<Tensor>& parts);
/// Right-pads with zero columns up to `cols`.
Tensor pad_cols(const Tensor& a, Eigen::Index cols);
/// out(t, index[j]) += a(t, j) for an output with `cols` columns.
Tensor scatter_cols(const Tensor& a, std::span<const int> index, Eigen::Index cols);

Tensor dropout(const Tensor& a, float p, Rng& rng, bool training);

/// Sum over rows of -a(t, target[t]); targets < 0 are ignored. Returns 1x1.
Tensor pick_nll(const Tensor& log_probs, std::span<const int> targets);
Tensor sum_all(const Tensor& a);

}  // namespace qna::nn
