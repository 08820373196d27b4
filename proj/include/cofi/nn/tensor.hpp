#pragma once

#include <Eigen/Core>

#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <vector>

#include "cofi/error.hpp"

namespace cofi::nn {

using Index = Eigen::Index;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

struct Node {
  Matrix value;
  Matrix grad;  // empty until a backward pass reaches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }
  void accumulate(const Matrix& g);
};

}  // namespace detail

// Two-dimensional dense tensor with reverse-mode gradient recording.
//
// A scalar is a 1x1 tensor. Every op returns a new tensor that holds shared
// references to its inputs when any of them requires grad, so the recorded
// graph lives exactly as long as the result does. Values are never mutated
// after creation except by the optimizer acting on leaves.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false);

  static Tensor zeros(Index rows, Index cols, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows,
                          bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  Index size() const { return node_->value.size(); }
  std::vector<Index> shape() const { return {rows(), cols()}; }

  const Matrix& value() const { return node_->value; }
  // Mutable access for optimizers and initializers; only valid on leaves.
  Matrix& mutable_value();
  double item() const;
  double operator()(Index r, Index c) const { return node_->value(r, c); }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  const Matrix& grad() const { return node_->grad; }
  void zero_grad();

  // Internal plumbing for op implementations.
  static Tensor make(Matrix value, std::vector<Tensor> inputs,
                     std::function<void(detail::Node&)> backward);
  detail::Node& node() const { return *node_; }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// Seeds d(loss)/d(loss) = 1 and propagates to every reachable tensor that
// requires grad. Leaf grads accumulate across calls until zero_grad.
void backward(const Tensor& loss);
void zero_grad(std::span<Tensor> params);

std::string shape_string(const Tensor& t);

// ---- linear algebra -------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);
// a * b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// ---- elementwise ----------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
// log(1 + exp(a)), evaluated without overflow.
Tensor softplus(const Tensor& a);
// Gradient passes only where lo < a < hi.
Tensor clamp(const Tensor& a, double lo, double hi);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator-(const Tensor& a) { return scale(a, -1.0); }

// ---- broadcasting (row / column vectors only) -----------------------------
// x[n x c] + row[1 x c]
Tensor add_row(const Tensor& x, const Tensor& row);
// x[n x c] * col[n x 1], each row scaled by its entry.
Tensor mul_col(const Tensor& x, const Tensor& col);

// ---- reductions -----------------------------------------------------------
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Per-row dot product of two equally shaped tensors -> [n x 1].
Tensor row_dot(const Tensor& a, const Tensor& b);

// ---- row-structured ops ---------------------------------------------------
Tensor softmax_rows(const Tensor& x);
Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       double eps = 1e-5);
// Divides each row by its L2 norm. A zero row is a degenerate feature.
Tensor normalize_rows(const Tensor& x);
Tensor gather_rows(const Tensor& x, std::span<const Index> ids);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_cols(std::initializer_list<Tensor> parts);
Tensor slice_cols(const Tensor& x, Index start, Index count);
// Column-wise max over each group of row indices. Ties resolve to the
// first member listed.
Tensor segment_max(const Tensor& x, std::span<const std::vector<Index>> groups);

// Copy of the value with no gradient history.
Tensor detach(const Tensor& a);

}  // namespace cofi::nn
