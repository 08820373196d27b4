#include "cofi/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace cofi::nn {

namespace detail {

void Node::accumulate(const Matrix& g) {
  if (!requires_grad) return;
  if (grad.size() != value.size()) {
    grad = g;
  } else {
    grad += g;
  }
}

}  // namespace detail

using detail::Node;

Tensor::Tensor(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Index rows, Index cols, bool requires_grad) {
  return Tensor(Matrix::Zero(rows, cols), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return Tensor(std::move(m), requires_grad);
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows,
                         bool requires_grad) {
  const Index r = static_cast<Index>(rows.size());
  const Index c = r == 0 ? 0 : static_cast<Index>(rows.begin()->size());
  Matrix m(r, c);
  Index i = 0;
  for (const auto& row : rows) {
    if (static_cast<Index>(row.size()) != c) fail(ErrorKind::kDimension, "ragged initializer rows");
    Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return Tensor(std::move(m), requires_grad);
}

Matrix& Tensor::mutable_value() {
  if (!node_->is_leaf()) fail(ErrorKind::kContract, "only leaf tensors may be mutated");
  return node_->value;
}

double Tensor::item() const {
  if (size() != 1) fail(ErrorKind::kContract, "item() on non-scalar tensor " + shape_string(*this));
  return node_->value(0, 0);
}

void Tensor::zero_grad() {
  node_->grad = Matrix::Zero(rows(), cols());
}

Tensor Tensor::make(Matrix value, std::vector<Tensor> inputs,
                    std::function<void(Node&)> backward) {
  Tensor out(std::move(value), false);
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (any) {
    out.node_->requires_grad = true;
    out.node_->parents.reserve(inputs.size());
    for (auto& in : inputs) out.node_->parents.push_back(in.node_);
    out.node_->backward = std::move(backward);
  }
  return out;
}

std::string shape_string(const Tensor& t) {
  std::ostringstream os;
  os << "[" << t.rows() << "x" << t.cols() << "]";
  return os.str();
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    fail(ErrorKind::kContract, "backward requires a scalar loss");
  }
  Node* root = &loss.node();
  if (!root->requires_grad) fail(ErrorKind::kContract, "loss is not on the gradient tape");

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->is_leaf()) n->grad.resize(0, 0);
  }
  root->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->is_leaf() || n->grad.size() == 0) continue;
    n->backward(*n);
  }
}

void zero_grad(std::span<Tensor> params) {
  for (auto& p : params) p.zero_grad();
}

namespace {

Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorKind::kDimension,
         std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
  }
}

template <typename F, typename D>
Tensor unary(const Tensor& a, F&& forward, D&& derivative) {
  Matrix out = a.value().unaryExpr(forward);
  return Tensor::make(out, {a}, [derivative](Node& self) {
    Node& x = parent(self, 0);
    Matrix d = x.value.binaryExpr(self.value, derivative);
    x.accumulate(self.grad.cwiseProduct(d));
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    fail(ErrorKind::kDimension,
         "matmul: inner dimensions differ " + shape_string(a) + " x " + shape_string(b));
  }
  return Tensor::make(a.value() * b.value(), {a, b}, [](Node& self) {
    Node& x = parent(self, 0);
    Node& y = parent(self, 1);
    if (x.requires_grad) x.accumulate(self.grad * y.value.transpose());
    if (y.requires_grad) y.accumulate(x.value.transpose() * self.grad);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    fail(ErrorKind::kDimension,
         "matmul_nt: inner dimensions differ " + shape_string(a) + " x " + shape_string(b) + "^T");
  }
  return Tensor::make(a.value() * b.value().transpose(), {a, b}, [](Node& self) {
    Node& x = parent(self, 0);
    Node& y = parent(self, 1);
    if (x.requires_grad) x.accumulate(self.grad * y.value);
    if (y.requires_grad) y.accumulate(self.grad.transpose() * x.value);
  });
}

Tensor transpose(const Tensor& a) {
  return Tensor::make(a.value().transpose(), {a}, [](Node& self) {
    parent(self, 0).accumulate(self.grad.transpose());
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  return Tensor::make(a.value() + b.value(), {a, b}, [](Node& self) {
    parent(self, 0).accumulate(self.grad);
    parent(self, 1).accumulate(self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  return Tensor::make(a.value() - b.value(), {a, b}, [](Node& self) {
    parent(self, 0).accumulate(self.grad);
    parent(self, 1).accumulate(-self.grad);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  return Tensor::make(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
    Node& x = parent(self, 0);
    Node& y = parent(self, 1);
    if (x.requires_grad) x.accumulate(self.grad.cwiseProduct(y.value));
    if (y.requires_grad) y.accumulate(self.grad.cwiseProduct(x.value));
  });
}

Tensor scale(const Tensor& a, double s) {
  return Tensor::make(a.value() * s, {a}, [s](Node& self) { parent(self, 0).accumulate(self.grad * s); });
}

Tensor add_scalar(const Tensor& a, double s) {
  return Tensor::make(a.value().array() + s, {a},
                      [](Node& self) { parent(self, 0).accumulate(self.grad); });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  if ((a.value().array() <= 0.0).any()) fail(ErrorKind::kNumeric, "log of non-positive value");
  return unary(
      a, [](double v) { return std::log(v); }, [](double x, double) { return 1.0 / x; });
}

Tensor softplus(const Tensor& a) {
  return unary(
      a, [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
      [](double x, double) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return unary(
      a, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) {
    fail(ErrorKind::kDimension, "add_row: " + shape_string(x) + " + " + shape_string(row));
  }
  Matrix out = x.value().rowwise() + row.value().row(0);
  return Tensor::make(std::move(out), {x, row}, [](Node& self) {
    parent(self, 0).accumulate(self.grad);
    Node& r = parent(self, 1);
    if (r.requires_grad) r.accumulate(self.grad.colwise().sum());
  });
}

Tensor mul_col(const Tensor& x, const Tensor& col) {
  if (col.cols() != 1 || col.rows() != x.rows()) {
    fail(ErrorKind::kDimension, "mul_col: " + shape_string(x) + " * " + shape_string(col));
  }
  Matrix out = col.value().col(0).asDiagonal() * x.value();
  return Tensor::make(std::move(out), {x, col}, [](Node& self) {
    Node& a = parent(self, 0);
    Node& c = parent(self, 1);
    if (a.requires_grad) a.accumulate(c.value.col(0).asDiagonal() * self.grad);
    if (c.requires_grad) c.accumulate(self.grad.cwiseProduct(a.value).rowwise().sum());
  });
}

Tensor sum(const Tensor& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return Tensor::make(std::move(out), {a}, [](Node& self) {
    Node& x = parent(self, 0);
    x.accumulate(Matrix::Constant(x.value.rows(), x.value.cols(), self.grad(0, 0)));
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) fail(ErrorKind::kContract, "mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor row_dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "row_dot");
  Matrix out = a.value().cwiseProduct(b.value()).rowwise().sum();
  return Tensor::make(std::move(out), {a, b}, [](Node& self) {
    Node& x = parent(self, 0);
    Node& y = parent(self, 1);
    if (x.requires_grad) x.accumulate(self.grad.col(0).asDiagonal() * y.value);
    if (y.requires_grad) y.accumulate(self.grad.col(0).asDiagonal() * x.value);
  });
}

Tensor softmax_rows(const Tensor& x) {
  if (x.value().hasNaN()) fail(ErrorKind::kNumeric, "softmax_rows: NaN input");
  Matrix out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double m = x.value().row(i).maxCoeff();
    out.row(i) = (x.value().row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return Tensor::make(std::move(out), {x}, [](Node& self) {
    const Matrix& y = self.value;
    Eigen::VectorXd inner = self.grad.cwiseProduct(y).rowwise().sum();
    Matrix g = y.cwiseProduct(self.grad.colwise() - inner);
    parent(self, 0).accumulate(g);
  });
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const Index c = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != c || beta.rows() != 1 || beta.cols() != c) {
    fail(ErrorKind::kDimension, "layer_norm_rows: affine shape mismatch for " + shape_string(x));
  }
  Matrix xhat(x.rows(), c);
  Eigen::VectorXd inv_std(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    const double mu = x.value().row(i).mean();
    const double var = (x.value().row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (x.value().row(i).array() - mu) * inv_std(i);
  }
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
               beta.value().row(0).array();
  return Tensor::make(std::move(out), {x, gamma, beta},
                      [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                        Node& xn = parent(self, 0);
                        Node& g = parent(self, 1);
                        Node& b = parent(self, 2);
                        if (g.requires_grad) g.accumulate(self.grad.cwiseProduct(xhat).colwise().sum());
                        if (b.requires_grad) b.accumulate(self.grad.colwise().sum());
                        if (xn.requires_grad) {
                          Matrix dxhat = self.grad.array().rowwise() * g.value.row(0).array();
                          Eigen::VectorXd m1 = dxhat.rowwise().mean();
                          Eigen::VectorXd m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
                          Matrix dx = dxhat;
                          dx.colwise() -= m1;
                          dx -= m2.asDiagonal() * xhat;
                          xn.accumulate(inv_std.asDiagonal() * dx);
                        }
                      });
}

Tensor normalize_rows(const Tensor& x) {
  Eigen::VectorXd norms = x.value().rowwise().norm();
  for (Index i = 0; i < norms.size(); ++i) {
    if (!(norms(i) > 0.0)) {
      fail(ErrorKind::kDegenerateFeature, "normalize_rows: zero-norm row " + std::to_string(i));
    }
  }
  Matrix out = norms.cwiseInverse().asDiagonal() * x.value();
  return Tensor::make(std::move(out), {x}, [norms = std::move(norms)](Node& self) {
    const Matrix& y = self.value;
    Eigen::VectorXd inner = self.grad.cwiseProduct(y).rowwise().sum();
    Matrix g = self.grad - inner.asDiagonal() * y;
    parent(self, 0).accumulate(norms.cwiseInverse().asDiagonal() * g);
  });
}

Tensor gather_rows(const Tensor& x, std::span<const Index> ids) {
  Matrix out(static_cast<Index>(ids.size()), x.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= x.rows()) {
      fail(ErrorKind::kDimension, "gather_rows: index " + std::to_string(ids[i]) + " out of " +
                                      shape_string(x));
    }
    out.row(static_cast<Index>(i)) = x.value().row(ids[i]);
  }
  std::vector<Index> idx(ids.begin(), ids.end());
  return Tensor::make(std::move(out), {x}, [idx = std::move(idx)](Node& self) {
    Node& src = parent(self, 0);
    Matrix g = Matrix::Zero(src.value.rows(), src.value.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += self.grad.row(static_cast<Index>(i));
    src.accumulate(g);
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) fail(ErrorKind::kContract, "concat_cols: no inputs");
  const Index r = parts.front().rows();
  Index c = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) {
      fail(ErrorKind::kDimension, "concat_cols: row mismatch " + shape_string(parts.front()) +
                                      " vs " + shape_string(p));
    }
    c += p.cols();
  }
  Matrix out(r, c);
  std::vector<Index> offsets;
  Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    offsets.push_back(off);
    off += p.cols();
  }
  return Tensor::make(std::move(out), std::vector<Tensor>(parts.begin(), parts.end()),
                      [offsets = std::move(offsets)](Node& self) {
                        for (std::size_t i = 0; i < self.parents.size(); ++i) {
                          Node& p = *self.parents[i];
                          if (p.requires_grad) {
                            p.accumulate(self.grad.middleCols(offsets[i], p.value.cols()));
                          }
                        }
                      });
}

Tensor concat_cols(std::initializer_list<Tensor> parts) {
  return concat_cols(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor slice_cols(const Tensor& x, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > x.cols()) {
    fail(ErrorKind::kDimension, "slice_cols out of range for " + shape_string(x));
  }
  return Tensor::make(x.value().middleCols(start, count), {x}, [start, count](Node& self) {
    Node& src = parent(self, 0);
    Matrix g = Matrix::Zero(src.value.rows(), src.value.cols());
    g.middleCols(start, count) = self.grad;
    src.accumulate(g);
  });
}

Tensor segment_max(const Tensor& x, std::span<const std::vector<Index>> groups) {
  const Index c = x.cols();
  Matrix out(static_cast<Index>(groups.size()), c);
  Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> arg(
      static_cast<Index>(groups.size()), c);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& members = groups[g];
    if (members.empty()) fail(ErrorKind::kContract, "segment_max: empty group " + std::to_string(g));
    for (Index j = 0; j < c; ++j) {
      Index best = members.front();
      for (Index m : members) {
        if (x.value()(m, j) > x.value()(best, j)) best = m;
      }
      out(static_cast<Index>(g), j) = x.value()(best, j);
      arg(static_cast<Index>(g), j) = best;
    }
  }
  return Tensor::make(std::move(out), {x}, [arg = std::move(arg)](Node& self) {
    Node& src = parent(self, 0);
    Matrix g = Matrix::Zero(src.value.rows(), src.value.cols());
    for (Index i = 0; i < arg.rows(); ++i) {
      for (Index j = 0; j < arg.cols(); ++j) g(arg(i, j), j) += self.grad(i, j);
    }
    src.accumulate(g);
  });
}

Tensor detach(const Tensor& a) { return Tensor(a.value(), false); }

}  // namespace cofi::nn
