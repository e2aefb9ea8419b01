#pragma once

// Dense tensors with a dynamically recorded reverse-mode autodiff graph.
//
// Every op returns a fresh Tensor whose node keeps shared references to its
// parents and a closure that pushes the node's gradient back into them.
// Graphs are built per forward pass and released with the last handle.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace affdec {

using Shape = std::vector<std::size_t>;

class DimensionError : public std::invalid_argument {
 public:
  DimensionError(const std::string& op, const std::string& what)
      : std::invalid_argument(op + ": " + what) {}
};

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";

  bool is_leaf() const { return parents.empty(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  // Rank-1 tensors are treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const { return node_->value; }
  std::span<double> mutable_values() { return node_->value; }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double at(std::size_t r, std::size_t c) const {
    return node_->value[r * cols() + c];
  }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

  // Leaf copy of the current values, detached from any graph.
  Tensor detach(bool requires_grad = false) const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// While alive, ops on this thread do not record parents or closures.
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

enum class Reduction { mean, sum };

// ---- ops -------------------------------------------------------------------

// a·b, or a·bᵀ when transpose_b is set. Both operands rank ≤ 2.
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b = false);
// Elementwise; b may also be a row vector broadcast over the rows of a.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor sum(const Tensor& a);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin,
             std::size_t end);
Tensor embedding_lookup(const Tensor& table, std::span<const int> ids);
// out[i] = x[i] + table[index[i]]
Tensor add_indexed_rows(const Tensor& x, const Tensor& table,
                        std::span<const int> index);
Tensor softmax(const Tensor& a, std::size_t axis = 1);
Tensor log_softmax(const Tensor& a);
// Per-row normalization to zero mean, unit variance (no affine).
Tensor layer_norm(const Tensor& x, double eps = 1e-5);
Tensor gelu(const Tensor& x);
Tensor dropout(const Tensor& x, double p, bool train, std::mt19937_64* rng);
// Entries strictly above the diagonal are replaced by `fill`.
Tensor causal_mask_fill(const Tensor& scores,
                        double fill = -std::numeric_limits<double>::infinity());
// Masked next-token negative log-likelihood over rows of `logits`.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets,
                     std::span<const std::uint8_t> mask,
                     Reduction reduction = Reduction::mean);

// Propagates d(loss)/d(node) to every node reachable from `loss`.
// Leaf gradients accumulate across calls; interior gradients are reset.
void backward(const Tensor& loss);

}  // namespace affdec
