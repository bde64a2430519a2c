#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "memefuse/errors.hpp"
#include "memefuse/rng.hpp"

namespace memefuse {

using Shape = std::vector<std::size_t>;

namespace detail {
struct TensorNode;
}

// Dense double-precision tensor participating in a reverse-mode
// differentiation graph. A Tensor is a cheap shared handle to its node;
// values are immutable once produced by an operation. Leaf tensors
// (parameters, inputs) may be edited in place through raw_values() between
// optimization steps.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value);
  // Entries drawn i.i.d. from N(0, stddev^2).
  static Tensor randn(Shape shape, Rng& rng, double stddev,
                      bool requires_grad = false);
  // Glorot-scaled init for a fan_in x fan_out weight matrix.
  static Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const;
  std::size_t size() const;
  std::size_t rows() const;  // rank-2 only
  std::size_t cols() const;  // rank-2 only
  bool requires_grad() const;

  std::span<const double> values() const;
  double value() const;                           // size-1 tensors
  double at(std::size_t i) const;                 // rank-1
  double at(std::size_t r, std::size_t c) const;  // rank-2

  // In-place access for leaves; rejected on tensors produced by an
  // operation, whose values are owned by the graph.
  std::span<double> raw_values();

  // Accumulated gradient, valid after backward() on a graph containing
  // this tensor. Zero-filled on allocation.
  std::span<const double> grad() const;
  void zero_grad();
  // Copy of the gradient as a plain (non-grad) tensor.
  Tensor grad_tensor() const;

  // Deep copy of values into a fresh leaf with no graph history.
  Tensor detached_copy() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  friend class ops_access;
  detail::TensorNode* node() const { return node_.get(); }
  std::shared_ptr<detail::TensorNode> node_ptr() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::TensorNode> n)
      : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

// ---------------------------------------------------------------------------
// Operations. Each builds a graph node recording how to push gradients back
// to its parents. All outputs are checked to be finite; an operation whose
// result contains NaN or infinity throws NumericalError.
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);        // same shape
Tensor sub(const Tensor& a, const Tensor& b);        // same shape
Tensor mul(const Tensor& a, const Tensor& b);        // elementwise
Tensor affine(const Tensor& a, double scale, double shift);  // scale*a + shift
Tensor scale(const Tensor& a, double factor);

Tensor matmul(const Tensor& a, const Tensor& b);  // (m,k) x (k,n)
Tensor transpose(const Tensor& a);                // rank-2
// (m,n) plus a length-n bias added to every row.
Tensor add_rowwise(const Tensor& a, const Tensor& bias);
// Concatenate along `axis`: rank-1 tensors along axis 0, or rank-2 tensors
// with equal row counts along axis 1.
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
// (m,n) -> (1,n) column means.
Tensor mean_rows(const Tensor& a);
// Size-preserving reshape; gradient passes through untouched.
Tensor reshape(const Tensor& a, Shape shape);

Tensor softmax(const Tensor& a, std::size_t axis);
Tensor log_softmax(const Tensor& a, std::size_t axis);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
// Elementwise a^p for constant p >= 0. p == 0 gives ones with zero gradient.
Tensor pow_const(const Tensor& a, double p);
Tensor gelu(const Tensor& a);  // exact form x * Phi(x)
Tensor relu(const Tensor& a);

// Row-wise layer normalization of a (m,n) tensor with learned gain/shift.
Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// Inverted dropout: in training mode keeps each entry with probability
// 1-rate and scales survivors by 1/(1-rate); in evaluation mode it is the
// identity and consumes no randomness.
Tensor dropout(const Tensor& a, double rate, bool training, Rng& rng);

// x / ||x||_2 for a rank-1 tensor (guarded against zero norm).
Tensor l2_normalize(const Tensor& a);

Tensor sum(const Tensor& a);       // -> shape {1}
Tensor mean_all(const Tensor& a);  // -> shape {1}

// Gather rows of a (V,e) table by index; gradients scatter-add back.
Tensor embedding_rows(const Tensor& table, std::span<const std::size_t> ids);

// ---------------------------------------------------------------------------
// Parameters and gradients
// ---------------------------------------------------------------------------

// Ordered, uniquely named collection of trainable leaves. Iteration order is
// insertion order, which keeps optimizer traversal deterministic.
class ParameterSet {
 public:
  Tensor& add(const std::string& name, Tensor t);
  bool contains(const std::string& name) const;
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& items() const {
    return items_;
  }
  std::size_t size() const { return items_.size(); }
  std::size_t total_values() const;
  void zero_grads();

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::map<std::string, std::size_t> index_;
};

// Parameter name -> gradient tensor.
class GradientMap {
 public:
  void set(const std::string& name, Tensor grad);
  bool contains(const std::string& name) const;
  const Tensor& at(const std::string& name) const;
  std::size_t size() const { return grads_.size(); }
  const std::map<std::string, Tensor>& entries() const { return grads_; }
  std::map<std::string, Tensor>& entries() { return grads_; }
  double global_l2_norm() const;

 private:
  std::map<std::string, Tensor> grads_;
};

// Reverse-mode sweep from a scalar loss. Gradients of every reachable
// requires_grad node are zeroed first, so repeated calls on the same graph
// are idempotent rather than accumulating.
void backward(const Tensor& loss);

// Convenience wrapper: zero the gradients of `params` (used or not), run
// backward(loss), and return a copy of each parameter's gradient. Parameters
// that do not participate in the loss come back exactly zero.
GradientMap backward(const Tensor& loss, const ParameterSet& params);

}  // namespace memefuse
