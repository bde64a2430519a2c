#include "memefuse/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <unordered_map>

namespace memefuse {

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<double> grad;  // allocated iff requires_grad
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Pushes this node's grad into its parents' grads. Captures raw pointers;
  // the parents vector keeps the pointees alive for the closure's lifetime.
  std::function<void()> backprop;

  std::size_t size() const { return values.size(); }
};

}  // namespace detail

using detail::TensorNode;

namespace {

std::size_t shape_size(const Shape& shape) {
  if (shape.empty()) throw ContractError("tensor shape must have rank >= 1");
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw ContractError("tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericalError(std::string(op) + ": non-finite value in result");
    }
  }
}

std::shared_ptr<TensorNode> make_leaf(Shape shape, std::vector<double> values,
                                      bool requires_grad) {
  const std::size_t n = shape_size(shape);
  if (values.size() != n) {
    throw ContractError("tensor value count " +
                        std::to_string(values.size()) +
                        " does not match shape " + shape_str(shape));
  }
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad.assign(n, 0.0);
  return node;
}

// Creates an operation node. The caller installs the backward closure
// through install_backprop once it can capture the finished node.
Tensor make_op(Shape shape, std::vector<double> values, const char* op,
               std::vector<std::shared_ptr<TensorNode>> parents,
               bool finite_check = true) {
  if (finite_check) check_finite(values, op);
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->is_leaf = false;
  node->parents = std::move(parents);
  for (const auto& p : node->parents) {
    if (p->requires_grad) {
      node->requires_grad = true;
      break;
    }
  }
  if (node->requires_grad) node->grad.assign(node->values.size(), 0.0);
  return Tensor(std::move(node));
}

// Binds the gradient closure if the result participates in differentiation.
// `makefn` receives the result node and returns the closure.
template <typename MakeFn>
Tensor install_backprop(Tensor result, MakeFn&& makefn) {
  TensorNode* node = result.node();
  if (node->requires_grad) node->backprop = makefn(node);
  return result;
}

TensorNode* require_node(const Tensor& t, const char* op) {
  if (!t.defined()) {
    throw ContractError(std::string(op) + ": undefined tensor");
  }
  return t.node();
}

void require_same_shape(const TensorNode* a, const TensorNode* b,
                        const char* op) {
  if (a->shape != b->shape) {
    throw ContractError(std::string(op) + ": shape mismatch " +
                        shape_str(a->shape) + " vs " + shape_str(b->shape));
  }
}

void require_rank2(const TensorNode* a, const char* op) {
  if (a->shape.size() != 2) {
    throw ContractError(std::string(op) + ": expected rank-2 tensor, got " +
                        shape_str(a->shape));
  }
}

void accumulate(TensorNode* node, const std::vector<double>& delta) {
  if (!node->requires_grad) return;
  for (std::size_t i = 0; i < delta.size(); ++i) node->grad[i] += delta[i];
}

}  // namespace

// --------------------------------------------------------------------------
// Tensor basics
// --------------------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return Tensor(
      make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value),
                          requires_grad));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values,
                           bool requires_grad) {
  return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value) {
  return Tensor(make_leaf(Shape{1}, {value}, false));
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev,
                     bool requires_grad) {
  const std::size_t n = shape_size(shape);
  std::vector<double> v(n);
  for (double& x : v) x = stddev * rng.normal();
  return Tensor(make_leaf(std::move(shape), std::move(v), requires_grad));
}

Tensor Tensor::glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
  return randn(Shape{fan_in, fan_out}, rng, stddev, /*requires_grad=*/true);
}

const Shape& Tensor::shape() const {
  return require_node(*this, "shape")->shape;
}

std::size_t Tensor::rank() const { return shape().size(); }

std::size_t Tensor::size() const {
  return require_node(*this, "size")->values.size();
}

std::size_t Tensor::rows() const {
  const TensorNode* n = require_node(*this, "rows");
  require_rank2(n, "rows");
  return n->shape[0];
}

std::size_t Tensor::cols() const {
  const TensorNode* n = require_node(*this, "cols");
  require_rank2(n, "cols");
  return n->shape[1];
}

bool Tensor::requires_grad() const {
  return require_node(*this, "requires_grad")->requires_grad;
}

std::span<const double> Tensor::values() const {
  const TensorNode* n = require_node(*this, "values");
  return {n->values.data(), n->values.size()};
}

double Tensor::value() const {
  const TensorNode* n = require_node(*this, "value");
  if (n->values.size() != 1) {
    throw ContractError("value(): tensor is not a scalar, shape " +
                        shape_str(n->shape));
  }
  return n->values[0];
}

double Tensor::at(std::size_t i) const {
  const TensorNode* n = require_node(*this, "at");
  if (n->shape.size() != 1 || i >= n->values.size()) {
    throw ContractError("at(i): index out of range or tensor not rank-1");
  }
  return n->values[i];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  const TensorNode* n = require_node(*this, "at");
  require_rank2(n, "at");
  if (r >= n->shape[0] || c >= n->shape[1]) {
    throw ContractError("at(r,c): index out of range");
  }
  return n->values[r * n->shape[1] + c];
}

std::span<double> Tensor::raw_values() {
  TensorNode* n = require_node(*this, "raw_values");
  if (!n->is_leaf) {
    throw ContractError("raw_values: only leaf tensors may be edited in place");
  }
  return {n->values.data(), n->values.size()};
}

std::span<const double> Tensor::grad() const {
  const TensorNode* n = require_node(*this, "grad");
  if (!n->requires_grad) {
    throw ContractError("grad: tensor does not require gradients");
  }
  return {n->grad.data(), n->grad.size()};
}

void Tensor::zero_grad() {
  TensorNode* n = require_node(*this, "zero_grad");
  if (n->requires_grad) std::fill(n->grad.begin(), n->grad.end(), 0.0);
}

Tensor Tensor::grad_tensor() const {
  const TensorNode* n = require_node(*this, "grad_tensor");
  if (!n->requires_grad) {
    throw ContractError("grad_tensor: tensor does not require gradients");
  }
  return from_values(n->shape, n->grad, false);
}

Tensor Tensor::detached_copy() const {
  const TensorNode* n = require_node(*this, "detached_copy");
  return from_values(n->shape, n->values, false);
}

// --------------------------------------------------------------------------
// Elementwise ops
// --------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  TensorNode* an = require_node(a, "add");
  TensorNode* bn = require_node(b, "add");
  require_same_shape(an, bn, "add");
  std::vector<double> out(an->size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = an->values[i] + bn->values[i];
  }
  return install_backprop(
      make_op(an->shape, std::move(out), "add", {a.node_ptr(), b.node_ptr()}),
      [&](TensorNode* self) {
        return [self, an, bn] {
          accumulate(an, self->grad);
          accumulate(bn, self->grad);
        };
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  TensorNode* an = require_node(a, "sub");
  TensorNode* bn = require_node(b, "sub");
  require_same_shape(an, bn, "sub");
  std::vector<double> out(an->size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = an->values[i] - bn->values[i];
  }
  return install_backprop(
      make_op(an->shape, std::move(out), "sub", {a.node_ptr(), b.node_ptr()}),
      [&](TensorNode* self) {
        return [self, an, bn] {
          accumulate(an, self->grad);
          if (bn->requires_grad) {
            for (std::size_t i = 0; i < self->grad.size(); ++i) {
              bn->grad[i] -= self->grad[i];
            }
          }
        };
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  TensorNode* an = require_node(a, "mul");
  TensorNode* bn = require_node(b, "mul");
  require_same_shape(an, bn, "mul");
  std::vector<double> out(an->size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = an->values[i] * bn->values[i];
  }
  return install_backprop(
      make_op(an->shape, std::move(out), "mul", {a.node_ptr(), b.node_ptr()}),
      [&](TensorNode* self) {
        return [self, an, bn] {
          if (an->requires_grad) {
            for (std::size_t i = 0; i < self->grad.size(); ++i) {
              an->grad[i] += self->grad[i] * bn->values[i];
            }
          }
          if (bn->requires_grad) {
            for (std::size_t i = 0; i < self->grad.size(); ++i) {
              bn->grad[i] += self->grad[i] * an->values[i];
            }
          }
        };
      });
}

Tensor affine(const Tensor& a, double factor, double shift) {
  TensorNode* an = require_node(a, "affine");
  if (!std::isfinite(factor) || !std::isfinite(shift)) {
    throw ContractError("affine: non-finite coefficients");
  }
  std::vector<double> out(an->size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = factor * an->values[i] + shift;
  }
  return install_backprop(
      make_op(an->shape, std::move(out), "affine", {a.node_ptr()}),
      [&](TensorNode* self) {
        return [self, an, factor] {
          for (std::size_t i = 0; i < self->grad.size(); ++i) {
            an->grad[i] += factor * self->grad[i];
          }
        };
      });
}

Tensor scale(const Tensor& a, double factor) { return affine(a, factor, 0.0); }

// --------------------------------------------------------------------------
// Linear algebra
// --------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  TensorNode* an = require_node(a, "matmul");
  TensorNode* bn = require_node(b, "matmul");
  require_rank2(an, "matmul");
  require_rank2(bn, "matmul");
  const std::size_t m = an->shape[0], k = an->shape[1];
  const std::size_t k2 = bn->shape[0], n = bn->shape[1];
  if (k != k2) {
    throw ContractError("matmul: inner dimensions differ, " +
                        shape_str(an->shape) + " x " + shape_str(bn->shape));
  }
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = &an->values[i * k];
    double* orow = &out[i * n];
    for (std::size_t l = 0; l < k; ++l) {
      const double av = arow[l];
      const double* brow = &bn->values[l * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return install_backprop(
      make_op(Shape{m, n}, std::move(out), "matmul",
              {a.node_ptr(), b.node_ptr()}),
      [&](TensorNode* self) {
        return [self, an, bn] {
          const std::size_t m = an->shape[0], k = an->shape[1],
                            n = bn->shape[1];
          if (an->requires_grad) {
            // dA = dOut * B^T
            for (std::size_t i = 0; i < m; ++i) {
              const double* grow = &self->grad[i * n];
              for (std::size_t l = 0; l < k; ++l) {
                const double* brow = &bn->values[l * n];
                double s = 0.0;
                for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
                an->grad[i * k + l] += s;
              }
            }
          }
          if (bn->requires_grad) {
            // dB = A^T * dOut
            for (std::size_t i = 0; i < m; ++i) {
              const double* grow = &self->grad[i * n];
              const double* arow = &an->values[i * k];
              for (std::size_t l = 0; l < k; ++l) {
                const double av = arow[l];
                if (av == 0.0) continue;
                double* brow = &bn->grad[l * n];
                for (std::size_t j = 0; j < n; ++j) brow[j] += av * grow[j];
              }
            }
          }
        };
      });
}

Tensor transpose(const Tensor& a) {
  TensorNode* an = require_node(a, "transpose");
  require_rank2(an, "transpose");
  const std::size_t m = an->shape[0], n = an->shape[1];
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = an->values[i * n + j];
  }
  return install_backprop(
      make_op(Shape{n, m}, std::move(out), "transpose", {a.node_ptr()}),
      [&](TensorNode* self) {
        return [self, an] {
          const std::size_t m = an->shape[0], n = an->shape[1];
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
              an->grad[i * n + j] += self->grad[j * m + i];
            }
          }
        };
      });
}

Tensor add_rowwise(const Tensor& a, const Tensor& bias) {
  TensorNode* an = require_node(a, "add_rowwise");
  TensorNode* bn = require_node(bias, "add_rowwise");
  require_rank2(an, "add_rowwise");
  if (bn->shape.size() != 1 || bn->shape[0] != an->shape[1]) {
    throw ContractError("add_rowwise: bias shape " + shape_str(bn->shape) +
                        " does not match columns of " + shape_str(an->shape));
  }
  const std::size_t m = an->shape[0], n = an->shape[1];
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = an->values[i * n + j] + bn->values[j];
    }
  }
  return install_backprop(
      make_op(an->shape, std::move(out), "add_rowwise",
              {a.node_ptr(), bias.node_ptr()}),
      [&](TensorNode* self) {
        return [self, an, bn] {
          const std::size_t m = an->shape[0], n = an->shape[1];
          accumulate(an, self->grad);
          if (bn->requires_grad) {
            for (std::size_t i = 0; i < m; ++i) {
              for (std::size_t j = 0; j < n; ++j) {
                bn->grad[j] += self->grad[i * n + j];
              }
            }
          }
        };
      });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  std::vector<std::shared_ptr<TensorNode>> parents;
  parents.reserve(parts.size());
  for (const Tensor& t : parts) {
    require_node(t, "concat");
    parents.push_back(t.node_ptr());
  }
  const std::size_t rank = parents[0]->shape.size();
  for (const auto& p : parents) {
    if (p->shape.size() != rank) throw ContractError("concat: mixed ranks");
  }
  if (rank == 1 && axis == 0) {
    std::size_t total = 0;
    for (const auto& p : parents) total += p->shape[0];
    std::vector<double> out;
    out.reserve(total);
    for (const auto& p : parents) {
      out.insert(out.end(), p->values.begin(), p->values.end());
    }
    return install_backprop(
        make_op(Shape{total}, std::move(out), "concat", std::move(parents)),
        [&](TensorNode* self) {
          return [self] {
            std::size_t off = 0;
            for (auto& pp : self->parents) {
              TensorNode* p = pp.get();
              if (p->requires_grad) {
                for (std::size_t i = 0; i < p->values.size(); ++i) {
                  p->grad[i] += self->grad[off + i];
                }
              }
              off += p->values.size();
            }
          };
        });
  }
  if (rank == 2 && axis == 1) {
    const std::size_t m = parents[0]->shape[0];
    std::size_t total_cols = 0;
    for (const auto& p : parents) {
      if (p->shape[0] != m) throw ContractError("concat: row counts differ");
      total_cols += p->shape[1];
    }
    std::vector<double> out(m * total_cols);
    std::size_t off = 0;
    for (const auto& p : parents) {
      const std::size_t n = p->shape[1];
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          out[i * total_cols + off + j] = p->values[i * n + j];
        }
      }
      off += n;
    }
    return install_backprop(
        make_op(Shape{m, total_cols}, std::move(out), "concat",
                std::move(parents)),
        [&](TensorNode* self) {
          return [self] {
            const std::size_t m = self->shape[0];
            const std::size_t total = self->shape[1];
            std::size_t off = 0;
            for (auto& pp : self->parents) {
              TensorNode* p = pp.get();
              const std::size_t n = p->shape[1];
              if (p->requires_grad) {
                for (std::size_t i = 0; i < m; ++i) {
                  for (std::size_t j = 0; j < n; ++j) {
                    p->grad[i * n + j] += self->grad[i * total + off + j];
                  }
                }
              }
              off += n;
            }
          };
        });
  }
  throw ContractError("concat: unsupported rank/axis combination");
}

Tensor mean_rows(const Tensor& a) {
  TensorNode* an = require_node(a, "mean_rows");
  require_rank2(an, "mean_rows");
  const std::size_t m = an->shape[0], n = an->shape[1];
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j] += an->values[i * n + j];
  }
  for (double& x : out) x /= static_cast<double>(m);
  return install_backprop(
      make_op(Shape{1, n}, std::move(out), "mean_rows", {a.node_ptr()}),
      [&](TensorNode* self) {
        return [self, an] {
          const std::size_t m = an->shape[0], n = an->shape[1];
          const double inv = 1.0 / static_cast<double>(m);
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
              an->grad[i * n + j] += inv * self->grad[j];
            }
          }
        };
      });
}

Tensor reshape(const Tensor& a, Shape shape) {
  TensorNode* an = require_node(a, "reshape");
  if (shape_size(shape) != an->size()) {
    throw ContractError("reshape: size mismatch " + shape_str(an->shape) +
                        " -> " + shape_str(shape));
  }
  std::vector<double> out = an->values;
  return install_backprop(
      make_op(std::move(shape), std::move(out), "reshape", {a.node_ptr()},
              /*finite_check=*/false),
      [&](TensorNode* self) {
        return [self, an] { accumulate(an, self->grad); };
      });
}

// --------------------------------------------------------------------------
// Softmax family. Implemented for arbitrary rank along one axis via strided
// iteration over independent lines.
// --------------------------------------------------------------------------

namespace {

struct AxisIter {
  std::size_t len;     // entries per line
  std::size_t stride;  // distance between consecutive entries of a line
  std::size_t outer;   // distance between line groups
  std::size_t groups;  // number of line groups
};

AxisIter axis_iter(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw ContractError(std::string(op) + ": axis " + std::to_string(axis) +
                        " out of range for shape " + shape_str(shape));
  }
  AxisIter it{};
  it.len = shape[axis];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < shape.size(); ++d) inner *= shape[d];
  std::size_t outer_count = 1;
  for (std::size_t d = 0; d < axis; ++d) outer_count *= shape[d];
  it.stride = inner;
  it.outer = inner * it.len;
  it.groups = outer_count;
  return it;
}

// Calls fn(base_offset) once per line; entries of the line then live at
// base_offset + k * it.stride for k in [0, it.len).
template <typename Fn>
void for_each_line(const AxisIter& it, Fn&& fn) {
  for (std::size_t g = 0; g < it.groups; ++g) {
    for (std::size_t i = 0; i < it.stride; ++i) {
      fn(g * it.outer + i);
    }
  }
}

}  // namespace

Tensor softmax(const Tensor& a, std::size_t axis) {
  TensorNode* an = require_node(a, "softmax");
  check_finite(an->values, "softmax(input)");
  const AxisIter it = axis_iter(an->shape, axis, "softmax");
  std::vector<double> out(an->size());
  for_each_line(it, [&](std::size_t base) {
    double mx = -HUGE_VAL;
    for (std::size_t k = 0; k < it.len; ++k) {
      mx = std::max(mx, an->values[base + k * it.stride]);
    }
    double denom = 0.0;
    for (std::size_t k = 0; k < it.len; ++k) {
      const double e = std::exp(an->values[base + k * it.stride] - mx);
      out[base + k * it.stride] = e;
      denom += e;
    }
    for (std::size_t k = 0; k < it.len; ++k) {
      out[base + k * it.stride] /= denom;
    }
  });
  return install_backprop(
      make_op(an->shape, std::move(out), "softmax", {a.node_ptr()}),
      [&](TensorNode* self) {
        return [self, an, axis] {
          const AxisIter it = axis_iter(self->shape, axis, "softmax");
          for_each_line(it, [&](std::size_t base) {
            double dot = 0.0;
            for (std::size_t k = 0; k < it.len; ++k) {
              const std::size_t idx = base + k * it.stride;
              dot += self->grad[idx] * self->values[idx];
            }
            for (std::size_t k = 0; k < it.len; ++k) {
              const std::size_t idx = base + k * it.stride;
              an->grad[idx] += self->values[idx] * (self->grad[idx] - dot);
            }
          });
        };
      });
}

Tensor log_softmax(const Tensor& a, std::size_t axis) {
  TensorNode* an = require_node(a, "log_softmax");
  check_finite(an->values, "log_softmax(input)");
  const AxisIter it = axis_iter(an->shape, axis, "log_softmax");
  std::vector<double> out(an->size());
  for_each_line(it, [&](std::size_t base) {
    double mx = -HUGE_VAL;
    for (std::size_t k = 0; k < it.len; ++k) {
      mx = std::max(mx, an->values[base + k * it.stride]);
    }
    double denom = 0.0;
    for (std::size_t k = 0; k < it.len; ++k) {
      denom += std::exp(an->values[base + k * it.stride] - mx);
    }
    const double lse = mx + std::log(denom);
    for (std::size_t k = 0; k < it.len; ++k) {
      out[base + k * it.stride] = an->values[base + k * it.stride] - lse;
    }
  });
  return install_backprop(
      make_op(an->shape, std::move(out), "log_softmax", {a.node_ptr()}),
      [&](TensorNode* self) {
        return [self, an, axis] {
          const AxisIter it = axis_iter(self->shape, axis, "log_softmax");
          for_each_line(it, [&](std::size_t base) {
            double gsum = 0.0;
            for (std::size_t k = 0; k < it.len; ++k) {
              gsum += self->grad[base + k * it.stride];
            }
            for (std::size_t k = 0; k < it.len; ++k) {
              const std::size_t idx = base + k * it.stride;
              an->grad[idx] +=
                  self->grad[idx] - std::exp(self->values[idx]) * gsum;
            }
          });
        };
      });
}

// --------------------------------------------------------------------------
// Pointwise nonlinearities
// --------------------------------------------------------------------------

Tensor exp(const Tensor& a) {
  TensorNode* an = require_node(a, "exp");
  std::vector<double> out(an->size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(an->values[i]);
  return install_backprop(
      make_op(an->shape, std::move(out), "exp", {a.node_ptr()}),
      [&](TensorNode* self) {
        return [self, an] {
          for (std::size_t i = 0; i < self->grad.size(); ++i) {
            an->grad[i] += self->grad[i] * self->values[i];
          }
        };
      });
}

Tensor log(const Tensor& a) {
  TensorNode* an = require_node(a, "log");
  std::vector<double> out(an->size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(an->values[i]);
  return install_backprop(
      make_op(an->shape, std::move(out), "log", {a.node_ptr()}),
      [&](TensorNode* self) {
        return [self, an] {
          for (std::size_t i = 0; i < self->grad.size(); ++i) {
            an->grad[i] += self->grad[i] / an->values[i];
          }
        };
      });
}

Tensor pow_const(const Tensor& a, double p) {
  TensorNode* an = require_node(a, "pow_const");
  if (!(p >= 0.0) || !std::isfinite(p)) {
    throw ContractError("pow_const: exponent must be finite and >= 0");
  }
  if (p == 0.0) {
    // Constant one with zero gradient, so a zero focusing exponent degrades
    // exactly to the unmodulated loss instead of hitting 0^(-1).
    std::vector<double> out(an->size(), 1.0);
    return make_op(an->shape, std::move(out), "pow_const", {a.node_ptr()});
  }
  std::vector<double> out(an->size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::pow(an->values[i], p);
  }
  return install_backprop(
      make_op(an->shape, std::move(out), "pow_const", {a.node_ptr()}),
      [&](TensorNode* self) {
        return [self, an, p] {
          for (std::size_t i = 0; i < self->grad.size(); ++i) {
            const double x = an->values[i];
            double d;
            if (x == 0.0) {
              d = (p == 1.0) ? 1.0 : 0.0;  // finite convention at the edge
            } else {
              d = p * std::pow(x, p - 1.0);
            }
            an->grad[i] += self->grad[i] * d;
          }
        };
      });
}

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

Tensor gelu(const Tensor& a) {
  TensorNode* an = require_node(a, "gelu");
  std::vector<double> out(an->size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = an->values[i];
    out[i] = x * 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  }
  return install_backprop(
      make_op(an->shape, std::move(out), "gelu", {a.node_ptr()}),
      [&](TensorNode* self) {
        return [self, an] {
          for (std::size_t i = 0; i < self->grad.size(); ++i) {
            const double x = an->values[i];
            const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
            an->grad[i] += self->grad[i] * (cdf + x * pdf);
          }
        };
      });
}

Tensor relu(const Tensor& a) {
  TensorNode* an = require_node(a, "relu");
  std::vector<double> out(an->size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = an->values[i] > 0.0 ? an->values[i] : 0.0;
  }
  return install_backprop(
      make_op(an->shape, std::move(out), "relu", {a.node_ptr()}),
      [&](TensorNode* self) {
        return [self, an] {
          for (std::size_t i = 0; i < self->grad.size(); ++i) {
            if (an->values[i] > 0.0) an->grad[i] += self->grad[i];
          }
        };
      });
}

// --------------------------------------------------------------------------
// Layer norm, dropout, normalization
// --------------------------------------------------------------------------

Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  TensorNode* an = require_node(a, "layer_norm");
  TensorNode* gn = require_node(gamma, "layer_norm");
  TensorNode* bn = require_node(beta, "layer_norm");
  require_rank2(an, "layer_norm");
  const std::size_t m = an->shape[0], n = an->shape[1];
  if (gn->shape != Shape{n} || bn->shape != Shape{n}) {
    throw ContractError("layer_norm: gamma/beta must have shape (cols)");
  }
  if (eps <= 0.0) throw ContractError("layer_norm: eps must be positive");
  std::vector<double> out(m * n);
  std::vector<double> xhat(m * n);
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = &an->values[i * n];
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = row[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double xh = (row[j] - mean) * is;
      xhat[i * n + j] = xh;
      out[i * n + j] = gn->values[j] * xh + bn->values[j];
    }
  }
  return install_backprop(
      make_op(an->shape, std::move(out), "layer_norm",
              {a.node_ptr(), gamma.node_ptr(), beta.node_ptr()}),
      [&](TensorNode* self) {
        return [self, an, gn, bn, xhat = std::move(xhat),
                inv_std = std::move(inv_std)] {
          const std::size_t m = an->shape[0], n = an->shape[1];
          for (std::size_t i = 0; i < m; ++i) {
            const double* g = &self->grad[i * n];
            const double* xh = &xhat[i * n];
            for (std::size_t j = 0; j < n; ++j) {
              if (gn->requires_grad) gn->grad[j] += g[j] * xh[j];
              if (bn->requires_grad) bn->grad[j] += g[j];
            }
            if (an->requires_grad) {
              double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
              for (std::size_t j = 0; j < n; ++j) {
                const double dxh = g[j] * gn->values[j];
                sum_dxhat += dxh;
                sum_dxhat_xhat += dxh * xh[j];
              }
              const double invn = 1.0 / static_cast<double>(n);
              for (std::size_t j = 0; j < n; ++j) {
                const double dxh = g[j] * gn->values[j];
                an->grad[i * n + j] +=
                    inv_std[i] *
                    (dxh - invn * sum_dxhat - xh[j] * invn * sum_dxhat_xhat);
              }
            }
          }
        };
      });
}

Tensor dropout(const Tensor& a, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ContractError("dropout: rate must be in [0, 1)");
  }
  require_node(a, "dropout");
  // Evaluation mode is the identity and consumes no randomness, so repeated
  // evaluation passes cannot perturb a run's random stream.
  if (!training || rate == 0.0) return a;
  TensorNode* an = a.node();
  const double keep = 1.0 - rate;
  std::vector<double> mask(an->size());
  for (double& mij : mask) {
    mij = (rng.uniform() >= rate) ? 1.0 / keep : 0.0;
  }
  std::vector<double> out(an->size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = an->values[i] * mask[i];
  }
  return install_backprop(
      make_op(an->shape, std::move(out), "dropout", {a.node_ptr()}),
      [&](TensorNode* self) {
        return [self, an, mask = std::move(mask)] {
          for (std::size_t i = 0; i < self->grad.size(); ++i) {
            an->grad[i] += self->grad[i] * mask[i];
          }
        };
      });
}

Tensor l2_normalize(const Tensor& a) {
  TensorNode* an = require_node(a, "l2_normalize");
  if (an->shape.size() != 1) {
    throw ContractError("l2_normalize: expected rank-1 tensor");
  }
  const std::size_t n = an->shape[0];
  double sq = 0.0;
  for (double x : an->values) sq += x * x;
  // The tiny floor keeps a zero vector finite while leaving any reasonably
  // sized input at unit length well within 1e-12.
  const double norm = std::sqrt(sq + 1e-24);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = an->values[i] / norm;
  return install_backprop(
      make_op(an->shape, std::move(out), "l2_normalize", {a.node_ptr()}),
      [&](TensorNode* self) {
        return [self, an, norm] {
          const std::size_t n = an->shape[0];
          double dot = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            dot += self->grad[i] * an->values[i];
          }
          const double inv = 1.0 / norm;
          const double inv3 = inv * inv * inv;
          for (std::size_t i = 0; i < n; ++i) {
            an->grad[i] += self->grad[i] * inv - an->values[i] * dot * inv3;
          }
        };
      });
}

// --------------------------------------------------------------------------
// Reductions and gathers
// --------------------------------------------------------------------------

Tensor sum(const Tensor& a) {
  TensorNode* an = require_node(a, "sum");
  double s = 0.0;
  for (double x : an->values) s += x;
  return install_backprop(
      make_op(Shape{1}, {s}, "sum", {a.node_ptr()}), [&](TensorNode* self) {
        return [self, an] {
          const double g = self->grad[0];
          for (double& gi : an->grad) gi += g;
        };
      });
}

Tensor mean_all(const Tensor& a) {
  TensorNode* an = require_node(a, "mean_all");
  double s = 0.0;
  for (double x : an->values) s += x;
  s /= static_cast<double>(an->size());
  return install_backprop(
      make_op(Shape{1}, {s}, "mean_all", {a.node_ptr()}),
      [&](TensorNode* self) {
        return [self, an] {
          const double g = self->grad[0] / static_cast<double>(an->size());
          for (double& gi : an->grad) gi += g;
        };
      });
}

Tensor embedding_rows(const Tensor& table, std::span<const std::size_t> ids) {
  TensorNode* tn = require_node(table, "embedding_rows");
  require_rank2(tn, "embedding_rows");
  if (ids.empty()) throw ContractError("embedding_rows: empty id list");
  const std::size_t v = tn->shape[0], e = tn->shape[1];
  for (std::size_t id : ids) {
    if (id >= v) {
      throw ContractError("embedding_rows: id " + std::to_string(id) +
                          " out of vocabulary of size " + std::to_string(v));
    }
  }
  const std::size_t l = ids.size();
  std::vector<double> out(l * e);
  for (std::size_t i = 0; i < l; ++i) {
    const double* row = &tn->values[ids[i] * e];
    std::copy(row, row + e, &out[i * e]);
  }
  std::vector<std::size_t> idv(ids.begin(), ids.end());
  return install_backprop(
      make_op(Shape{l, e}, std::move(out), "embedding_rows",
              {table.node_ptr()}),
      [&](TensorNode* self) {
        return [self, tn, idv = std::move(idv)] {
          const std::size_t e = tn->shape[1];
          for (std::size_t i = 0; i < idv.size(); ++i) {
            double* dst = &tn->grad[idv[i] * e];
            const double* src = &self->grad[i * e];
            for (std::size_t j = 0; j < e; ++j) dst[j] += src[j];
          }
        };
      });
}

// --------------------------------------------------------------------------
// ParameterSet / GradientMap
// --------------------------------------------------------------------------

Tensor& ParameterSet::add(const std::string& name, Tensor t) {
  if (index_.count(name)) {
    throw ContractError("ParameterSet: duplicate name '" + name + "'");
  }
  if (!t.defined() || !t.requires_grad()) {
    throw ContractError("ParameterSet: '" + name +
                        "' must be a defined tensor with requires_grad");
  }
  index_[name] = items_.size();
  items_.emplace_back(name, std::move(t));
  return items_.back().second;
}

bool ParameterSet::contains(const std::string& name) const {
  return index_.count(name) != 0;
}

Tensor& ParameterSet::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw ContractError("ParameterSet: unknown name '" + name + "'");
  }
  return items_[it->second].second;
}

const Tensor& ParameterSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw ContractError("ParameterSet: unknown name '" + name + "'");
  }
  return items_[it->second].second;
}

std::size_t ParameterSet::total_values() const {
  std::size_t n = 0;
  for (const auto& [name, t] : items_) n += t.size();
  return n;
}

void ParameterSet::zero_grads() {
  for (auto& [name, t] : items_) t.zero_grad();
}

void GradientMap::set(const std::string& name, Tensor grad) {
  grads_[name] = std::move(grad);
}

bool GradientMap::contains(const std::string& name) const {
  return grads_.count(name) != 0;
}

const Tensor& GradientMap::at(const std::string& name) const {
  auto it = grads_.find(name);
  if (it == grads_.end()) {
    throw ContractError("GradientMap: unknown name '" + name + "'");
  }
  return it->second;
}

double GradientMap::global_l2_norm() const {
  double sq = 0.0;
  for (const auto& [name, g] : grads_) {
    for (double x : g.values()) sq += x * x;
  }
  return std::sqrt(sq);
}

// --------------------------------------------------------------------------
// Backward
// --------------------------------------------------------------------------

namespace {

// Iterative post-order DFS. Cycles cannot be built through the public API
// but are still detected rather than hanging.
std::vector<TensorNode*> topo_order(TensorNode* root) {
  enum class Mark : std::uint8_t { open, done };
  std::unordered_map<TensorNode*, Mark> marks;
  std::vector<TensorNode*> order;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  marks[root] = Mark::open;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* parent = node->parents[next].get();
      ++next;
      auto it = marks.find(parent);
      if (it == marks.end()) {
        marks[parent] = Mark::open;
        stack.emplace_back(parent, 0);
      } else if (it->second == Mark::open) {
        throw ContractError("backward: cycle detected in graph");
      }
    } else {
      marks[node] = Mark::done;
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // parents before children
}

}  // namespace

void backward(const Tensor& loss) {
  TensorNode* root = require_node(loss, "backward");
  if (root->values.size() != 1) {
    throw ContractError("backward: loss must be a scalar tensor");
  }
  if (!root->requires_grad) {
    throw ContractError("backward: loss does not require gradients");
  }
  if (!std::isfinite(root->values[0])) {
    throw NumericalError("backward: loss is not finite");
  }
  std::vector<TensorNode*> order = topo_order(root);
  for (TensorNode* node : order) {
    if (node->requires_grad) {
      std::fill(node->grad.begin(), node->grad.end(), 0.0);
    }
  }
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* node = *it;
    if (node->backprop) node->backprop();
  }
}

GradientMap backward(const Tensor& loss, const ParameterSet& params) {
  for (const auto& [name, t] : params.items()) {
    const_cast<Tensor&>(t).zero_grad();
  }
  backward(loss);
  GradientMap out;
  for (const auto& [name, t] : params.items()) {
    out.set(name, t.grad_tensor());
  }
  return out;
}

}  // namespace memefuse
