#ifndef MODELAB_TENSOR_HPP
#define MODELAB_TENSOR_HPP

#include <functional>
#include <initializer_list>
#include <memory>
#include <vector>

#include "modelab/errors.hpp"
#include "modelab/types.hpp"

namespace modelab {

class Tape;

/// Shapes are rank 0 (scalar), 1 (vector) or 2 (matrix); data is flat row-major.
using Shape = std::vector<Index>;

Index shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl {
  Shape shape;
  vec value;  // flat, row-major
  vec grad;   // same length, zeroed until a backward pass touches it
  bool requires_grad = false;
  int node = -1;        // tape node that produced this tensor, -1 for leaves
  Tape* tape = nullptr; // tape the node lives on
};

/** Dense value with an optional record on the active differentiation tape.
 *
 * Tensor is a shared handle: copies alias the same storage, so parameter
 * updates through one handle are visible through all of them.
 */
class Tensor {
 public:
  Tensor() = default;

  static Tensor scalar(real v);
  static Tensor from_vec(const vec& v);
  static Tensor from_mat(const mat& m);
  static Tensor zeros(const Shape& shape);
  /// Leaf tensor whose gradient is populated by backward passes. Rank is
  /// taken from the expression: one compile-time column means a vector.
  template <class Derived>
  static Tensor param(const Eigen::MatrixBase<Derived>& expr);

  bool defined() const { return static_cast<bool>(p_); }
  const Shape& shape() const { return p_->shape; }
  int rank() const { return static_cast<int>(p_->shape.size()); }
  Index size() const { return p_->value.size(); }
  Index rows() const;
  Index cols() const;

  const vec& value() const { return p_->value; }
  vec& value() { return p_->value; }
  const vec& grad() const { return p_->grad; }
  vec& grad() { return p_->grad; }
  bool requires_grad() const { return p_->requires_grad; }

  /// Rank-0 access.
  real item() const;

  const_mat_view as_matrix() const;  // rank 2
  mat to_matrix() const { return mat(as_matrix()); }

  /// Same value, detached from any tape, no gradient tracking.
  Tensor detach() const;

  std::shared_ptr<TensorImpl> impl() const { return p_; }

 private:
  friend class Tape;
  friend Tensor make_tensor(Shape shape, vec value);
  explicit Tensor(std::shared_ptr<TensorImpl> p) : p_(std::move(p)) {}
  std::shared_ptr<TensorImpl> p_;
};

/** Append-only record of executed operations.
 *
 * Nodes are appended in execution order, so every node's parents precede
 * it and a single reverse sweep visits each node exactly once. Exactly one
 * tape may be active per thread; independent workers get independent tapes.
 */
class Tape {
 public:
  struct Node {
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::shared_ptr<TensorImpl> result;
    std::function<void()> backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  std::size_t node_count() const { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_[i]; }

  int record(std::vector<std::shared_ptr<TensorImpl>> parents,
             std::shared_ptr<TensorImpl> result, std::function<void()> backward);

 private:
  friend class TapeScope;
  friend void backward(const Tensor& loss);
  std::vector<Node> nodes_;
};

/// RAII activation of a tape on the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Reverse-mode sweep from a scalar loss; populates grads of every tensor
/// reachable from it. Gradients are zeroed first, so each call stands alone.
void backward(const Tensor& loss);

Tensor make_tensor(Shape shape, vec value);

template <class Derived>
Tensor Tensor::param(const Eigen::MatrixBase<Derived>& expr) {
  Tensor t;
  if constexpr (Derived::ColsAtCompileTime == 1) {
    t = from_vec(expr);
  } else {
    t = from_mat(expr);
  }
  t.p_->requires_grad = true;
  return t;
}

// ---------------------------------------------------------------------------
// Forward kernels. Each records a tape node when a tape is active and any
// input is tracked on it.
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);  // same shape, or {m,n}+{n} row broadcast
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, real c);
Tensor add_const(const Tensor& a, real c);
Tensor max_const(const Tensor& a, real c);  // gradient 0 where a == c
Tensor min_const(const Tensor& a, real c);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, real slope);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor log(const Tensor& a);  // DomainError unless all entries positive
Tensor square(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// sqrt(sum(a^2) + epsilon); the epsilon keeps the gradient finite at the origin.
Tensor euclidean_norm(const Tensor& a, real epsilon = 1e-12);
Tensor rowwise_norm(const Tensor& a, real epsilon = 1e-12);  // {m,n} -> {m,1}
Tensor div_by_scalar(const Tensor& a, const Tensor& s);      // s rank 0
Tensor rowwise_div(const Tensor& a, const Tensor& r);        // {m,n} / {m,1}
Tensor concat(const Tensor& a, const Tensor& b);  // vectors end-to-end, matrices by columns
Tensor one_hot_embed(int hot, int width);         // constant
Tensor row(const Tensor& a, Index i);             // {m,n} -> {n}

}  // namespace modelab

#endif
