#include "modelab/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>
#include <utility>

namespace modelab {

namespace {

thread_local Tape* g_active_tape = nullptr;

bool tracked(const std::shared_ptr<TensorImpl>& p) {
  if (!p) return false;
  if (p->requires_grad) return true;
  return p->node >= 0 && p->tape == g_active_tape;
}

Eigen::Map<const mat> val2(const std::shared_ptr<TensorImpl>& t, Index r, Index c) {
  return Eigen::Map<const mat>(t->value.data(), r, c);
}

Eigen::Map<mat> grad2(const std::shared_ptr<TensorImpl>& t, Index r, Index c) {
  return Eigen::Map<mat>(t->grad.data(), r, c);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeMismatch(std::string(op) + ": " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
  }
}

void maybe_record(Tensor& out, std::initializer_list<Tensor> parents,
                  std::function<void()> backward_fn) {
  Tape* tape = g_active_tape;
  if (!tape) return;
  bool any = false;
  for (const Tensor& p : parents) any = any || tracked(p.impl());
  if (!any) return;
  std::vector<std::shared_ptr<TensorImpl>> parent_impls;
  parent_impls.reserve(parents.size());
  for (const Tensor& p : parents) parent_impls.push_back(p.impl());
  out.impl()->node = tape->record(std::move(parent_impls), out.impl(), std::move(backward_fn));
  out.impl()->tape = tape;
}

/// Elementwise unary op; df maps (input value, output value) to the local
/// derivative.
template <class F, class DF>
Tensor elementwise(const Tensor& a, F f, DF df) {
  vec out(a.size());
  for (Index i = 0; i < a.size(); ++i) out[i] = f(a.value()[i]);
  Tensor result = make_tensor(a.shape(), std::move(out));
  auto ap = a.impl();
  auto rp = result.impl();
  maybe_record(result, {a}, [ap, rp, df]() {
    for (Index i = 0; i < ap->value.size(); ++i) {
      ap->grad[i] += rp->grad[i] * df(ap->value[i], rp->value[i]);
    }
  });
  return result;
}

}  // namespace

Index shape_size(const Shape& shape) {
  Index n = 1;
  for (Index e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '{';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << '}';
  return os.str();
}

Tensor make_tensor(Shape shape, vec value) {
  if (shape_size(shape) != value.size()) {
    throw ShapeMismatch("tensor data length " + std::to_string(value.size()) +
                        " does not match shape " + shape_str(shape));
  }
  auto p = std::make_shared<TensorImpl>();
  p->shape = std::move(shape);
  p->value = std::move(value);
  p->grad = vec::Zero(p->value.size());
  return Tensor(std::move(p));
}

Tensor Tensor::scalar(real v) {
  vec d(1);
  d[0] = v;
  return make_tensor({}, std::move(d));
}

Tensor Tensor::from_vec(const vec& v) { return make_tensor({v.size()}, v); }

Tensor Tensor::from_mat(const mat& m) {
  vec flat(m.size());
  Eigen::Map<mat>(flat.data(), m.rows(), m.cols()) = m;
  return make_tensor({m.rows(), m.cols()}, std::move(flat));
}

Tensor Tensor::zeros(const Shape& shape) {
  return make_tensor(shape, vec::Zero(shape_size(shape)));
}

Index Tensor::rows() const { return rank() >= 1 ? p_->shape[0] : 1; }

Index Tensor::cols() const { return rank() == 2 ? p_->shape[1] : 1; }

real Tensor::item() const {
  if (size() != 1) {
    throw ShapeMismatch("item() on tensor of shape " + shape_str(p_->shape));
  }
  return p_->value[0];
}

const_mat_view Tensor::as_matrix() const {
  if (rank() != 2) {
    throw ShapeMismatch("as_matrix() on tensor of shape " + shape_str(p_->shape));
  }
  return const_mat_view(p_->value.data(), p_->shape[0], p_->shape[1]);
}

Tensor Tensor::detach() const { return make_tensor(p_->shape, p_->value); }

Tape* Tape::active() { return g_active_tape; }

int Tape::record(std::vector<std::shared_ptr<TensorImpl>> parents,
                 std::shared_ptr<TensorImpl> result, std::function<void()> backward) {
  nodes_.push_back(Node{std::move(parents), std::move(result), std::move(backward)});
  return static_cast<int>(nodes_.size()) - 1;
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.rank() != 0 || loss.size() != 1) {
    throw NonScalarLoss("backward requires a rank-0 tensor, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<empty>")));
  }
  Tape* tape = g_active_tape;
  if (!tape) throw NoActiveTape("backward called with no active tape");
  auto lp = loss.impl();
  if (lp->node < 0 || lp->tape != tape) {
    throw NoActiveTape("loss was not produced under the active tape");
  }

  // Mark the sub-graph that actually feeds the loss.
  std::vector<char> reachable(tape->nodes_.size(), 0);
  std::vector<int> stack{lp->node};
  reachable[lp->node] = 1;
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    for (const auto& parent : tape->nodes_[id].parents) {
      if (parent->node >= 0 && parent->tape == tape && !reachable[parent->node]) {
        reachable[parent->node] = 1;
        stack.push_back(parent->node);
      }
    }
  }

  // Zero every gradient the sweep can touch, once.
  std::unordered_set<TensorImpl*> zeroed;
  auto zero_once = [&zeroed](const std::shared_ptr<TensorImpl>& p) {
    if (zeroed.insert(p.get()).second) p->grad.setZero();
  };
  for (std::size_t id = 0; id < tape->nodes_.size(); ++id) {
    if (!reachable[id]) continue;
    zero_once(tape->nodes_[id].result);
    for (const auto& parent : tape->nodes_[id].parents) zero_once(parent);
  }

  lp->grad[0] = 1.0;
  for (int id = lp->node; id >= 0; --id) {
    if (reachable[id]) tape->nodes_[id].backward();
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  Index m, k, k2, n;
  if (a.rank() == 2) {
    m = a.shape()[0];
    k = a.shape()[1];
  } else if (a.rank() == 1) {
    m = 1;
    k = a.shape()[0];
  } else {
    throw ShapeMismatch("matmul lhs must be rank 1 or 2, got " + shape_str(a.shape()));
  }
  if (b.rank() == 2) {
    k2 = b.shape()[0];
    n = b.shape()[1];
  } else if (b.rank() == 1) {
    k2 = b.shape()[0];
    n = 1;
  } else {
    throw ShapeMismatch("matmul rhs must be rank 1 or 2, got " + shape_str(b.shape()));
  }
  if (k != k2) {
    throw ShapeMismatch("matmul inner extents: " + shape_str(a.shape()) + " x " +
                        shape_str(b.shape()));
  }
  if (a.rank() == 1 && b.rank() == 1) {
    throw ShapeMismatch("matmul of two rank-1 tensors is ambiguous");
  }

  vec out(m * n);
  Eigen::Map<mat>(out.data(), m, n) =
      Eigen::Map<const mat>(a.value().data(), m, k) *
      Eigen::Map<const mat>(b.value().data(), k, n);

  Shape shape = (a.rank() == 2 && b.rank() == 2) ? Shape{m, n}
                : (a.rank() == 1 ? Shape{n} : Shape{m});
  Tensor result = make_tensor(std::move(shape), std::move(out));
  auto ap = a.impl();
  auto bp = b.impl();
  auto rp = result.impl();
  maybe_record(result, {a, b}, [ap, bp, rp, m, k, n]() {
    Eigen::Map<const mat> g(rp->grad.data(), m, n);
    grad2(ap, m, k).noalias() += g * val2(bp, k, n).transpose();
    grad2(bp, k, n).noalias() += val2(ap, m, k).transpose() * g;
  });
  return result;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.rank() == 2 && b.rank() == 1 && a.shape()[1] == b.shape()[0]) {
    const Index m = a.shape()[0], n = a.shape()[1];
    vec out(m * n);
    Eigen::Map<mat>(out.data(), m, n) = val2(a.impl(), m, n).rowwise() + b.value().transpose();
    Tensor result = make_tensor({m, n}, std::move(out));
    auto ap = a.impl();
    auto bp = b.impl();
    auto rp = result.impl();
    maybe_record(result, {a, b}, [ap, bp, rp, m, n]() {
      Eigen::Map<const mat> g(rp->grad.data(), m, n);
      grad2(ap, m, n) += g;
      bp->grad += g.colwise().sum().transpose();
    });
    return result;
  }
  require_same_shape(a, b, "add");
  Tensor result = make_tensor(a.shape(), a.value() + b.value());
  auto ap = a.impl();
  auto bp = b.impl();
  auto rp = result.impl();
  maybe_record(result, {a, b}, [ap, bp, rp]() {
    ap->grad += rp->grad;
    bp->grad += rp->grad;
  });
  return result;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor result = make_tensor(a.shape(), a.value() - b.value());
  auto ap = a.impl();
  auto bp = b.impl();
  auto rp = result.impl();
  maybe_record(result, {a, b}, [ap, bp, rp]() {
    ap->grad += rp->grad;
    bp->grad -= rp->grad;
  });
  return result;
}

Tensor scale(const Tensor& a, real c) {
  return elementwise(a, [c](real x) { return c * x; }, [c](real, real) { return c; });
}

Tensor add_const(const Tensor& a, real c) {
  return elementwise(a, [c](real x) { return x + c; }, [](real, real) { return 1.0; });
}

Tensor max_const(const Tensor& a, real c) {
  return elementwise(
      a, [c](real x) { return x > c ? x : c; },
      [c](real x, real) { return x > c ? 1.0 : 0.0; });
}

Tensor min_const(const Tensor& a, real c) {
  return elementwise(
      a, [c](real x) { return x < c ? x : c; },
      [c](real x, real) { return x < c ? 1.0 : 0.0; });
}

Tensor relu(const Tensor& a) { return max_const(a, 0.0); }

Tensor leaky_relu(const Tensor& a, real slope) {
  return elementwise(
      a, [slope](real x) { return x > 0 ? x : slope * x; },
      [slope](real x, real) { return x > 0 ? 1.0 : slope; });
}

Tensor tanh(const Tensor& a) {
  return elementwise(a, [](real x) { return std::tanh(x); },
                     [](real, real y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  auto sig = [](real x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const real e = std::exp(x);
    return e / (1.0 + e);
  };
  return elementwise(a, sig, [](real, real y) { return y * (1.0 - y); });
}

Tensor log(const Tensor& a) {
  for (Index i = 0; i < a.size(); ++i) {
    if (!(a.value()[i] > 0.0)) {
      throw DomainError("log of non-positive value " + std::to_string(a.value()[i]));
    }
  }
  return elementwise(a, [](real x) { return std::log(x); },
                     [](real x, real) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
  return elementwise(a, [](real x) { return x * x; },
                     [](real x, real) { return 2.0 * x; });
}

Tensor sum(const Tensor& a) {
  Tensor result = Tensor::scalar(a.value().sum());
  auto ap = a.impl();
  auto rp = result.impl();
  maybe_record(result, {a}, [ap, rp]() { ap->grad.array() += rp->grad[0]; });
  return result;
}

Tensor mean(const Tensor& a) {
  const real inv = 1.0 / static_cast<real>(a.size());
  Tensor result = Tensor::scalar(a.value().sum() * inv);
  auto ap = a.impl();
  auto rp = result.impl();
  maybe_record(result, {a}, [ap, rp, inv]() { ap->grad.array() += rp->grad[0] * inv; });
  return result;
}

Tensor euclidean_norm(const Tensor& a, real epsilon) {
  const real norm = std::sqrt(a.value().squaredNorm() + epsilon);
  Tensor result = Tensor::scalar(norm);
  auto ap = a.impl();
  auto rp = result.impl();
  maybe_record(result, {a}, [ap, rp]() {
    ap->grad += (rp->grad[0] / rp->value[0]) * ap->value;
  });
  return result;
}

Tensor rowwise_norm(const Tensor& a, real epsilon) {
  if (a.rank() != 2) {
    throw ShapeMismatch("rowwise_norm expects rank 2, got " + shape_str(a.shape()));
  }
  const Index m = a.shape()[0], n = a.shape()[1];
  vec out(m);
  auto av = val2(a.impl(), m, n);
  for (Index i = 0; i < m; ++i) out[i] = std::sqrt(av.row(i).squaredNorm() + epsilon);
  Tensor result = make_tensor({m, 1}, std::move(out));
  auto ap = a.impl();
  auto rp = result.impl();
  maybe_record(result, {a}, [ap, rp, m, n]() {
    auto av2 = val2(ap, m, n);
    auto ag = grad2(ap, m, n);
    for (Index i = 0; i < m; ++i) {
      ag.row(i) += (rp->grad[i] / rp->value[i]) * av2.row(i);
    }
  });
  return result;
}

Tensor div_by_scalar(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) {
    throw ShapeMismatch("div_by_scalar divisor must be rank 0, got " + shape_str(s.shape()));
  }
  const real sv = s.value()[0];
  Tensor result = make_tensor(a.shape(), a.value() / sv);
  auto ap = a.impl();
  auto sp = s.impl();
  auto rp = result.impl();
  maybe_record(result, {a, s}, [ap, sp, rp]() {
    const real sv2 = sp->value[0];
    ap->grad += rp->grad / sv2;
    sp->grad[0] -= rp->grad.dot(ap->value) / (sv2 * sv2);
  });
  return result;
}

Tensor rowwise_div(const Tensor& a, const Tensor& r) {
  if (a.rank() != 2 || r.rank() != 2 || r.shape()[1] != 1 || r.shape()[0] != a.shape()[0]) {
    throw ShapeMismatch("rowwise_div expects {m,n} / {m,1}, got " + shape_str(a.shape()) +
                        " / " + shape_str(r.shape()));
  }
  const Index m = a.shape()[0], n = a.shape()[1];
  vec out(m * n);
  {
    Eigen::Map<mat> ov(out.data(), m, n);
    auto av = val2(a.impl(), m, n);
    for (Index i = 0; i < m; ++i) ov.row(i) = av.row(i) / r.value()[i];
  }
  Tensor result = make_tensor({m, n}, std::move(out));
  auto ap = a.impl();
  auto dp = r.impl();
  auto rp = result.impl();
  maybe_record(result, {a, r}, [ap, dp, rp, m, n]() {
    Eigen::Map<const mat> g(rp->grad.data(), m, n);
    auto av = val2(ap, m, n);
    auto ag = grad2(ap, m, n);
    for (Index i = 0; i < m; ++i) {
      const real d = dp->value[i];
      ag.row(i) += g.row(i) / d;
      dp->grad[i] -= g.row(i).dot(av.row(i)) / (d * d);
    }
  });
  return result;
}

Tensor concat(const Tensor& a, const Tensor& b) {
  if (a.rank() == 1 && b.rank() == 1) {
    const Index p = a.size(), q = b.size();
    vec out(p + q);
    out.head(p) = a.value();
    out.tail(q) = b.value();
    Tensor result = make_tensor({p + q}, std::move(out));
    auto ap = a.impl();
    auto bp = b.impl();
    auto rp = result.impl();
    maybe_record(result, {a, b}, [ap, bp, rp, p, q]() {
      ap->grad += rp->grad.head(p);
      bp->grad += rp->grad.tail(q);
    });
    return result;
  }
  if (a.rank() == 2 && b.rank() == 2 && a.shape()[0] == b.shape()[0]) {
    const Index m = a.shape()[0], p = a.shape()[1], q = b.shape()[1];
    vec out(m * (p + q));
    {
      Eigen::Map<mat> ov(out.data(), m, p + q);
      ov.leftCols(p) = val2(a.impl(), m, p);
      ov.rightCols(q) = val2(b.impl(), m, q);
    }
    Tensor result = make_tensor({m, p + q}, std::move(out));
    auto ap = a.impl();
    auto bp = b.impl();
    auto rp = result.impl();
    maybe_record(result, {a, b}, [ap, bp, rp, m, p, q]() {
      Eigen::Map<const mat> g(rp->grad.data(), m, p + q);
      grad2(ap, m, p) += g.leftCols(p);
      grad2(bp, m, q) += g.rightCols(q);
    });
    return result;
  }
  throw ShapeMismatch("concat expects two vectors or two matrices with equal rows, got " +
                      shape_str(a.shape()) + " and " + shape_str(b.shape()));
}

Tensor one_hot_embed(int hot, int width) {
  if (hot < 0 || hot >= width) {
    throw ShapeMismatch("one_hot_embed Index " + std::to_string(hot) + " out of range [0," +
                        std::to_string(width) + ")");
  }
  vec out = vec::Zero(width);
  out[hot] = 1.0;
  return make_tensor({static_cast<Index>(width)}, std::move(out));
}

Tensor row(const Tensor& a, Index i) {
  if (a.rank() != 2) {
    throw ShapeMismatch("row expects rank 2, got " + shape_str(a.shape()));
  }
  const Index m = a.shape()[0], n = a.shape()[1];
  if (i < 0 || i >= m) {
    throw ShapeMismatch("row Index " + std::to_string(i) + " out of range [0," +
                        std::to_string(m) + ")");
  }
  vec out = val2(a.impl(), m, n).row(i);
  Tensor result = make_tensor({n}, std::move(out));
  auto ap = a.impl();
  auto rp = result.impl();
  maybe_record(result, {a}, [ap, rp, m, n, i]() {
    grad2(ap, m, n).row(i) += rp->grad.transpose();
  });
  return result;
}

}  // namespace modelab
