#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major Eigen
// matrices. Every value in the graph is a 2-D matrix; scalars are 1x1.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace bdlf {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace ad {

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

inline bool grad_enabled() { return grad_mode_flag(); }

/// Disables graph recording for the lifetime of the guard (inference paths).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(grad_mode_flag()) { grad_mode_flag() = false; }
  ~NoGradGuard() { grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <class T>
struct Node {
  Matrix<T> value;
  Matrix<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Matrix<T>&)> backward;

  template <class Derived>
  void accumulate(const Eigen::MatrixBase<Derived>& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  const Matrix<T>& value() const { return node_->value; }
  Matrix<T>& mutable_value() { return node_->value; }
  const Matrix<T>& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() != 0; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  T item() const {
    if (node_->value.size() != 1) throw std::logic_error("item() on non-scalar value");
    return node_->value(0, 0);
  }
  void zero_grad() { node_->grad.resize(0, 0); }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <class T>
Var<T> constant(Matrix<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  return Var<T>(std::move(node));
}

template <class T>
Var<T> parameter(Matrix<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var<T>(std::move(node));
}

template <class T>
Var<T> scalar(T v) {
  Matrix<T> m(1, 1);
  m(0, 0) = v;
  return constant<T>(std::move(m));
}

/// Same value, cut from the graph: gradients never flow through the result.
template <class T>
Var<T> detach(const Var<T>& v);

/// Lets a finite-difference oracle hold stop-gradient targets fixed: in
/// record mode every detach() output is saved in call order; in replay mode
/// detach() returns the saved values instead of the live ones.
template <class T>
class FrozenTargets {
 public:
  enum class Mode { record, replay };

  explicit FrozenTargets(Mode mode) : previous_(state().mode) {
    state().mode = mode == Mode::record ? 1 : 2;
    if (mode == Mode::record) state().values.clear();
    state().cursor = 0;
  }
  ~FrozenTargets() { state().mode = previous_; }
  FrozenTargets(const FrozenTargets&) = delete;
  FrozenTargets& operator=(const FrozenTargets&) = delete;

  std::size_t size() const { return state().values.size(); }

 private:
  struct State {
    int mode = 0;  // 0 off, 1 record, 2 replay
    std::vector<Matrix<T>> values;
    std::size_t cursor = 0;
  };
  static State& state() {
    thread_local State s;
    return s;
  }
  friend Var<T> detach<T>(const Var<T>&);
  int previous_;
};

template <class T>
Var<T> detach(const Var<T>& v) {
  auto& st = FrozenTargets<T>::state();
  if (st.mode == 1) {
    st.values.push_back(v.value());
  } else if (st.mode == 2) {
    if (st.cursor >= st.values.size()) throw std::logic_error("detach replay: more calls than recorded");
    const Matrix<T>& saved = st.values[st.cursor++];
    if (saved.rows() != v.rows() || saved.cols() != v.cols()) {
      throw std::logic_error("detach replay: shape differs from the recorded call");
    }
    return constant<T>(saved);
  }
  return constant<T>(v.value());
}

/// Creates a result node. `backward` receives the upstream gradient and is
/// responsible for accumulating into whichever captured inputs require grad.
template <class T, class F>
Var<T> make_op(Matrix<T> value, std::initializer_list<Var<T>> inputs, F&& backward) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  if (grad_enabled()) {
    for (const auto& in : inputs) {
      if (in.requires_grad()) node->parents.push_back(in.node());
    }
    if (!node->parents.empty()) {
      node->requires_grad = true;
      node->backward = std::forward<F>(backward);
    }
  }
  return Var<T>(std::move(node));
}

template <class T>
Var<T> make_op_n(Matrix<T> value, const std::vector<Var<T>>& inputs,
                 std::function<void(const Matrix<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  if (grad_enabled()) {
    for (const auto& in : inputs) {
      if (in.requires_grad()) node->parents.push_back(in.node());
    }
    if (!node->parents.empty()) {
      node->requires_grad = true;
      node->backward = std::move(backward);
    }
  }
  return Var<T>(std::move(node));
}

/// Reverse sweep from a scalar root. Leaf gradients accumulate across calls.
template <class T>
void backward(const Var<T>& root) {
  if (root.value().size() != 1) throw std::logic_error("backward() needs a scalar root");
  if (!root.requires_grad()) return;

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Matrix<T>::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (!node->backward || node->grad.size() == 0) continue;
    node->backward(node->grad);
    // Interior gradients are consumed; leaves keep theirs.
    node->grad.resize(0, 0);
  }
}

namespace detail {
template <class T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  }
}
template <class T>
void require_scalar(const Var<T>& a, const char* op) {
  if (a.value().size() != 1) throw std::invalid_argument(std::string(op) + ": expected scalar");
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and linear algebra

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "add");
  auto na = a.node(), nb = b.node();
  return make_op<T>(a.value() + b.value(), {a, b}, [na, nb](const Matrix<T>& g) {
    if (na->requires_grad) na->accumulate(g);
    if (nb->requires_grad) nb->accumulate(g);
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "sub");
  auto na = a.node(), nb = b.node();
  return make_op<T>(a.value() - b.value(), {a, b}, [na, nb](const Matrix<T>& g) {
    if (na->requires_grad) na->accumulate(g);
    if (nb->requires_grad) nb->accumulate(-g);
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "mul");
  auto na = a.node(), nb = b.node();
  return make_op<T>(a.value().cwiseProduct(b.value()), {a, b}, [na, nb](const Matrix<T>& g) {
    if (na->requires_grad) na->accumulate(g.cwiseProduct(nb->value));
    if (nb->requires_grad) nb->accumulate(g.cwiseProduct(na->value));
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  auto na = a.node();
  return make_op<T>(a.value() * s, {a}, [na, s](const Matrix<T>& g) { na->accumulate(g * s); });
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T s) {
  auto na = a.node();
  return make_op<T>((a.value().array() + s).matrix(), {a},
                    [na](const Matrix<T>& g) { na->accumulate(g); });
}

template <class T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <class T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <class T>
Var<T> operator-(const Var<T>& a) { return scale(a, T(-1)); }

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions differ (" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + ")");
  }
  auto na = a.node(), nb = b.node();
  Matrix<T> out = a.value() * b.value();
  return make_op<T>(std::move(out), {a, b}, [na, nb](const Matrix<T>& g) {
    if (na->requires_grad) na->accumulate(g * nb->value.transpose());
    if (nb->requires_grad) nb->accumulate(na->value.transpose() * g);
  });
}

template <class T>
Var<T> transpose(const Var<T>& a) {
  auto na = a.node();
  Matrix<T> out = a.value().transpose();
  return make_op<T>(std::move(out), {a},
                    [na](const Matrix<T>& g) { na->accumulate(g.transpose()); });
}

/// a + row, with `row` [1 x cols] broadcast over every row of a.
template <class T>
Var<T> add_row(const Var<T>& a, const Var<T>& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("add_row: bad shape");
  auto na = a.node(), nr = row.node();
  Matrix<T> out = a.value().rowwise() + row.value().row(0);
  return make_op<T>(std::move(out), {a, row}, [na, nr](const Matrix<T>& g) {
    if (na->requires_grad) na->accumulate(g);
    if (nr->requires_grad) nr->accumulate(g.colwise().sum());
  });
}

/// a * row elementwise, with `row` [1 x cols] broadcast over every row of a.
template <class T>
Var<T> mul_row(const Var<T>& a, const Var<T>& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("mul_row: bad shape");
  auto na = a.node(), nr = row.node();
  Matrix<T> out = a.value().array().rowwise() * row.value().row(0).array();
  return make_op<T>(std::move(out), {a, row}, [na, nr](const Matrix<T>& g) {
    if (na->requires_grad) {
      Matrix<T> ga = g.array().rowwise() * nr->value.row(0).array();
      na->accumulate(ga);
    }
    if (nr->requires_grad) nr->accumulate(g.cwiseProduct(na->value).colwise().sum());
  });
}

template <class T>
Var<T> relu(const Var<T>& a) {
  auto na = a.node();
  Matrix<T> out = a.value().cwiseMax(T(0));
  return make_op<T>(std::move(out), {a}, [na](const Matrix<T>& g) {
    Matrix<T> ga = (na->value.array() > T(0)).select(g, T(0));
    na->accumulate(ga);
  });
}

template <class T>
Var<T> exp(const Var<T>& a) {
  auto na = a.node();
  Matrix<T> out = a.value().array().exp().matrix();
  return make_op<T>(out, {a}, [na, out](const Matrix<T>& g) { na->accumulate(g.cwiseProduct(out)); });
}

template <class T>
Var<T> log(const Var<T>& a) {
  auto na = a.node();
  return make_op<T>(a.value().array().log().matrix(), {a}, [na](const Matrix<T>& g) {
    na->accumulate((g.array() / na->value.array()).matrix());
  });
}

template <class T>
Var<T> square(const Var<T>& a) {
  auto na = a.node();
  return make_op<T>(a.value().cwiseAbs2(), {a}, [na](const Matrix<T>& g) {
    na->accumulate((T(2) * g.array() * na->value.array()).matrix());
  });
}

template <class T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "div");
  auto na = a.node(), nb = b.node();
  Matrix<T> out = (a.value().array() / b.value().array()).matrix();
  return make_op<T>(out, {a, b}, [na, nb, out](const Matrix<T>& g) {
    if (na->requires_grad) na->accumulate((g.array() / nb->value.array()).matrix());
    if (nb->requires_grad) {
      nb->accumulate((-g.array() * out.array() / nb->value.array()).matrix());
    }
  });
}

/// Real cube root that keeps the sign of its argument.
template <class T>
Var<T> signed_cbrt(const Var<T>& a) {
  auto na = a.node();
  Matrix<T> out = a.value().unaryExpr([](T x) { return std::cbrt(x); });
  return make_op<T>(out, {a}, [na, out](const Matrix<T>& g) {
    Matrix<T> ga = g;
    for (Eigen::Index i = 0; i < ga.size(); ++i) {
      const T c = out.data()[i];
      ga.data()[i] = c == T(0) ? T(0) : g.data()[i] / (T(3) * c * c);
    }
    na->accumulate(ga);
  });
}

/// Clamp into [lo, hi]; gradient passes only where the input is strictly inside.
template <class T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
  auto na = a.node();
  Matrix<T> out = a.value().cwiseMax(lo).cwiseMin(hi);
  return make_op<T>(std::move(out), {a}, [na, lo, hi](const Matrix<T>& g) {
    Matrix<T> ga = ((na->value.array() > lo) && (na->value.array() < hi)).select(g, T(0));
    na->accumulate(ga);
  });
}

template <class T>
Var<T> sum_all(const Var<T>& a) {
  auto na = a.node();
  Matrix<T> out(1, 1);
  out(0, 0) = a.value().sum();
  return make_op<T>(std::move(out), {a}, [na](const Matrix<T>& g) {
    na->accumulate(Matrix<T>::Constant(na->value.rows(), na->value.cols(), g(0, 0)));
  });
}

template <class T>
Var<T> mean_all(const Var<T>& a) {
  const T n = static_cast<T>(a.value().size());
  return scale(sum_all(a), T(1) / n);
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <class T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column count differs");
    rows += p.rows();
  }
  Matrix<T> out(rows, cols);
  std::vector<std::shared_ptr<Node<T>>> nodes;
  std::vector<Eigen::Index> offsets;
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    nodes.push_back(p.node());
    offsets.push_back(r);
    r += p.rows();
  }
  return make_op_n<T>(std::move(out), parts, [nodes, offsets](const Matrix<T>& g) {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i]->requires_grad) {
        nodes[i]->accumulate(g.middleRows(offsets[i], nodes[i]->value.rows()));
      }
    }
  });
}

template <class T>
Var<T> concat_cols(const Var<T>& a, const Var<T>& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("concat_cols: row count differs");
  Matrix<T> out(a.rows(), a.cols() + b.cols());
  out.leftCols(a.cols()) = a.value();
  out.rightCols(b.cols()) = b.value();
  auto na = a.node(), nb = b.node();
  return make_op<T>(std::move(out), {a, b}, [na, nb](const Matrix<T>& g) {
    if (na->requires_grad) na->accumulate(g.leftCols(na->value.cols()));
    if (nb->requires_grad) nb->accumulate(g.rightCols(nb->value.cols()));
  });
}

template <class T>
Var<T> slice_rows(const Var<T>& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw std::out_of_range("slice_rows: range outside matrix");
  }
  auto na = a.node();
  Matrix<T> out = a.value().middleRows(start, count);
  return make_op<T>(std::move(out), {a}, [na, start, count](const Matrix<T>& g) {
    Matrix<T> ga = Matrix<T>::Zero(na->value.rows(), na->value.cols());
    ga.middleRows(start, count) = g;
    na->accumulate(ga);
  });
}

template <class T>
Var<T> slice_cols(const Var<T>& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw std::out_of_range("slice_cols: range outside matrix");
  }
  auto na = a.node();
  Matrix<T> out = a.value().middleCols(start, count);
  return make_op<T>(std::move(out), {a}, [na, start, count](const Matrix<T>& g) {
    Matrix<T> ga = Matrix<T>::Zero(na->value.rows(), na->value.cols());
    ga.middleCols(start, count) = g;
    na->accumulate(ga);
  });
}

// ---------------------------------------------------------------------------
// Normalization and pooling

template <class T>
Matrix<T> softmax_rows_value(const Matrix<T>& x) {
  Matrix<T> out = x.colwise() - x.rowwise().maxCoeff();
  out = out.array().exp().matrix();
  out = out.array().colwise() / out.rowwise().sum().array();
  return out;
}

template <class T>
Var<T> row_softmax(const Var<T>& a) {
  auto na = a.node();
  Matrix<T> s = softmax_rows_value<T>(a.value());
  return make_op<T>(s, {a}, [na, s](const Matrix<T>& g) {
    Eigen::Matrix<T, Eigen::Dynamic, 1> dot = g.cwiseProduct(s).rowwise().sum();
    Matrix<T> ga = s.array() * (g.colwise() - dot).array();
    na->accumulate(ga);
  });
}

/// Per-row standardization (mean 0, variance 1 across columns), no affine part.
template <class T>
Var<T> layer_norm_rows(const Var<T>& a, T eps = T(1e-5)) {
  const Eigen::Index cols = a.cols();
  Eigen::Matrix<T, Eigen::Dynamic, 1> mean = a.value().rowwise().mean();
  Matrix<T> centered = a.value().colwise() - mean;
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std =
      ((centered.cwiseAbs2().rowwise().sum() / static_cast<T>(cols)).array() + eps).rsqrt().matrix();
  Matrix<T> y = centered.array().colwise() * inv_std.array();
  auto na = a.node();
  return make_op<T>(y, {a}, [na, y, inv_std](const Matrix<T>& g) {
    Eigen::Matrix<T, Eigen::Dynamic, 1> g_mean = g.rowwise().mean();
    Eigen::Matrix<T, Eigen::Dynamic, 1> gy_mean = g.cwiseProduct(y).rowwise().mean();
    Matrix<T> ga = (g.colwise() - g_mean) - (y.array().colwise() * gy_mean.array()).matrix();
    ga = ga.array().colwise() * inv_std.array();
    na->accumulate(ga);
  });
}

/// Averages consecutive groups of `group` rows: [n*group x c] -> [n x c].
template <class T>
Var<T> segment_mean(const Var<T>& a, Eigen::Index group) {
  if (group <= 0 || a.rows() % group != 0) throw std::invalid_argument("segment_mean: bad group");
  const Eigen::Index n = a.rows() / group;
  Matrix<T> out(n, a.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    out.row(i) = a.value().middleRows(i * group, group).colwise().mean();
  }
  auto na = a.node();
  return make_op<T>(std::move(out), {a}, [na, group, n](const Matrix<T>& g) {
    Matrix<T> ga(na->value.rows(), na->value.cols());
    const T inv = T(1) / static_cast<T>(group);
    for (Eigen::Index i = 0; i < n; ++i) {
      ga.middleRows(i * group, group).rowwise() = g.row(i) * inv;
    }
    na->accumulate(ga);
  });
}

/// Spatial layout of a feature map stored as one row per site:
/// row index = (sample * height + y) * width + x, columns are channels.
struct SpatialShape {
  Eigen::Index n = 0;
  Eigen::Index height = 1;
  Eigen::Index width = 1;
  Eigen::Index sites() const { return height * width; }
  Eigen::Index rows() const { return n * height * width; }
  bool operator==(const SpatialShape&) const = default;
};

inline Eigen::Index conv_out_extent(Eigen::Index in, Eigen::Index kernel, Eigen::Index stride,
                                    Eigen::Index pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

/// Unfolds kernel x kernel patches so a convolution becomes one matmul.
/// Output: [n*ho*wo x kernel*kernel*c], column = (ky*kernel + kx)*c + channel.
template <class T>
Var<T> im2col(const Var<T>& a, SpatialShape shape, Eigen::Index kernel, Eigen::Index stride,
              Eigen::Index pad) {
  if (a.rows() != shape.rows()) throw std::invalid_argument("im2col: row count vs shape");
  const Eigen::Index c = a.cols();
  const Eigen::Index ho = conv_out_extent(shape.height, kernel, stride, pad);
  const Eigen::Index wo = conv_out_extent(shape.width, kernel, stride, pad);
  if (ho <= 0 || wo <= 0) throw std::invalid_argument("im2col: empty output");

  // Gather table: for each (out row, patch slot) the source row, or -1 for padding.
  std::vector<Eigen::Index> src(static_cast<std::size_t>(shape.n * ho * wo * kernel * kernel));
  std::size_t t = 0;
  for (Eigen::Index b = 0; b < shape.n; ++b)
    for (Eigen::Index oy = 0; oy < ho; ++oy)
      for (Eigen::Index ox = 0; ox < wo; ++ox)
        for (Eigen::Index ky = 0; ky < kernel; ++ky)
          for (Eigen::Index kx = 0; kx < kernel; ++kx) {
            const Eigen::Index y = oy * stride + ky - pad;
            const Eigen::Index x = ox * stride + kx - pad;
            const bool inside = y >= 0 && y < shape.height && x >= 0 && x < shape.width;
            src[t++] = inside ? (b * shape.height + y) * shape.width + x : -1;
          }

  const Eigen::Index out_rows = shape.n * ho * wo;
  const Eigen::Index slots = kernel * kernel;
  Matrix<T> out = Matrix<T>::Zero(out_rows, slots * c);
  for (Eigen::Index r = 0; r < out_rows; ++r)
    for (Eigen::Index s = 0; s < slots; ++s) {
      const Eigen::Index from = src[static_cast<std::size_t>(r * slots + s)];
      if (from >= 0) out.block(r, s * c, 1, c) = a.value().row(from);
    }

  auto na = a.node();
  return make_op<T>(std::move(out), {a}, [na, src = std::move(src), out_rows, slots, c](
                                             const Matrix<T>& g) {
    Matrix<T> ga = Matrix<T>::Zero(na->value.rows(), na->value.cols());
    for (Eigen::Index r = 0; r < out_rows; ++r)
      for (Eigen::Index s = 0; s < slots; ++s) {
        const Eigen::Index from = src[static_cast<std::size_t>(r * slots + s)];
        if (from >= 0) ga.row(from) += g.block(r, s * c, 1, c);
      }
    na->accumulate(ga);
  });
}

}  // namespace ad
}  // namespace bdlf
