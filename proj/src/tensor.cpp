#include "voxmem/tensor.hpp"

#include <cmath>
#include <sstream>

namespace voxmem::ad {

namespace {

thread_local Tape* g_active_tape = nullptr;

void check_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::constant(Shape shape, std::vector<double> data) {
  if (shape.empty()) throw DimensionError("tensor: empty shape");
  for (std::size_t d : shape)
    if (d == 0) throw DimensionError("tensor: zero dimension in " + shape_str(shape));
  if (shape_size(shape) != data.size())
    throw DimensionError("tensor: shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  return Tensor(std::move(node));
}

Tensor Tensor::variable(Shape shape, std::vector<double> data) {
  Tensor t = constant(std::move(shape), std::move(data));
  t.node_->requires_grad = true;
  t.node_->grad.assign(t.node_->data.size(), 0.0);
  return t;
}

Tensor Tensor::zeros(Shape shape) {
  std::vector<double> data(shape_size(shape), 0.0);
  return constant(std::move(shape), std::move(data));
}

Tensor Tensor::full(Shape shape, double value) {
  std::vector<double> data(shape_size(shape), value);
  return constant(std::move(shape), std::move(data));
}

Tensor Tensor::scalar(double value) { return constant({1}, {value}); }

const Shape& Tensor::shape() const {
  check_defined(*this, "shape");
  return node_->shape;
}

std::size_t Tensor::size() const {
  check_defined(*this, "size");
  return node_->data.size();
}

std::size_t Tensor::rank() const {
  check_defined(*this, "rank");
  return node_->shape.size();
}

bool Tensor::requires_grad() const {
  check_defined(*this, "requires_grad");
  return node_->requires_grad;
}

std::span<const double> Tensor::values() const {
  check_defined(*this, "values");
  return node_->data;
}

std::span<double> Tensor::mutable_values() {
  check_defined(*this, "mutable_values");
  return node_->data;
}

double Tensor::value() const {
  check_defined(*this, "value");
  if (node_->data.size() != 1)
    throw ContractError("value: tensor of shape " + shape_str(node_->shape) + " is not scalar");
  return node_->data[0];
}

std::span<const double> Tensor::grad() const {
  check_defined(*this, "grad");
  if (!node_->requires_grad) throw ContractError("grad: tensor does not require gradients");
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  check_defined(*this, "mutable_grad");
  if (!node_->requires_grad) throw ContractError("grad: tensor does not require gradients");
  return node_->grad;
}

void Tensor::zero_grad() {
  check_defined(*this, "zero_grad");
  if (node_->requires_grad) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

// ---- Tape -----------------------------------------------------------------

Tape::Tape() {
  if (g_active_tape != nullptr)
    throw ContractError("tape: another tape is already active on this thread");
  g_active_tape = this;
}

Tape::~Tape() { g_active_tape = nullptr; }

Tape* Tape::active() { return g_active_tape; }

void Tape::backward(const Tensor& loss) {
  check_defined(loss, "backward");
  if (loss.size() != 1)
    throw ContractError("backward: loss of shape " + shape_str(loss.shape()) + " is not scalar");
  if (records_.empty()) throw ContractError("backward: tape is empty");
  if (!loss.requires_grad())
    throw ContractError("backward: loss does not depend on any trainable tensor");
  loss.node_->grad[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
}

// Creates the output node of an op: gradient tracking is on only while a
// tape is active (pure inference allocates no grad buffers).
Tensor make_tracked(Shape shape, std::vector<double> data) {
  Tensor t = Tensor::constant(std::move(shape), std::move(data));
  if (g_active_tape != nullptr) {
    t.node_->requires_grad = true;
    t.node_->grad.assign(t.node_->data.size(), 0.0);
  }
  return t;
}

void record_op(std::function<void()> backprop) {
  if (g_active_tape != nullptr) g_active_tape->record(std::move(backprop));
}

// ---- op helpers -------------------------------------------------------------

using NodePtr = std::shared_ptr<TensorNode>;

NodePtr detail_node(const Tensor& t) { return t.node_; }

namespace {

NodePtr node_of(const Tensor& t) { return detail_node(t); }

bool track(const Tensor& a) { return Tape::active() != nullptr && a.requires_grad(); }
bool track(const Tensor& a, const Tensor& b) {
  return Tape::active() != nullptr && (a.requires_grad() || b.requires_grad());
}

// Unary elementwise op with derivative expressed from (x, y) values.
template <typename Fwd, typename Dfn>
Tensor unary_elementwise(const Tensor& x, const char* name, Fwd fwd, Dfn dydx) {
  check_defined(x, name);
  auto xs = x.values();
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = fwd(xs[i]);
  Tensor y = make_tracked(x.shape(), std::move(out));
  if (track(x)) {
    NodePtr xn = node_of(x), yn = node_of(y);
    record_op([xn, yn, dydx]() {
      for (std::size_t i = 0; i < xn->grad.size(); ++i)
        xn->grad[i] += yn->grad[i] * dydx(xn->data[i], yn->data[i]);
    });
  }
  return y;
}

}  // namespace

// ---- operations -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_defined(a, "matmul");
  check_defined(b, "matmul");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const bool vec_rhs = sb.size() == 1;
  if (sa.size() != 2 || (sb.size() != 2 && sb.size() != 1) || sa[1] != sb[0])
    throw DimensionError("matmul: incompatible shapes " + shape_str(sa) + " x " + shape_str(sb));
  const std::size_t m = sa[0], k = sa[1], n = vec_rhs ? 1 : sb[1];

  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(m * n, 0.0);
  if (n == 1) {
    // Matrix-vector: contiguous row dots.
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = &av[i * k];
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * bv[p];
      out[i] = acc;
    }
  } else {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = av[i * k + p];
        const double* brow = &bv[p * n];
        double* orow = &out[i * n];
        for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
      }
  }

  Shape out_shape = vec_rhs ? Shape{m} : Shape{m, n};
  Tensor y = make_tracked(std::move(out_shape), std::move(out));
  if (track(a, b)) {
    NodePtr an = node_of(a), bn = node_of(b), yn = node_of(y);
    record_op([an, bn, yn, m, k, n]() {
      const auto& g = yn->grad;
      if (n == 1) {
        if (an->requires_grad) {
          // a.grad += g x^T, row-wise scaled adds
          for (std::size_t i = 0; i < m; ++i) {
            const double gi = g[i];
            if (gi == 0.0) continue;
            double* arow = &an->grad[i * k];
            for (std::size_t p = 0; p < k; ++p) arow[p] += gi * bn->data[p];
          }
        }
        if (bn->requires_grad) {
          for (std::size_t i = 0; i < m; ++i) {
            const double gi = g[i];
            if (gi == 0.0) continue;
            const double* arow = &an->data[i * k];
            for (std::size_t p = 0; p < k; ++p) bn->grad[p] += gi * arow[p];
          }
        }
        return;
      }
      if (an->requires_grad) {
        // a.grad += g . b^T
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            const double* grow = &g[i * n];
            const double* brow = &bn->data[p * n];
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            an->grad[i * k + p] += acc;
          }
      }
      if (bn->requires_grad) {
        // b.grad += a^T . g
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = an->data[i * k + p];
            const double* grow = &g[i * n];
            double* brow = &bn->grad[p * n];
            for (std::size_t j = 0; j < n; ++j) brow[j] += aip * grow[j];
          }
      }
    });
  }
  return y;
}

namespace {

enum class Broadcast { None, LeftScalar, RightScalar };

Broadcast binary_broadcast(const Tensor& a, const Tensor& b, const char* name) {
  if (a.shape() == b.shape()) return Broadcast::None;
  if (a.size() == 1) return Broadcast::LeftScalar;
  if (b.size() == 1) return Broadcast::RightScalar;
  throw DimensionError(std::string(name) + ": incompatible shapes " + shape_str(a.shape()) +
                       " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_defined(a, "add");
  check_defined(b, "add");
  const Broadcast bc = binary_broadcast(a, b, "add");
  auto av = a.values();
  auto bv = b.values();
  const std::size_t n = std::max(av.size(), bv.size());
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = av[bc == Broadcast::LeftScalar ? 0 : i] + bv[bc == Broadcast::RightScalar ? 0 : i];
  Tensor y = make_tracked(bc == Broadcast::LeftScalar ? b.shape() : a.shape(), std::move(out));
  if (track(a, b)) {
    NodePtr an = node_of(a), bn = node_of(b), yn = node_of(y);
    record_op([an, bn, yn, bc, n]() {
      if (an->requires_grad) {
        if (bc == Broadcast::LeftScalar)
          for (std::size_t i = 0; i < n; ++i) an->grad[0] += yn->grad[i];
        else
          for (std::size_t i = 0; i < n; ++i) an->grad[i] += yn->grad[i];
      }
      if (bn->requires_grad) {
        if (bc == Broadcast::RightScalar)
          for (std::size_t i = 0; i < n; ++i) bn->grad[0] += yn->grad[i];
        else
          for (std::size_t i = 0; i < n; ++i) bn->grad[i] += yn->grad[i];
      }
    });
  }
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_defined(a, "mul");
  check_defined(b, "mul");
  const Broadcast bc = binary_broadcast(a, b, "mul");
  auto av = a.values();
  auto bv = b.values();
  const std::size_t n = std::max(av.size(), bv.size());
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = av[bc == Broadcast::LeftScalar ? 0 : i] * bv[bc == Broadcast::RightScalar ? 0 : i];
  Tensor y = make_tracked(bc == Broadcast::LeftScalar ? b.shape() : a.shape(), std::move(out));
  if (track(a, b)) {
    NodePtr an = node_of(a), bn = node_of(b), yn = node_of(y);
    record_op([an, bn, yn, bc, n]() {
      if (an->requires_grad) {
        for (std::size_t i = 0; i < n; ++i) {
          const double gb = yn->grad[i] * bn->data[bc == Broadcast::RightScalar ? 0 : i];
          an->grad[bc == Broadcast::LeftScalar ? 0 : i] += gb;
        }
      }
      if (bn->requires_grad) {
        for (std::size_t i = 0; i < n; ++i) {
          const double ga = yn->grad[i] * an->data[bc == Broadcast::LeftScalar ? 0 : i];
          bn->grad[bc == Broadcast::RightScalar ? 0 : i] += ga;
        }
      }
    });
  }
  return y;
}

Tensor affine(const Tensor& x, double scale, double shift) {
  return unary_elementwise(
      x, "affine", [scale, shift](double v) { return scale * v + shift; },
      [scale](double, double) { return scale; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_elementwise(
      x, "sigmoid", [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary_elementwise(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary_elementwise(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor log(const Tensor& x) {
  check_defined(x, "log");
  for (double v : x.values())
    if (!(v > 0.0)) throw ContractError("log: non-positive input " + std::to_string(v));
  return unary_elementwise(
      x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (!(lo < hi)) throw ContractError("clamp: lo must be below hi");
  return unary_elementwise(
      x, "clamp", [lo, hi](double v) { return v < lo ? lo : (v > hi ? hi : v); },
      [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Tensor concat(const Tensor& a, const Tensor& b) {
  check_defined(a, "concat");
  check_defined(b, "concat");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != sb.size())
    throw DimensionError("concat: rank mismatch " + shape_str(sa) + " vs " + shape_str(sb));
  for (std::size_t i = 0; i + 1 < sa.size(); ++i)
    if (sa[i] != sb[i])
      throw DimensionError("concat: leading dims differ " + shape_str(sa) + " vs " + shape_str(sb));

  const std::size_t la = sa.back(), lb = sb.back();
  const std::size_t rows = a.size() / la;
  Shape out_shape = sa;
  out_shape.back() = la + lb;
  std::vector<double> out(rows * (la + lb));
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < la; ++i) out[r * (la + lb) + i] = av[r * la + i];
    for (std::size_t i = 0; i < lb; ++i) out[r * (la + lb) + la + i] = bv[r * lb + i];
  }
  Tensor y = make_tracked(std::move(out_shape), std::move(out));
  if (track(a, b)) {
    NodePtr an = node_of(a), bn = node_of(b), yn = node_of(y);
    record_op([an, bn, yn, rows, la, lb]() {
      for (std::size_t r = 0; r < rows; ++r) {
        if (an->requires_grad)
          for (std::size_t i = 0; i < la; ++i)
            an->grad[r * la + i] += yn->grad[r * (la + lb) + i];
        if (bn->requires_grad)
          for (std::size_t i = 0; i < lb; ++i)
            bn->grad[r * lb + i] += yn->grad[r * (la + lb) + la + i];
      }
    });
  }
  return y;
}

Tensor sum(const Tensor& x) {
  check_defined(x, "sum");
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  Tensor y = make_tracked({1}, {acc});
  if (track(x)) {
    NodePtr xn = node_of(x), yn = node_of(y);
    record_op([xn, yn]() {
      const double g = yn->grad[0];
      for (double& gi : xn->grad) gi += g;
    });
  }
  return y;
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  check_defined(a, "cosine_similarity");
  check_defined(b, "cosine_similarity");
  if (a.rank() != 1 || b.rank() != 1 || a.size() != b.size())
    throw DimensionError("cosine_similarity: need equal-length vectors, got " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  auto av = a.values();
  auto bv = b.values();
  double dot = 0.0, na2 = 0.0, nb2 = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    dot += av[i] * bv[i];
    na2 += av[i] * av[i];
    nb2 += bv[i] * bv[i];
  }
  const double na = std::sqrt(na2), nb = std::sqrt(nb2);
  if (na < 1e-12 || nb < 1e-12)
    throw DegenerateInputError("cosine_similarity: near-zero vector");
  const double s = dot / (na * nb);

  Tensor y = make_tracked({1}, {s});
  if (track(a, b)) {
    NodePtr an = node_of(a), bn = node_of(b), yn = node_of(y);
    record_op([an, bn, yn, na, nb, s]() {
      const double g = yn->grad[0];
      const std::size_t n = an->data.size();
      if (an->requires_grad)
        for (std::size_t i = 0; i < n; ++i)
          an->grad[i] += g * (bn->data[i] / (na * nb) - s * an->data[i] / (na * na));
      if (bn->requires_grad)
        for (std::size_t i = 0; i < n; ++i)
          bn->grad[i] += g * (an->data[i] / (na * nb) - s * bn->data[i] / (nb * nb));
    });
  }
  return y;
}

}  // namespace voxmem::ad
