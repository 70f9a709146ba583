#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "voxmem/errors.hpp"

namespace voxmem::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // sized like data iff requires_grad
  bool requires_grad = false;
};

// Dense 64-bit real tensor. A Tensor is a cheap shared handle; ops create
// fresh nodes and, while a Tape is active, register their backward rules.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> data);
  static Tensor variable(Shape shape, std::vector<double> data);  // trainable leaf
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rank() const;
  bool requires_grad() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();  // optimizer / checkpoint loading
  double value() const;                // scalar accessor

  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Node identity, for fan-out/aliasing checks.
  const TensorNode* node() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<TensorNode> node_;

  friend Tensor make_tracked(Shape shape, std::vector<double> data);
  friend std::shared_ptr<TensorNode> detail_node(const Tensor& t);
  friend class Tape;
};

// Ordered record of executed differentiable operations. backward() seeds
// d(loss)/d(loss) = 1 and replays the records in strict reverse execution
// order, accumulating into the grad buffer of every tensor that requires
// gradients. At most one tape is active per thread; it is rebuilt for every
// forward pass.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void backward(const Tensor& loss);
  std::size_t record_count() const { return records_.size(); }

  static Tape* active();

 private:
  void record(std::function<void()> backprop) { records_.push_back(std::move(backprop)); }

  std::vector<std::function<void()>> records_;

  friend Tensor make_tracked(Shape shape, std::vector<double> data);
  friend void record_op(std::function<void()> backprop);
};

// ---- differentiable operations ------------------------------------------

// Matrix product; accepts [MxK]x[KxN] -> [MxN] and [MxK]x[K] -> [M].
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise binary ops; shapes must match exactly, or one side may be a
// single-element tensor which broadcasts over the other.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// scale * x + shift, elementwise with real constants.
Tensor affine(const Tensor& x, double scale, double shift);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);  // subgradient 0 at the kink
Tensor log(const Tensor& x);   // contract: strictly positive input
Tensor clamp(const Tensor& x, double lo, double hi);

// Concatenation along the last axis; leading dimensions must agree.
Tensor concat(const Tensor& a, const Tensor& b);

// Sum of all elements (sequential reduction order), as a scalar tensor.
Tensor sum(const Tensor& x);

// Cosine similarity of two rank-1 tensors, as a scalar tensor. Degenerate
// (near-zero norm) inputs are rejected.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);

}  // namespace voxmem::ad
