#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "emerg/tensor.hpp"

// Reverse-mode differentiation over dense tensors.
//
// Every op records its inputs and a backward rule. Backward rules are written
// with the same differentiable ops, so a gradient computed with
// `create_graph = true` is itself a traced value and can be differentiated
// again (used by the exact second-order meta-gradient).
namespace emerg::ad {

struct Node;

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  // A value that never receives gradients.
  static Var constant(Tensor value);
  // A differentiable leaf (parameters, item-specific tensors).
  static Var leaf(Tensor value, std::string name = {});

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  double item() const;  // value of a single-element tensor
  bool requires_grad() const;
  const std::string& name() const;

  // Same value, cut from the trace.
  Var detach() const { return constant(value()); }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

using BackwardFn = std::function<std::vector<Var>(const std::vector<Var>& inputs, const Var& out, const Var& grad)>;

struct Node {
  Tensor value;
  bool requires_grad = false;
  std::string name;
  std::vector<Var> inputs;
  BackwardFn backward;
};

// Tracing is enabled per thread by default; the guard disables it in scope.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Re-enables tracing in scope, e.g. for an inner gradient computed inside a
// no-grad evaluation.
class EnableGradGuard {
 public:
  EnableGradGuard();
  ~EnableGradGuard();
  EnableGradGuard(const EnableGradGuard&) = delete;
  EnableGradGuard& operator=(const EnableGradGuard&) = delete;

 private:
  bool previous_;
};

// Records an op node when tracing is on and some input requires grad;
// otherwise returns a constant holding `value`.
Var make_op(Tensor value, std::vector<Var> inputs, BackwardFn backward);

// -- elementwise (identical shapes) ------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var maximum(const Var& a, const Var& b);

enum class Combine { product, max, sum };
Var ewise(const Var& a, const Var& b, Combine op);

Var neg(const Var& x);
Var scale(const Var& x, double c);
Var add_const(const Var& x, double c);
Var recip(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);
Var sigmoid(const Var& x);
Var relu(const Var& x);
Var clamp(const Var& x, double lo, double hi);

// -- broadcasting helpers ------------------------------------------------------
// `s` is a one-element tensor applied to every entry of `x`.
Var add_scalar(const Var& x, const Var& s);
Var mul_scalar(const Var& x, const Var& s);
// x: [..., n], b: [n]
Var add_bias(const Var& x, const Var& b);

// -- reductions and their adjoints --------------------------------------------
Var sum_all(const Var& x);                                 // -> [1]
Var mean_all(const Var& x);                                // -> [1]
Var broadcast_scalar(const Var& s, const Shape& shape);    // [1] -> shape
Var sum_last(const Var& x);                                // [..., n] -> [...], rank >= 2
Var broadcast_last(const Var& x, std::size_t n);           // [...] -> [..., n]
Var sum_rows(const Var& x);                                // [..., n] -> [n]
Var broadcast_rows(const Var& v, const Shape& shape);      // [n] -> shape with last dim n
Var sum_batch(const Var& x);                               // [G, ...] -> [...]
Var broadcast_batch(const Var& x, std::size_t batch);      // [...] -> [G, ...]

// -- linear algebra -------------------------------------------------------------
// [r,k]x[k,c], [G,r,k]x[k,c], [r,k]x[G,k,c] and [G,r,k]x[G,k,c].
Var matmul(const Var& a, const Var& b);
Var transpose_last(const Var& x);

// -- structure ------------------------------------------------------------------
Var reshape(const Var& x, Shape shape);
Var concat(std::span<const Var> xs, std::size_t axis);
Var slice(const Var& x, std::size_t axis, std::size_t start, std::size_t length);
Var pad(const Var& x, std::size_t axis, std::size_t start, std::size_t full_length);
Var pick(const Var& x, std::size_t flat_index);                    // -> [1]
Var place(const Var& s, std::size_t flat_index, const Shape& shape);  // one-hot scatter

Var softmax_last(const Var& x);

// Weighted sums of table rows: out[i] = sum_j weight_ij * table[index_ij].
struct BagEntry {
  std::size_t index;
  double weight;
};
using Bag = std::vector<BagEntry>;
using Bags = std::shared_ptr<const std::vector<Bag>>;

Var embedding_bag(const Var& table, const Bags& bags);                    // [V,d] -> [n,d]
Var scatter_bag(const Var& rows, const Bags& bags, std::size_t vocab);    // [n,d] -> [V,d]

// Gradients of the scalar `seed` with respect to each of `wrt`. Entries that
// are unreachable get zeros of the right shape. With `create_graph` the
// results are traced and can be differentiated again.
std::vector<Var> grad(const Var& seed, std::span<const Var> wrt, bool create_graph = false);

}  // namespace emerg::ad
