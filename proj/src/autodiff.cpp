#include "emerg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <unordered_map>
#include <unordered_set>

#include "emerg/errors.hpp"

namespace emerg::ad {
namespace {

thread_local bool g_grad_enabled = true;

void require_same(const Var& a, const Var& b, const char* op) {
  if (!a.defined() || !b.defined()) throw ContractError(std::string(op) + ": undefined operand");
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
}

void require_scalar(const Var& s, const char* op) {
  if (s.size() != 1) throw DimensionError(std::string(op) + ": expected a one-element tensor");
}

template <typename F>
Tensor map_unary(const Tensor& x, F f) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

template <typename F>
Tensor map_binary(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

Shape drop_last(const Shape& s) { return Shape(s.begin(), s.end() - 1); }

// Product of dims before `axis` and after `axis`.
std::pair<std::size_t, std::size_t> outer_inner(const Shape& s, std::size_t axis) {
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  return {outer, inner};
}

void gemm(const double* a, const double* b, double* c, std::size_t r, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < r; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

// -- Var -------------------------------------------------------------------------

Var Var::constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

Var Var::leaf(Tensor value, std::string name) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  n->name = std::move(name);
  return Var(std::move(n));
}

const Tensor& Var::value() const {
  if (!node_) throw ContractError("access to an undefined Var");
  return node_->value;
}

double Var::item() const {
  if (value().size() != 1) throw DimensionError("item() on a tensor of shape " + shape_string(shape()));
  return value()[0];
}

bool Var::requires_grad() const { return node_ && node_->requires_grad; }

const std::string& Var::name() const {
  static const std::string empty;
  return node_ ? node_->name : empty;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
EnableGradGuard::EnableGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = true; }
EnableGradGuard::~EnableGradGuard() { g_grad_enabled = previous_; }

Var make_op(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  const bool track =
      g_grad_enabled && std::any_of(inputs.begin(), inputs.end(), [](const Var& v) { return v.requires_grad(); });
  if (track) {
    n->requires_grad = true;
    n->inputs = std::move(inputs);
    n->backward = std::move(backward);
  }
  return Var(std::move(n));
}

// -- elementwise -----------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  return make_op(map_binary(a.value(), b.value(), std::plus<>{}), {a, b},
                 [](const std::vector<Var>&, const Var&, const Var& g) { return std::vector<Var>{g, g}; });
}

Var sub(const Var& a, const Var& b) {
  require_same(a, b, "sub");
  return make_op(map_binary(a.value(), b.value(), std::minus<>{}), {a, b},
                 [](const std::vector<Var>&, const Var&, const Var& g) { return std::vector<Var>{g, neg(g)}; });
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  return make_op(map_binary(a.value(), b.value(), std::multiplies<>{}), {a, b},
                 [](const std::vector<Var>& in, const Var&, const Var& g) {
                   return std::vector<Var>{mul(g, in[1]), mul(g, in[0])};
                 });
}

Var div(const Var& a, const Var& b) {
  require_same(a, b, "div");
  return make_op(map_binary(a.value(), b.value(), std::divides<>{}), {a, b},
                 [](const std::vector<Var>& in, const Var&, const Var& g) {
                   return std::vector<Var>{div(g, in[1]), neg(div(mul(g, in[0]), mul(in[1], in[1])))};
                 });
}

Var maximum(const Var& a, const Var& b) {
  require_same(a, b, "maximum");
  // Ties route the gradient to `a`.
  Tensor mask = map_binary(a.value(), b.value(), [](double x, double y) { return x >= y ? 1.0 : 0.0; });
  Tensor out = map_binary(a.value(), b.value(), [](double x, double y) { return x >= y ? x : y; });
  return make_op(std::move(out), {a, b}, [mask = std::move(mask)](const std::vector<Var>&, const Var&, const Var& g) {
    Tensor inv = map_unary(mask, [](double m) { return 1.0 - m; });
    return std::vector<Var>{mul(g, Var::constant(mask)), mul(g, Var::constant(std::move(inv)))};
  });
}

Var ewise(const Var& a, const Var& b, Combine op) {
  switch (op) {
    case Combine::product:
      return mul(a, b);
    case Combine::max:
      return maximum(a, b);
    case Combine::sum:
      return add(a, b);
  }
  throw ContractError("ewise: unknown combine op");
}

Var neg(const Var& x) {
  return make_op(map_unary(x.value(), [](double v) { return -v; }), {x},
                 [](const std::vector<Var>&, const Var&, const Var& g) { return std::vector<Var>{neg(g)}; });
}

Var scale(const Var& x, double c) {
  return make_op(map_unary(x.value(), [c](double v) { return c * v; }), {x},
                 [c](const std::vector<Var>&, const Var&, const Var& g) { return std::vector<Var>{scale(g, c)}; });
}

Var add_const(const Var& x, double c) {
  return make_op(map_unary(x.value(), [c](double v) { return v + c; }), {x},
                 [](const std::vector<Var>&, const Var&, const Var& g) { return std::vector<Var>{g}; });
}

Var recip(const Var& x) {
  return make_op(map_unary(x.value(), [](double v) { return 1.0 / v; }), {x},
                 [](const std::vector<Var>&, const Var& out, const Var& g) {
                   return std::vector<Var>{neg(mul(g, mul(out, out)))};
                 });
}

Var exp(const Var& x) {
  return make_op(map_unary(x.value(), [](double v) { return std::exp(v); }), {x},
                 [](const std::vector<Var>&, const Var& out, const Var& g) { return std::vector<Var>{mul(g, out)}; });
}

Var log(const Var& x) {
  return make_op(map_unary(x.value(), [](double v) { return std::log(v); }), {x},
                 [](const std::vector<Var>& in, const Var&, const Var& g) { return std::vector<Var>{div(g, in[0])}; });
}

Var sigmoid(const Var& x) {
  auto f = [](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  };
  return make_op(map_unary(x.value(), f), {x}, [](const std::vector<Var>&, const Var& out, const Var& g) {
    return std::vector<Var>{mul(g, mul(out, add_const(neg(out), 1.0)))};
  });
}

Var relu(const Var& x) {
  Tensor mask = map_unary(x.value(), [](double v) { return v > 0 ? 1.0 : 0.0; });
  Tensor out = map_unary(x.value(), [](double v) { return v > 0 ? v : 0.0; });
  return make_op(std::move(out), {x}, [mask = std::move(mask)](const std::vector<Var>&, const Var&, const Var& g) {
    return std::vector<Var>{mul(g, Var::constant(mask))};
  });
}

Var clamp(const Var& x, double lo, double hi) {
  Tensor mask = map_unary(x.value(), [=](double v) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
  Tensor out = map_unary(x.value(), [=](double v) { return std::clamp(v, lo, hi); });
  return make_op(std::move(out), {x}, [mask = std::move(mask)](const std::vector<Var>&, const Var&, const Var& g) {
    return std::vector<Var>{mul(g, Var::constant(mask))};
  });
}

// -- broadcasting ------------------------------------------------------------------

Var add_scalar(const Var& x, const Var& s) {
  require_scalar(s, "add_scalar");
  const double c = s.value()[0];
  return make_op(map_unary(x.value(), [c](double v) { return v + c; }), {x, s},
                 [](const std::vector<Var>&, const Var&, const Var& g) { return std::vector<Var>{g, sum_all(g)}; });
}

Var mul_scalar(const Var& x, const Var& s) {
  require_scalar(s, "mul_scalar");
  const double c = s.value()[0];
  return make_op(map_unary(x.value(), [c](double v) { return v * c; }), {x, s},
                 [](const std::vector<Var>& in, const Var&, const Var& g) {
                   return std::vector<Var>{mul_scalar(g, in[1]), sum_all(mul(g, in[0]))};
                 });
}

Var add_bias(const Var& x, const Var& b) {
  if (b.value().rank() != 1 || x.shape().back() != b.size())
    throw DimensionError("add_bias: bias " + shape_string(b.shape()) + " vs input " + shape_string(x.shape()));
  Tensor out = x.value();
  const std::size_t n = b.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i % n];
  return make_op(std::move(out), {x, b},
                 [](const std::vector<Var>&, const Var&, const Var& g) { return std::vector<Var>{g, sum_rows(g)}; });
}

// -- reductions ----------------------------------------------------------------------

Var sum_all(const Var& x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  Shape shape = x.shape();
  return make_op(Tensor::scalar(s), {x}, [shape](const std::vector<Var>&, const Var&, const Var& g) {
    return std::vector<Var>{broadcast_scalar(g, shape)};
  });
}

Var mean_all(const Var& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.size())); }

Var broadcast_scalar(const Var& s, const Shape& shape) {
  require_scalar(s, "broadcast_scalar");
  return make_op(Tensor(shape, s.value()[0]), {s},
                 [](const std::vector<Var>&, const Var&, const Var& g) { return std::vector<Var>{sum_all(g)}; });
}

Var sum_last(const Var& x) {
  if (x.value().rank() < 2) throw DimensionError("sum_last: rank must be >= 2");
  const std::size_t n = x.shape().back();
  Tensor out(drop_last(x.shape()));
  const auto& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += xv[i * n + j];
    out[i] = s;
  }
  return make_op(std::move(out), {x}, [n](const std::vector<Var>&, const Var&, const Var& g) {
    return std::vector<Var>{broadcast_last(g, n)};
  });
}

Var broadcast_last(const Var& x, std::size_t n) {
  Shape shape = x.shape();
  shape.push_back(n);
  Tensor out(shape);
  const auto& xv = x.value();
  for (std::size_t i = 0; i < xv.size(); ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i];
  return make_op(std::move(out), {x},
                 [](const std::vector<Var>&, const Var&, const Var& g) { return std::vector<Var>{sum_last(g)}; });
}

Var sum_rows(const Var& x) {
  const std::size_t n = x.shape().back();
  Tensor out({n});
  const auto& xv = x.value();
  for (std::size_t i = 0; i < xv.size(); ++i) out[i % n] += xv[i];
  Shape shape = x.shape();
  return make_op(std::move(out), {x}, [shape](const std::vector<Var>&, const Var&, const Var& g) {
    return std::vector<Var>{broadcast_rows(g, shape)};
  });
}

Var broadcast_rows(const Var& v, const Shape& shape) {
  if (v.value().rank() != 1 || shape.empty() || shape.back() != v.size())
    throw DimensionError("broadcast_rows: " + shape_string(v.shape()) + " to " + shape_string(shape));
  Tensor out(shape);
  const std::size_t n = v.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v.value()[i % n];
  return make_op(std::move(out), {v},
                 [](const std::vector<Var>&, const Var&, const Var& g) { return std::vector<Var>{sum_rows(g)}; });
}

Var sum_batch(const Var& x) {
  if (x.value().rank() < 2) throw DimensionError("sum_batch: rank must be >= 2");
  const std::size_t batch = x.shape()[0];
  Shape inner(x.shape().begin() + 1, x.shape().end());
  Tensor out(inner);
  const std::size_t m = out.size();
  const auto& xv = x.value();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < m; ++i) out[i] += xv[b * m + i];
  return make_op(std::move(out), {x}, [batch](const std::vector<Var>&, const Var&, const Var& g) {
    return std::vector<Var>{broadcast_batch(g, batch)};
  });
}

Var broadcast_batch(const Var& x, std::size_t batch) {
  Shape shape{batch};
  shape.insert(shape.end(), x.shape().begin(), x.shape().end());
  Tensor out(shape);
  const std::size_t m = x.size();
  for (std::size_t b = 0; b < batch; ++b) std::copy_n(x.value().data(), m, out.data() + b * m);
  return make_op(std::move(out), {x},
                 [](const std::vector<Var>&, const Var&, const Var& g) { return std::vector<Var>{sum_batch(g)}; });
}

// -- linear algebra --------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const std::size_t ra = sa.size(), rb = sb.size();
  if (ra < 2 || ra > 3 || rb < 2 || rb > 3) throw DimensionError("matmul: operands must have rank 2 or 3");
  const std::size_t r = sa[ra - 2], k = sa[ra - 1], k2 = sb[rb - 2], c = sb[rb - 1];
  if (k != k2)
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(sa) + " x " + shape_string(sb));
  std::size_t batch = 1;
  if (ra == 3 && rb == 3 && sa[0] != sb[0]) throw DimensionError("matmul: batch dimensions differ");
  if (ra == 3) batch = sa[0];
  if (rb == 3) batch = sb[0];
  Shape out_shape = (ra == 3 || rb == 3) ? Shape{batch, r, c} : Shape{r, c};
  Tensor out(out_shape);
  const std::size_t step_a = ra == 3 ? r * k : 0;
  const std::size_t step_b = rb == 3 ? k * c : 0;
  for (std::size_t g = 0; g < batch; ++g)
    gemm(a.value().data() + g * step_a, b.value().data() + g * step_b, out.data() + g * r * c, r, k, c);

  return make_op(std::move(out), {a, b}, [ra, rb](const std::vector<Var>& in, const Var&, const Var& g) {
    Var da = matmul(g, transpose_last(in[1]));
    Var db = matmul(transpose_last(in[0]), g);
    if (ra == 2 && rb == 3) da = sum_batch(da);
    if (rb == 2 && ra == 3) db = sum_batch(db);
    return std::vector<Var>{da, db};
  });
}

Var transpose_last(const Var& x) {
  const Shape& s = x.shape();
  if (s.size() < 2) throw DimensionError("transpose_last: rank must be >= 2");
  const std::size_t r = s[s.size() - 2], c = s.back();
  const std::size_t batch = x.size() / (r * c);
  Shape os = s;
  std::swap(os[os.size() - 2], os[os.size() - 1]);
  Tensor out(os);
  const auto& xv = x.value();
  for (std::size_t g = 0; g < batch; ++g)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[g * r * c + j * r + i] = xv[g * r * c + i * c + j];
  return make_op(std::move(out), {x},
                 [](const std::vector<Var>&, const Var&, const Var& g) { return std::vector<Var>{transpose_last(g)}; });
}

// -- structure -------------------------------------------------------------------------

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  Shape original = x.shape();
  return make_op(std::move(out), {x}, [original](const std::vector<Var>&, const Var&, const Var& g) {
    return std::vector<Var>{reshape(g, original)};
  });
}

Var concat(std::span<const Var> xs, std::size_t axis) {
  if (xs.empty()) throw ContractError("concat: no inputs");
  const Shape& first = xs[0].shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range");
  std::vector<std::size_t> lengths;
  std::size_t total = 0;
  for (const auto& x : xs) {
    const Shape& s = x.shape();
    if (s.size() != first.size()) throw DimensionError("concat: rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d)
      if (d != axis && s[d] != first[d])
        throw DimensionError("concat: shape mismatch " + shape_string(s) + " vs " + shape_string(first));
    lengths.push_back(s[axis]);
    total += s[axis];
  }
  Shape os = first;
  os[axis] = total;
  Tensor out(os);
  auto [outer, inner] = outer_inner(os, axis);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const std::size_t block = lengths[i] * inner;
    const double* src = xs[i].value().data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(src + o * block, block, out.data() + o * total * inner + offset * inner);
    offset += lengths[i];
  }
  std::vector<Var> inputs(xs.begin(), xs.end());
  return make_op(std::move(out), std::move(inputs),
                 [axis, lengths](const std::vector<Var>&, const Var&, const Var& g) {
                   std::vector<Var> grads;
                   std::size_t off = 0;
                   for (auto len : lengths) {
                     grads.push_back(slice(g, axis, off, len));
                     off += len;
                   }
                   return grads;
                 });
}

Var slice(const Var& x, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& s = x.shape();
  if (axis >= s.size() || length == 0 || start + length > s[axis])
    throw DimensionError("slice: range out of bounds for " + shape_string(s));
  Shape os = s;
  os[axis] = length;
  Tensor out(os);
  auto [outer, inner] = outer_inner(s, axis);
  const std::size_t full = s[axis];
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(x.value().data() + (o * full + start) * inner, length * inner, out.data() + o * length * inner);
  return make_op(std::move(out), {x}, [axis, start, full](const std::vector<Var>&, const Var&, const Var& g) {
    return std::vector<Var>{pad(g, axis, start, full)};
  });
}

Var pad(const Var& x, std::size_t axis, std::size_t start, std::size_t full_length) {
  const Shape& s = x.shape();
  if (axis >= s.size() || start + s[axis] > full_length) throw DimensionError("pad: range out of bounds");
  const std::size_t length = s[axis];
  Shape os = s;
  os[axis] = full_length;
  Tensor out(os);
  auto [outer, inner] = outer_inner(s, axis);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(x.value().data() + o * length * inner, length * inner,
                out.data() + (o * full_length + start) * inner);
  return make_op(std::move(out), {x}, [axis, start, length](const std::vector<Var>&, const Var&, const Var& g) {
    return std::vector<Var>{slice(g, axis, start, length)};
  });
}

Var pick(const Var& x, std::size_t flat_index) {
  if (flat_index >= x.size()) throw DimensionError("pick: index out of range");
  Shape shape = x.shape();
  return make_op(Tensor::scalar(x.value()[flat_index]), {x},
                 [flat_index, shape](const std::vector<Var>&, const Var&, const Var& g) {
                   return std::vector<Var>{place(g, flat_index, shape)};
                 });
}

Var place(const Var& s, std::size_t flat_index, const Shape& shape) {
  require_scalar(s, "place");
  Tensor out(shape);
  if (flat_index >= out.size()) throw DimensionError("place: index out of range");
  out[flat_index] = s.value()[0];
  return make_op(std::move(out), {s}, [flat_index](const std::vector<Var>&, const Var&, const Var& g) {
    return std::vector<Var>{pick(g, flat_index)};
  });
}

Var softmax_last(const Var& x) {
  if (x.value().rank() < 2) throw DimensionError("softmax_last: rank must be >= 2");
  const std::size_t n = x.shape().back();
  Tensor out(x.shape());
  const auto& xv = x.value();
  for (std::size_t row = 0; row < x.size() / n; ++row) {
    const double* in = xv.data() + row * n;
    double* o = out.data() + row * n;
    const double m = *std::max_element(in, in + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (o[j] = std::exp(in[j] - m));
    for (std::size_t j = 0; j < n; ++j) o[j] /= z;
  }
  return make_op(std::move(out), {x}, [n](const std::vector<Var>&, const Var& out, const Var& g) {
    return std::vector<Var>{mul(out, sub(g, broadcast_last(sum_last(mul(g, out)), n)))};
  });
}

Var embedding_bag(const Var& table, const Bags& bags) {
  if (table.value().rank() != 2) throw DimensionError("embedding_bag: table must be a matrix");
  const std::size_t vocab = table.shape()[0], d = table.shape()[1];
  Tensor out({bags->size(), d});
  for (std::size_t i = 0; i < bags->size(); ++i) {
    for (const auto& e : (*bags)[i]) {
      if (e.index >= vocab) throw ContractError("embedding_bag: index out of vocabulary");
      const double* row = table.value().data() + e.index * d;
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] += e.weight * row[j];
    }
  }
  return make_op(std::move(out), {table}, [bags, vocab](const std::vector<Var>&, const Var&, const Var& g) {
    return std::vector<Var>{scatter_bag(g, bags, vocab)};
  });
}

Var scatter_bag(const Var& rows, const Bags& bags, std::size_t vocab) {
  if (rows.value().rank() != 2 || rows.shape()[0] != bags->size())
    throw DimensionError("scatter_bag: row count does not match bag count");
  const std::size_t d = rows.shape()[1];
  Tensor out({vocab, d});
  for (std::size_t i = 0; i < bags->size(); ++i)
    for (const auto& e : (*bags)[i])
      for (std::size_t j = 0; j < d; ++j) out[e.index * d + j] += e.weight * rows.value()[i * d + j];
  return make_op(std::move(out), {rows}, [bags](const std::vector<Var>&, const Var&, const Var& g) {
    return std::vector<Var>{embedding_bag(g, bags)};
  });
}

// -- backward ---------------------------------------------------------------------------

std::vector<Var> grad(const Var& seed, std::span<const Var> wrt, bool create_graph) {
  if (!seed.defined() || seed.size() != 1) throw ContractError("grad: seed must be a scalar node");

  // Reverse topological order via iterative post-order DFS.
  std::vector<std::shared_ptr<Node>> order;
  if (seed.requires_grad()) {
    std::unordered_set<Node*> visited;
    std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack;
    stack.emplace_back(seed.node_ptr(), 0);
    visited.insert(seed.node());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        const Var& in = node->inputs[next++];
        if (in.requires_grad() && visited.insert(in.node()).second) stack.emplace_back(in.node_ptr(), 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
  }

  std::optional<NoGradGuard> guard;
  if (!create_graph) guard.emplace();

  std::unordered_map<Node*, Var> grads;
  grads.emplace(seed.node(), Var::constant(Tensor(seed.shape(), 1.0)));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const auto& node = *it;
    auto found = grads.find(node.get());
    if (found == grads.end() || !node->backward) continue;
    const Var g = found->second;
    std::vector<Var> parts = node->backward(node->inputs, Var(node), g);
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const Var& in = node->inputs[i];
      if (!parts[i].defined() || !in.requires_grad()) continue;
      auto [slot, inserted] = grads.try_emplace(in.node(), parts[i]);
      if (!inserted) slot->second = add(slot->second, parts[i]);
    }
  }

  std::vector<Var> result;
  result.reserve(wrt.size());
  for (const auto& w : wrt) {
    auto found = grads.find(w.node());
    if (found != grads.end())
      result.push_back(found->second);
    else
      result.push_back(Var::constant(Tensor(w.shape())));
  }
  return result;
}

}  // namespace emerg::ad
