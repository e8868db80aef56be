#include "emerg/nn.hpp"

#include <algorithm>
#include <cmath>

#include "emerg/errors.hpp"

namespace emerg::ad {

void validate(const MlpSpec& spec) {
  if (spec.widths.size() < 2) throw ConfigError("mlp '" + spec.prefix + "' needs at least one layer");
  for (auto w : spec.widths)
    if (w == 0) throw ConfigError("mlp '" + spec.prefix + "' has a zero-width layer");
}

void mlp_init(ParamStore& store, const MlpSpec& spec, Rng& rng) {
  validate(spec);
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    const std::size_t in = spec.widths[l], out = spec.widths[l + 1];
    store.add(spec.weight_name(l), init_uniform({in, out}, in, rng));
    store.add(spec.bias_name(l), Tensor({out}));
  }
}

Var mlp_apply(const MlpSpec& spec, const Binding& params, const Var& x) {
  validate(spec);
  const bool vector_input = x.value().rank() == 1;
  if (x.shape().back() != spec.in_width())
    throw DimensionError("mlp '" + spec.prefix + "': input width " + std::to_string(x.shape().back()) +
                         " != " + std::to_string(spec.in_width()));
  Var h = vector_input ? reshape(x, {1, x.size()}) : x;
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    h = add_bias(matmul(h, params(spec.weight_name(l))), params(spec.bias_name(l)));
    if (l + 1 < spec.layers() && spec.hidden == Activation::relu) h = relu(h);
  }
  return vector_input ? reshape(h, {spec.out_width()}) : h;
}

double bce(int label, double prob) {
  if (!(prob >= 0.0 && prob <= 1.0)) throw ContractError("bce: probability outside [0,1]");
  if (label != 0 && label != 1) throw ContractError("bce: label must be 0 or 1");
  const double p = std::clamp(prob, kProbEps, 1.0 - kProbEps);
  return label ? -std::log(p) : -std::log(1.0 - p);
}

Var bce_mean(const Var& probs, std::span<const double> labels) {
  if (probs.size() != labels.size()) throw DimensionError("bce_mean: label count mismatch");
  for (double p : probs.value().values())
    if (!(p >= 0.0 && p <= 1.0)) throw ContractError("bce: probability outside [0,1]");
  Shape shape = probs.shape();
  Tensor y(shape, std::vector<double>(labels.begin(), labels.end()));
  Tensor one_minus_y = y;
  for (auto& v : one_minus_y.values()) v = 1.0 - v;
  Var p = clamp(probs, kProbEps, 1.0 - kProbEps);
  Var pos = mul(Var::constant(std::move(y)), log(p));
  Var negative = mul(Var::constant(std::move(one_minus_y)), log(add_const(neg(p), 1.0)));
  return neg(mean_all(add(pos, negative)));
}

}  // namespace emerg::ad
