#pragma once

#include <span>
#include <string>
#include <vector>

#include "emerg/autodiff.hpp"
#include "emerg/params.hpp"

namespace emerg::ad {

enum class Activation { relu, identity };

// Layer widths {in, hidden..., out}; weights live in a ParamStore as
// `<prefix>/w<i>` ([in_i, out_i]) and `<prefix>/b<i>` ([out_i]).
struct MlpSpec {
  std::string prefix;
  std::vector<std::size_t> widths;
  Activation hidden = Activation::relu;

  std::size_t layers() const { return widths.size() - 1; }
  std::size_t in_width() const { return widths.front(); }
  std::size_t out_width() const { return widths.back(); }
  std::string weight_name(std::size_t layer) const { return prefix + "/w" + std::to_string(layer); }
  std::string bias_name(std::size_t layer) const { return prefix + "/b" + std::to_string(layer); }
};

void validate(const MlpSpec& spec);
void mlp_init(ParamStore& store, const MlpSpec& spec, Rng& rng);

// x: [in] or [rows, in]. Hidden layers use the spec's activation; the last
// layer is affine.
Var mlp_apply(const MlpSpec& spec, const Binding& params, const Var& x);

inline constexpr double kProbEps = 1e-7;

// Binary cross entropy on a probability, clamped to [eps, 1-eps].
double bce(int label, double prob);

// Mean BCE over a batch of probabilities.
Var bce_mean(const Var& probs, std::span<const double> labels);

}  // namespace emerg::ad
