#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "emerg/data.hpp"
#include "emerg/model.hpp"
#include "emerg/params.hpp"
#include "support/gradcheck.hpp"

namespace emerg::testing {

// 4 features: item_id, i_cat | user_id, u_age. Every record belongs to one
// of `items` items, users drawn uniformly.
inline data::FeatureSchema toy_schema(std::size_t dim = 8) {
  using data::Kind;
  using data::Owner;
  return data::FeatureSchema({{"item_id", Owner::item, Kind::single, 6},
                              {"i_cat", Owner::item, Kind::single, 3},
                              {"user_id", Owner::user, Kind::single, 10},
                              {"u_age", Owner::user, Kind::single, 4}},
                             dim);
}

inline data::InteractionTable toy_table(std::size_t per_item, std::uint64_t seed, std::size_t dim = 8) {
  data::InteractionTable t(toy_schema(dim));
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint32_t> user(0, 9), age(0, 3), coin(0, 1);
  std::int64_t ts = 0;
  for (std::uint32_t item = 0; item < 6; ++item)
    for (std::size_t k = 0; k < per_item; ++k) {
      data::RawInteraction r;
      r.item = item;
      r.user = user(rng);
      r.values = {{{item}, 0}, {{item % 3}, 0}, {{static_cast<std::uint32_t>(r.user)}, 0}, {{age(rng)}, 0}};
      r.label = static_cast<int>(coin(rng));
      r.timestamp = ts++;
      t.append(std::move(r));
    }
  return t;
}

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(shape);
  for (auto& v : t.values()) v = d(rng);
  return t;
}

struct GradReport {
  double worst = 0.0;       // relative error over the smooth entries
  std::size_t entries = 0;  // entries probed
  std::size_t kinks = 0;    // entries skipped as non-smooth
};

// Reverse-mode gradients of `loss` vs central differences, perturbing the
// named tensors of `store` one entry at a time. ReLU, top-K and min/max
// selections make the loss piecewise smooth; an entry whose central
// differences at `step` and `step / 4` disagree sits on a kink within the
// probe width and is counted in `kinks` instead of compared.
template <typename LossFn>
GradReport gradcheck_store(const LossFn& loss, ad::ParamStore store, const std::vector<std::string>& names,
                           double step = 1e-5) {
  ad::Binding binding(store);
  const auto grads = ad::backward(loss(binding), binding);
  GradReport rep;
  for (const auto& name : names) {
    Tensor& p = store.value(name);
    std::vector<double> analytic, numeric;
    for (std::size_t i = 0; i < p.size(); ++i) {
      auto central = [&](double h) {
        ad::NoGradGuard guard;
        const double saved = p[i];
        p[i] = saved + h;
        const double up = loss(ad::Binding(store)).item();
        p[i] = saved - h;
        const double down = loss(ad::Binding(store)).item();
        p[i] = saved;
        return (up - down) / (2 * h);
      };
      const double coarse = central(step), fine = central(step / 4);
      ++rep.entries;
      if (std::abs(coarse - fine) > 1e-4 * std::max({std::abs(coarse), std::abs(fine), 1e-6})) {
        ++rep.kinks;
        continue;
      }
      analytic.push_back(grads.at(name)[i]);
      numeric.push_back(coarse);
    }
    if (analytic.empty()) continue;
    rep.worst = std::max(rep.worst, relative_error(Tensor({analytic.size()}, analytic), Tensor({numeric.size()}, numeric)));
  }
  return rep;
}

}  // namespace emerg::testing
