#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "emerg/autodiff.hpp"
#include "emerg/tensor.hpp"

namespace emerg::ad {

using Rng = std::mt19937_64;

struct Param {
  Tensor value;
  bool trainable = true;
};

// Named parameter tensors. Iteration order is lexicographic by name, so every
// traversal (initialization, stepping, serialization) is deterministic.
class ParamStore {
 public:
  void add(const std::string& name, Tensor value, bool trainable = true);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const Param& at(const std::string& name) const;
  Param& at(const std::string& name);
  const Tensor& value(const std::string& name) const { return at(name).value; }
  Tensor& value(const std::string& name) { return at(name).value; }

  std::vector<std::string> names() const;
  std::vector<std::string> trainable_names(const std::string& prefix = {}) const;
  std::size_t size() const { return params_.size(); }

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  friend bool operator==(const ParamStore& a, const ParamStore& b);

 private:
  std::map<std::string, Param> params_;
};

using GradTable = std::map<std::string, Tensor>;

// Leaf Vars for the parameters of one store, created once per trace.
class Binding {
 public:
  explicit Binding(const ParamStore& store);
  // Trainable parameters accepted by `traced` become leaves, the rest constants.
  Binding(const ParamStore& store, const std::function<bool(const std::string&)>& traced);
  const Var& operator()(const std::string& name) const;
  bool contains(const std::string& name) const { return vars_.count(name) != 0; }
  const std::map<std::string, Var>& vars() const { return vars_; }

 private:
  std::map<std::string, Var> vars_;
};

// Gradient of `seed` for every trainable parameter bound in `binding` whose
// name starts with `prefix`. Unreached parameters get zero tensors.
GradTable backward(const Var& seed, const Binding& binding, const std::string& prefix = {});

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  // Updates every name in `names` from `grads`; throws ContractError if a
  // gradient is missing or mis-shaped.
  void step(ParamStore& params, const GradTable& grads, const std::vector<std::string>& names);
  void step(ParamStore& params, const GradTable& grads);

  long steps() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  long step_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
Tensor init_uniform(const Shape& shape, std::size_t fan_in, Rng& rng);

// Text checkpoint: header line, `meta` lines, then one `param` record per
// tensor followed by its values (shortest round-trip decimal form).
void save_checkpoint(std::ostream& os, const ParamStore& store, const std::map<std::string, std::string>& meta);
ParamStore load_checkpoint(std::istream& is, std::map<std::string, std::string>* meta = nullptr);
void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::map<std::string, std::string>& meta);
ParamStore load_checkpoint(const std::string& path, std::map<std::string, std::string>* meta = nullptr);

std::string format_double(double v);

}  // namespace emerg::ad
