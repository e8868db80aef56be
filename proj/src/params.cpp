#include "emerg/params.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "emerg/errors.hpp"

namespace emerg::ad {

namespace {
constexpr const char* kCheckpointHeader = "emerg-checkpoint";
constexpr int kCheckpointVersion = 1;
}  // namespace

void ParamStore::add(const std::string& name, Tensor value, bool trainable) {
  if (name.empty() || name.find_first_of(" \t\n") != std::string::npos)
    throw ContractError("parameter name must be non-empty without whitespace: '" + name + "'");
  if (!params_.emplace(name, Param{std::move(value), trainable}).second)
    throw ContractError("duplicate parameter name: " + name);
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw LookupError("unknown parameter: " + name);
  return it->second;
}

Param& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw LookupError("unknown parameter: " + name);
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : params_) out.push_back(k);
  return out;
}

std::vector<std::string> ParamStore::trainable_names(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [k, p] : params_)
    if (p.trainable && k.compare(0, prefix.size(), prefix) == 0) out.push_back(k);
  return out;
}

bool operator==(const ParamStore& a, const ParamStore& b) {
  if (a.params_.size() != b.params_.size()) return false;
  auto ib = b.params_.begin();
  for (const auto& [k, p] : a.params_) {
    if (k != ib->first || p.trainable != ib->second.trainable || !(p.value == ib->second.value)) return false;
    ++ib;
  }
  return true;
}

Binding::Binding(const ParamStore& store) {
  for (const auto& [name, p] : store)
    vars_.emplace(name, p.trainable ? Var::leaf(p.value, name) : Var::constant(p.value));
}

Binding::Binding(const ParamStore& store, const std::function<bool(const std::string&)>& traced) {
  for (const auto& [name, p] : store)
    vars_.emplace(name, p.trainable && traced(name) ? Var::leaf(p.value, name) : Var::constant(p.value));
}

const Var& Binding::operator()(const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw LookupError("parameter not bound: " + name);
  return it->second;
}

GradTable backward(const Var& seed, const Binding& binding, const std::string& prefix) {
  std::vector<std::string> names;
  std::vector<Var> wrt;
  for (const auto& [name, v] : binding.vars()) {
    if (!v.requires_grad() || name.compare(0, prefix.size(), prefix) != 0) continue;
    names.push_back(name);
    wrt.push_back(v);
  }
  auto grads = grad(seed, wrt);
  GradTable table;
  for (std::size_t i = 0; i < names.size(); ++i) table.emplace(names[i], grads[i].value());
  return table;
}

void Adam::step(ParamStore& params, const GradTable& grads) { step(params, grads, params.trainable_names()); }

void Adam::step(ParamStore& params, const GradTable& grads, const std::vector<std::string>& names) {
  for (const auto& name : names) {
    auto it = grads.find(name);
    if (it == grads.end()) throw ContractError("adam: missing gradient for " + name);
    if (it->second.shape() != params.value(name).shape()) throw ContractError("adam: gradient shape mismatch for " + name);
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (const auto& name : names) {
    Tensor& p = params.value(name);
    const Tensor& g = grads.at(name);
    auto [mit, m_new] = m_.try_emplace(name, Tensor(p.shape()));
    auto [vit, v_new] = v_.try_emplace(name, Tensor(p.shape()));
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

Tensor init_uniform(const Shape& shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(shape);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void save_checkpoint(std::ostream& os, const ParamStore& store, const std::map<std::string, std::string>& meta) {
  os << kCheckpointHeader << " v" << kCheckpointVersion << '\n';
  for (const auto& [k, v] : meta) {
    if (k.find_first_of(" \t\n") != std::string::npos || v.find('\n') != std::string::npos)
      throw ContractError("checkpoint meta entries must be single-line without spaces in keys: " + k);
    os << "meta " << k << ' ' << v << '\n';
  }
  for (const auto& [name, p] : store) {
    os << "param " << name << ' ' << (p.trainable ? 1 : 0) << ' ' << p.value.rank();
    for (auto d : p.value.shape()) os << ' ' << d;
    os << '\n';
    const auto vals = p.value.values();
    for (std::size_t i = 0; i < vals.size(); ++i) os << (i ? " " : "") << format_double(vals[i]);
    os << '\n';
  }
  os << "end\n";
}

ParamStore load_checkpoint(std::istream& is, std::map<std::string, std::string>* meta) {
  std::string line;
  if (!std::getline(is, line)) throw IngestError("checkpoint: empty input");
  {
    std::istringstream hs(line);
    std::string magic, version;
    hs >> magic >> version;
    if (magic != kCheckpointHeader) throw IngestError("checkpoint: bad header '" + line + "'");
    if (version != "v" + std::to_string(kCheckpointVersion))
      throw IngestError("checkpoint: unsupported version " + version);
  }
  ParamStore store;
  int lineno = 1;
  bool ended = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (line == "end") {
      ended = true;
      break;
    }
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "meta") {
      std::string key;
      ls >> key;
      std::string value;
      std::getline(ls >> std::ws, value);
      if (meta) (*meta)[key] = value;
    } else if (kind == "param") {
      std::string name;
      int trainable = 0;
      std::size_t rank = 0;
      ls >> name >> trainable >> rank;
      Shape shape(rank);
      for (auto& d : shape) ls >> d;
      if (!ls) throw IngestError("checkpoint: malformed param record at line " + std::to_string(lineno));
      std::string values;
      if (!std::getline(is, values)) throw IngestError("checkpoint: missing values for " + name);
      ++lineno;
      std::vector<double> data;
      data.reserve(shape_size(shape));
      const char* p = values.data();
      const char* end = p + values.size();
      while (p < end) {
        while (p < end && *p == ' ') ++p;
        if (p >= end) break;
        double v = 0;
        auto res = std::from_chars(p, end, v);
        if (res.ec != std::errc()) throw IngestError("checkpoint: bad number at line " + std::to_string(lineno));
        data.push_back(v);
        p = res.ptr;
      }
      store.add(name, Tensor(std::move(shape), std::move(data)), trainable != 0);
    } else if (!kind.empty()) {
      throw IngestError("checkpoint: unknown record '" + kind + "' at line " + std::to_string(lineno));
    }
  }
  if (!ended) throw IngestError("checkpoint: truncated (no end marker)");
  return store;
}

void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::map<std::string, std::string>& meta) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IngestError("cannot open checkpoint for writing: " + path);
  save_checkpoint(os, store, meta);
}

ParamStore load_checkpoint(const std::string& path, std::map<std::string, std::string>* meta) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IngestError("cannot open checkpoint: " + path);
  return load_checkpoint(is, meta);
}

}  // namespace emerg::ad
