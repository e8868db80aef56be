#include "emerg/oracle.hpp"

#include <ostream>
#include <sstream>

#include "emerg/errors.hpp"

namespace emerg::oracle {

Monomial Monomial::symbol(std::size_t feature) {
  if (feature >= kMaxFeatures) throw ConfigError("oracle: at most " + std::to_string(kMaxFeatures) + " features");
  Monomial m;
  m.code_ = std::uint64_t{1} << (8 * feature);
  return m;
}

std::size_t Monomial::degree() const {
  std::size_t d = 0;
  for (std::size_t f = 0; f < kMaxFeatures; ++f) d += exponent(f);
  return d;
}

std::string Monomial::str() const {
  std::ostringstream os;
  bool first = true;
  for (std::size_t f = 0; f < kMaxFeatures; ++f) {
    const unsigned e = exponent(f);
    if (e == 0) continue;
    if (!first) os << '*';
    first = false;
    os << 'x' << f;
    if (e > 1) os << '^' << e;
  }
  return first ? "1" : os.str();
}

Monomial operator*(Monomial a, Monomial b) {
  // Exponents stay far below 256 within the supported limits (max 2^4).
  Monomial out;
  out.code_ = a.code_ + b.code_;
  return out;
}

std::set<std::size_t> Polynomial::degrees() const {
  std::set<std::size_t> out;
  for (auto m : terms_) out.insert(m.degree());
  return out;
}

Polynomial Polynomial::times(const Polynomial& other) const {
  Polynomial out;
  out.terms_.reserve(terms_.size() * other.terms_.size());
  for (auto a : terms_)
    for (auto b : other.terms_) out.terms_.insert(a * b);
  return out;
}

bool Polynomial::survives(const std::set<std::size_t>& zeroed) const {
  for (auto m : terms_) {
    bool ok = true;
    for (auto f : zeroed) ok = ok && !m.contains(f);
    if (ok) return true;
  }
  return false;
}

std::set<std::size_t> SymbolicRun::degrees(std::size_t layer, std::size_t node) const {
  return states.at(layer).at(node).degrees();
}

std::set<std::size_t> SymbolicRun::history_degrees(std::size_t node) const {
  std::set<std::size_t> out;
  for (const auto& layer : states) {
    const auto d = layer.at(node).degrees();
    out.insert(d.begin(), d.end());
  }
  return out;
}

std::size_t SymbolicRun::max_degree(std::size_t layer) const {
  std::size_t best = 0;
  for (const auto& p : states.at(layer))
    for (auto m : p.terms()) best = std::max(best, m.degree());
  return best;
}

SymbolicRun symbolic_run(std::size_t features, std::size_t layers, const std::vector<Pattern>& patterns, Mode mode) {
  if (features == 0 || features > kMaxFeatures)
    throw ConfigError("oracle: features must lie in [1, " + std::to_string(kMaxFeatures) + "]");
  if (layers > kMaxLayers) throw ConfigError("oracle: at most " + std::to_string(kMaxLayers) + " layers");
  if (patterns.size() != layers)
    throw ContractError("oracle: " + std::to_string(patterns.size()) + " patterns for " + std::to_string(layers) +
                        " layers");
  for (const auto& p : patterns) {
    if (p.size() != features) throw ContractError("oracle: pattern is not " + std::to_string(features) + " square");
    for (const auto& row : p)
      if (row.size() != features) throw ContractError("oracle: pattern is not square");
  }

  SymbolicRun run;
  run.features = features;
  run.states.emplace_back(features);
  for (std::size_t m = 0; m < features; ++m) run.states[0][m].insert(Monomial::symbol(m));

  for (std::size_t l = 1; l <= layers; ++l) {
    const auto& pat = patterns[l - 1];
    const auto& prev = run.states[l - 1];
    // emerg messages carry the layer-0 states, residual ones the previous layer
    const auto& src = mode == Mode::emerg ? run.states[0] : prev;
    std::vector<Polynomial> next(features);
    for (std::size_t m = 0; m < features; ++m) {
      Polynomial msg;
      for (std::size_t n = 0; n < features; ++n)
        if (pat[m][n]) msg.merge(src[n]);
      next[m] = prev[m].times(msg);
      if (mode == Mode::residual) next[m].merge(prev[m]);
    }
    run.states.push_back(std::move(next));
  }
  return run;
}

SymbolicRun symbolic_run(std::size_t features, std::size_t layers, const Pattern& every_layer, Mode mode) {
  return symbolic_run(features, layers, std::vector<Pattern>(layers, every_layer), mode);
}

Prop1Result check_prop1(std::size_t features, std::size_t layers, const std::vector<Pattern>& patterns, Mode mode) {
  const auto run = symbolic_run(features, layers, patterns, mode);
  Prop1Result out;
  for (std::size_t l = 0; l <= layers; ++l)
    for (std::size_t m = 0; m < features; ++m)
      for (auto mono : run.states[l][m].terms()) {
        if (mono.degree() == l + 1) continue;
        out.holds = false;
        auto& cx = out.counterexample;
        if (!cx || l > cx->layer || (l == cx->layer && mono.degree() > cx->monomial.degree()) ||
            (l == cx->layer && mono.degree() == cx->monomial.degree() && mono < cx->monomial))
          cx = Counterexample{l, m, mono};
      }
  return out;
}

Pattern support_of(const Tensor& adjacency) {
  if (adjacency.rank() != 2 || adjacency.dim(0) != adjacency.dim(1))
    throw ContractError("oracle: adjacency must be square");
  const std::size_t n = adjacency.dim(0);
  Pattern p(n, std::vector<bool>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) p[i][j] = adjacency.at(i, j) != 0.0;
  return p;
}

Pattern full_pattern(std::size_t n) { return Pattern(n, std::vector<bool>(n, true)); }

Pattern random_pattern(std::size_t n, double density, std::mt19937_64& rng) {
  std::bernoulli_distribution keep(density);
  Pattern p(n, std::vector<bool>(n));
  for (std::size_t i = 0; i < n; ++i) {
    p[i][i] = true;
    for (std::size_t j = i + 1; j < n; ++j) p[i][j] = p[j][i] = keep(rng);
  }
  return p;
}

void write_degree_table(std::ostream& os, std::size_t features, std::size_t max_layers, const Pattern& pattern) {
  os << "mode,layers,degrees,max_degree,prop1\n";
  for (Mode mode : {Mode::emerg, Mode::residual})
    for (std::size_t nl = 1; nl <= max_layers; ++nl) {
      const auto run = symbolic_run(features, nl, pattern, mode);
      const bool holds = check_prop1(features, nl, std::vector<Pattern>(nl, pattern), mode).holds;
      std::set<std::size_t> all;
      for (std::size_t m = 0; m < features; ++m) {
        const auto d = run.history_degrees(m);
        all.insert(d.begin(), d.end());
      }
      os << (mode == Mode::emerg ? "emerg" : "residual") << ',' << nl << ',';
      bool first = true;
      for (auto d : all) {
        os << (first ? "" : " ") << d;
        first = false;
      }
      os << ',' << run.max_degree(nl) << ',' << (holds ? "pass" : "fail") << '\n';
    }
}

}  // namespace emerg::oracle
