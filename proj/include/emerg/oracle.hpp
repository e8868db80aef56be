#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "emerg/tensor.hpp"

// Node states as sets of monomials over one symbol per feature, pushed
// through the message-passing recurrences. Coefficients are dropped and W is
// taken as fully mixing, so a message carries every monomial of every
// neighbour.
namespace emerg::oracle {

inline constexpr std::size_t kMaxFeatures = 8;
inline constexpr std::size_t kMaxLayers = 4;

// Exponents packed 8 bits per symbol.
class Monomial {
 public:
  Monomial() = default;
  static Monomial symbol(std::size_t feature);

  unsigned exponent(std::size_t feature) const { return static_cast<unsigned>((code_ >> (8 * feature)) & 0xff); }
  std::size_t degree() const;
  bool contains(std::size_t feature) const { return exponent(feature) != 0; }
  std::uint64_t code() const { return code_; }
  std::string str() const;  // e.g. x0^2*x3

  friend Monomial operator*(Monomial a, Monomial b);
  friend bool operator==(Monomial a, Monomial b) { return a.code_ == b.code_; }
  friend bool operator<(Monomial a, Monomial b) { return a.code_ < b.code_; }

 private:
  std::uint64_t code_ = 0;
};

struct MonomialHash {
  std::size_t operator()(Monomial m) const { return std::hash<std::uint64_t>{}(m.code()); }
};

class Polynomial {
 public:
  void insert(Monomial m) { terms_.insert(m); }
  void merge(const Polynomial& other) { terms_.insert(other.terms_.begin(), other.terms_.end()); }
  bool empty() const { return terms_.empty(); }
  std::size_t size() const { return terms_.size(); }
  const std::unordered_set<Monomial, MonomialHash>& terms() const { return terms_; }
  std::set<std::size_t> degrees() const;
  // {p * q}
  Polynomial times(const Polynomial& other) const;
  // Value at the point x_f = 0 for f in `zeroed`, 1 elsewhere, with generic
  // positive coefficients: nonzero iff some monomial avoids every zeroed symbol.
  bool survives(const std::set<std::size_t>& zeroed) const;

 private:
  std::unordered_set<Monomial, MonomialHash> terms_;
};

using Pattern = std::vector<std::vector<bool>>;  // support of an adjacency matrix

enum class Mode { emerg, residual };

struct SymbolicRun {
  std::size_t features = 0;
  std::vector<std::vector<Polynomial>> states;  // [l][m], l = 0..N_l

  std::set<std::size_t> degrees(std::size_t layer, std::size_t node) const;
  // Over h^(0..N_l) of one node.
  std::set<std::size_t> history_degrees(std::size_t node) const;
  std::size_t max_degree(std::size_t layer) const;
};

// patterns[l-1] is the support used by layer l. Throws ContractError on
// wrong counts or non-square patterns and ConfigError beyond the limits.
SymbolicRun symbolic_run(std::size_t features, std::size_t layers, const std::vector<Pattern>& patterns, Mode mode);
SymbolicRun symbolic_run(std::size_t features, std::size_t layers, const Pattern& every_layer, Mode mode);

struct Counterexample {
  std::size_t layer = 0;
  std::size_t node = 0;
  Monomial monomial;
};

struct Prop1Result {
  bool holds = true;
  // Highest-degree offending monomial at the deepest offending layer.
  std::optional<Counterexample> counterexample;
};

// Every nonvanishing h^(l), l <= N_l, contains only monomials of degree l+1.
Prop1Result check_prop1(std::size_t features, std::size_t layers, const std::vector<Pattern>& patterns,
                        Mode mode = Mode::emerg);

Pattern support_of(const Tensor& adjacency);
Pattern full_pattern(std::size_t n);
// Symmetric, unit diagonal, each off-diagonal pair kept with `density`.
Pattern random_pattern(std::size_t n, double density, std::mt19937_64& rng);

// Degree table: one row per (mode, N_l) with the degrees found anywhere in
// h^(0..N_l), the max degree of h^(N_l) and the check_prop1 verdict.
void write_degree_table(std::ostream& os, std::size_t features, std::size_t max_layers, const Pattern& pattern);

}  // namespace emerg::oracle
