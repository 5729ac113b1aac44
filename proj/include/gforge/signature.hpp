#pragma once

#include <cctype>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gforge {

/* Thrown on unreadable input (CLI exit 1). */
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/* Thrown when a documented precondition fails (CLI exit 2). */
struct PreconditionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/* Thrown when a search exhausts its bound without reaching a verdict (CLI exit 3). */
struct BoundExhausted : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class FactorKind { Finite, Cyclic };

/* One peripheral factor: a finite group given by its multiplication table,
 * or an infinite cyclic group. Finite elements are indices into the table. */
struct PeripheralFactor {
  std::string name;
  FactorKind kind = FactorKind::Cyclic;
  int order = 0;            // Finite only
  std::vector<int> table;   // row-major, table[a*order+b] = a*b
  int identity = -1;
  std::vector<int> inverse;

  int mul(int a, int b) const { return table[a * order + b]; }
  int inv(int a) const { return inverse[a]; }
};

inline PeripheralFactor make_cyclic_factor(std::string name) {
  PeripheralFactor f;
  f.name = std::move(name);
  f.kind = FactorKind::Cyclic;
  return f;
}

/* Validates the table as a group: closed entries, two-sided identity,
 * inverses, associativity. order is small (desk scale), O(n^3) is fine. */
inline PeripheralFactor make_finite_factor(std::string name, int order, std::vector<int> table) {
  if (order < 1) throw PreconditionError("finite factor order must be >= 1");
  if ((int)table.size() != order * order)
    throw PreconditionError("multiplication table must have order^2 entries");
  for (int x : table)
    if (x < 0 || x >= order) throw PreconditionError("table entry out of range");
  PeripheralFactor f;
  f.name = std::move(name);
  f.kind = FactorKind::Finite;
  f.order = order;
  f.table = std::move(table);
  for (int e = 0; e < order; ++e) {
    bool ok = true;
    for (int a = 0; a < order && ok; ++a)
      ok = f.mul(e, a) == a && f.mul(a, e) == a;
    if (ok) { f.identity = e; break; }
  }
  if (f.identity < 0) throw PreconditionError("table has no identity element");
  f.inverse.assign(order, -1);
  for (int a = 0; a < order; ++a) {
    for (int b = 0; b < order; ++b)
      if (f.mul(a, b) == f.identity && f.mul(b, a) == f.identity) { f.inverse[a] = b; break; }
    if (f.inverse[a] < 0) throw PreconditionError("table element without inverse");
  }
  for (int a = 0; a < order; ++a)
    for (int b = 0; b < order; ++b)
      for (int c = 0; c < order; ++c)
        if (f.mul(f.mul(a, b), c) != f.mul(a, f.mul(b, c)))
          throw PreconditionError("table is not associative");
  return f;
}

/* The ambient structure: peripheral factors G_1,...,G_k and free generators
 * x_1,...,x_N. Names must be nonempty, lowercase-alphabetic and distinct;
 * uppercase forms are reserved for inverses in the text format. */
struct Signature {
  std::vector<PeripheralFactor> factors;
  std::vector<std::string> freeGens;

  int num_factors() const { return (int)factors.size(); }
  int free_rank() const { return (int)freeGens.size(); }

  int factor_index(const std::string& n) const {
    for (int i = 0; i < (int)factors.size(); ++i)
      if (factors[i].name == n) return i;
    return -1;
  }
  int gen_index(const std::string& n) const {
    for (int i = 0; i < (int)freeGens.size(); ++i)
      if (freeGens[i] == n) return i;
    return -1;
  }
};

inline void check_name(const std::string& n) {
  if (n.empty()) throw PreconditionError("empty generator name");
  for (char c : n)
    if (!std::islower((unsigned char)c)) throw PreconditionError("generator names must be lowercase alphabetic: " + n);
}

inline Signature make_signature(std::vector<PeripheralFactor> factors, std::vector<std::string> freeGens) {
  Signature s;
  s.factors = std::move(factors);
  s.freeGens = std::move(freeGens);
  std::vector<std::string> seen;
  for (auto& f : s.factors) { check_name(f.name); seen.push_back(f.name); }
  for (auto& g : s.freeGens) { check_name(g); seen.push_back(g); }
  for (size_t i = 0; i < seen.size(); ++i)
    for (size_t j = i + 1; j < seen.size(); ++j)
      if (seen[i] == seen[j]) throw PreconditionError("duplicate generator name: " + seen[i]);
  return s;
}

/* Complexity (k+N, N), ordered lexicographically. */
inline std::pair<int, int> complexity(const Signature& s) {
  return {s.num_factors() + s.free_rank(), s.free_rank()};
}

/* The small cases where the factor systems degenerate:
 * (0,0), (1,0), (1,1), (2,0), (2,1) and nothing else. */
inline bool sporadic(const Signature& s) {
  auto [kn, n] = complexity(s);
  return kn < 2 || (kn == 2 && n <= 1);
}

}  // namespace gforge
