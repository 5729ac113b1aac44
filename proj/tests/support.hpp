#pragma once

// Shared fixtures: the ambient structures the test suites run over.

#include "gforge/signature.hpp"
#include "gforge/word.hpp"

#include <random>

namespace tsup {

using namespace gforge;

inline Signature f2() { return make_signature({}, {"a", "b"}); }
inline Signature f3() { return make_signature({}, {"a", "b", "c"}); }

inline PeripheralFactor zmod(const std::string& name, int n) {
  std::vector<int> t(n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) t[i * n + j] = (i + j) % n;
  return make_finite_factor(name, n, t);
}

// Z/2 * Z/3
inline Signature z2z3() { return make_signature({zmod("s", 2), zmod("t", 3)}, {}); }
// Z/2 * Z/3 * F1
inline Signature z2z3f1() { return make_signature({zmod("s", 2), zmod("t", 3)}, {"z"}); }
// Z/2 * Z/2 * F1
inline Signature z2z2f1() { return make_signature({zmod("s", 2), zmod("t", 2)}, {"z"}); }
// Z/2 * F1
inline Signature z2f1() { return make_signature({zmod("s", 2)}, {"z"}); }
// Z/4 * F1
inline Signature z4f1() { return make_signature({zmod("s", 4)}, {"z"}); }
// peripheral Z * F1
inline Signature zperf1() { return make_signature({make_cyclic_factor("p")}, {"z"}); }

inline Word rand_word(const Signature& sig, std::mt19937& rng, int syllables) {
  std::vector<Syllable> raw;
  int slots = sig.free_rank() + sig.num_factors();
  if (slots == 0) return identity_word();
  std::uniform_int_distribution<int> slot(0, slots - 1);
  std::uniform_int_distribution<int> ex(-3, 3);
  for (int i = 0; i < syllables; ++i) {
    int s = slot(rng);
    if (s < sig.free_rank()) {
      raw.push_back(Syllable{SylKind::Free, s, (long long)ex(rng)});
    } else {
      int fi = s - sig.free_rank();
      if (sig.factors[fi].kind == FactorKind::Finite) {
        std::uniform_int_distribution<int> el(0, sig.factors[fi].order - 1);
        raw.push_back(Syllable{SylKind::Per, fi, (long long)el(rng)});
      } else {
        raw.push_back(Syllable{SylKind::Per, fi, (long long)ex(rng)});
      }
    }
  }
  return normalize(sig, raw);
}

}  // namespace tsup
