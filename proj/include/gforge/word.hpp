#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "gforge/signature.hpp"

namespace gforge {

/* Normal form: alternating syllables. A syllable is one letter in one factor
 * of the free product decomposition: a nonzero power of a free generator, a
 * non-identity element of a finite peripheral factor, or a nonzero power of a
 * cyclic peripheral generator. Adjacent syllables never live in the same
 * factor. */
enum class SylKind : uint8_t { Free, Per };

struct Syllable {
  SylKind k = SylKind::Free;
  int idx = 0;      // free generator index, or peripheral factor index
  long long v = 0;  // exponent; for finite factors, the element index

  friend bool operator==(const Syllable& a, const Syllable& b) {
    return a.k == b.k && a.idx == b.idx && a.v == b.v;
  }
  friend bool operator<(const Syllable& a, const Syllable& b) {
    return std::tuple((int)a.k, a.idx, a.v) < std::tuple((int)b.k, b.idx, b.v);
  }
};

struct Word {
  std::vector<Syllable> syl;

  bool empty() const { return syl.empty(); }
  size_t size() const { return syl.size(); }
  friend bool operator==(const Word& a, const Word& b) { return a.syl == b.syl; }
  friend bool operator!=(const Word& a, const Word& b) { return !(a == b); }
  friend bool operator<(const Word& a, const Word& b) { return a.syl < b.syl; }
};

inline bool same_slot(const Syllable& a, const Syllable& b) {
  return a.k == b.k && a.idx == b.idx;
}

/* Push with merging against the stack top; keeps the alternating invariant. */
inline void push_syllable(const Signature& sig, std::vector<Syllable>& out, Syllable s) {
  if (s.k == SylKind::Free || sig.factors[s.idx].kind == FactorKind::Cyclic) {
    if (s.v == 0) return;
  } else {
    if (s.v == sig.factors[s.idx].identity) return;
  }
  while (!out.empty() && same_slot(out.back(), s)) {
    Syllable t = out.back();
    out.pop_back();
    if (t.k == SylKind::Free || sig.factors[t.idx].kind == FactorKind::Cyclic) {
      t.v += s.v;
      if (t.v == 0) return;
    } else {
      t.v = sig.factors[t.idx].mul((int)t.v, (int)s.v);
      if (t.v == sig.factors[t.idx].identity) return;
    }
    s = t;
  }
  out.push_back(s);
}

inline Word normalize(const Signature& sig, const std::vector<Syllable>& raw) {
  Word w;
  w.syl.reserve(raw.size());
  for (const auto& s : raw) push_syllable(sig, w.syl, s);
  return w;
}

inline Word identity_word() { return Word{}; }

inline Word mul(const Signature& sig, const Word& a, const Word& b) {
  Word w;
  w.syl = a.syl;
  for (const auto& s : b.syl) push_syllable(sig, w.syl, s);
  return w;
}

inline Syllable inv_syl(const Signature& sig, const Syllable& s) {
  Syllable r = s;
  if (s.k == SylKind::Free || sig.factors[s.idx].kind == FactorKind::Cyclic)
    r.v = -s.v;
  else
    r.v = sig.factors[s.idx].inv((int)s.v);
  return r;
}

inline Word inv(const Signature& sig, const Word& a) {
  Word w;
  w.syl.reserve(a.size());
  for (auto it = a.syl.rbegin(); it != a.syl.rend(); ++it) w.syl.push_back(inv_syl(sig, *it));
  return w;
}

inline Word pow(const Signature& sig, const Word& a, long long n) {
  Word base = n < 0 ? inv(sig, a) : a;
  long long m = n < 0 ? -n : n;
  Word r;
  for (long long i = 0; i < m; ++i) r = mul(sig, r, base);
  return r;
}

/* c w c^-1 */
inline Word conj(const Signature& sig, const Word& c, const Word& w) {
  return mul(sig, mul(sig, c, w), inv(sig, c));
}

inline Word word_of(const Syllable& s) {
  Word w;
  w.syl.push_back(s);
  return w;
}

/* Letter-weighted length: |exponent| for free/cyclic syllables, 1 for finite. */
inline long long word_length(const Signature& sig, const Word& w) {
  long long L = 0;
  for (const auto& s : w.syl) {
    if (s.k == SylKind::Free || sig.factors[s.idx].kind == FactorKind::Cyclic)
      L += s.v < 0 ? -s.v : s.v;
    else
      L += 1;
  }
  return L;
}

struct CyclicForm {
  Word conj;  // w = conj * core * conj^-1
  Word core;  // cyclically reduced: first and last syllables in distinct factors
};

inline CyclicForm cyclic_reduce(const Signature& sig, const Word& w) {
  CyclicForm f;
  f.core = w;
  while (f.core.size() >= 2 && same_slot(f.core.syl.front(), f.core.syl.back())) {
    Syllable s = f.core.syl.front();
    std::vector<Syllable> mid(f.core.syl.begin() + 1, f.core.syl.end());
    push_syllable(sig, mid, s);
    f.core.syl = std::move(mid);
    f.conj.syl.push_back(s);  // alternating by construction, stays normal
  }
  f.conj = normalize(sig, f.conj.syl);
  return f;
}

inline bool cyclically_reduced(const Word& w) {
  return w.size() < 2 || !same_slot(w.syl.front(), w.syl.back());
}

/* Nontrivial elements conjugate into a peripheral factor: returns the factor. */
inline std::optional<int> peripheral_factor_of(const Signature& sig, const Word& w) {
  CyclicForm f = cyclic_reduce(sig, w);
  if (f.core.size() == 1 && f.core.syl[0].k == SylKind::Per) return f.core.syl[0].idx;
  return std::nullopt;
}

inline bool nonperipheral(const Signature& sig, const Word& w) {
  return !w.empty() && !peripheral_factor_of(sig, w).has_value();
}

/* Conjugacy: cyclically reduced words of syllable length >= 2 are conjugate
 * iff one is a rotation of the other; single syllables iff they are conjugate
 * inside their factor. Returns c with c * w2 * c^-1 = w1. */
inline std::optional<Word> conjugate_test(const Signature& sig, const Word& w1, const Word& w2) {
  CyclicForm f1 = cyclic_reduce(sig, w1), f2 = cyclic_reduce(sig, w2);
  if (f1.core.size() != f2.core.size()) return std::nullopt;
  const size_t m = f1.core.size();
  if (m == 0) return identity_word();
  if (m == 1) {
    Syllable s1 = f1.core.syl[0], s2 = f2.core.syl[0];
    if (s1.k != s2.k || s1.idx != s2.idx) return std::nullopt;
    if (s1.k == SylKind::Per && sig.factors[s1.idx].kind == FactorKind::Finite) {
      const auto& F = sig.factors[s1.idx];
      for (int h = 0; h < F.order; ++h) {
        if (F.mul(F.mul(h, (int)s2.v), F.inv(h)) == (int)s1.v) {
          Word hw;
          if (h != F.identity) hw.syl.push_back(Syllable{SylKind::Per, s1.idx, h});
          return mul(sig, mul(sig, f1.conj, hw), inv(sig, f2.conj));
        }
      }
      return std::nullopt;
    }
    if (s1.v != s2.v) return std::nullopt;
    return mul(sig, f1.conj, inv(sig, f2.conj));
  }
  for (size_t j = 0; j < m; ++j) {
    bool eq = true;
    for (size_t i = 0; i < m && eq; ++i) eq = f2.core.syl[(j + i) % m] == f1.core.syl[i];
    if (eq) {
      Word q;  // prefix of core2 of length j; rotation_j(core2) = q^-1 core2 q
      q.syl.assign(f2.core.syl.begin(), f2.core.syl.begin() + j);
      return mul(sig, mul(sig, f1.conj, inv(sig, q)), inv(sig, f2.conj));
    }
  }
  return std::nullopt;
}

/* Canonical representative of the conjugacy class: minimal rotation of the
 * cyclic core; single finite syllables minimized over in-factor conjugation. */
inline Word conjugacy_key(const Signature& sig, const Word& w) {
  CyclicForm f = cyclic_reduce(sig, w);
  const size_t m = f.core.size();
  if (m <= 1) {
    if (m == 1 && f.core.syl[0].k == SylKind::Per &&
        sig.factors[f.core.syl[0].idx].kind == FactorKind::Finite) {
      const auto& F = sig.factors[f.core.syl[0].idx];
      int best = (int)f.core.syl[0].v;
      for (int h = 0; h < F.order; ++h)
        best = std::min(best, F.mul(F.mul(h, (int)f.core.syl[0].v), F.inv(h)));
      Word r;
      r.syl.push_back(Syllable{SylKind::Per, f.core.syl[0].idx, best});
      return r;
    }
    return f.core;
  }
  size_t bestj = 0;
  auto rot_less = [&](size_t a, size_t b) {
    for (size_t i = 0; i < m; ++i) {
      const Syllable &x = f.core.syl[(a + i) % m], &y = f.core.syl[(b + i) % m];
      if (x == y) continue;
      return x < y;
    }
    return false;
  };
  for (size_t j = 1; j < m; ++j)
    if (rot_less(j, bestj)) bestj = j;
  Word r;
  for (size_t i = 0; i < m; ++i) r.syl.push_back(f.core.syl[(bestj + i) % m]);
  return r;
}

/* Solves a = c^k. Requires c != 1. */
inline std::optional<long long> power_in_cyclic(const Signature& sig, const Word& c, const Word& a) {
  if (c.empty()) throw PreconditionError("power_in_cyclic: trivial base");
  CyclicForm f = cyclic_reduce(sig, c);
  Word ap = mul(sig, mul(sig, inv(sig, f.conj), a), f.conj);
  const Word& d = f.core;
  if (ap.empty()) return 0;
  if (d.size() == 1) {
    const Syllable& s = d.syl[0];
    if (ap.size() != 1 || !same_slot(ap.syl[0], s)) return std::nullopt;
    if (s.k == SylKind::Per && sig.factors[s.idx].kind == FactorKind::Finite) {
      const auto& F = sig.factors[s.idx];
      int acc = F.identity;
      for (int k = 1; k <= F.order; ++k) {
        acc = F.mul(acc, (int)s.v);
        if (acc == (int)ap.syl[0].v) return k;
      }
      return std::nullopt;
    }
    if (ap.syl[0].v % s.v == 0) return ap.syl[0].v / s.v;
    return std::nullopt;
  }
  // cyclically reduced with >= 2 syllables: powers concatenate literally
  if (ap.size() % d.size() != 0) return std::nullopt;
  long long k = (long long)(ap.size() / d.size());
  for (long long sign : {+1LL, -1LL}) {
    Word probe = pow(sig, d, sign * k);
    if (probe == ap) return sign * k;
  }
  return std::nullopt;
}

/* w = u^m with m >= 2 for some u. Assumes nothing; peripheral syllables of
 * finite order are only proper powers when a table root of higher order exists. */
inline bool is_proper_power(const Signature& sig, const Word& w) {
  if (w.empty()) return false;
  CyclicForm f = cyclic_reduce(sig, w);
  const Word& d = f.core;
  const size_t m = d.size();
  if (m == 1) {
    const Syllable& s = d.syl[0];
    if (s.k == SylKind::Free || sig.factors[s.idx].kind == FactorKind::Cyclic)
      return s.v <= -2 || s.v >= 2;
    const auto& F = sig.factors[s.idx];
    auto ord = [&](int g) {
      int acc = g, k = 1;
      while (acc != F.identity) { acc = F.mul(acc, g); ++k; }
      return k;
    };
    int target = ord((int)s.v);
    for (int h = 0; h < F.order; ++h) {
      if (h == F.identity) continue;
      int acc = h, k = 1;
      while (acc != (int)s.v && k <= F.order) { acc = F.mul(acc, h); ++k; }
      if (acc == (int)s.v && k >= 2 && ord(h) > target) return true;
    }
    return false;
  }
  for (size_t p = 1; p < m; ++p) {
    if (m % p != 0) continue;
    bool per = true;
    for (size_t i = 0; i < m && per; ++i) per = d.syl[i] == d.syl[(i + p) % m];
    if (per) return true;
  }
  return false;
}

// ---- text format -----------------------------------------------------------

inline std::string upper_of(const std::string& s) {
  std::string r = s;
  for (char& c : r) c = (char)std::toupper((unsigned char)c);
  return r;
}

inline std::string format_syllable(const Signature& sig, const Syllable& s) {
  std::ostringstream o;
  if (s.k == SylKind::Free) {
    const std::string& n = sig.freeGens[s.idx];
    if (s.v == 1) o << n;
    else if (s.v == -1) o << upper_of(n);
    else o << n << '^' << s.v;
  } else if (sig.factors[s.idx].kind == FactorKind::Cyclic) {
    o << sig.factors[s.idx].name << '^' << s.v;
  } else {
    o << sig.factors[s.idx].name << '[' << s.v << ']';
  }
  return o.str();
}

inline std::string format_word(const Signature& sig, const Word& w) {
  if (w.empty()) return "1";
  std::string r;
  for (size_t i = 0; i < w.size(); ++i) {
    if (i) r += ' ';
    r += format_syllable(sig, w.syl[i]);
  }
  return r;
}

/* Tokens: "1", "<gen>", "<GEN>" (inverse), "<gen>^<int>", "<name>[<idx>]".
 * Separators: whitespace or a middle dot. */
inline Word parse_word(const Signature& sig, const std::string& text) {
  std::string t = text;
  for (size_t p; (p = t.find("\xc2\xb7")) != std::string::npos;) t.replace(p, 2, " ");
  std::istringstream in(t);
  std::vector<Syllable> raw;
  std::string tok;
  while (in >> tok) {
    if (tok == "1") continue;
    size_t caret = tok.find('^'), brack = tok.find('[');
    if (brack != std::string::npos) {
      if (tok.back() != ']') throw ParseError("bad token: " + tok);
      std::string name = tok.substr(0, brack);
      std::string num = tok.substr(brack + 1, tok.size() - brack - 2);
      int fi = sig.factor_index(name);
      if (fi < 0 || sig.factors[fi].kind != FactorKind::Finite)
        throw ParseError("unknown finite factor in token: " + tok);
      char* end = nullptr;
      long e = std::strtol(num.c_str(), &end, 10);
      if (end == num.c_str() || *end || e < 0 || e >= sig.factors[fi].order)
        throw ParseError("element index out of range: " + tok);
      raw.push_back(Syllable{SylKind::Per, fi, e});
      continue;
    }
    std::string name = caret == std::string::npos ? tok : tok.substr(0, caret);
    long long e = 1;
    if (caret != std::string::npos) {
      std::string num = tok.substr(caret + 1);
      char* end = nullptr;
      e = std::strtoll(num.c_str(), &end, 10);
      if (end == num.c_str() || *end) throw ParseError("bad exponent: " + tok);
    }
    bool inverse = false;
    std::string lname = name;
    {
      std::string lowered = name;
      for (char& c : lowered) c = (char)std::tolower((unsigned char)c);
      if (lowered != name) {
        if (upper_of(lowered) != name) throw ParseError("bad token case: " + tok);
        inverse = true;
        lname = lowered;
      }
    }
    if (inverse) e = -e;
    int gi = sig.gen_index(lname);
    if (gi >= 0) {
      raw.push_back(Syllable{SylKind::Free, gi, e});
      continue;
    }
    int fi = sig.factor_index(lname);
    if (fi >= 0 && sig.factors[fi].kind == FactorKind::Cyclic) {
      raw.push_back(Syllable{SylKind::Per, fi, e});
      continue;
    }
    throw ParseError("unknown generator: " + tok);
  }
  return normalize(sig, raw);
}

}  // namespace gforge
