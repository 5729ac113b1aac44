#include "gforge/whitehead.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "support.hpp"

using namespace gforge;
using tsup::f2;
using tsup::z2z2f1;
using tsup::z2z3;
using tsup::z4f1;
using tsup::zperf1;

namespace {

Word W(const Signature& sig, const char* s) { return parse_word(sig, s); }

int dir_index(const WhiteheadGraph& g, int edge, int end, const Word& coset = Word{}) {
  for (size_t i = 0; i < g.dirs.size(); ++i)
    if (g.dirs[i].edge == edge && g.dirs[i].end == end && g.dirs[i].coset == coset)
      return (int)i;
  return -1;
}

std::set<std::pair<int, int>> turn_set(const WhiteheadGraph& g) {
  std::set<std::pair<int, int>> out;
  for (auto& t : g.turns) out.insert({std::min(t.first, t.second), std::max(t.first, t.second)});
  return out;
}

long long total_turns(const std::vector<WhiteheadGraph>& gs) {
  long long n = 0;
  for (auto& g : gs) n += (long long)g.turns.size();
  return n;
}

// ---- independent rank-two oracle, entirely on strings over {a,A,b,B} ----

char sinv(char c) {
  switch (c) {
    case 'a': return 'A';
    case 'A': return 'a';
    case 'b': return 'B';
    default: return 'b';
  }
}

std::string sreduce(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (!out.empty() && out.back() == sinv(c)) out.pop_back();
    else out.push_back(c);
  }
  return out;
}

std::string screduce(std::string s) {
  s = sreduce(s);
  while (s.size() >= 2 && s.front() == sinv(s.back())) s = s.substr(1, s.size() - 2);
  return s;
}

std::string scanon(const std::string& s) {
  if (s.empty()) return s;
  std::string best = s;
  for (size_t i = 1; i < s.size(); ++i) {
    std::string r = s.substr(i) + s.substr(0, i);
    if (r < best) best = r;
  }
  return best;
}

bool somits(const std::string& s) {
  bool ha = s.find('a') != std::string::npos || s.find('A') != std::string::npos;
  bool hb = s.find('b') != std::string::npos || s.find('B') != std::string::npos;
  return !ha || !hb;
}

/* phi(x) = u^alpha x u^-beta for x the generator other than u; u fixed. */
std::string smove(const std::string& s, char u, bool alpha, bool beta) {
  char x = (u == 'a' || u == 'A') ? 'b' : 'a';
  char X = sinv(x);
  std::string rep, repInv;
  if (alpha) rep += u;
  rep += x;
  if (beta) rep += sinv(u);
  for (auto it = rep.rbegin(); it != rep.rend(); ++it) repInv += sinv(*it);
  std::string out;
  for (char c : s) {
    if (c == x) out += rep;
    else if (c == X) out += repInv;
    else out.push_back(c);
  }
  return out;
}

struct OracleResult {
  bool simple;
  size_t minLen;
};

/* Breadth-first closure under non-increasing Whitehead moves; peak reduction
 * says this reaches the minimal level, and a proper-factor element shows a
 * one-letter form there. */
OracleResult oracle(const std::string& w0) {
  std::string start = scanon(screduce(w0));
  std::set<std::string> seen{start};
  std::vector<std::string> frontier{start};
  OracleResult res{somits(start), start.size()};
  while (!frontier.empty() && !res.simple) {
    std::vector<std::string> next;
    for (const auto& s : frontier) {
      for (char u : {'a', 'A', 'b', 'B'}) {
        for (int m = 1; m < 4; ++m) {
          std::string img = scanon(screduce(smove(s, u, m & 1, m & 2)));
          if (img.size() > s.size()) continue;
          if (!seen.insert(img).second) continue;
          res.minLen = std::min(res.minLen, img.size());
          if (somits(img)) {
            res.simple = true;
            break;
          }
          next.push_back(img);
        }
        if (res.simple) break;
      }
      if (res.simple) break;
    }
    frontier = std::move(next);
  }
  return res;
}

std::string to_tokens(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (!out.empty()) out.push_back(' ');
    out.push_back(c);
  }
  return out;
}

}  // namespace

TEST_CASE("whitehead graphs on the rank two rose", "[whitehead]") {
  Signature sig = f2();
  MarkedSplitting rose = standard_rose(sig);

  SECTION("commutator gives the four cycle") {
    auto gs = whitehead_graphs(rose, W(sig, "a b A B"));
    REQUIRE(gs.size() == 1);
    const auto& g = gs[0];
    REQUIRE(g.dirs.size() == 4);
    REQUIRE(g.turns.size() == 4);
    int ap = dir_index(g, 0, 0), am = dir_index(g, 0, 1);
    int bp = dir_index(g, 1, 0), bm = dir_index(g, 1, 1);
    REQUIRE((ap >= 0 && am >= 0 && bp >= 0 && bm >= 0));
    std::set<std::pair<int, int>> want{
        {std::min(am, bp), std::max(am, bp)},
        {std::min(bm, am), std::max(bm, am)},
        {std::min(ap, bm), std::max(ap, bm)},
        {std::min(bp, ap), std::max(bp, ap)},
    };
    CHECK(turn_set(g) == want);
    CHECK(g.connected());
    CHECK_FALSE(g.has_cut_vertex());
  }

  SECTION("a product of two letters splits into two components") {
    auto gs = whitehead_graphs(rose, W(sig, "a b"));
    REQUIRE(gs.size() == 1);
    const auto& g = gs[0];
    REQUIRE(g.dirs.size() == 4);
    REQUIRE(g.turns.size() == 2);
    CHECK_FALSE(g.connected());
  }

  SECTION("a single letter leaves the other directions isolated") {
    auto gs = whitehead_graphs(rose, W(sig, "a"));
    const auto& g = gs[0];
    REQUIRE(g.dirs.size() == 4);
    REQUIRE(g.turns.size() == 1);
    int ap = dir_index(g, 0, 0), am = dir_index(g, 0, 1);
    CHECK(turn_set(g) == std::set<std::pair<int, int>>{{std::min(am, ap), std::max(am, ap)}});
    CHECK_FALSE(g.connected());
  }

  SECTION("peripheral words are rejected") {
    Signature zs = z2z3();
    MarkedSplitting star = standard_rose(zs);
    REQUIRE_THROWS_AS(whitehead_graphs(star, W(zs, "s[1]")), PreconditionError);
  }

  SECTION("turn count equals the crossing number") {
    std::mt19937 rng(7101);
    Signature zs = tsup::z2z3f1();
    MarkedSplitting star = standard_rose(zs);
    for (int i = 0; i < 40; ++i) {
      Word w = tsup::rand_word(zs, rng, 5);
      if (!nonperipheral(zs, w)) continue;
      CHECK(total_turns(whitehead_graphs(star, w)) == translation_length(star, w));
    }
  }
}

TEST_CASE("stabilizer saturation joins finite vertex links", "[whitehead]") {
  Signature sig = z2z3();
  MarkedSplitting star = standard_rose(sig);
  auto gs = whitehead_graphs(star, W(sig, "s[1] t[1]"));
  REQUIRE(gs.size() == 3);
  CHECK(total_turns(gs) == 4);

  // center: both spoke directions, joined twice
  CHECK(gs[0].dirs.size() == 2);
  CHECK(gs[0].turns.size() == 2);
  CHECK(gs[0].connected());

  // order-two vertex: one raw turn, already joined by the stabilizer
  CHECK(gs[1].dirs.size() == 2);
  CHECK(gs[1].turns.size() == 1);
  CHECK(gs[1].connected());

  // order-three vertex: one raw turn saturates to a triangle
  CHECK(gs[2].dirs.size() == 3);
  CHECK(gs[2].turns.size() == 1);
  CHECK(gs[2].satTurns.size() == 3);
  CHECK(gs[2].connected());
}

TEST_CASE("peak reduction finds proper free factors", "[whitehead]") {
  Signature sig = f2();

  SECTION("single letters and primitives") {
    auto v = is_simple(W(sig, "a"), sig);
    REQUIRE(v.simple);
    REQUIRE(v.witness.has_value());
    CHECK(contains(sig, *v.witness, W(sig, "a")));
    KuroshData K = kurosh_decompose(sig, *v.witness);
    CHECK(K.parts.empty());
    CHECK(K.freeRank == 1);

    auto vab = is_simple(W(sig, "a b"), sig);
    REQUIRE(vab.simple);
    CHECK(contains(sig, *vab.witness, W(sig, "a b")));
    CHECK(canonical_code(sig, *vab.witness) ==
          canonical_code(sig, core_graph_from_generators(sig, {W(sig, "a b")})));

    auto v2 = is_simple(W(sig, "a^2 b"), sig);
    REQUIRE(v2.simple);
    CHECK(canonical_code(sig, *v2.witness) ==
          canonical_code(sig, core_graph_from_generators(sig, {W(sig, "a^2 b")})));
  }

  SECTION("the commutator is not simple") {
    auto v = is_simple(W(sig, "a b A B"), sig);
    REQUIRE_FALSE(v.simple);
    REQUIRE(v.terminal.has_value());
    CHECK(translation_length(*v.terminal, W(sig, "a b A B")) == 4);
    CHECK(validate(*v.terminal).kind == SplittingKind::Grushko);
    CHECK(v.graphsConnectedNoCut);
    auto c = orbit_crossings(*v.terminal, W(sig, "a b A B"));
    CHECK(c == std::vector<long long>{2, 2});
  }

  SECTION("conjugation invariance") {
    for (const char* s : {"a b A B", "a b", "a^2 b^2", "a^2 b"}) {
      Word w = W(sig, s);
      Word c = conj(sig, W(sig, "b a^2"), w);
      CHECK(is_simple(w, sig).simple == is_simple(c, sig).simple);
    }
  }

  SECTION("peripheral input is rejected") {
    Signature zs = z2z3();
    REQUIRE_THROWS_AS(is_simple(W(zs, "t[2]"), zs), PreconditionError);
  }
}

TEST_CASE("simplicity over peripheral factors", "[whitehead]") {
  SECTION("order two times order three") {
    Signature sig = z2z3();
    auto v = is_simple(W(sig, "s[1] t[1]"), sig);
    REQUIRE_FALSE(v.simple);
    CHECK(v.graphsConnectedNoCut);  // needs the saturated link at the order-three vertex
  }

  SECTION("order four factor with a free letter") {
    Signature sig = z4f1();
    auto v = is_simple(W(sig, "s[2] z"), sig);
    REQUIRE(v.simple);
    CHECK(canonical_code(sig, *v.witness) ==
          canonical_code(sig, core_graph_from_generators(sig, {W(sig, "s[2] z")})));

    auto vs = is_simple(W(sig, "s[1] z"), sig);
    REQUIRE(vs.simple);
    CHECK(canonical_code(sig, *vs.witness) ==
          canonical_code(sig, core_graph_from_generators(sig, {W(sig, "s[1] z")})));

    auto vc = is_simple(W(sig, "s[1] z s[3] Z"), sig);
    REQUIRE_FALSE(vc.simple);
    // two torsion visits cannot merge: abelianization pins the syllable count
    CHECK(translation_length(standard_rose(sig), vc.reducedWord) == 6);
    // the spoke direction stays a cut vertex here, but every graph is connected
    for (const auto& g : vc.graphs) CHECK(g.connected());
  }

  SECTION("infinite cyclic factor") {
    Signature sig = zperf1();
    auto v = is_simple(W(sig, "p z"), sig);
    REQUIRE(v.simple);
    CHECK(contains(sig, *v.witness, W(sig, "p z")));

    auto vc = is_simple(W(sig, "p z p^-1 Z"), sig);
    CHECK_FALSE(vc.simple);
  }
}

TEST_CASE("simplicity agrees with a string oracle on all short rank two words", "[whitehead][sweep]") {
  Signature sig = f2();
  const int LMAX = 8;
  std::set<std::string> canon;
  for (int L = 1; L <= LMAX; ++L) {
    std::string s(L, 'a');
    const char* alpha = "aAbB";
    std::vector<int> ix(L, 0);
    while (true) {
      for (int i = 0; i < L; ++i) s[i] = alpha[ix[i]];
      if (sreduce(s) == s && screduce(s) == s && scanon(s) == s) canon.insert(s);
      int p = L - 1;
      while (p >= 0 && ix[p] == 3) ix[p--] = 0;
      if (p < 0) break;
      ix[p]++;
    }
  }
  REQUIRE(canon.size() > 1000);

  long long simples = 0, quads = 0;
  for (const auto& s : canon) {
    Word w = W(sig, to_tokens(s).c_str());
    OracleResult ora = oracle(s);
    auto v = is_simple(w, sig);
    INFO("word " << s);
    REQUIRE(v.simple == ora.simple);
    if (v.simple) {
      REQUIRE(v.witness.has_value());
      REQUIRE(contains(sig, *v.witness, w));
      ++simples;
    } else {
      // cut vertex lemma: minimal nonsimple words over free letters have
      // connected graphs without cut vertices
      REQUIRE(v.graphsConnectedNoCut);
    }

    // abelianization cross-check: factor elements never kill both exponents
    long long p = 0, q = 0;
    for (char c : s) {
      p += (c == 'a') - (c == 'A');
      q += (c == 'b') - (c == 'B');
    }
    if (p == 0 && q == 0) REQUIRE_FALSE(v.simple);

    // quadratic iff the minimal level is all twos and nothing filters it out
    bool pp = is_proper_power(sig, w);
    bool ci = conjugate_test(sig, w, inv(sig, w)).has_value();
    auto qw = is_quadratic(w, sig);
    bool expect = !ora.simple && !pp && !ci && ora.minLen == 4;
    REQUIRE(qw.has_value() == expect);
    if (qw) {
      CHECK(translation_length(*qw, w) == 2 * (long long)qw->edg.size());
      ++quads;
    }
  }
  CHECK(simples > 0);
  CHECK(quads > 0);
}

TEST_CASE("quadratic witnesses cross each orbit twice", "[whitehead]") {
  Signature sig = f2();

  SECTION("commutator and the nonorientable square pair") {
    for (const char* s : {"a b A B", "a^2 b^2", "a b a B"}) {
      Word w = W(sig, s);
      auto qw = is_quadratic(w, sig);
      REQUIRE(qw.has_value());
      CHECK(validate(*qw).kind == SplittingKind::Grushko);
      auto c = orbit_crossings(*qw, w);
      for (long long x : c) CHECK(x == 2);
      CHECK(translation_length(*qw, w) == 2 * (long long)qw->edg.size());
    }
  }

  SECTION("filtered inputs give nothing") {
    CHECK_FALSE(is_quadratic(W(sig, "a b"), sig).has_value());     // simple
    CHECK_FALSE(is_quadratic(W(sig, "a"), sig).has_value());       // simple
    CHECK_FALSE(is_quadratic(W(sig, "a b a b"), sig).has_value()); // proper power
    REQUIRE_THROWS_AS(is_quadratic(Word{}, sig), PreconditionError);
  }

  SECTION("conjugation invariance") {
    Word w = conj(sig, W(sig, "b^2 a"), W(sig, "a b A B"));
    auto qw = is_quadratic(w, sig);
    REQUIRE(qw.has_value());
    CHECK(translation_length(*qw, w) == 4);
  }

  SECTION("torsion products") {
    Signature zs = z2z3();
    auto qw = is_quadratic(W(zs, "s[1] t[1]"), zs);
    REQUIRE(qw.has_value());
    auto c = orbit_crossings(*qw, W(zs, "s[1] t[1]"));
    for (long long x : c) CHECK(x == 2);
  }

  SECTION("an element conjugate to its inverse is filtered") {
    Signature zs = z2z2f1();
    Word w = W(zs, "s[1] z t[1] Z");
    REQUIRE(conjugate_test(zs, w, inv(zs, w)).has_value());
    CHECK_FALSE(is_quadratic(w, zs).has_value());

    Word q = W(zs, "z^2 s[1] t[1]");
    REQUIRE_FALSE(conjugate_test(zs, q, inv(zs, q)).has_value());
    auto qw = is_quadratic(q, zs);
    REQUIRE(qw.has_value());
    CHECK(translation_length(*qw, q) == 6);
  }
}

namespace {

long long graph_euler(const MarkedSplitting& r) {
  // infinite cyclic vertices are circles, every other vertex a point
  long long v = 0;
  for (int i = 0; i < r.nv; ++i) {
    if (r.vtx[i].group.trivial()) {
      v += 1;
      continue;
    }
    KuroshData K = kurosh_decompose(r.sig, r.vtx[i].group);
    if (K.parts.size() == 1 && K.freeRank == 0 &&
        r.sig.factors[K.parts[0].factor].kind == FactorKind::Cyclic)
      continue;
    v += 1;
  }
  return v - (long long)r.edg.size();
}

}  // namespace

TEST_CASE("orbifolds reconstructed from band complexes", "[whitehead]") {
  Signature sig = f2();
  MarkedSplitting rose = standard_rose(sig);

  SECTION("commutator bounds the one holed torus") {
    Word w = W(sig, "a b A B");
    auto res = orbifold_from_quadratic(rose, w);
    CHECK(res.data.euler == -1);
    CHECK(res.data.orientable);
    CHECK(res.data.genus == 1);
    CHECK(res.data.boundaryCount == 1);
    CHECK(res.data.conePoints.empty());
    CHECK(res.data.unusedBoundaryWord == w);
    CHECK(res.data.euler == graph_euler(rose));
    REQUIRE(res.decomposition.nv == 1);
    CHECK(res.decomposition.edg.empty());
    CHECK(whole_group(sig, res.decomposition.vtx[0].group));
    CHECK(validate(res.decomposition).kind != SplittingKind::Invalid);
  }

  SECTION("the square pair bounds the one holed klein bottle") {
    Word w = W(sig, "a^2 b^2");
    auto res = orbifold_from_quadratic(rose, w);
    CHECK(res.data.euler == -1);
    CHECK_FALSE(res.data.orientable);
    CHECK(res.data.genus == 2);
    CHECK(res.data.boundaryCount == 1);
    CHECK(res.data.conePoints.empty());
  }

  SECTION("non quadratic input is rejected") {
    REQUIRE_THROWS_AS(orbifold_from_quadratic(rose, W(sig, "a b")), PreconditionError);
    REQUIRE_THROWS_AS(orbifold_from_quadratic(rose, W(sig, "a b a b")), PreconditionError);
  }

  SECTION("two torsion factors bound a disc with two cones") {
    Signature zs = z2z3();
    MarkedSplitting star = standard_rose(zs);
    Word w = W(zs, "s[1] t[1]");
    auto res = orbifold_from_quadratic(star, w);
    CHECK(res.data.euler == 1);
    CHECK(res.data.orientable);
    CHECK(res.data.genus == 0);
    CHECK(res.data.boundaryCount == 1);
    CHECK(res.data.conePoints == std::vector<long long>{2, 3});
    CHECK(res.data.euler == graph_euler(star));
    CHECK(conjugate_test(zs, res.data.unusedBoundaryWord, w).has_value());
    // both rotations generate their factors: the decomposition is trivial
    REQUIRE(res.decomposition.nv == 1);
    CHECK(whole_group(zs, res.decomposition.vtx[0].group));
    CHECK(validate(res.decomposition).kind != SplittingKind::Invalid);
  }

  SECTION("a moebius band with two cone points") {
    Signature zs = z2z2f1();
    MarkedSplitting star = standard_rose(zs);
    Word w = W(zs, "z^2 s[1] t[1]");
    auto res = orbifold_from_quadratic(star, w);
    CHECK(res.data.euler == 0);
    CHECK_FALSE(res.data.orientable);
    CHECK(res.data.genus == 1);
    CHECK(res.data.boundaryCount == 1);
    CHECK(res.data.conePoints == std::vector<long long>{2, 2});
    CHECK(res.data.euler == graph_euler(star));
    REQUIRE(res.decomposition.nv == 1);
    CHECK(whole_group(zs, res.decomposition.vtx[0].group));
  }

  SECTION("a proper rotation splits off its factor") {
    Signature zs = z4f1();
    MarkedSplitting star = standard_rose(zs);
    Word w = W(zs, "s[2] z^2");
    auto qw = is_quadratic(w, zs);
    REQUIRE(qw.has_value());
    auto res = orbifold_from_quadratic(*qw, w);
    CHECK(res.data.euler == 0);
    CHECK_FALSE(res.data.orientable);
    CHECK(res.data.genus == 1);
    CHECK(res.data.boundaryCount == 1);
    CHECK(res.data.conePoints == std::vector<long long>{2});
    REQUIRE(res.decomposition.nv == 2);
    REQUIRE(res.decomposition.edg.size() == 1);
    REQUIRE(res.decomposition.edg[0].rel.has_value());
    CHECK(*res.decomposition.edg[0].rel == W(zs, "s[2]"));
    CHECK(res.decomposition.markingOk);
    CHECK(contains(zs, res.decomposition.vtx[0].group, W(zs, "s[2]")));
    CHECK(contains(zs, res.decomposition.vtx[0].group, W(zs, "z")));
    // the orbifold group meets the factor in the proper subgroup generated
    // by the rotation, so the splitting sits outside the graded families
    auto cls = validate(res.decomposition);
    CHECK(cls.kind == SplittingKind::Invalid);
    CHECK(cls.reason == "vertex group meets a peripheral factor in a proper subgroup");
  }

  SECTION("an infinite cyclic factor adds a used boundary") {
    Signature zs = zperf1();
    MarkedSplitting star = standard_rose(zs);
    Word w = W(zs, "p z p^-1 z");
    auto qw = is_quadratic(w, zs);
    REQUIRE(qw.has_value());
    auto res = orbifold_from_quadratic(*qw, w);
    CHECK(res.data.boundaryCount == 2);
    CHECK(res.data.euler == -1);
    CHECK_FALSE(res.data.orientable);
    CHECK(res.data.genus == 1);
    CHECK(res.data.conePoints.empty());
    CHECK(res.data.euler == graph_euler(*qw));
  }
}
