#include "gforge/folding.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <random>
#include <set>

#include "support.hpp"

using namespace gforge;
using tsup::f2;
using tsup::f3;
using tsup::z2z3f1;

namespace {

Word W(const Signature& sig, const char* s) { return parse_word(sig, s); }

struct EdgeSpec {
  int o, t;
  const char* rel;  // "" = trivial edge group
  const char* tau;  // "" = identity stable letter
};

MarkedSplitting build(const Signature& sig, const std::vector<std::vector<const char*>>& vgens,
                      const std::vector<EdgeSpec>& edges) {
  MarkedSplitting s;
  s.sig = sig;
  s.nv = (int)vgens.size();
  s.basev = 0;
  for (auto& gl : vgens) {
    std::vector<Word> gens;
    for (auto* g : gl) gens.push_back(W(sig, g));
    s.vtx.push_back({core_graph_from_generators(sig, gens), {}});
  }
  for (auto& e : edges) {
    MarkedSplitting::Edg ed;
    ed.o = e.o;
    ed.t = e.t;
    if (std::string(e.rel) != "") ed.rel = W(sig, e.rel);
    if (std::string(e.tau) != "") ed.tau = W(sig, e.tau);
    s.edg.push_back(std::move(ed));
  }
  finalize_splitting(s);
  return s;
}

MarkedSplitting two_vertex(const Signature& sig, const std::vector<Word>& gensA,
                           const std::vector<Word>& gensB, const Word& u) {
  MarkedSplitting t;
  t.sig = sig;
  t.nv = 2;
  t.basev = 0;
  std::vector<Word> ga = gensA;
  ga.push_back(u);
  t.vtx.push_back({core_graph_from_generators(sig, ga), {}});
  t.vtx.push_back({core_graph_from_generators(sig, gensB), {}});
  MarkedSplitting::Edg e;
  e.o = 0;
  e.t = 1;
  e.rel = u;
  t.edg.push_back(std::move(e));
  finalize_splitting(t);
  return t;
}

/* Frame identities of a fold transport: base frame fixed, every old edge
 * reads as a path evaluating to mu_o^-1 tau mu_t between the mapped ends. */
bool transport_ok(const MarkedSplitting& s, const Transport& T, const MarkedSplitting& r) {
  if (!T.mu[s.basev].empty()) return false;
  for (int ei = 0; ei < (int)s.edg.size(); ++ei) {
    const auto& e = s.edg[ei];
    Word need = mul(s.sig, mul(s.sig, inv(s.sig, T.mu[e.o]), e.tau), T.mu[e.t]);
    if (!(eval_pi(r, T.eimg[ei]) == need)) return false;
    int at = T.vmap[e.o];
    for (const auto& it : T.eimg[ei]) {
      if (it.crossing) {
        int from = it.dir > 0 ? r.edg[it.edge].o : r.edg[it.edge].t;
        if (from != at) return false;
        at = it.dir > 0 ? r.edg[it.edge].t : r.edg[it.edge].o;
      } else {
        if (it.vertex != at) return false;
        if (!contains(r.sig, r.vtx[at].group, it.a)) return false;
      }
    }
    if (at != T.vmap[e.t]) return false;
  }
  return true;
}

struct AutoPair {
  Subst f, finv;
};

Subst mk_subst(const Signature& sig, const std::vector<const char*>& frees,
               const std::vector<const char*>& pers = {}) {
  Subst f = identity_subst(sig);
  for (int j = 0; j < (int)frees.size(); ++j) f.freeImg[j] = parse_word(sig, frees[j]);
  for (int i = 0; i < (int)pers.size(); ++i) f.perConj[i] = parse_word(sig, pers[i]);
  return f;
}

std::vector<AutoPair> auto_pairs(const Signature& sig) {
  std::vector<AutoPair> out;
  int n = sig.free_rank(), k = sig.num_factors();
  if (k == 0 && n == 2) {
    out.push_back({mk_subst(sig, {"a b", "b"}), mk_subst(sig, {"a b^-1", "b"})});
    out.push_back({mk_subst(sig, {"a", "b a"}), mk_subst(sig, {"a", "b a^-1"})});
    out.push_back({mk_subst(sig, {"b", "a"}), mk_subst(sig, {"b", "a"})});
    out.push_back({mk_subst(sig, {"a^-1", "b"}), mk_subst(sig, {"a^-1", "b"})});
  } else if (k == 0 && n == 3) {
    out.push_back({mk_subst(sig, {"a b", "b", "c"}), mk_subst(sig, {"a b^-1", "b", "c"})});
    out.push_back({mk_subst(sig, {"a", "b c", "c"}), mk_subst(sig, {"a", "b c^-1", "c"})});
    out.push_back({mk_subst(sig, {"a", "b", "c a"}), mk_subst(sig, {"a", "b", "c a^-1"})});
    out.push_back({mk_subst(sig, {"c", "b", "a"}), mk_subst(sig, {"c", "b", "a"})});
  } else if (k == 2 && n == 1) {
    out.push_back({mk_subst(sig, {"s[1] z"}), mk_subst(sig, {"s[1] z"})});
    out.push_back({mk_subst(sig, {"z t[1]"}), mk_subst(sig, {"z t[2]"})});
    out.push_back({mk_subst(sig, {"z"}, {"z", ""}), mk_subst(sig, {"z"}, {"Z", ""})});
  }
  return out;
}

}  // namespace

TEST_CASE("type2 fold merges two rose petals") {
  auto sig = f2();
  auto rose = standard_rose(sig);
  FoldStep st = fold_step(rose, FoldMove{0, 1, 1, 1, Word{}});
  CHECK(st.kind == FoldKind::Type2);
  CHECK(st.result.edg.size() == 1);
  CHECK(st.result.nv == 1);
  CHECK(st.survivorVertex == -1);
  CHECK(st.after < st.before);
  CHECK(validate(st.result).kind == SplittingKind::FreeSplitting);
  CHECK(contains(sig, st.result.vtx[0].group, W(sig, "b^-1 a")));
  CHECK(transport_ok(rose, st.transport, st.result));
}

TEST_CASE("type1 fold joins amalgams over a shared cyclic group") {
  auto sig = f3();
  auto s = build(sig, {{"a"}, {"a^2", "b"}, {"a^2", "c"}},
                 {{0, 1, "a^2", ""}, {0, 2, "a^2", ""}});
  REQUIRE(validate(s).kind == SplittingKind::ZSplitting);
  FoldStep st = fold_step(s, FoldMove{0, 1, 1, 1, Word{}});
  CHECK(st.kind == FoldKind::Type1);
  CHECK(st.survivorVertex == 1);
  CHECK(st.absorbedVertex == 2);
  CHECK(st.after < st.before);
  CHECK(transport_ok(s, st.transport, st.result));
  auto expected = build(sig, {{"a"}, {"a^2", "b", "c"}}, {{0, 1, "a^2", ""}});
  CHECK(equivalent(st.result, expected));
}

TEST_CASE("type3 fold grows a trivial edge stabilizer") {
  auto sig = f2();
  auto s = build(sig, {{"a"}, {"b"}}, {{0, 1, "", ""}});
  REQUIRE(validate(s).kind == SplittingKind::FreeSplitting);

  SECTION("a proper power of a vertex element works") {
    FoldStep st = fold_step(s, FoldMove{0, 1, -1, 1, W(sig, "a^2")});
    CHECK(st.kind == FoldKind::Type3);
    CHECK(st.after < st.before);
    auto expected = build(sig, {{"a"}, {"a^2", "b"}}, {{0, 1, "a^2", ""}});
    CHECK(equivalent(st.result, expected));
    // the stabilizer is now nontrivial; a second type 3 fold must refuse
    CHECK_THROWS_AS(fold_step(st.result, FoldMove{0, 1, -1, 1, W(sig, "a^2")}),
                    PreconditionError);
  }
  SECTION("the full vertex group would break minimality") {
    CHECK_THROWS_AS(fold_step(s, FoldMove{0, 1, -1, 1, W(sig, "a")}), PreconditionError);
  }
  SECTION("twist must be a nontrivial vertex element") {
    CHECK_THROWS_AS(fold_step(s, FoldMove{0, 1, -1, 1, Word{}}), PreconditionError);
    CHECK_THROWS_AS(fold_step(s, FoldMove{0, 1, -1, 1, W(sig, "b")}), PreconditionError);
  }
  SECTION("peripheral stabilizers are refused") {
    auto zs = z2z3f1();
    auto p = build(zs, {{"s[1]"}, {"t[1]", "z"}}, {{0, 1, "", ""}});
    REQUIRE(validate(p).kind == SplittingKind::FreeSplitting);
    CHECK_THROWS_WITH(fold_step(p, FoldMove{0, -1, -1, 1, W(zs, "t[1]")}),
                      Catch::Matchers::ContainsSubstring("peripheral"));
  }
}

TEST_CASE("folds reject noncyclic edge stabilizers") {
  auto sig = f2();
  auto chain = build(sig, {{"a"}, {"a^2", "b^2"}, {"b"}},
                     {{0, 1, "a^2", ""}, {2, 1, "b^2", ""}});
  REQUIRE(validate(chain).kind == SplittingKind::ZSplitting);
  CHECK_THROWS_WITH(fold_step(chain, FoldMove{0, -1, 1, -1, Word{}}),
                    Catch::Matchers::ContainsSubstring("not cyclic"));
}

TEST_CASE("canonical morphisms between Grushko splittings verify") {
  SECTION("free rose onto a twisted rose") {
    auto sig = f2();
    auto r1 = standard_rose(sig);
    auto r2 = map_splitting(r1, mk_subst(sig, {"a b", "b"}), mk_subst(sig, {"a b^-1", "b"}));
    TreeMorphism m = morphism_to(r1, r2);
    CHECK(check_morphism(r1, r2, m) == "");
    CHECK_FALSE(m.simplicial);
  }
  SECTION("mixed signature with factor vertices") {
    auto zs = z2z3f1();
    auto r1 = standard_rose(zs);
    auto r2 = map_splitting(r1, mk_subst(zs, {"s[1] z"}), mk_subst(zs, {"s[1] z"}));
    TreeMorphism m = morphism_to(r1, r2);
    CHECK(check_morphism(r1, r2, m) == "");
    TreeMorphism idm = morphism_to(r1, r1);
    CHECK(check_morphism(r1, r1, idm) == "");
    CHECK(idm.simplicial);
  }
}

TEST_CASE("substituted splittings keep translation lengths") {
  auto zs = z2z3f1();
  auto s = build(zs, {{"s[1]"}, {"t[1]", "z"}}, {{0, 1, "", ""}});
  std::mt19937 rng(41002);
  for (const auto& ap : auto_pairs(zs)) {
    auto ms = map_splitting(s, ap.f, ap.finv);
    REQUIRE(validate(ms).kind != SplittingKind::Invalid);
    for (int trial = 0; trial < 6; ++trial) {
      Word w = tsup::rand_word(zs, rng, 3);
      CHECK(translation_length(ms, apply_subst(zs, ap.f, w)) == translation_length(s, w));
    }
    // round trip through the inverse pair gives back an equivalent splitting
    CHECK(equivalent(map_splitting(ms, ap.finv, ap.f), s));
  }
}

TEST_CASE("fold path reaches a twisted rose") {
  auto sig = f2();
  auto r1 = standard_rose(sig);
  auto r2 = map_splitting(r1, mk_subst(sig, {"a b", "b"}), mk_subst(sig, {"a b^-1", "b"}));
  FoldPath P = fold_path(r1, r2);
  REQUIRE(!P.steps.empty());
  CHECK(P.trace.size() == P.steps.size());
  CHECK(P.steps.size() == P.prepared.edg.size() - r2.edg.size());
  for (const auto& st : P.steps) {
    CHECK(st.kind == FoldKind::Type2);
    CHECK(st.after < st.before);
    CHECK(validate(st.result).kind != SplittingKind::Invalid);
  }
  CHECK(equivalent(P.terminal, r2, 12));
  CHECK(check_morphism(P.terminal, r2, P.morphism) == "");
  CHECK(P.morphism.simplicial);
}

TEST_CASE("fold path on equivalent splittings is empty") {
  auto sig = f2();
  auto r1 = standard_rose(sig);
  FoldPath P = fold_path(r1, r1);
  CHECK(P.steps.empty());
  CHECK(equivalent(P.terminal, r1));
}

TEST_CASE("quadratic fold paths keep the axis filling") {
  auto sig = f2();
  Word g = W(sig, "a b a^-1 b^-1");
  auto base = standard_rose(sig);
  REQUIRE(is_quadratic(g, sig).has_value());
  for (long long c : orbit_crossings(base, g)) REQUIRE(c == 2);

  auto aps = auto_pairs(sig);
  std::mt19937 rng(91001);
  for (int trial = 0; trial < 20; ++trial) {
    MarkedSplitting s2 = base;
    int moves = 1 + (int)(rng() % 2);
    for (int m = 0; m < moves; ++m) {
      const auto& ap = aps[rng() % aps.size()];
      s2 = map_splitting(s2, ap.f, ap.finv);
    }
    INFO("trial " << trial);
    FoldPath P = fold_path(base, s2, g);
    long long vol = (long long)P.prepared.edg.size();
    CHECK(translation_length(P.prepared, g) == 2 * vol);
    for (const auto& st : P.steps) {
      long long v = (long long)st.result.edg.size();
      CHECK(translation_length(st.result, g) == 2 * v);
      for (long long c : orbit_crossings(st.result, g)) CHECK(c == 2);
      CHECK(st.after < st.before);
    }
    CHECK((long long)P.steps.size() == vol - (long long)s2.edg.size());
    CHECK(equivalent(P.terminal, s2, 12));
  }

  // a nonquadratic word cannot be preserved
  auto s2 = map_splitting(base, aps[0].f, aps[0].finv);
  CHECK_THROWS_AS(fold_path(base, s2, std::optional<Word>(W(sig, "a"))), PreconditionError);
}

TEST_CASE("compatible splitting on the flagship amalgam") {
  auto sig = f2();
  auto t = build(sig, {{"a"}, {"a^2", "b"}}, {{0, 1, "a^2", ""}});
  REQUIRE(validate(t).kind == SplittingKind::ZSplitting);
  auto out = compatible_free_splitting(t, W(sig, "a"));
  auto k = validate(out.splitting).kind;
  CHECK((k == SplittingKind::FreeSplitting || k == SplittingKind::Grushko));
  CHECK(translation_length(out.splitting, W(sig, "a")) == 0);
  CHECK(common_refinement(out.splitting, t, {out.refinement}, 50).has_value());
  auto expected = build(sig, {{"a"}, {"b"}}, {{0, 1, "", ""}});
  CHECK(equivalent(out.splitting, expected));
}

TEST_CASE("compatible splitting error contract") {
  auto sig = f2();
  auto t = build(sig, {{"a"}, {"a^2", "b"}}, {{0, 1, "a^2", ""}});
  auto free2 = build(sig, {{"a"}, {"b"}}, {{0, 1, "", ""}});

  SECTION("already free input returns itself") {
    auto out = compatible_free_splitting(free2, W(sig, "a"));
    CHECK(equivalent(out.splitting, free2));
    CHECK(equivalent(out.refinement, free2));
  }
  SECTION("mixed trivial and cyclic edges collapse the cyclic part") {
    auto sig3 = f3();
    auto t3 = build(sig3, {{"a"}, {"a^2", "b"}, {"c"}},
                    {{0, 1, "a^2", ""}, {1, 2, "", ""}});
    REQUIRE(validate(t3).kind == SplittingKind::ZSplitting);
    auto out = compatible_free_splitting(t3, W(sig3, "a"));
    CHECK(translation_length(out.splitting, W(sig3, "a")) == 0);
    CHECK(common_refinement(out.splitting, t3, {out.refinement}, 50).has_value());
  }
  SECTION("nonsimple words carry the reduced witness") {
    CHECK_THROWS_WITH(compatible_free_splitting(t, W(sig, "a b a^-1 b^-1")),
                      Catch::Matchers::ContainsSubstring("not simple"));
  }
  SECTION("hyperbolic words are refused") {
    CHECK_THROWS_WITH(compatible_free_splitting(free2, W(sig, "a b")),
                      Catch::Matchers::ContainsSubstring("hyperbolic"));
  }
  SECTION("peripheral words are refused") {
    auto zs = z2z3f1();
    CHECK_THROWS_WITH(compatible_free_splitting(standard_rose(zs), W(zs, "s[1]")),
                      Catch::Matchers::ContainsSubstring("peripheral"));
  }
}

TEST_CASE("randomized compatible instances hold the postconditions") {
  struct Piece {
    Word gen;
    bool free;
  };
  auto pieces_of = [](const Signature& sig) {
    std::vector<Piece> ps;
    for (int i = 0; i < sig.num_factors(); ++i)
      ps.push_back({word_of(Syllable{SylKind::Per, i, 1}), false});
    for (int j = 0; j < sig.free_rank(); ++j)
      ps.push_back({word_of(Syllable{SylKind::Free, j, 1}), true});
    return ps;
  };
  std::vector<Signature> sigs{f2(), f3(), z2z3f1()};
  std::mt19937 rng(52001);
  int done = 0, attempts = 0;
  while (done < 60 && attempts < 600) {
    ++attempts;
    const Signature& sig = sigs[rng() % sigs.size()];
    auto ps = pieces_of(sig);
    std::shuffle(ps.begin(), ps.end(), rng);
    size_t sp = 1 + rng() % (ps.size() - 1);
    std::vector<Piece> A(ps.begin(), ps.begin() + sp), B(ps.begin() + sp, ps.end());

    // elliptic word in the A side: a free letter power or a mixed product
    Word a;
    if (A.size() == 1) {
      if (!A[0].free) continue;
      a = pow(sig, A[0].gen, 1 + (int)(rng() % 2));
    } else {
      a = mul(sig, A[0].gen, A[1].gen);
    }
    if (!nonperipheral(sig, a)) continue;

    // edge word in the B side: a free letter power or a mixed product
    Word u;
    if (B.size() == 1) {
      if (!B[0].free) continue;
      u = pow(sig, B[0].gen, 2 + (int)(rng() % 2));
    } else {
      u = mul(sig, B[0].gen, B[1].gen);
      if (rng() % 2 && B[0].free) u = mul(sig, B[0].gen, u);
    }
    if (!nonperipheral(sig, u)) continue;

    std::vector<Word> gensA, gensB;
    for (auto& p : A) gensA.push_back(p.gen);
    for (auto& p : B) gensB.push_back(p.gen);
    MarkedSplitting t = two_vertex(sig, gensA, gensB, u);
    if (validate(t).kind != SplittingKind::ZSplitting) continue;

    // twist the instance by a random automorphism chain
    auto aps = auto_pairs(sig);
    int twists = (int)(rng() % 3);
    for (int m = 0; m < twists && !aps.empty(); ++m) {
      const auto& ap = aps[rng() % aps.size()];
      t = map_splitting(t, ap.f, ap.finv);
      a = apply_subst(sig, ap.f, a);
    }
    REQUIRE(translation_length(t, a) == 0);

    INFO("attempt " << attempts << " over " << sig.num_factors() << "+" << sig.free_rank());
    auto out = compatible_free_splitting(t, a);
    auto k = validate(out.splitting).kind;
    REQUIRE((k == SplittingKind::FreeSplitting || k == SplittingKind::Grushko));
    REQUIRE(translation_length(out.splitting, a) == 0);
    REQUIRE(common_refinement(out.splitting, t, {out.refinement}, 200).has_value());
    ++done;
  }
  CHECK(done == 60);

  // chain instances with two cyclic edges
  auto sig3 = f3();
  auto chain = build(sig3, {{"a"}, {"a^2", "b"}, {"b^3", "c"}},
                     {{0, 1, "a^2", ""}, {1, 2, "b^3", ""}});
  REQUIRE(validate(chain).kind == SplittingKind::ZSplitting);
  auto outc = compatible_free_splitting(chain, W(sig3, "a"));
  CHECK(translation_length(outc.splitting, W(sig3, "a")) == 0);
  CHECK(common_refinement(outc.splitting, chain, {outc.refinement}, 200).has_value());

  auto zs = z2z3f1();
  auto chainz = build(zs, {{"z"}, {"z^2", "s[1]"}, {"z^2 s[1]", "t[1]"}},
                      {{0, 1, "z^2", ""}, {1, 2, "z^2 s[1]", ""}});
  REQUIRE(validate(chainz).kind == SplittingKind::ZSplitting);
  auto outz = compatible_free_splitting(chainz, W(zs, "z"));
  CHECK(translation_length(outz.splitting, W(zs, "z")) == 0);
  CHECK(common_refinement(outz.splitting, chainz, {outz.refinement}, 200).has_value());
}
