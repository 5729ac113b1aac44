#include <catch2/catch_amalgamated.hpp>

#include "gforge/core_graph.hpp"
#include "support.hpp"

using namespace gforge;
using tsup::f2;
using tsup::z2z3;
using tsup::z2z3f1;
using tsup::zperf1;

namespace {

CoreGraph core(const Signature& sig, std::initializer_list<const char*> gens) {
  std::vector<Word> ws;
  for (auto* g : gens) ws.push_back(parse_word(sig, g));
  return core_graph_from_generators(sig, ws);
}

bool has(const Signature& sig, const CoreGraph& G, const char* w) {
  return contains(sig, G, parse_word(sig, w));
}

}  // namespace

TEST_CASE("free subgroup membership") {
  auto sig = f2();
  auto G = core(sig, {"a", "b a B"});
  CHECK(has(sig, G, "a"));
  CHECK(has(sig, G, "b a B"));
  CHECK(has(sig, G, "b a^2 B"));
  CHECK(has(sig, G, "a b a B"));
  CHECK(has(sig, G, "1"));
  CHECK_FALSE(has(sig, G, "b"));
  CHECK_FALSE(has(sig, G, "a B"));
  CHECK_FALSE(has(sig, G, "b a"));
  CHECK_FALSE(whole_group(sig, G));

  auto K = kurosh_decompose(sig, G);
  CHECK(K.parts.empty());
  CHECK(K.freeRank == 2);
}

TEST_CASE("whole group detection") {
  auto sig = f2();
  CHECK(whole_group(sig, core(sig, {"a", "b"})));
  CHECK(whole_group(sig, core(sig, {"a", "b a"})));
  CHECK_FALSE(whole_group(sig, core(sig, {"a^2", "b"})));

  auto pz = z2z3();
  CHECK(whole_group(pz, core(pz, {"s[1]", "t[1]"})));
  CHECK_FALSE(whole_group(pz, core(pz, {"t[1]", "s[1] t[1] s[1]"})));
}

TEST_CASE("peripheral parts of a finite-factor subgroup") {
  auto sig = z2z3();
  auto G = core(sig, {"s[1]", "t[1] s[1] t[2]"});
  CHECK(has(sig, G, "s[1]"));
  CHECK(has(sig, G, "t[1] s[1] t[2]"));
  CHECK(has(sig, G, "s[1] t[1] s[1] t[2]"));
  CHECK_FALSE(has(sig, G, "t[1]"));
  CHECK_FALSE(has(sig, G, "s[1] t[1]"));

  auto K = kurosh_decompose(sig, G);
  REQUIRE(K.parts.size() == 2);
  CHECK(K.freeRank == 0);
  for (auto& p : K.parts) {
    CHECK(p.factor == 0);
    REQUIRE(p.elems.size() == 2);
    Word g = conj(sig, p.conj, word_of(Syllable{SylKind::Per, p.factor, p.elems[1]}));
    CHECK(contains(sig, G, g));
  }
}

TEST_CASE("two conjugate copies of the same finite factor") {
  auto sig = z2z3();
  auto G = core(sig, {"t[1]", "s[1] t[1] s[1]"});
  CHECK(has(sig, G, "t[2]"));
  CHECK(has(sig, G, "s[1] t[2] s[1]"));
  CHECK_FALSE(has(sig, G, "s[1]"));
  CHECK_FALSE(has(sig, G, "s[1] t[1]"));
  auto K = kurosh_decompose(sig, G);
  REQUIRE(K.parts.size() == 2);
  CHECK(K.freeRank == 0);
  CHECK(K.parts[0].factor == 1);
  CHECK(K.parts[1].factor == 1);
}

TEST_CASE("cyclic subgroup generated by a cross word") {
  auto sig = z2z3();
  auto G = core(sig, {"s[1] t[1]"});
  CHECK(has(sig, G, "s[1] t[1]"));
  CHECK(has(sig, G, "s[1] t[1] s[1] t[1]"));
  CHECK(has(sig, G, "t[2] s[1]"));  // inverse
  CHECK_FALSE(has(sig, G, "s[1]"));
  CHECK_FALSE(has(sig, G, "t[1]"));
  CHECK_FALSE(has(sig, G, "t[2]"));
  CHECK_FALSE(has(sig, G, "s[1] t[1] s[1]"));
  auto K = kurosh_decompose(sig, G);
  CHECK(K.parts.empty());
  CHECK(K.freeRank == 1);
}

TEST_CASE("cyclic peripheral clouds take offset gcds") {
  auto sig = zperf1();
  auto G = core(sig, {"p^5", "p^3"});
  CHECK(has(sig, G, "p^1"));

  auto H = core(sig, {"p^4", "p^6"});
  CHECK(has(sig, H, "p^2"));
  CHECK_FALSE(has(sig, H, "p^1"));
  CHECK_FALSE(has(sig, H, "p^3"));

  auto C = core(sig, {"z p^1 Z"});
  CHECK(has(sig, C, "z p^3 Z"));
  CHECK_FALSE(has(sig, C, "p^1"));
  CHECK_FALSE(has(sig, C, "z"));
  auto K = kurosh_decompose(sig, C);
  REQUIRE(K.parts.size() == 1);
  CHECK(K.parts[0].modulus == 1);
  CHECK(K.freeRank == 0);
  Word g = conj(sig, K.parts[0].conj, parse_word(sig, "p^1"));
  CHECK(contains(sig, C, g));

  auto M = core(sig, {"p^2", "z"});
  auto K2 = kurosh_decompose(sig, M);
  REQUIRE(K2.parts.size() == 1);
  CHECK(K2.parts[0].modulus == 2);
  CHECK(K2.freeRank == 1);
}

TEST_CASE("canonical codes ignore generator presentation") {
  auto sig = f2();
  auto c1 = canonical_code(sig, core(sig, {"a^2", "a b", "b^3"}));
  auto c2 = canonical_code(sig, core(sig, {"b^3", "a b", "a^2"}));
  auto c3 = canonical_code(sig, core(sig, {"B A", "a^2", "b^3"}));
  CHECK(c1 == c2);
  CHECK(c1 == c3);

  auto pz = z2z3();
  auto d1 = canonical_code(pz, core(pz, {"s[1]", "t[1] s[1] t[2]"}));
  auto d2 = canonical_code(pz, core(pz, {"t[1] s[1] t[2]", "s[1]"}));
  CHECK(d1 == d2);

  CHECK(canonical_code(sig, core(sig, {"a", "b"})) ==
        canonical_code(sig, core(sig, {"a b", "b"})));
}

TEST_CASE("regeneration from extracted generators is stable") {
  std::mt19937 rng(20240817);
  auto sig = z2z3f1();
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<Word> gens;
    int ng = 1 + (int)(rng() % 3);
    for (int i = 0; i < ng; ++i) gens.push_back(tsup::rand_word(sig, rng, 1 + (int)(rng() % 4)));
    auto G = core_graph_from_generators(sig, gens);
    for (auto& g : gens) CHECK(contains(sig, G, g));
    auto back = subgroup_generators(sig, G);
    for (auto& g : back) CHECK(contains(sig, G, g));
    auto G2 = core_graph_from_generators(sig, back);
    CHECK(canonical_code(sig, G) == canonical_code(sig, G2));
  }
}

TEST_CASE("conjugate subgroup search") {
  auto sig = f2();
  auto h1 = core(sig, {"a b"});
  auto h2 = core(sig, {"b a"});
  auto c = conjugate_subgroups(sig, h1, h2, 8);
  REQUIRE(c.has_value());
  CHECK(contains(sig, h1, conj(sig, *c, parse_word(sig, "b a"))));

  CHECK_FALSE(conjugate_subgroups(sig, core(sig, {"a"}), core(sig, {"b"}), 6).has_value());

  auto pz = z2z3();
  auto p1 = core(pz, {"s[1]"});
  auto p2 = core(pz, {"t[1] s[1] t[2]"});
  auto cc = conjugate_subgroups(pz, p1, p2, 8);
  REQUIRE(cc.has_value());
  CHECK(contains(pz, p1, conj(pz, *cc, parse_word(pz, "t[1] s[1] t[2]"))));
  CHECK_FALSE(conjugate_subgroups(pz, core(pz, {"s[1]"}), core(pz, {"t[1]"}), 6).has_value());
}

TEST_CASE("short element enumeration") {
  auto sig = f2();
  auto G = core(sig, {"a^2"});
  auto els = elements_up_to(sig, G, 5);
  CHECK(els.size() == 4);  // a^{+-2}, a^{+-4}
  for (auto& w : els) CHECK(contains(sig, G, w));

  auto F = core(sig, {"a", "b"});
  CHECK(elements_up_to(sig, F, 2).size() == 16);

  auto pz = tsup::z2f1();
  auto S = core(pz, {"s[1]"});
  auto se = elements_up_to(pz, S, 3);
  REQUIRE(se.size() == 1);
  CHECK(format_word(pz, se[0]) == "s[1]");
}

TEST_CASE("trivial subgroup") {
  auto sig = f2();
  auto T = core_graph_from_generators(sig, {});
  CHECK(T.trivial());
  CHECK(contains(sig, T, identity_word()));
  CHECK_FALSE(has(sig, T, "a"));
  auto c = conjugate_subgroups(sig, T, T, 4);
  REQUIRE(c.has_value());
  CHECK(c->empty());
}

TEST_CASE("rewriter expresses members in the subgroup basis") {
  auto sig = z2z3f1();
  auto G = core(sig, {"s[1]", "z t[1] Z", "z^2"});
  auto R = kurosh_rewriter(sig, G);
  CHECK(R.inner.num_factors() == 2);

  // members walk back and forth exactly
  for (auto& m : elements_up_to(sig, G, 4)) {
    auto e = R.express(m);
    REQUIRE(e.has_value());
    CHECK(R.embed(*e) == m);
  }
  CHECK_FALSE(R.express(parse_word(sig, "z")).has_value());
  CHECK_FALSE(R.express(parse_word(sig, "t[1]")).has_value());

  // random inner words embed into the subgroup and express back unchanged
  std::mt19937 rng(77001);
  for (int n = 0; n < 200; ++n) {
    Word w = tsup::rand_word(R.inner, rng, 1 + (int)(rng() % 5));
    Word amb = R.embed(w);
    CHECK(contains(sig, G, amb));
    auto back = R.express(amb);
    REQUIRE(back.has_value());
    CHECK(*back == w);
  }
}

TEST_CASE("rewriter handles free and mixed-rank subgroups") {
  std::mt19937 rng(77002);
  for (const auto& sig : {f2(), z2z3f1(), tsup::z4f1()}) {
    for (int trial = 0; trial < 12; ++trial) {
      std::vector<Word> gens;
      int ng = 1 + (int)(rng() % 3);
      for (int i = 0; i < ng; ++i) gens.push_back(tsup::rand_word(sig, rng, 1 + (int)(rng() % 4)));
      auto G = core_graph_from_generators(sig, gens);
      auto R = kurosh_rewriter(sig, G);
      for (auto& g : gens) {
        auto e = R.express(g);
        REQUIRE(e.has_value());
        CHECK(R.embed(*e) == g);
      }
      for (int n = 0; n < 20; ++n) {
        Word w = tsup::rand_word(R.inner, rng, 1 + (int)(rng() % 4));
        auto back = R.express(R.embed(w));
        REQUIRE(back.has_value());
        CHECK(*back == w);
      }
    }
  }
}
