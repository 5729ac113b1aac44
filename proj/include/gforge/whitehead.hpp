#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "splitting.hpp"

namespace gforge {

// ---- Whitehead graphs ----------------------------------------------------------

/* A direction at a vertex of a marked splitting: an incident edge end
 * (end 0 = origin side, 1 = target side) translated by a coset of the
 * trivial edge stabilizer, i.e. an element of the vertex group. */
struct WhDir {
  int edge = -1;
  int end = 0;
  Word coset;
};

/* Turns of the axis of a word at one vertex orbit. `turns` lists one edge per
 * fundamental-domain turn; `satTurns` closes them under left translation by
 * the vertex stabilizer, which is the link structure connectivity questions
 * are asked of. At infinite (cyclic peripheral) vertex groups only the
 * crossed coset window is materialized and `windowed` is set. */
struct WhiteheadGraph {
  int vertex = -1;
  bool windowed = false;
  std::vector<WhDir> dirs;
  std::vector<std::pair<int, int>> turns;
  std::vector<std::pair<int, int>> satTurns;

  int degree(int d) const {
    int n = 0;
    for (auto& t : turns) n += (t.first == d) + (t.second == d);
    return n;
  }

  bool connected() const {
    if (dirs.empty()) return true;
    std::vector<int> comp(dirs.size());
    for (size_t i = 0; i < dirs.size(); ++i) comp[i] = (int)i;
    auto root = [&comp](int x) {
      while (comp[x] != x) x = comp[x] = comp[comp[x]];
      return x;
    };
    for (auto& t : satTurns) comp[root(t.first)] = root(t.second);
    int r0 = root(0);
    for (size_t i = 1; i < dirs.size(); ++i)
      if (root((int)i) != r0) return false;
    return true;
  }

  /* A direction whose removal disconnects the remaining directions. */
  bool has_cut_vertex() const {
    int n = (int)dirs.size();
    if (n < 3) return false;
    for (int skip = 0; skip < n; ++skip) {
      std::vector<int> comp(n);
      for (int i = 0; i < n; ++i) comp[i] = i;
      auto root = [&comp](int x) {
        while (comp[x] != x) x = comp[x] = comp[comp[x]];
        return x;
      };
      for (auto& t : satTurns) {
        if (t.first == skip || t.second == skip) continue;
        comp[root(t.first)] = root(t.second);
      }
      int seen = -1;
      bool split = false;
      for (int i = 0; i < n && !split; ++i) {
        if (i == skip) continue;
        if (seen < 0) seen = root(i);
        else if (root(i) != seen) split = true;
      }
      if (split) return true;
    }
    return false;
  }
};

namespace detail {

/* The vertex group of a Grushko splitting is trivial or a conjugate of one
 * peripheral factor; list its elements, or nothing if infinite. */
inline std::optional<std::vector<Word>> stabilizer_elements(const Signature& sig,
                                                            const CoreGraph& g) {
  if (g.trivial()) return std::vector<Word>{identity_word()};
  KuroshData K = kurosh_decompose(sig, g);
  if (K.freeRank != 0 || K.parts.size() != 1) return std::nullopt;
  const auto& p = K.parts[0];
  if (sig.factors[p.factor].kind != FactorKind::Finite) return std::nullopt;
  std::vector<Word> out;
  for (int e : p.elems)
    out.push_back(mul(sig, mul(sig, p.conj, word_of(Syllable{SylKind::Per, p.factor, e})),
                      inv(sig, p.conj)));
  return out;
}

inline std::vector<WhiteheadGraph> whitehead_graphs_impl(const MarkedSplitting& r,
                                                         const Word& w) {
  PiWord cyc = britton_cyclic(r, piword_of_word(r, w));
  int m = crossing_count(cyc);
  if (m == 0) throw PreconditionError("whitehead graphs: word is elliptic");

  // rotate so the list starts with a crossing, then walk cyclically
  size_t first = 0;
  while (!cyc[first].crossing) ++first;
  PiWord rot(cyc.begin() + first, cyc.end());
  rot.insert(rot.end(), cyc.begin(), cyc.begin() + first);

  struct Visit {
    int edge;
    int dir;
    Word between;  // vertex element before the next crossing
  };
  std::vector<Visit> vis;
  for (const auto& it : rot) {
    if (it.crossing) {
      vis.push_back({it.edge, it.dir, identity_word()});
    } else {
      vis.back().between = mul(r.sig, vis.back().between, it.a);
    }
  }

  std::vector<WhiteheadGraph> graphs(r.nv);
  std::vector<std::map<std::string, int>> index(r.nv);
  auto dir_key = [&](int e, int end, const Word& c) {
    return std::to_string(e) + (end ? "t" : "o") + "|" + format_word(r.sig, c);
  };
  auto add_dir = [&](int v, int e, int end, const Word& c) {
    std::string k = dir_key(e, end, c);
    auto it = index[v].find(k);
    if (it != index[v].end()) return it->second;
    graphs[v].dirs.push_back(WhDir{e, end, c});
    int id = (int)graphs[v].dirs.size() - 1;
    index[v][k] = id;
    return id;
  };

  std::vector<std::optional<std::vector<Word>>> stab(r.nv);
  for (int v = 0; v < r.nv; ++v) {
    graphs[v].vertex = v;
    stab[v] = stabilizer_elements(r.sig, r.vtx[v].group);
    graphs[v].windowed = !stab[v].has_value();
    if (graphs[v].windowed) continue;
    for (int ei = 0; ei < (int)r.edg.size(); ++ei) {
      for (int end = 0; end < 2; ++end) {
        int at = end ? r.edg[ei].t : r.edg[ei].o;
        if (at != v) continue;
        for (const auto& c : *stab[v]) add_dir(v, ei, end, c);
      }
    }
  }

  for (int i = 0; i < m; ++i) {
    const Visit& in = vis[i];
    const Visit& out = vis[(i + 1) % m];
    int v = in.dir > 0 ? r.edg[in.edge].t : r.edg[in.edge].o;
    int d1 = add_dir(v, in.edge, in.dir > 0 ? 1 : 0, identity_word());
    int d2 = add_dir(v, out.edge, out.dir > 0 ? 0 : 1, in.between);
    graphs[v].turns.push_back({d1, d2});
  }

  for (int v = 0; v < r.nv; ++v) {
    std::set<std::pair<int, int>> sat;
    for (auto& t : graphs[v].turns) {
      if (graphs[v].windowed) {
        sat.insert({std::min(t.first, t.second), std::max(t.first, t.second)});
        continue;
      }
      const WhDir& a = graphs[v].dirs[t.first];
      const WhDir& b = graphs[v].dirs[t.second];
      for (const auto& x : *stab[v]) {
        int ta = add_dir(v, a.edge, a.end, mul(r.sig, x, a.coset));
        int tb = add_dir(v, b.edge, b.end, mul(r.sig, x, b.coset));
        sat.insert({std::min(ta, tb), std::max(ta, tb)});
      }
    }
    graphs[v].satTurns.assign(sat.begin(), sat.end());
  }
  return graphs;
}

}  // namespace detail

/* One graph per vertex orbit of a Grushko splitting. Vertices are directions,
 * edges the turns taken by the axis of w; total turn count equals the number
 * of edge crossings of the cyclic normal form. */
inline std::vector<WhiteheadGraph> whitehead_graphs(const MarkedSplitting& r, const Word& w) {
  if (!nonperipheral(r.sig, w)) throw PreconditionError("whitehead graphs: peripheral word");
  if (validate(r).kind != SplittingKind::Grushko)
    throw PreconditionError("whitehead graphs: splitting is not Grushko");
  return detail::whitehead_graphs_impl(r, w);
}

/* Crossings of the axis of w per edge orbit. */
inline std::vector<long long> orbit_crossings(const MarkedSplitting& s, const Word& w) {
  std::vector<long long> c(s.edg.size(), 0);
  if (w.empty()) return c;
  PiWord p = detail::britton_cyclic(s, piword_of_word(s, w));
  for (const auto& it : p)
    if (it.crossing) c[it.edge]++;
  return c;
}

// ---- Whitehead moves and peak reduction ----------------------------------------

namespace detail {

/* One Whitehead automorphism of (G,F): a multiplier u (a free letter or a
 * nontrivial peripheral element) pulled across a subset S of the direction
 * slots at the rose's center. Slots: factor i -> i, free gen j -> k+2j (+),
 * k+2j+1 (-). The multiplier's own slots are never in S. Inverse: same S,
 * multiplier u^-1. */
struct WhMove {
  Word u;
  std::vector<char> S;
};

inline int slot_count(const Signature& sig) {
  return sig.num_factors() + 2 * sig.free_rank();
}

inline Word apply_move(const Signature& sig, const WhMove& mv, const Word& w) {
  int k = sig.num_factors();
  Word out;
  for (const auto& syl : w.syl) {
    Word img;
    if (syl.k == SylKind::Per) {
      img = word_of(syl);
      if (mv.S[syl.idx]) img = mul(sig, mul(sig, mv.u, img), inv(sig, mv.u));
    } else {
      Word base = word_of(Syllable{SylKind::Free, syl.idx, 1});
      if (mv.S[k + 2 * syl.idx]) base = mul(sig, mv.u, base);
      if (mv.S[k + 2 * syl.idx + 1]) base = mul(sig, base, inv(sig, mv.u));
      img = pow(sig, base, syl.v);
    }
    out = mul(sig, out, img);
  }
  return out;
}

/* All multipliers together with the slots S may not touch. */
inline std::vector<std::pair<Word, std::vector<int>>> move_multipliers(const Signature& sig) {
  int k = sig.num_factors();
  std::vector<std::pair<Word, std::vector<int>>> out;
  for (int i = 0; i < k; ++i) {
    if (sig.factors[i].kind == FactorKind::Finite) {
      for (int e = 0; e < sig.factors[i].order; ++e)
        if (e != sig.factors[i].identity)
          out.push_back({word_of(Syllable{SylKind::Per, i, e}), {i}});
    } else {
      out.push_back({word_of(Syllable{SylKind::Per, i, 1}), {i}});
      out.push_back({word_of(Syllable{SylKind::Per, i, -1}), {i}});
    }
  }
  for (int j = 0; j < sig.free_rank(); ++j) {
    for (int sgn : {1, -1})
      out.push_back({word_of(Syllable{SylKind::Free, j, sgn}), {k + 2 * j, k + 2 * j + 1}});
  }
  return out;
}

inline std::vector<WhMove> all_moves(const Signature& sig) {
  int D = slot_count(sig);
  if (D > 16) throw BoundExhausted("whitehead move enumeration: too many direction slots");
  std::vector<WhMove> all;
  for (const auto& [u, excl] : move_multipliers(sig)) {
    std::vector<int> free_slots;
    for (int s = 0; s < D; ++s)
      if (std::find(excl.begin(), excl.end(), s) == excl.end()) free_slots.push_back(s);
    for (unsigned mask = 1; mask < (1u << free_slots.size()); ++mask) {
      WhMove mv;
      mv.u = u;
      mv.S.assign(D, 0);
      for (size_t b = 0; b < free_slots.size(); ++b)
        if (mask & (1u << b)) mv.S[free_slots[b]] = 1;
      all.push_back(std::move(mv));
    }
  }
  return all;
}

inline bool omits_orbit(const Signature& sig, const Word& w) {
  std::vector<char> fU(sig.num_factors(), 0), gU(sig.free_rank(), 0);
  for (const auto& syl : w.syl) (syl.k == SylKind::Per ? fU[syl.idx] : gU[syl.idx]) = 1;
  return std::find(fU.begin(), fU.end(), 0) != fU.end() ||
         std::find(gU.begin(), gU.end(), 0) != gU.end();
}

struct Reduction {
  Word minimal;               // cyclically reduced, at the orbit's minimal axis length
  std::vector<WhMove> moves;  // applied first to last
  bool omitsOrbit = false;    // some letter or factor orbit unused in `minimal`
};

/* Peak reduction: greedy strict descent reaches the minimal level (if a word
 * is not minimal, a single move already shortens it), and the minimal level
 * is connected under length-preserving moves, so a level search either finds
 * a representative missing an orbit or proves none exists. */
inline Reduction reduce_word(const Signature& sig, const MarkedSplitting& rose, const Word& w) {
  auto all = all_moves(sig);

  Reduction red;
  red.minimal = cyclic_reduce(sig, w).core;
  long long len = translation_length(rose, red.minimal);
  while (true) {
    bool progress = true;
    while (progress) {
      progress = false;
      for (const auto& mv : all) {
        Word img = cyclic_reduce(sig, apply_move(sig, mv, red.minimal)).core;
        long long l2 = translation_length(rose, img);
        if (l2 < len) {
          red.minimal = std::move(img);
          red.moves.push_back(mv);
          len = l2;
          progress = true;
          break;
        }
      }
    }
    red.omitsOrbit = omits_orbit(sig, red.minimal);
    if (red.omitsOrbit || len == 0) return red;

    struct Node {
      Word w;
      std::vector<WhMove> path;
    };
    std::vector<Node> frontier{{red.minimal, {}}};
    std::set<std::string> seen{format_word(sig, conjugacy_key(sig, red.minimal))};
    std::optional<Node> goal;     // equal length, misses an orbit
    std::optional<Node> shorter;  // defensive; greedy should have precluded it
    while (!frontier.empty() && !goal && !shorter) {
      std::vector<Node> next;
      for (const auto& nd : frontier) {
        for (const auto& mv : all) {
          Word img = cyclic_reduce(sig, apply_move(sig, mv, nd.w)).core;
          long long l2 = translation_length(rose, img);
          if (l2 > len) continue;
          if (!seen.insert(format_word(sig, conjugacy_key(sig, img))).second) continue;
          if (seen.size() > 60000)
            throw BoundExhausted("whitehead level search exceeded its budget");
          Node n2{std::move(img), nd.path};
          n2.path.push_back(mv);
          if (l2 < len) {
            shorter = std::move(n2);
            break;
          }
          if (omits_orbit(sig, n2.w)) {
            goal = std::move(n2);
            break;
          }
          next.push_back(std::move(n2));
        }
        if (goal || shorter) break;
      }
      frontier = std::move(next);
    }
    if (goal) {
      for (auto& mv : goal->path) red.moves.push_back(mv);
      red.minimal = goal->w;
      red.omitsOrbit = true;
      return red;
    }
    if (!shorter) return red;  // level exhausted: every minimal form uses every orbit
    for (auto& mv : shorter->path) red.moves.push_back(mv);
    red.minimal = shorter->w;
    len = translation_length(rose, red.minimal);
  }
}

/* Apply the inverse of a recorded move sequence (last move first). */
inline Word pull_back(const Signature& sig, const std::vector<WhMove>& moves, Word w) {
  for (auto it = moves.rbegin(); it != moves.rend(); ++it) {
    WhMove inv_mv;
    inv_mv.u = inv(sig, it->u);
    inv_mv.S = it->S;
    w = apply_move(sig, inv_mv, w);
  }
  return w;
}

/* Rebuild the rose carried back through the move sequence: factor vertices
 * hold the pulled-back factor conjugates, loops the pulled-back letters.
 * The move list is the marking, so spell loop expressions and factor marks
 * out directly; finalize only has to check them. */
inline MarkedSplitting twisted_rose(const Signature& sig, const std::vector<WhMove>& moves) {
  int k = sig.num_factors();
  MarkedSplitting s;
  s.sig = sig;
  s.nv = 1 + k;
  s.basev = 0;
  s.vtx.resize(s.nv);
  s.vtx[0].group = core_graph_from_generators(sig, {});
  for (int i = 0; i < k; ++i) {
    std::vector<Word> gens;
    if (sig.factors[i].kind == FactorKind::Finite) {
      for (int e = 0; e < sig.factors[i].order; ++e)
        if (e != sig.factors[i].identity)
          gens.push_back(pull_back(sig, moves, word_of(Syllable{SylKind::Per, i, e})));
    } else {
      gens.push_back(pull_back(sig, moves, word_of(Syllable{SylKind::Per, i, 1})));
    }
    s.vtx[1 + i].group = core_graph_from_generators(sig, gens);
    MarkedSplitting::Edg e;
    e.o = 0;
    e.t = 1 + i;
    s.edg.push_back(std::move(e));
  }
  for (int j = 0; j < sig.free_rank(); ++j) {
    MarkedSplitting::Edg e;
    e.o = 0;
    e.t = 0;
    e.tau = pull_back(sig, moves, word_of(Syllable{SylKind::Free, j, 1}));
    s.edg.push_back(std::move(e));
  }

  // the moves applied first to last invert the pullback
  auto fwd = [&](Word x) {
    for (const auto& m : moves) x = apply_move(sig, m, x);
    return x;
  };
  // loop whose evaluation is the pullback of v: free syllables cross their
  // loop edge, factor syllables pass through their spoke carrying the
  // pulled-back element
  auto spell = [&](const Word& v) {
    PiWord p;
    for (const auto& syl : v.syl) {
      if (syl.k == SylKind::Free) {
        PiItem c;
        c.crossing = true;
        c.edge = k + syl.idx;
        c.dir = syl.v > 0 ? 1 : -1;
        for (long long n = syl.v > 0 ? syl.v : -syl.v; n > 0; --n) p.push_back(c);
      } else {
        PiItem dn, up, pass;
        dn.crossing = true;
        dn.edge = syl.idx;
        dn.dir = 1;
        up.crossing = true;
        up.edge = syl.idx;
        up.dir = -1;
        pass.crossing = false;
        pass.vertex = 1 + syl.idx;
        pass.a = pull_back(sig, moves, word_of(syl));
        p.push_back(dn);
        p.push_back(std::move(pass));
        p.push_back(up);
      }
    }
    return p;
  };

  s.genLoops.resize(sig.free_rank());
  for (int j = 0; j < sig.free_rank(); ++j)
    s.genLoops[j] = spell(fwd(word_of(Syllable{SylKind::Free, j, 1})));
  s.marks.resize(k);
  for (int i = 0; i < k; ++i) {
    Word gw;
    if (sig.factors[i].kind == FactorKind::Finite) {
      for (int e = 0; e < sig.factors[i].order; ++e)
        if (e != sig.factors[i].identity) {
          gw = word_of(Syllable{SylKind::Per, i, e});
          break;
        }
    } else {
      gw = word_of(Syllable{SylKind::Per, i, 1});
    }
    // the moves conjugate the factor as a set: pull_back(g) = c g c^-1, and
    // pw = c^-1 puts the factor inside the vertex group
    Word pw = inv(sig, cyclic_reduce(sig, pull_back(sig, moves, gw)).conj);
    MarkedSplitting::PerMark m;
    m.vertex = 1 + i;
    m.pw = pw;
    m.path = spell(fwd(pw));
    PiItem dn;
    dn.crossing = true;
    dn.edge = i;
    dn.dir = 1;
    m.path.push_back(dn);
    s.marks[i] = std::move(m);
  }

  finalize_splitting(s);
  return s;
}

}  // namespace detail

// ---- simplicity -----------------------------------------------------------------

/* Simple: the element lies in a proper free factor, witnessed by its folded
 * graph. Not simple: no Whitehead move shortens the element; the terminal
 * splitting and the Whitehead graphs of the element in it are the certificate.
 * Over free letters a minimal nonsimple element has connected graphs without
 * cut vertices; a peripheral spoke direction can stay a cut vertex, so the
 * flag reports what actually holds. */
struct SimplicityVerdict {
  bool simple = false;
  std::optional<CoreGraph> witness;
  std::optional<MarkedSplitting> terminal;
  Word reducedWord;
  std::vector<WhiteheadGraph> graphs;
  bool graphsConnectedNoCut = false;
};

inline SimplicityVerdict is_simple(const Word& w, const Signature& sig) {
  if (!nonperipheral(sig, w)) throw PreconditionError("simplicity: peripheral word");
  MarkedSplitting rose = standard_rose(sig);
  detail::Reduction red = detail::reduce_word(sig, rose, w);

  std::vector<char> factorUsed(sig.num_factors(), 0), genUsed(sig.free_rank(), 0);
  for (const auto& syl : red.minimal.syl)
    (syl.k == SylKind::Per ? factorUsed[syl.idx] : genUsed[syl.idx]) = 1;

  SimplicityVerdict v;
  v.reducedWord = red.minimal;
  if (red.omitsOrbit) {
    v.simple = true;
    std::vector<Word> gens;
    for (int i = 0; i < sig.num_factors(); ++i) {
      if (!factorUsed[i]) continue;
      if (sig.factors[i].kind == FactorKind::Finite) {
        for (int e = 0; e < sig.factors[i].order; ++e)
          if (e != sig.factors[i].identity)
            gens.push_back(detail::pull_back(sig, red.moves, word_of(Syllable{SylKind::Per, i, e})));
      } else {
        gens.push_back(detail::pull_back(sig, red.moves, word_of(Syllable{SylKind::Per, i, 1})));
      }
    }
    for (int j = 0; j < sig.free_rank(); ++j)
      if (genUsed[j])
        gens.push_back(detail::pull_back(sig, red.moves, word_of(Syllable{SylKind::Free, j, 1})));
    // the reduction works on cyclic words, so the pullback contains only a
    // conjugate of w; carry the factor back to w itself
    Word u0 = detail::pull_back(sig, red.moves, red.minimal);
    auto t = conjugate_test(sig, w, u0);
    if (!t) throw std::logic_error("simplicity reduction lost the conjugacy class");
    for (auto& g : gens) g = conj(sig, *t, g);
    v.witness = core_graph_from_generators(sig, gens);
    if (!contains(sig, *v.witness, w))
      throw std::logic_error("simplicity witness does not contain the element");
    return v;
  }

  v.simple = false;
  v.terminal = detail::twisted_rose(sig, red.moves);
  v.graphs = detail::whitehead_graphs_impl(*v.terminal, w);
  v.graphsConnectedNoCut = true;
  for (const auto& g : v.graphs)
    if (!g.connected() || g.has_cut_vertex()) v.graphsConnectedNoCut = false;
  return v;
}

// ---- quadratic elements ----------------------------------------------------------

/* A witness splitting in which the axis of w crosses each edge orbit exactly
 * twice, when one exists at the minimal level; nothing for simple elements,
 * proper powers and elements conjugate to their inverse. */
inline std::optional<MarkedSplitting> is_quadratic(const Word& w, const Signature& sig) {
  if (!nonperipheral(sig, w)) throw PreconditionError("quadratic test: peripheral word");
  if (is_proper_power(sig, w)) return std::nullopt;
  if (conjugate_test(sig, w, inv(sig, w)).has_value()) return std::nullopt;
  SimplicityVerdict sv = is_simple(w, sig);
  if (sv.simple) return std::nullopt;
  // a nonsimple element crosses every orbit at least twice in any Grushko
  // tree and the total crossing number is move-invariant at the minimal
  // level, so one minimal representative decides
  auto counts = orbit_crossings(*sv.terminal, w);
  for (long long c : counts)
    if (c != 2) return std::nullopt;
  return sv.terminal;
}

// ---- orbifold reconstruction ------------------------------------------------------

struct OrbifoldData {
  long long euler = 0;  // underlying compact surface
  bool orientable = true;
  long long genus = 0;
  long long boundaryCount = 0;
  std::vector<long long> conePoints;
  Word unusedBoundaryWord;
};

struct OrbifoldResult {
  OrbifoldData data;
  MarkedSplitting decomposition;
};

namespace detail {

inline long long finite_element_order(const PeripheralFactor& f, int e) {
  long long n = 1;
  int cur = e;
  while (cur != f.identity) {
    cur = f.mul(cur, e);
    ++n;
  }
  return n;
}

}  // namespace detail

/* Glue a band along the axis of w in r; every edge orbit is covered exactly
 * twice, so the quotient is a compact 2-orbifold with w reading the single
 * unused boundary. Cone points come from the finite vertex visits, extra
 * (used) boundaries from infinite cyclic ones, orientability from the side
 * matching of the two band passes over each orbit. */
inline OrbifoldResult orbifold_from_quadratic(const MarkedSplitting& r, const Word& w) {
  const Signature& sig = r.sig;
  if (!nonperipheral(sig, w)) throw PreconditionError("not quadratic: peripheral word");
  if (is_proper_power(sig, w)) throw PreconditionError("not quadratic: proper power");
  if (conjugate_test(sig, w, inv(sig, w)).has_value())
    throw PreconditionError("not quadratic: conjugate to its inverse");
  auto counts = orbit_crossings(r, w);
  for (long long c : counts)
    if (c != 2) throw PreconditionError("not quadratic: an orbit is not crossed exactly twice");

  // spoke shape: every nontrivial vertex meets exactly one edge orbit
  std::vector<int> valence(r.nv, 0);
  for (const auto& e : r.edg) {
    valence[e.o]++;
    valence[e.t]++;
  }
  for (int v = 0; v < r.nv; ++v)
    if (!r.vtx[v].group.trivial() && valence[v] != 1)
      throw PreconditionError("orbifold reconstruction needs a spoke-shaped witness");

  // a disconnected link at a trivial vertex would mean w is simple
  auto graphs = detail::whitehead_graphs_impl(r, w);
  for (const auto& g : graphs)
    if (r.vtx[g.vertex].group.trivial() && !g.connected())
      throw PreconditionError("not quadratic: the element is simple (split link)");

  if (r.edg.empty()) throw PreconditionError("not quadratic: splitting has no edges");
  PiWord cyc = detail::britton_cyclic(r, piword_of_word(r, w));
  size_t first = 0;
  while (!cyc[first].crossing) ++first;
  PiWord rot(cyc.begin() + first, cyc.end());
  rot.insert(rot.end(), cyc.begin(), cyc.begin() + first);

  // per crossing: its direction, and the vertex rotation before the next one
  struct Pass {
    int edge;
    int dir;
    Word after;
  };
  std::vector<Pass> passes;
  for (const auto& it : rot) {
    if (it.crossing) passes.push_back({it.edge, it.dir, identity_word()});
    else passes.back().after = mul(sig, passes.back().after, it.a);
  }

  OrbifoldResult res;
  res.data.unusedBoundaryWord = cyclic_reduce(sig, w).core;

  long long zBoundaries = 0;
  struct FactorVisit {
    int factor;
    Word element;  // realized in the vertex group of r
    long long order;
    bool full;
  };
  std::vector<FactorVisit> visits;

  // visits: nontrivial arrival vertices carry the cone / used-boundary rotations
  for (const auto& p : passes) {
    int at = p.dir > 0 ? r.edg[p.edge].t : r.edg[p.edge].o;
    if (r.vtx[at].group.trivial()) continue;
    KuroshData K = kurosh_decompose(sig, r.vtx[at].group);
    int fi = K.parts[0].factor;
    if (p.after.empty())
      throw PreconditionError("orbifold reconstruction: trivial vertex rotation");
    if (sig.factors[fi].kind == FactorKind::Cyclic) {
      ++zBoundaries;
      visits.push_back({fi, p.after, 0, false});
    } else {
      // order of the rotation inside the conjugated factor
      Word bare = mul(sig, mul(sig, inv(sig, K.parts[0].conj), p.after), K.parts[0].conj);
      if (bare.size() != 1 || bare.syl[0].k != SylKind::Per)
        throw PreconditionError("orbifold reconstruction: bad vertex rotation");
      long long ord = detail::finite_element_order(sig.factors[fi], (int)bare.syl[0].v);
      res.data.conePoints.push_back(ord);
      visits.push_back({fi, p.after, ord, ord == sig.factors[fi].order});
    }
  }
  std::sort(res.data.conePoints.begin(), res.data.conePoints.end());

  // the two band passes over an edge between trivial vertices glue
  // orientably exactly when they run in opposite directions
  bool orientable = true;
  for (size_t ei = 0; ei < r.edg.size(); ++ei) {
    if (!r.vtx[r.edg[ei].o].group.trivial() || !r.vtx[r.edg[ei].t].group.trivial()) continue;
    std::vector<int> ds;
    for (const auto& p : passes)
      if (p.edge == (int)ei) ds.push_back(p.dir);
    if (ds.size() == 2 && ds[0] == ds[1]) orientable = false;
  }

  res.data.orientable = orientable;
  res.data.boundaryCount = 1 + zBoundaries;
  res.data.euler = 1 - sig.free_rank() - zBoundaries;
  long long h = 2 - res.data.boundaryCount - res.data.euler;
  if (orientable) {
    if (h % 2 != 0 || h < 0)
      throw PreconditionError("not quadratic: no consistent orbifold");
    res.data.genus = h / 2;
  } else {
    if (h < 1) throw PreconditionError("not quadratic: no consistent orbifold");
    res.data.genus = h;
  }

  // geometric decomposition: the orbifold group, amalgamated to each factor
  // whose visit rotation generates a proper subgroup
  std::vector<const FactorVisit*> properVisits;
  for (const auto& fv : visits)
    if (!fv.full || sig.factors[fv.factor].kind == FactorKind::Cyclic) properVisits.push_back(&fv);

  MarkedSplitting d;
  d.sig = sig;
  d.basev = 0;
  std::vector<Word> qhGens;
  for (const auto& e : r.edg)
    if (!e.tau.empty()) qhGens.push_back(e.tau);
  for (const auto& fv : visits) {
    if (!fv.full || sig.factors[fv.factor].kind == FactorKind::Cyclic) {
      qhGens.push_back(fv.element);
    } else {
      for (int v = 0; v < r.nv; ++v) {
        KuroshData K = r.vtx[v].group.trivial() ? KuroshData{} : kurosh_decompose(sig, r.vtx[v].group);
        if (!K.parts.empty() && K.parts[0].factor == fv.factor) {
          for (const auto& g : r.vtx[v].gens) qhGens.push_back(g);
          break;
        }
      }
    }
  }
  d.nv = 1 + (int)properVisits.size();
  d.vtx.resize(d.nv);
  d.vtx[0].group = core_graph_from_generators(sig, qhGens);
  for (size_t i = 0; i < properVisits.size(); ++i) {
    const FactorVisit& fv = *properVisits[i];
    for (int v = 0; v < r.nv; ++v) {
      KuroshData K = r.vtx[v].group.trivial() ? KuroshData{} : kurosh_decompose(sig, r.vtx[v].group);
      if (!K.parts.empty() && K.parts[0].factor == fv.factor) {
        d.vtx[1 + i].group = r.vtx[v].group;
        break;
      }
    }
    MarkedSplitting::Edg e;
    e.o = 0;
    e.t = 1 + (int)i;
    e.rel = fv.element;
    d.edg.push_back(std::move(e));
  }
  finalize_splitting(d);
  res.decomposition = std::move(d);
  return res;
}

}  // namespace gforge
