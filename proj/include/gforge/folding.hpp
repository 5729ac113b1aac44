#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gforge/splitting.hpp"
#include "gforge/whitehead.hpp"

namespace gforge {

/* Folds between realized splittings. A fold identifies two edges around a
 * common vertex (or an edge with its own translates) and rebuilds the
 * quotient data: vertex groups grow, stable letters and edge words are
 * rewritten in the frames of the surviving lifts, and the marking is carried
 * along so the result is again a splitting of the same marked group. */

// ---- transports -------------------------------------------------------------

/* How old marking data reads in a new splitting. Vertex v's old standard
 * lift equals mu[v] times the new standard lift of vmap[v]; crossing an old
 * edge forward reads as the path eimg[e]. Invariants:
 *   eval(eimg[e]) = mu[o(e)]^-1 tau_e mu[t(e)],   mu[basev] = 1.
 * Under these, transported base loops evaluate to the same ambient element. */
struct Transport {
  std::vector<int> vmap;
  std::vector<Word> mu;
  std::vector<PiWord> eimg;
};

inline PiWord transport_pi(const MarkedSplitting& to, const Transport& T, const PiWord& p) {
  PiWord out;
  for (const auto& it : p) {
    if (it.crossing) {
      if (it.dir > 0) {
        out.insert(out.end(), T.eimg[it.edge].begin(), T.eimg[it.edge].end());
      } else {
        PiWord r = inv_pi(to, T.eimg[it.edge]);
        out.insert(out.end(), r.begin(), r.end());
      }
    } else {
      PiItem j;
      j.crossing = false;
      j.vertex = T.vmap[it.vertex];
      j.a = mul(to.sig, mul(to.sig, inv(to.sig, T.mu[it.vertex]), it.a), T.mu[it.vertex]);
      out.push_back(std::move(j));
    }
  }
  return normalize_pi(to, std::move(out));
}

namespace detail {

inline PiItem make_pass(int v, Word a) {
  PiItem it;
  it.crossing = false;
  it.vertex = v;
  it.a = std::move(a);
  return it;
}

inline PiItem make_cross(int e, int d) {
  PiItem it;
  it.crossing = true;
  it.edge = e;
  it.dir = d;
  return it;
}

/* Carry genLoops and marks from src through T into dst. dst needs sig and
 * edges only; finalize_splitting afterwards verifies the result. */
inline void transport_marking(const MarkedSplitting& src, const Transport& T, MarkedSplitting& dst) {
  dst.genLoops.clear();
  for (const auto& L : src.genLoops) dst.genLoops.push_back(transport_pi(dst, T, L));
  dst.marks.clear();
  for (const auto& m : src.marks) {
    MarkedSplitting::PerMark nm;
    nm.vertex = T.vmap[m.vertex];
    nm.pw = mul(dst.sig, m.pw, T.mu[m.vertex]);
    nm.path = transport_pi(dst, T, m.path);
    dst.marks.push_back(std::move(nm));
  }
}

/* An edge seen from one of its ends: v --tau--> w with the stabilizer word
 * realized on the v side. dir=+1 reads the edge as stored. */
struct EdgeViewF {
  int v = -1, w = -1;
  Word tau;
  std::optional<Word> rel;
};

inline EdgeViewF edge_view(const MarkedSplitting& s, int ei, int dir) {
  const auto& e = s.edg[ei];
  if (dir > 0) return {e.o, e.t, e.tau, e.rel};
  return {e.t, e.o, inv(s.sig, e.tau),
          e.rel.has_value() ? std::optional<Word>(e.relT) : std::nullopt};
}

/* Re-choose per-vertex frames so a spanning tree of identity stable letters
 * exists again. Discovery prefers edges that already carry the identity, so
 * undisturbed parts of the graph keep their frames. Returns the frame words;
 * the splitting's groups, stable letters and edge words are rewritten. */
inline std::vector<Word> reframe(MarkedSplitting& s) {
  std::vector<Word> nu(s.nv);
  std::vector<char> seen(s.nv, 0);
  seen[s.basev] = 1;
  int found = 1;
  while (found < s.nv) {
    int bestE = -1, bestNew = -1, bestDir = 0;
    bool bestEmpty = false;
    for (int ei = 0; ei < (int)s.edg.size() && !bestEmpty; ++ei) {
      const auto& e = s.edg[ei];
      int nv = -1, dir = 0;
      if (seen[e.o] && !seen[e.t]) { nv = e.t; dir = 1; }
      else if (seen[e.t] && !seen[e.o]) { nv = e.o; dir = -1; }
      else continue;
      // prefer edges whose letter is already the identity in the current frames
      bool plain = e.tau.empty() && nu[dir > 0 ? e.o : e.t].empty();
      if (bestE < 0 || (plain && !bestEmpty)) {
        bestE = ei; bestNew = nv; bestDir = dir; bestEmpty = plain;
      }
    }
    if (bestE < 0) throw PreconditionError("reframe: splitting graph is disconnected");
    const auto& e = s.edg[bestE];
    if (bestDir > 0) {
      // nu_o^-1 tau nu_t = 1
      nu[bestNew] = mul(s.sig, inv(s.sig, e.tau), nu[e.o]);
    } else {
      nu[bestNew] = mul(s.sig, e.tau, nu[e.t]);
    }
    seen[bestNew] = 1;
    ++found;
  }
  for (int v = 0; v < s.nv; ++v) {
    if (nu[v].empty()) continue;
    std::vector<Word> gens = subgroup_generators(s.sig, s.vtx[v].group);
    for (auto& g : gens) g = conj(s.sig, inv(s.sig, nu[v]), g);
    s.vtx[v].group = core_graph_from_generators(s.sig, gens);
  }
  for (auto& e : s.edg) {
    e.tau = mul(s.sig, mul(s.sig, inv(s.sig, nu[e.o]), e.tau), nu[e.t]);
    if (e.rel.has_value()) e.rel = conj(s.sig, inv(s.sig, nu[e.o]), *e.rel);
    e.relT = Word{};
    e.tree = false;
  }
  return nu;
}

inline std::pair<long long, long long> fold_complexity(const MarkedSplitting& s) {
  long long triv = 0;
  for (const auto& e : s.edg) triv += e.rel.has_value() ? 0 : 1;
  return {(long long)s.edg.size(), triv};
}

}  // namespace detail

// ---- fold steps ---------------------------------------------------------------

enum class FoldKind { Type1, Type2, Type3 };

/* Type1/2 (e2 >= 0): identify the lift of (e2,d2) at the shared vertex with
 * twist * (lift of (e1,d1)); d=+1 picks the stored origin end. e1 survives.
 * Type1 when both edges carry groups, Type2 otherwise.
 * Type3 (e2 < 0): grow the trivial stabilizer of (e1,d1) by twist, an element
 * of the vertex group at the d1 end. */
struct FoldMove {
  int e1 = -1;
  int d1 = 1;
  int e2 = -1;
  int d2 = 1;
  Word twist;
};

struct FoldStep {
  FoldKind kind = FoldKind::Type2;
  FoldMove move;  // as applied (roles may be swapped to keep the base frame)
  std::pair<long long, long long> before{0, 0};  // (edges, trivial-stabilizer edges)
  std::pair<long long, long long> after{0, 0};
  int survivorVertex = -1;  // merged vertices, -1 when no merge happened
  int absorbedVertex = -1;
  Transport transport;
  MarkedSplitting result;
};

namespace detail {

inline FoldStep fold_type12(const MarkedSplitting& s, FoldMove mv) {
  if (mv.e1 == mv.e2) throw PreconditionError("fold: cannot fold an edge with itself");
  EdgeViewF V1 = edge_view(s, mv.e1, mv.d1);
  EdgeViewF V2 = edge_view(s, mv.e2, mv.d2);
  if (V1.v != V2.v) throw PreconditionError("fold: edges do not share the chosen vertex");
  const int v = V1.v;
  if (!contains(s.sig, s.vtx[v].group, mv.twist))
    throw PreconditionError("fold rejected: twist outside the vertex group");
  // keep the base vertex's frame untouched: never absorb it
  if (V1.w != V2.w && V2.w == s.basev) {
    std::swap(mv.e1, mv.e2);
    std::swap(mv.d1, mv.d2);
    mv.twist = inv(s.sig, mv.twist);
    std::swap(V1, V2);
  }
  const int w1 = V1.w, w2 = V2.w;
  const Word& g = mv.twist;
  Word c = mul(s.sig, inv(s.sig, V2.tau), mul(s.sig, g, V1.tau));

  // new edge stabilizer: generated by both old ones, twisted together
  std::vector<Word> egens;
  if (V1.rel.has_value()) egens.push_back(*V1.rel);
  if (V2.rel.has_value()) egens.push_back(conj(s.sig, g, *V2.rel));
  std::optional<Word> newRel;
  if (!egens.empty()) {
    auto eg = core_graph_from_generators(s.sig, egens);
    auto K = kurosh_decompose(s.sig, eg);
    if (!K.parts.empty())
      throw PreconditionError("fold rejected: edge stabilizer meets a peripheral factor");
    if (K.freeRank > 1) throw PreconditionError("fold rejected: edge stabilizer not cyclic");
    if (K.freeRank == 1) newRel = K.freePart[0];
  }
  FoldKind kind = (V1.rel.has_value() && V2.rel.has_value()) ? FoldKind::Type1 : FoldKind::Type2;

  const bool merge = (w1 != w2);
  std::vector<Word> mu(s.nv);
  if (merge) mu[w2] = c;
  std::vector<int> vmap(s.nv);
  for (int x = 0; x < s.nv; ++x) vmap[x] = merge && x > w2 ? x - 1 : x;
  if (merge) vmap[w2] = vmap[w1];

  MarkedSplitting r;
  r.sig = s.sig;
  r.nv = merge ? s.nv - 1 : s.nv;
  r.basev = vmap[s.basev];
  r.vtx.resize(r.nv);
  for (int x = 0; x < s.nv; ++x) {
    if (merge && x == w2) continue;
    std::vector<Word> gens = s.vtx[x].gens;
    if (merge && x == w1)
      for (const auto& h : s.vtx[w2].gens) gens.push_back(conj(s.sig, inv(s.sig, c), h));
    if (!merge && x == w1 && !c.empty()) gens.push_back(c);
    r.vtx[vmap[x]].group = core_graph_from_generators(s.sig, gens);
  }
  std::vector<int> emap(s.edg.size(), -1);
  for (int ei = 0; ei < (int)s.edg.size(); ++ei) {
    if (ei == mv.e2) continue;
    MarkedSplitting::Edg ne;
    if (ei == mv.e1) {
      ne.o = v;
      ne.t = w1;
      ne.tau = V1.tau;
      ne.rel = newRel;
    } else {
      ne.o = s.edg[ei].o;
      ne.t = s.edg[ei].t;
      ne.tau = s.edg[ei].tau;
      ne.rel = s.edg[ei].rel;
    }
    ne.tau = mul(s.sig, mul(s.sig, inv(s.sig, mu[ne.o]), ne.tau), mu[ne.t]);
    if (ne.rel.has_value()) ne.rel = conj(s.sig, inv(s.sig, mu[ne.o]), *ne.rel);
    ne.relT = Word{};
    ne.tree = false;
    ne.o = vmap[ne.o];
    ne.t = vmap[ne.t];
    emap[ei] = (int)r.edg.size();
    r.edg.push_back(std::move(ne));
  }
  const int newE1 = emap[mv.e1];
  std::vector<Word> nu = reframe(r);

  Transport T;
  T.vmap = vmap;
  T.mu.resize(s.nv);
  for (int x = 0; x < s.nv; ++x) T.mu[x] = mul(s.sig, mu[x], nu[vmap[x]]);
  T.eimg.resize(s.edg.size());
  for (int ei = 0; ei < (int)s.edg.size(); ++ei) {
    if (ei == mv.e1 || ei == mv.e2) continue;
    T.eimg[ei] = {make_cross(emap[ei], 1)};
  }
  T.eimg[mv.e1] = {make_cross(newE1, mv.d1 > 0 ? 1 : -1)};
  {
    PiWord E;
    Word a = conj(s.sig, inv(s.sig, T.mu[v]), g);
    if (!a.empty()) E.push_back(make_pass(vmap[v], a));
    E.push_back(make_cross(newE1, 1));
    Word b = mul(s.sig, inv(s.sig, T.mu[w1]), mul(s.sig, inv(s.sig, c), T.mu[w2]));
    if (!b.empty()) E.push_back(make_pass(vmap[w2], b));
    if (mv.d2 < 0) E = inv_pi(r, E);
    T.eimg[mv.e2] = std::move(E);
  }
  transport_marking(s, T, r);
  finalize_splitting(r);
  if (!r.markingOk)
    throw PreconditionError("fold: marking transport failed: " + r.markingIssue);
  auto cls = validate(r);
  if (cls.kind == SplittingKind::Invalid)
    throw PreconditionError("fold rejected: " + cls.reason);

  FoldStep st;
  st.kind = kind;
  st.move = mv;
  st.before = fold_complexity(s);
  st.after = fold_complexity(r);
  st.survivorVertex = merge ? w1 : -1;
  st.absorbedVertex = merge ? w2 : -1;
  st.transport = std::move(T);
  st.result = std::move(r);
  if (!(st.after < st.before)) throw PreconditionError("fold: complexity did not decrease");
  return st;
}

inline FoldStep fold_type3(const MarkedSplitting& s, const FoldMove& mv) {
  EdgeViewF V = edge_view(s, mv.e1, mv.d1);
  if (V.rel.has_value())
    throw PreconditionError("fold rejected: edge stabilizer already nontrivial");
  const Word& h = mv.twist;
  if (h.empty()) throw PreconditionError("fold rejected: trivial stabilizer element");
  if (!contains(s.sig, s.vtx[V.v].group, h))
    throw PreconditionError("fold rejected: stabilizer element outside the vertex group");
  if (!nonperipheral(s.sig, h))
    throw PreconditionError("fold rejected: peripheral edge stabilizer");

  MarkedSplitting r = s;
  Word hh = conj(s.sig, inv(s.sig, V.tau), h);  // reaches the far vertex group
  {
    std::vector<Word> gens = r.vtx[V.w].gens;
    gens.push_back(hh);
    r.vtx[V.w].group = core_graph_from_generators(s.sig, gens);
  }
  auto& e = r.edg[mv.e1];
  e.rel = mv.d1 > 0 ? h : conj(s.sig, e.tau, h);
  e.relT = Word{};
  finalize_splitting(r);
  if (!r.markingOk)
    throw PreconditionError("fold: marking transport failed: " + r.markingIssue);
  auto cls = validate(r);
  if (cls.kind == SplittingKind::Invalid)
    throw PreconditionError("fold rejected: " + cls.reason);

  FoldStep st;
  st.kind = FoldKind::Type3;
  st.move = mv;
  st.before = fold_complexity(s);
  st.after = fold_complexity(r);
  st.transport.vmap.resize(s.nv);
  for (int x = 0; x < s.nv; ++x) st.transport.vmap[x] = x;
  st.transport.mu.assign(s.nv, Word{});
  st.transport.eimg.resize(s.edg.size());
  for (int ei = 0; ei < (int)s.edg.size(); ++ei) st.transport.eimg[ei] = {make_cross(ei, 1)};
  st.result = std::move(r);
  if (!(st.after < st.before)) throw PreconditionError("fold: complexity did not decrease");
  return st;
}

}  // namespace detail

inline FoldStep fold_step(const MarkedSplitting& s, const FoldMove& mv) {
  if (!s.markingOk) throw PreconditionError("fold: splitting has no valid marking");
  if (mv.e1 < 0 || mv.e1 >= (int)s.edg.size())
    throw PreconditionError("fold: edge index out of range");
  if (mv.e2 < 0) return detail::fold_type3(s, mv);
  if (mv.e2 >= (int)s.edg.size()) throw PreconditionError("fold: edge index out of range");
  return detail::fold_type12(s, mv);
}

// ---- morphisms ------------------------------------------------------------------

/* Equivariant map between splittings of the same marked group: vertex images
 * with frame words (source lift = mu * target lift) and an edge-path image
 * per source edge. simplicial means every edge maps over exactly one edge. */
struct TreeMorphism {
  std::vector<int> vimg;
  std::vector<Word> mu;
  std::vector<PiWord> eimg;
  bool simplicial = false;
};

inline std::string check_morphism(const MarkedSplitting& src, const MarkedSplitting& dst,
                                  const TreeMorphism& m) {
  if ((int)m.vimg.size() != src.nv || (int)m.mu.size() != src.nv ||
      m.eimg.size() != src.edg.size())
    return "morphism: data sizes do not match the source";
  for (int v = 0; v < src.nv; ++v) {
    if (m.vimg[v] < 0 || m.vimg[v] >= dst.nv) return "morphism: vertex image out of range";
    for (const auto& g : src.vtx[v].gens)
      if (!contains(dst.sig, dst.vtx[m.vimg[v]].group,
                    conj(dst.sig, inv(dst.sig, m.mu[v]), g)))
        return "morphism: vertex group not carried into its image";
  }
  for (int ei = 0; ei < (int)src.edg.size(); ++ei) {
    int at = m.vimg[src.edg[ei].o];
    for (const auto& it : m.eimg[ei]) {
      if (it.crossing) {
        const auto& e = dst.edg[it.edge];
        int from = it.dir > 0 ? e.o : e.t;
        if (from != at) return "morphism: edge image path is not continuous";
        at = it.dir > 0 ? e.t : e.o;
      } else {
        if (it.vertex != at) return "morphism: edge image pass at the wrong vertex";
        if (!contains(dst.sig, dst.vtx[at].group, it.a))
          return "morphism: edge image pass outside the vertex group";
      }
    }
    if (at != m.vimg[src.edg[ei].t]) return "morphism: edge image misses the target vertex";
    Word need = mul(dst.sig, mul(dst.sig, inv(dst.sig, m.mu[src.edg[ei].o]), src.edg[ei].tau),
                    m.mu[src.edg[ei].t]);
    if (!(eval_pi(dst, m.eimg[ei]) == need)) return "morphism: edge image evaluates wrong";
  }
  return "";
}

/* Canonical morphism between two Grushko splittings: peripheral vertices go
 * to the matching factor vertices, trivial vertices to the base, and edges
 * map over reduced paths determined by the frames. */
inline TreeMorphism morphism_to(const MarkedSplitting& src, const MarkedSplitting& dst) {
  if (validate(src).kind != SplittingKind::Grushko ||
      validate(dst).kind != SplittingKind::Grushko)
    throw PreconditionError("morphism: both splittings must be Grushko");
  TreeMorphism m;
  m.vimg.assign(src.nv, dst.basev);
  m.mu.assign(src.nv, Word{});
  for (int v = 0; v < src.nv; ++v) {
    if (src.vtx[v].gens.empty()) continue;
    auto K = kurosh_decompose(src.sig, src.vtx[v].group);
    if (K.parts.size() != 1 || K.freeRank != 0)
      throw PreconditionError("morphism: source vertex is not a peripheral part");
    int factor = K.parts[0].factor;
    Word u1 = K.parts[0].conj;
    bool placed = false;
    for (int w = 0; w < dst.nv && !placed; ++w) {
      if (dst.vtx[w].gens.empty()) continue;
      auto L = kurosh_decompose(dst.sig, dst.vtx[w].group);
      if (L.parts.size() == 1 && L.parts[0].factor == factor) {
        m.vimg[v] = w;
        m.mu[v] = mul(dst.sig, u1, inv(dst.sig, L.parts[0].conj));
        placed = true;
      }
    }
    if (!placed) throw PreconditionError("morphism: no target vertex for a peripheral part");
  }
  bool simp = true;
  for (const auto& e : src.edg) {
    Word eta = mul(dst.sig, mul(dst.sig, inv(dst.sig, m.mu[e.o]), e.tau), m.mu[e.t]);
    PiWord P = detail::tree_path(dst, m.vimg[e.o], dst.basev);
    PiWord mid = piword_of_word(dst, eta);
    P.insert(P.end(), mid.begin(), mid.end());
    PiWord down = detail::tree_path(dst, dst.basev, m.vimg[e.t]);
    P.insert(P.end(), down.begin(), down.end());
    P = normalize_pi(dst, std::move(P));
    while (detail::britton_pinch(dst, P)) {}
    if (detail::crossing_count(P) != 1) simp = false;
    m.eimg.push_back(std::move(P));
  }
  m.simplicial = simp;
  return m;
}

namespace detail {

/* Subdivide edge ei into one segment per crossing of its morphism image.
 * Segment frames put the stable letter on the last piece; midpoints carry
 * the edge group. Both the splitting and the morphism are updated. */
inline void subdivide_edge(MarkedSplitting& s, TreeMorphism& m, const MarkedSplitting& dst,
                           int ei) {
  PiWord P = normalize_pi(dst, m.eimg[ei]);
  int L = crossing_count(P);
  if (L < 2) return;
  std::vector<PiWord> C(L);
  {
    int ci = -1;
    for (auto& it : P) {
      if (it.crossing) ++ci;
      C[std::max(ci, 0)].push_back(it);
    }
  }
  const auto old = s.edg[ei];
  MarkedSplitting r;
  r.sig = s.sig;
  r.nv = s.nv + L - 1;
  r.basev = s.basev;
  r.vtx.resize(r.nv);
  for (int x = 0; x < s.nv; ++x) r.vtx[x].group = s.vtx[x].group;
  for (int k = 0; k < L - 1; ++k)
    r.vtx[s.nv + k].group = old.rel.has_value()
                                ? core_graph_from_generators(s.sig, {*old.rel})
                                : core_graph_from_generators(s.sig, {});
  std::vector<int> segIdx(L, -1);
  segIdx[0] = ei;
  for (int e2 = 0; e2 < (int)s.edg.size(); ++e2) {
    MarkedSplitting::Edg ne;
    if (e2 == ei) {
      ne.o = old.o;
      ne.t = s.nv;
      ne.rel = old.rel;
    } else {
      ne = s.edg[e2];
      ne.relT = Word{};
      ne.tree = false;
    }
    r.edg.push_back(std::move(ne));
  }
  for (int k = 1; k < L; ++k) {
    MarkedSplitting::Edg ne;
    ne.o = s.nv + k - 1;
    ne.t = k == L - 1 ? old.t : s.nv + k;
    ne.rel = old.rel;
    if (k == L - 1) ne.tau = old.tau;
    segIdx[k] = (int)r.edg.size();
    r.edg.push_back(std::move(ne));
  }
  Transport T;
  T.vmap.resize(s.nv);
  for (int x = 0; x < s.nv; ++x) T.vmap[x] = x;
  T.mu.assign(s.nv, Word{});
  T.eimg.resize(s.edg.size());
  for (int e2 = 0; e2 < (int)s.edg.size(); ++e2) {
    if (e2 == ei) {
      PiWord E;
      for (int k = 0; k < L; ++k) E.push_back(make_cross(segIdx[k], 1));
      T.eimg[e2] = std::move(E);
    } else {
      T.eimg[e2] = {make_cross(e2, 1)};
    }
  }
  transport_marking(s, T, r);
  finalize_splitting(r);
  if (!r.markingOk)
    throw PreconditionError("subdivision: marking transport failed: " + r.markingIssue);

  // morphism: chunk frames telescope along the segments
  m.vimg.resize(r.nv);
  m.mu.resize(r.nv);
  int at = m.vimg[old.o];
  Word acc = m.mu[old.o];
  m.eimg[ei] = C[0];
  for (int k = 0; k < L; ++k) {
    if (k > 0) m.eimg.push_back(C[k]);
    for (const auto& it : C[k])
      if (it.crossing) at = it.dir > 0 ? dst.edg[it.edge].t : dst.edg[it.edge].o;
    if (k < L - 1) {
      acc = mul(dst.sig, acc, eval_pi(dst, C[k]));
      m.vimg[s.nv + k] = at;
      m.mu[s.nv + k] = acc;
    }
  }
  s = std::move(r);
}

/* Compose a morphism with a fold: frames shift by the fold transport, and
 * edges keep their images (orientation-adjusted). A merged vertex may force a
 * frame correction on its other edges by an element of the target group. */
inline TreeMorphism push_morphism(const MarkedSplitting& oldSrc, const FoldStep& st,
                                  const MarkedSplitting& dst, const TreeMorphism& m) {
  const Transport& T = st.transport;
  const MarkedSplitting& r = st.result;
  TreeMorphism out;
  out.vimg.assign(r.nv, -1);
  out.mu.assign(r.nv, Word{});
  for (int v = 0; v < oldSrc.nv; ++v) {
    if (v == st.absorbedVertex) continue;
    out.vimg[T.vmap[v]] = m.vimg[v];
    out.mu[T.vmap[v]] = mul(dst.sig, inv(dst.sig, T.mu[v]), m.mu[v]);
  }
  Word d2;
  if (st.absorbedVertex >= 0) {
    int w2 = st.absorbedVertex;
    if (m.vimg[w2] != out.vimg[T.vmap[w2]])
      throw PreconditionError("fold path: merged vertices map to different targets");
    d2 = mul(dst.sig, mul(dst.sig, inv(dst.sig, m.mu[w2]), T.mu[w2]), out.mu[T.vmap[w2]]);
    if (!contains(dst.sig, dst.vtx[m.vimg[w2]].group, d2))
      throw PreconditionError("fold path: merged frames differ outside the vertex group");
  }
  out.eimg.assign(r.edg.size(), PiWord{});
  for (int ei = 0; ei < (int)oldSrc.edg.size(); ++ei) {
    if (ei == st.move.e2) continue;
    const PiWord& E = T.eimg[ei];
    if (E.size() != 1 || !E[0].crossing)
      throw PreconditionError("fold path: unexpected transport shape");
    int nf = E[0].edge, d = E[0].dir;
    int oldO = d > 0 ? oldSrc.edg[ei].o : oldSrc.edg[ei].t;
    int oldT = d > 0 ? oldSrc.edg[ei].t : oldSrc.edg[ei].o;
    PiWord img = d > 0 ? m.eimg[ei] : inv_pi(dst, m.eimg[ei]);
    if (st.absorbedVertex >= 0 && !d2.empty()) {
      if (oldO == st.absorbedVertex)
        img.insert(img.begin(), make_pass(m.vimg[st.absorbedVertex], inv(dst.sig, d2)));
      if (oldT == st.absorbedVertex)
        img.push_back(make_pass(m.vimg[st.absorbedVertex], d2));
    }
    out.eimg[nf] = normalize_pi(dst, std::move(img));
  }
  out.simplicial = true;
  for (const auto& E : out.eimg)
    if (crossing_count(E) != 1) out.simplicial = false;
  return out;
}

inline bool same_signature(const Signature& a, const Signature& b) {
  if (a.num_factors() != b.num_factors() || a.free_rank() != b.free_rank()) return false;
  for (int i = 0; i < a.num_factors(); ++i) {
    if (a.factors[i].name != b.factors[i].name) return false;
    if (a.factors[i].kind != b.factors[i].kind) return false;
    if (a.factors[i].order != b.factors[i].order) return false;
  }
  for (int j = 0; j < a.free_rank(); ++j)
    if (a.freeGens[j] != b.freeGens[j]) return false;
  return true;
}

/* Oriented lead data of a single-crossing image: decoration before the
 * crossing, then the crossed target edge with direction. */
struct GermImage {
  Word lead;
  int edge = -1;
  int dir = 0;
};

inline GermImage germ_image(const MarkedSplitting& dst, const TreeMorphism& m, int ei, int d) {
  PiWord P = d > 0 ? m.eimg[ei] : inv_pi(dst, m.eimg[ei]);
  P = normalize_pi(dst, std::move(P));
  GermImage gi;
  for (const auto& it : P) {
    if (!it.crossing) {
      gi.lead = it.a;
      continue;
    }
    gi.edge = it.edge;
    gi.dir = it.dir;
    break;
  }
  return gi;
}

/* Corners of the axis of g: arrival germ, departure germ and the decoration
 * between them, one entry per crossing of the reduced cyclic form. */
struct AxisCorner {
  int vertex = -1;
  int arrE = -1, arrD = 0;  // view dir placing the corner vertex first
  int depE = -1, depD = 0;
  Word x;
};

inline std::vector<AxisCorner> axis_corners(const MarkedSplitting& s, const Word& g) {
  PiWord A = britton_cyclic(s, piword_of_word(s, g));
  std::vector<size_t> cpos;
  for (size_t i = 0; i < A.size(); ++i)
    if (A[i].crossing) cpos.push_back(i);
  std::vector<AxisCorner> out;
  size_t n = cpos.size();
  for (size_t k = 0; k < n; ++k) {
    size_t p = cpos[k], q = cpos[(k + 1) % n];
    AxisCorner c;
    const auto& cp = A[p];
    const auto& cq = A[q];
    c.vertex = cp.dir > 0 ? s.edg[cp.edge].t : s.edg[cp.edge].o;
    c.arrE = cp.edge;
    c.arrD = -cp.dir;
    c.depE = cq.edge;
    c.depD = cq.dir;
    Word x;
    for (size_t i = (p + 1) % A.size(); i != q; i = (i + 1) % A.size())
      if (!A[i].crossing) x = mul(s.sig, x, A[i].a);
    c.x = std::move(x);
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace detail

// ---- fold paths ----------------------------------------------------------------

struct FoldPath {
  MarkedSplitting prepared;  // source after degenerate collapses and subdivision
  std::vector<FoldStep> steps;
  std::vector<std::string> trace;  // one line per step: kind, edges, resulting volume
  MarkedSplitting terminal;        // equivalent to the target
  TreeMorphism morphism;           // terminal -> target
};

/* Fold the first splitting onto the second through Type2 folds guided by the
 * canonical morphism. With a preserved quadratic word, fold choices are
 * restricted to adjacent crossings on its axis and the axis stays filling:
 * every edge is crossed exactly twice and the length equals twice the volume. */
inline FoldPath fold_path(const MarkedSplitting& s1, const MarkedSplitting& s2,
                          const std::optional<Word>& preserveQuadratic = std::nullopt) {
  if (!detail::same_signature(s1.sig, s2.sig))
    throw PreconditionError("fold path: splittings live over different signatures");
  if (validate(s1).kind != SplittingKind::Grushko ||
      validate(s2).kind != SplittingKind::Grushko)
    throw PreconditionError("fold path: both splittings must be Grushko");
  const Signature& sig = s1.sig;
  Word g;
  if (preserveQuadratic.has_value()) {
    g = *preserveQuadratic;
    if (!is_quadratic(g, sig).has_value())
      throw PreconditionError("fold path: preserved word is not quadratic");
    for (const MarkedSplitting* s : {&s1, &s2})
      for (long long cnt : orbit_crossings(*s, g))
        if (cnt != 2)
          throw PreconditionError("fold path: preserved word does not fill the endpoint");
  }
  FoldPath out;
  if (equivalent(s1, s2, 12)) {
    out.prepared = s1;
    out.terminal = s1;
    out.morphism = morphism_to(s1, s2);
    return out;
  }
  MarkedSplitting cur = s1;
  TreeMorphism m = morphism_to(cur, s2);
  for (;;) {
    int deg = -1;
    for (int ei = 0; ei < (int)m.eimg.size() && deg < 0; ++ei)
      if (detail::crossing_count(m.eimg[ei]) == 0) deg = ei;
    if (deg < 0) break;
    cur = collapse(cur, {deg});
    m = morphism_to(cur, s2);
  }
  for (;;) {
    int big = -1;
    for (int ei = 0; ei < (int)m.eimg.size() && big < 0; ++ei)
      if (detail::crossing_count(m.eimg[ei]) >= 2) big = ei;
    if (big < 0) break;
    detail::subdivide_edge(cur, m, s2, big);
  }
  out.prepared = cur;
  const bool quad = preserveQuadratic.has_value();
  if (quad) {
    long long tl = translation_length(cur, g);
    if (tl != 2 * (long long)cur.edg.size())
      throw PreconditionError("fold path: preserved word does not fill the prepared source");
  }

  long long guard = (long long)cur.edg.size() + 2;
  while (guard-- > 0) {
    std::optional<FoldMove> found;
    auto try_pair = [&](int i, int di, int j, int dj, const Word* requireTwist) -> bool {
      if (i == j) return false;
      auto Vi = detail::edge_view(cur, i, di);
      auto Vj = detail::edge_view(cur, j, dj);
      if (Vi.v != Vj.v) return false;
      auto Gi = detail::germ_image(s2, m, i, di);
      auto Gj = detail::germ_image(s2, m, j, dj);
      if (Gi.edge != Gj.edge || Gi.dir != Gj.dir) return false;
      Word tw = conj(sig, m.mu[Vi.v], mul(sig, Gj.lead, inv(sig, Gi.lead)));
      if (!contains(sig, cur.vtx[Vi.v].group, tw)) return false;
      if (requireTwist && !(tw == *requireTwist)) return false;
      found = FoldMove{i, di, j, dj, tw};
      return true;
    };
    if (quad) {
      for (const auto& c : detail::axis_corners(cur, g)) {
        // fold the departure germ with the arrival germ; the decoration
        // between them is the only twist that shortens the axis
        if (try_pair(c.depE, c.depD, c.arrE, c.arrD, &c.x)) break;
      }
    } else {
      for (int i = 0; i < (int)cur.edg.size() && !found; ++i)
        for (int j = i + 1; j < (int)cur.edg.size() && !found; ++j)
          for (int di : {1, -1}) {
            if (found) break;
            for (int dj : {1, -1})
              if (try_pair(i, di, j, dj, nullptr)) break;
          }
    }
    if (!found) break;
    long long tlBefore = quad ? translation_length(cur, g) : 0;
    FoldStep st = fold_step(cur, *found);
    TreeMorphism m2 = detail::push_morphism(cur, st, s2, m);
    {
      std::ostringstream line;
      int kindNo = st.kind == FoldKind::Type1 ? 1 : st.kind == FoldKind::Type2 ? 2 : 3;
      line << "type" << kindNo << " e" << st.move.e1;
      if (st.move.e2 >= 0) line << "+e" << st.move.e2;
      line << " -> vol " << st.result.edg.size();
      out.trace.push_back(line.str());
    }
    cur = st.result;
    m = std::move(m2);
    if (quad) {
      long long tl = translation_length(cur, g);
      if (tl != tlBefore - 2)
        throw PreconditionError("fold path: axis length did not drop by two");
      if (tl != 2 * (long long)cur.edg.size())
        throw PreconditionError("fold path: preserved word stopped filling");
      for (long long cnt : orbit_crossings(cur, g))
        if (cnt != 2) throw PreconditionError("fold path: preserved word stopped filling");
    }
    out.steps.push_back(std::move(st));
  }
  if (!equivalent(cur, s2, 12))
    throw BoundExhausted("fold path: stalled before reaching the target");
  out.terminal = std::move(cur);
  out.morphism = std::move(m);
  return out;
}

// ---- substitutions ---------------------------------------------------------------

/* Endomorphism data: free generators map to words, peripheral factors map by
 * conjugation. A pair (f, f^-1) is an automorphism; map_splitting verifies
 * the pair against the transported marking. */
struct Subst {
  std::vector<Word> freeImg;
  std::vector<Word> perConj;
};

inline Subst identity_subst(const Signature& sig) {
  Subst f;
  f.freeImg.resize(sig.free_rank());
  for (int j = 0; j < sig.free_rank(); ++j)
    f.freeImg[j] = word_of(Syllable{SylKind::Free, j, 1});
  f.perConj.assign(sig.num_factors(), Word{});
  return f;
}

inline Word apply_subst(const Signature& sig, const Subst& f, const Word& w) {
  Word out;
  for (const auto& syl : w.syl) {
    if (syl.k == SylKind::Free)
      out = mul(sig, out, pow(sig, f.freeImg[syl.idx], syl.v));
    else
      out = mul(sig, out, conj(sig, f.perConj[syl.idx], word_of(syl)));
  }
  return out;
}

/* Image of a splitting under an automorphism: groups, edge words and stable
 * letters map through f; the marking is rebuilt from f^-1 so the result is
 * marked by the same generators. */
inline MarkedSplitting map_splitting(const MarkedSplitting& s, const Subst& f,
                                     const Subst& finv) {
  const Signature& sig = s.sig;
  MarkedSplitting r;
  r.sig = sig;
  r.nv = s.nv;
  r.basev = s.basev;
  r.vtx.resize(s.nv);
  for (int v = 0; v < s.nv; ++v) {
    std::vector<Word> gens;
    for (const auto& g : s.vtx[v].gens) gens.push_back(apply_subst(sig, f, g));
    r.vtx[v].group = core_graph_from_generators(sig, gens);
  }
  for (const auto& e : s.edg) {
    MarkedSplitting::Edg ne;
    ne.o = e.o;
    ne.t = e.t;
    ne.tau = apply_subst(sig, f, e.tau);
    if (e.rel.has_value()) ne.rel = apply_subst(sig, f, *e.rel);
    r.edg.push_back(std::move(ne));
  }
  auto mapped = [&](const PiWord& p) {
    PiWord out;
    for (const auto& it : p) {
      if (it.crossing) {
        out.push_back(it);
      } else {
        PiItem j = it;
        j.a = apply_subst(sig, f, it.a);
        out.push_back(std::move(j));
      }
    }
    return out;
  };
  for (int j = 0; j < sig.free_rank(); ++j) {
    Word pre = apply_subst(sig, finv, word_of(Syllable{SylKind::Free, j, 1}));
    r.genLoops.push_back(normalize_pi(r, mapped(piword_of_word(s, pre))));
  }
  for (int i = 0; i < sig.num_factors(); ++i) {
    const auto& mk = s.marks[i];
    MarkedSplitting::PerMark nm;
    nm.vertex = mk.vertex;
    Word q = f.perConj[i];
    nm.pw = mul(sig, inv(sig, q), apply_subst(sig, f, mk.pw));
    PiWord P = mapped(piword_of_word(s, apply_subst(sig, finv, inv(sig, q))));
    PiWord tail = mapped(mk.path);
    P.insert(P.end(), tail.begin(), tail.end());
    nm.path = normalize_pi(r, std::move(P));
    r.marks.push_back(std::move(nm));
  }
  finalize_splitting(r);
  if (!r.markingOk)
    throw PreconditionError("substitution: marking did not survive: " + r.markingIssue);
  return r;
}

// ---- compatibility blowups ---------------------------------------------------------

namespace detail {

/* Vertex and conjugator carrying an elliptic word: u^-1 w u lies in the
 * vertex group. Found by reducing the base loop and scanning prefixes. */
inline std::optional<std::pair<int, Word>> elliptic_witness(const MarkedSplitting& s,
                                                            const Word& w) {
  PiWord p = normalize_pi(s, piword_of_word(s, w));
  while (britton_pinch(s, p)) {}
  for (size_t i = 0; i <= p.size(); ++i) {
    Word u = eval_pi(s, PiWord(p.begin(), p.begin() + i));
    int v = pi_vertex_after(s, p, i);
    Word in = mul(s.sig, mul(s.sig, inv(s.sig, u), w), u);
    if (contains(s.sig, s.vtx[v].group, in)) return std::make_pair(v, u);
  }
  return std::nullopt;
}

/* Joint Whitehead reduction of a word system until the pieces it touches
 * fall apart. side[] assigns every factor and free generator slot to one of
 * the two halves; every input word's reduced form lives in a single half. */
struct JointSplit {
  std::vector<WhMove> moves;
  std::vector<Word> reduced;
  std::vector<char> side;
};

inline std::optional<std::vector<char>> split_sides(const Signature& sig,
                                                    const std::vector<Word>& cores) {
  int P = sig.num_factors() + sig.free_rank();
  if (P < 2) return std::nullopt;
  std::vector<int> parent(P);
  for (int i = 0; i < P; ++i) parent[i] = i;
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  auto join = [&](int a, int b) { parent[find(a)] = find(b); };
  auto slot = [&](const Syllable& syl) {
    return syl.k == SylKind::Per ? syl.idx : sig.num_factors() + syl.idx;
  };
  for (const auto& c : cores)
    for (size_t i = 1; i < c.syl.size(); ++i) join(slot(c.syl[0]), slot(c.syl[i]));
  int comps = 0;
  for (int i = 0; i < P; ++i) comps += find(i) == i ? 1 : 0;
  if (comps < 2) return std::nullopt;
  int anchor = cores.empty() || cores[0].empty() ? 0 : slot(cores[0].syl[0]);
  std::vector<char> side(P);
  for (int i = 0; i < P; ++i) side[i] = find(i) == find(anchor) ? 0 : 1;
  return side;
}

inline std::optional<JointSplit> joint_split(const Signature& sig, const std::vector<Word>& ws,
                                             int budget = 20000) {
  auto cores_of = [&](const std::vector<Word>& v) {
    std::vector<Word> cs;
    for (const auto& w : v) cs.push_back(cyclic_reduce(sig, w).core);
    return cs;
  };
  auto total = [&](const std::vector<Word>& v) {
    long long n = 0;
    for (const auto& w : v) n += word_length(sig, cyclic_reduce(sig, w).core);
    return n;
  };
  auto key_of = [&](const std::vector<Word>& v) {
    std::string k;
    for (const auto& w : v) k += format_word(sig, conjugacy_key(sig, w)) + "|";
    return k;
  };
  if (auto side = split_sides(sig, cores_of(ws)))
    return JointSplit{{}, ws, *side};
  std::vector<WhMove> moves = all_moves(sig);
  struct Node {
    std::vector<Word> ws;
    int parent;
    int mv;
  };
  std::vector<Node> nodes{{ws, -1, -1}};
  std::set<std::string> seen{key_of(ws)};
  using QE = std::pair<long long, int>;
  std::priority_queue<QE, std::vector<QE>, std::greater<QE>> q;
  q.push({total(ws), 0});
  int expanded = 0;
  while (!q.empty() && expanded < budget) {
    auto [len, ni] = q.top();
    q.pop();
    ++expanded;
    for (size_t mi = 0; mi < moves.size(); ++mi) {
      std::vector<Word> nw;
      nw.reserve(nodes[ni].ws.size());
      for (const auto& w : nodes[ni].ws) nw.push_back(apply_move(sig, moves[mi], w));
      std::string k = key_of(nw);
      if (!seen.insert(k).second) continue;
      long long nl = total(nw);
      if (nl > len) continue;  // peak reduction: descents and plateaus suffice
      if (auto side = split_sides(sig, cores_of(nw))) {
        std::vector<WhMove> chain{moves[mi]};
        for (int at = ni; at > 0; at = nodes[at].parent) chain.push_back(moves[nodes[at].mv]);
        std::reverse(chain.begin(), chain.end());
        return JointSplit{std::move(chain), std::move(nw), *side};
      }
      nodes.push_back({std::move(nw), ni, (int)mi});
      q.push({nl, (int)nodes.size() - 1});
    }
  }
  return std::nullopt;
}

}  // namespace detail

struct CompatibleSplit {
  MarkedSplitting splitting;   // every edge stabilizer trivial; the word is elliptic
  MarkedSplitting refinement;  // collapses onto both the output and the input
};

namespace detail {

/* Blow the chosen vertex into two halves along a free splitting of its group
 * in which every incident edge word (and the carried word, when the vertex
 * holds it) stays elliptic. Returns the collapsed free splitting together
 * with the two-way refinement, or nothing when this vertex does not split. */
inline std::optional<CompatibleSplit> blow_up_vertex(const MarkedSplitting& t, int v,
                                                     const std::optional<Word>& witnessConj,
                                                     const Word& a) {
  const Signature& sig = t.sig;
  KuroshRewriter R = kurosh_rewriter(sig, t.vtx[v].group);
  const int nf = R.inner.num_factors();
  if (nf + R.inner.free_rank() < 2) return std::nullopt;

  std::vector<Word> ws;
  if (witnessConj.has_value()) {
    Word in = mul(sig, mul(sig, inv(sig, *witnessConj), a), *witnessConj);
    auto x = R.express(in);
    if (!x) return std::nullopt;
    ws.push_back(*x);
  }
  struct EndRef {
    int edge;
    int end;  // 0 = origin side, 1 = target side
  };
  std::vector<EndRef> ends;
  for (int ei = 0; ei < (int)t.edg.size(); ++ei) {
    const auto& e = t.edg[ei];
    if (!e.rel.has_value()) continue;
    if (e.o == v) {
      auto x = R.express(*e.rel);
      if (!x) return std::nullopt;
      ws.push_back(*x);
      ends.push_back({ei, 0});
    }
    if (e.t == v) {
      auto x = R.express(e.relT);
      if (!x) return std::nullopt;
      ws.push_back(*x);
      ends.push_back({ei, 1});
    }
  }
  std::optional<JointSplit> JS;
  try {
    JS = joint_split(R.inner, ws);
  } catch (const BoundExhausted&) {
    return std::nullopt;
  }
  if (!JS) return std::nullopt;

  auto down = [&](const Word& w) { return R.embed(pull_back(R.inner, JS->moves, w)); };
  auto side_of = [&](const Syllable& syl) {
    return JS->side[syl.k == SylKind::Per ? syl.idx : nf + syl.idx];
  };
  // reattachment data per edge end touching v
  struct EndData {
    int side = 0;
    Word delta;
    Word core;  // stabilizer word rewritten in the new frame
  };
  std::map<std::pair<int, int>, EndData> att;
  {
    size_t wi = witnessConj.has_value() ? 1 : 0;
    for (const auto& er : ends) {
      auto cyc = cyclic_reduce(R.inner, JS->reduced[wi++]);
      if (cyc.core.empty()) return std::nullopt;
      EndData d;
      d.side = side_of(cyc.core.syl[0]);
      d.delta = down(cyc.conj);
      d.core = down(cyc.core);
      att[{er.edge, er.end}] = std::move(d);
    }
  }
  auto end_data = [&](int ei, int end) {
    auto it = att.find({ei, end});
    return it == att.end() ? EndData{} : it->second;
  };

  // the two halves of the vertex group
  std::vector<Word> gens0, gens1;
  for (int i = 0; i < nf; ++i) {
    std::vector<Word>& g = JS->side[i] ? gens1 : gens0;
    const auto& f = R.inner.factors[i];
    if (f.kind == FactorKind::Finite) {
      for (int e = 0; e < f.order; ++e)
        if (e != f.identity) g.push_back(down(word_of(Syllable{SylKind::Per, i, e})));
    } else {
      g.push_back(down(word_of(Syllable{SylKind::Per, i, 1})));
    }
  }
  for (int j = 0; j < R.inner.free_rank(); ++j)
    (JS->side[nf + j] ? gens1 : gens0).push_back(down(word_of(Syllable{SylKind::Free, j, 1})));

  auto newIdx = [&](int x) { return x < v ? x : x - 1; };
  const int iA = t.nv - 1, iB = t.nv;
  MarkedSplitting r;
  r.sig = sig;
  r.nv = t.nv + 1;
  r.basev = t.basev == v ? iA : newIdx(t.basev);
  r.vtx.resize(r.nv);
  for (int x = 0; x < t.nv; ++x)
    if (x != v) r.vtx[newIdx(x)].group = t.vtx[x].group;
  r.vtx[iA].group = core_graph_from_generators(sig, gens0);
  r.vtx[iB].group = core_graph_from_generators(sig, gens1);
  for (int ei = 0; ei < (int)t.edg.size(); ++ei) {
    const auto& e = t.edg[ei];
    MarkedSplitting::Edg ne;
    EndData dO = e.o == v ? end_data(ei, 0) : EndData{};
    EndData dT = e.t == v ? end_data(ei, 1) : EndData{};
    ne.o = e.o == v ? (dO.side ? iB : iA) : newIdx(e.o);
    ne.t = e.t == v ? (dT.side ? iB : iA) : newIdx(e.t);
    if (e.rel.has_value()) ne.rel = e.o == v ? dO.core : *e.rel;
    ne.tau = mul(sig, mul(sig, inv(sig, dO.delta), e.tau), dT.delta);
    r.edg.push_back(std::move(ne));
  }
  {
    MarkedSplitting::Edg he;
    he.o = iA;
    he.t = iB;
    r.edg.push_back(std::move(he));
  }
  const int hatE = (int)t.edg.size();

  // pass through the blown vertex: expand a vertex word into halves
  // alternating across the new edge, entering and leaving on given sides
  auto expand = [&](const Word& seg, int sIn, int sOut, PiWord& out) {
    auto x = R.express(seg);
    if (!x) throw PreconditionError("blowup: vertex element escaped its group");
    Word img = *x;
    for (const auto& mvv : JS->moves) img = apply_move(R.inner, mvv, img);
    int cur = sIn;
    size_t i = 0;
    while (i < img.syl.size()) {
      int bs = side_of(img.syl[i]);
      size_t j = i;
      while (j < img.syl.size() && side_of(img.syl[j]) == bs) ++j;
      if (bs != cur) {
        out.push_back(make_cross(hatE, cur == 0 ? 1 : -1));
        cur = bs;
      }
      Word block;
      block.syl.assign(img.syl.begin() + i, img.syl.begin() + j);
      out.push_back(make_pass(bs ? iB : iA, down(block)));
      i = j;
    }
    if (cur != sOut) out.push_back(make_cross(hatE, cur == 0 ? 1 : -1));
  };

  auto walk = [&](const PiWord& p, bool endsAtV, int closeSide, const Word& closeDelta) {
    PiWord out;
    bool open = t.basev == v;
    int curSide = 0;
    Word curDelta, acc;
    auto close = [&](int depSide, const Word& depDelta) {
      Word seg = mul(sig, mul(sig, inv(sig, curDelta), acc), depDelta);
      expand(seg, curSide, depSide, out);
      acc = Word{};
      open = false;
    };
    for (const auto& it : p) {
      if (!it.crossing) {
        if (it.vertex == v) {
          acc = mul(sig, acc, it.a);
        } else {
          out.push_back(make_pass(newIdx(it.vertex), it.a));
        }
        continue;
      }
      const auto& e = t.edg[it.edge];
      int rear = it.dir > 0 ? e.o : e.t;
      int front = it.dir > 0 ? e.t : e.o;
      int rearEnd = it.dir > 0 ? 0 : 1;
      int frontEnd = it.dir > 0 ? 1 : 0;
      if (rear == v) {
        EndData d = end_data(it.edge, rearEnd);
        close(d.side, d.delta);
      }
      out.push_back(make_cross(it.edge, it.dir));
      if (front == v) {
        EndData d = end_data(it.edge, frontEnd);
        open = true;
        curSide = d.side;
        curDelta = d.delta;
        acc = Word{};
      }
    }
    if (open) {
      if (endsAtV)
        close(closeSide, closeDelta);
      else
        close(0, Word{});
    }
    return normalize_pi(r, std::move(out));
  };

  for (const auto& L : t.genLoops) r.genLoops.push_back(walk(L, false, 0, Word{}));
  for (int i = 0; i < (int)t.marks.size(); ++i) {
    const auto& mk = t.marks[i];
    MarkedSplitting::PerMark nm;
    if (mk.vertex == v) {
      Word rep = sig.factors[i].kind == FactorKind::Finite
                     ? word_of(Syllable{SylKind::Per, i,
                                        sig.factors[i].identity == 0 ? 1 : 0})
                     : word_of(Syllable{SylKind::Per, i, 1});
      Word in = mul(sig, mul(sig, inv(sig, mk.pw), rep), mk.pw);
      auto x = R.express(in);
      if (!x) return std::nullopt;
      Word img = *x;
      for (const auto& mvv : JS->moves) img = apply_move(R.inner, mvv, img);
      auto cyc = cyclic_reduce(R.inner, img);
      if (cyc.core.empty()) return std::nullopt;
      int sideM = side_of(cyc.core.syl[0]);
      Word deltaM = down(cyc.conj);
      nm.vertex = sideM ? iB : iA;
      nm.pw = mul(sig, mk.pw, deltaM);
      nm.path = walk(mk.path, true, sideM, deltaM);
    } else {
      nm.vertex = newIdx(mk.vertex);
      nm.pw = mk.pw;
      nm.path = walk(mk.path, false, 0, Word{});
    }
    r.marks.push_back(std::move(nm));
  }
  // reattachment letters need not be trivial on tree edges yet; reframe fixes
  // that and the markings follow the new vertex frames
  std::vector<Word> nu = reframe(r);
  auto patch_pi = [&](PiWord& p) {
    for (auto& it : p)
      if (!it.crossing && !nu[it.vertex].empty())
        it.a = conj(sig, inv(sig, nu[it.vertex]), it.a);
  };
  for (auto& L : r.genLoops) patch_pi(L);
  for (auto& m : r.marks) {
    patch_pi(m.path);
    m.pw = mul(sig, m.pw, nu[m.vertex]);
  }
  finalize_splitting(r);
  if (!r.markingOk) return std::nullopt;
  if (validate(r).kind == SplittingKind::Invalid) return std::nullopt;

  std::set<int> oldEdges;
  for (int ei = 0; ei < hatE; ++ei) oldEdges.insert(ei);
  MarkedSplitting F;
  try {
    F = collapse(r, oldEdges);
  } catch (const PreconditionError&) {
    return std::nullopt;
  }
  auto fk = validate(F).kind;
  if (fk != SplittingKind::FreeSplitting && fk != SplittingKind::Grushko) return std::nullopt;
  if (translation_length(F, a) != 0) return std::nullopt;
  return CompatibleSplit{std::move(F), std::move(r)};
}

}  // namespace detail

/* Free splitting compatible with the given cyclic splitting in which the
 * word stays elliptic. The refinement collapses onto both sides, so the two
 * splittings embed in a common one. Simplicity failures report the reduced
 * witness; hyperbolic words are refused. */
inline CompatibleSplit compatible_free_splitting(const MarkedSplitting& t, const Word& a) {
  const Signature& sig = t.sig;
  if (a.empty() || !nonperipheral(sig, a))
    throw PreconditionError("compatible splitting: word is peripheral or trivial");
  auto cls = validate(t);
  if (cls.kind == SplittingKind::Invalid)
    throw PreconditionError("compatible splitting: invalid input: " + cls.reason);
  auto sv = is_simple(a, sig);
  if (!sv.simple)
    throw PreconditionError(
        "compatible splitting: word is not simple; reduced form " +
        format_word(sig, sv.reducedWord) +
        " keeps every letter graph connected without cut vertices");
  if (translation_length(t, a) != 0)
    throw PreconditionError("compatible splitting: word is hyperbolic in the splitting");

  std::set<int> cyc;
  for (int ei = 0; ei < (int)t.edg.size(); ++ei)
    if (t.edg[ei].rel.has_value()) cyc.insert(ei);
  if (cyc.empty()) return {t, t};
  if (cyc.size() < t.edg.size()) {
    MarkedSplitting F0 = collapse(t, cyc);
    auto k0 = validate(F0).kind;
    if ((k0 == SplittingKind::FreeSplitting || k0 == SplittingKind::Grushko) &&
        translation_length(F0, a) == 0)
      return {F0, t};
  }
  auto wit = detail::elliptic_witness(t, a);
  if (!wit)
    throw PreconditionError("compatible splitting: word is hyperbolic in the splitting");
  std::vector<int> order{wit->first};
  for (int v = 0; v < t.nv; ++v)
    if (v != wit->first) order.push_back(v);
  for (int v : order) {
    std::optional<Word> u;
    if (v == wit->first) u = wit->second;
    if (auto res = detail::blow_up_vertex(t, v, u, a)) return *res;
  }
  throw BoundExhausted("compatible splitting: no elliptic-preserving blowup found");
}

}  // namespace gforge
