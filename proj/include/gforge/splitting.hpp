#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gforge/core_graph.hpp"

namespace gforge {

/* A marked splitting is a realized graph of groups: vertex groups are actual
 * subgroups of the ambient free product (folded graphs), edge groups are
 * trivial or cyclic with realized generator words, and every non-tree edge
 * carries a stable letter as an ambient element. Spanning-tree edges have
 * identity stable letters, so evaluating a loop in the graph of groups is
 * plain multiplication in the ambient group. */

// one item of a path in the graph of groups
struct PiItem {
  bool crossing = false;
  // crossing: edge index and direction (+1 origin->target)
  int edge = -1;
  int dir = 0;
  // vertex element: vertex index and a word lying in that vertex group
  int vertex = -1;
  Word a;
};

using PiWord = std::vector<PiItem>;

struct MarkedSplitting {
  Signature sig;
  int nv = 0;
  int basev = 0;

  struct Vtx {
    CoreGraph group;
    std::vector<Word> gens;  // cached subgroup generators
  };
  struct Edg {
    int o = 0, t = 0;
    std::optional<Word> rel;   // edge group generator, realized inside the o-side group
    Word relT;                 // tau^-1 rel tau, realized inside the t-side group
    Word tau;                  // stable letter; identity on spanning-tree edges
    bool tree = false;
  };
  std::vector<Vtx> vtx;
  std::vector<Edg> edg;

  // marking: loop expression per free generator, mark per peripheral factor
  std::vector<PiWord> genLoops;
  struct PerMark {
    int vertex = -1;
    PiWord path;  // base -> vertex
    Word pw;      // evaluation of path; pw^-1 G_i pw lies in the vertex group
  };
  std::vector<PerMark> marks;

  bool markingOk = false;
  std::string markingIssue;
};

enum class SplittingKind { Grushko, FreeSplitting, ZSplitting, Invalid };

struct SplittingClass {
  SplittingKind kind = SplittingKind::Invalid;
  std::string reason;  // first violated invariant when Invalid
};

// ---- pi-word plumbing -------------------------------------------------------

inline Word eval_pi(const MarkedSplitting& s, const PiWord& p) {
  Word w;
  for (const auto& it : p) {
    if (it.crossing) {
      const Word& t = s.edg[it.edge].tau;
      w = mul(s.sig, w, it.dir > 0 ? t : inv(s.sig, t));
    } else {
      w = mul(s.sig, w, it.a);
    }
  }
  return w;
}

inline PiWord inv_pi(const MarkedSplitting& s, const PiWord& p) {
  PiWord r;
  for (auto it = p.rbegin(); it != p.rend(); ++it) {
    PiItem j = *it;
    if (j.crossing)
      j.dir = -j.dir;
    else
      j.a = inv(s.sig, j.a);
    r.push_back(std::move(j));
  }
  return r;
}

/* Merge adjacent vertex elements and drop identities. */
inline PiWord normalize_pi(const MarkedSplitting& s, PiWord p) {
  PiWord out;
  for (auto& it : p) {
    if (!it.crossing) {
      if (!out.empty() && !out.back().crossing) {
        out.back().a = mul(s.sig, out.back().a, it.a);
        if (out.back().a.empty()) out.pop_back();
        continue;
      }
      if (it.a.empty()) continue;
    }
    out.push_back(std::move(it));
  }
  return out;
}

namespace detail {

/* Where a pi-word item sequence sits: vertex after consuming a prefix. */
inline int pi_vertex_after(const MarkedSplitting& s, const PiWord& p, size_t upto) {
  int v = s.basev;
  for (size_t i = 0; i < upto && i < p.size(); ++i)
    if (p[i].crossing) v = p[i].dir > 0 ? s.edg[p[i].edge].t : s.edg[p[i].edge].o;
  return v;
}

/* Try one Britton pinch on a normalized pi-word; true if something changed.
 * Pattern: crossing e, optional vertex element a, crossing e reversed, with a
 * a power of the edge word on the far side. */
inline bool britton_pinch(const MarkedSplitting& s, PiWord& p) {
  for (size_t i = 0; i < p.size(); ++i) {
    if (!p[i].crossing) continue;
    size_t j = i + 1;
    Word a;
    if (j < p.size() && !p[j].crossing) { a = p[j].a; ++j; }
    if (j >= p.size() || !p[j].crossing) continue;
    if (p[j].edge != p[i].edge || p[j].dir != -p[i].dir) continue;
    const auto& e = s.edg[p[i].edge];
    Word repl;
    if (p[i].dir > 0) {
      // sits at t(e): a must be a power of relT
      if (!e.rel.has_value()) {
        if (!a.empty()) continue;
      } else {
        auto k = power_in_cyclic(s.sig, e.relT, a);
        if (!k) continue;
        repl = pow(s.sig, *e.rel, *k);
      }
    } else {
      if (!e.rel.has_value()) {
        if (!a.empty()) continue;
      } else {
        auto k = power_in_cyclic(s.sig, *e.rel, a);
        if (!k) continue;
        repl = pow(s.sig, e.relT, *k);
      }
    }
    PiWord out(p.begin(), p.begin() + i);
    if (!repl.empty()) {
      PiItem v;
      v.crossing = false;
      v.vertex = p[i].dir > 0 ? e.o : e.t;
      v.a = repl;
      out.push_back(std::move(v));
    }
    out.insert(out.end(), p.begin() + j + 1, p.end());
    p = normalize_pi(s, std::move(out));
    return true;
  }
  return false;
}

inline int crossing_count(const PiWord& p) {
  int n = 0;
  for (auto& it : p) n += it.crossing ? 1 : 0;
  return n;
}

/* Cyclic reduction of a base loop: rotate and pinch until stable. Keeps only
 * crossing count and ellipticity data honest; the rotation conjugates. */
inline PiWord britton_cyclic(const MarkedSplitting& s, PiWord p) {
  p = normalize_pi(s, std::move(p));
  while (britton_pinch(s, p)) {}
  while (crossing_count(p) > 0) {
    // rotate: move everything up to and including the first crossing to the end
    size_t cut = 0;
    while (cut < p.size() && !p[cut].crossing) ++cut;
    PiWord rot(p.begin() + cut + 1, p.end());
    rot.insert(rot.end(), p.begin(), p.begin() + cut + 1);
    rot = normalize_pi(s, std::move(rot));
    bool any = false;
    while (britton_pinch(s, rot)) any = true;
    if (!any) {
      // try every rotation point once before giving up
      bool found = false;
      PiWord cur = p;
      int n = crossing_count(p);
      for (int r = 0; r < n && !found; ++r) {
        size_t c2 = 0;
        while (c2 < cur.size() && !cur[c2].crossing) ++c2;
        PiWord nxt(cur.begin() + c2 + 1, cur.end());
        nxt.insert(nxt.end(), cur.begin(), cur.begin() + c2 + 1);
        nxt = normalize_pi(s, std::move(nxt));
        PiWord probe = nxt;
        if (britton_pinch(s, probe)) {
          while (britton_pinch(s, probe)) {}
          cur = std::move(probe);
          found = true;
        } else {
          cur = std::move(nxt);
        }
      }
      if (!found) return cur;
      p = std::move(cur);
    } else {
      p = std::move(rot);
    }
  }
  return p;
}

}  // namespace detail

/* Expand an ambient word into a base loop via the marking. */
inline PiWord piword_of_word(const MarkedSplitting& s, const Word& w) {
  PiWord out;
  for (const auto& syl : w.syl) {
    if (syl.k == SylKind::Free) {
      const PiWord& L = s.genLoops[syl.idx];
      PiWord Li = inv_pi(s, L);
      long long n = syl.v > 0 ? syl.v : -syl.v;
      for (long long i = 0; i < n; ++i) {
        const PiWord& use = syl.v > 0 ? L : Li;
        out.insert(out.end(), use.begin(), use.end());
      }
    } else {
      const auto& m = s.marks[syl.idx];
      Word g = word_of(syl);
      PiItem v;
      v.crossing = false;
      v.vertex = m.vertex;
      v.a = mul(s.sig, mul(s.sig, inv(s.sig, m.pw), g), m.pw);
      out.insert(out.end(), m.path.begin(), m.path.end());
      out.push_back(std::move(v));
      PiWord back = inv_pi(s, m.path);
      out.insert(out.end(), back.begin(), back.end());
    }
  }
  return normalize_pi(s, std::move(out));
}

inline long long translation_length(const MarkedSplitting& s, const Word& w) {
  if (w.empty()) return 0;
  PiWord p = piword_of_word(s, w);
  p = detail::britton_cyclic(s, std::move(p));
  return detail::crossing_count(p);
}

/* Vertex fixed by an elliptic element (quotient vertex index), if any. */
inline std::optional<int> elliptic_vertex(const MarkedSplitting& s, const Word& w) {
  if (w.empty()) return s.basev;
  PiWord p = piword_of_word(s, w);
  p = detail::britton_cyclic(s, std::move(p));
  if (detail::crossing_count(p) > 0) return std::nullopt;
  if (p.empty()) return s.basev;
  return p.front().vertex;
}

inline bool is_elliptic(const MarkedSplitting& s, const Word& w) {
  return translation_length(s, w) == 0;
}

/* A finitely generated subgroup is elliptic iff every generator and every
 * pairwise product is elliptic. */
inline bool is_elliptic_subgroup(const MarkedSplitting& s, const CoreGraph& h) {
  auto gens = subgroup_generators(s.sig, h);
  for (auto& g : gens)
    if (!is_elliptic(s, g)) return false;
  for (size_t i = 0; i < gens.size(); ++i)
    for (size_t j = i + 1; j < gens.size(); ++j)
      if (!is_elliptic(s, mul(s.sig, gens[i], gens[j]))) return false;
  return true;
}

// ---- construction -----------------------------------------------------------

namespace detail {

/* Choose a BFS spanning tree (deterministic by edge index); only edges with
 * identity stable letters qualify as tree edges. Empty result string on
 * success. */
inline std::string mark_tree(MarkedSplitting& s) {
  std::vector<int> seen(s.nv, 0);
  seen[s.basev] = 1;
  for (auto& e : s.edg) e.tree = false;
  bool grew = true;
  while (grew) {
    grew = false;
    for (auto& e : s.edg) {
      if (!e.tau.empty()) continue;
      if (seen[e.o] && !seen[e.t]) { e.tree = true; seen[e.t] = 1; grew = true; }
      else if (seen[e.t] && !seen[e.o]) { e.tree = true; seen[e.o] = 1; grew = true; }
    }
  }
  for (int v = 0; v < s.nv; ++v)
    if (!seen[v]) return "marking: no spanning tree with identity stable letters";
  return "";
}

/* Tree path between vertices as crossings with no decoration. */
inline PiWord tree_path(const MarkedSplitting& s, int from, int to) {
  // BFS over tree edges
  std::vector<int> prevEdge(s.nv, -1), prevDir(s.nv, 0), prevV(s.nv, -1);
  std::vector<int> seen(s.nv, 0);
  std::vector<int> q{from};
  seen[from] = 1;
  for (size_t qi = 0; qi < q.size() && !seen[to]; ++qi) {
    int u = q[qi];
    for (int ei = 0; ei < (int)s.edg.size(); ++ei) {
      const auto& e = s.edg[ei];
      if (!e.tree) continue;
      if (e.o == u && !seen[e.t]) {
        seen[e.t] = 1; prevEdge[e.t] = ei; prevDir[e.t] = 1; prevV[e.t] = u;
        q.push_back(e.t);
      } else if (e.t == u && !seen[e.o]) {
        seen[e.o] = 1; prevEdge[e.o] = ei; prevDir[e.o] = -1; prevV[e.o] = u;
        q.push_back(e.o);
      }
    }
  }
  PiWord path;
  int cur = to;
  while (cur != from) {
    PiItem it;
    it.crossing = true;
    it.edge = prevEdge[cur];
    it.dir = prevDir[cur];
    path.push_back(it);
    cur = prevV[cur];
  }
  std::reverse(path.begin(), path.end());
  return path;
}

/* Recover a loop expression for an ambient element by peeling realized
 * generators (vertex subgroup generators and stable letters). Verified by
 * evaluation; returns nothing if the peel stalls within the bound. */
inline std::optional<PiWord> express_loop(const MarkedSplitting& s, const Word& target) {
  struct Cand {
    Word w;
    PiWord pi;
  };
  std::vector<Cand> cands;
  for (int v = 0; v < s.nv; ++v) {
    PiWord pre = tree_path(s, s.basev, v);
    PiWord post = inv_pi(s, pre);
    for (auto& g : s.vtx[v].gens) {
      PiWord pi = pre;
      PiItem it;
      it.crossing = false;
      it.vertex = v;
      it.a = g;
      pi.push_back(it);
      pi.insert(pi.end(), post.begin(), post.end());
      cands.push_back({g, pi});
    }
  }
  for (int ei = 0; ei < (int)s.edg.size(); ++ei) {
    const auto& e = s.edg[ei];
    if (e.tree) continue;
    PiWord pi = tree_path(s, s.basev, e.o);
    PiItem it;
    it.crossing = true;
    it.edge = ei;
    it.dir = 1;
    pi.push_back(it);
    PiWord back = tree_path(s, e.t, s.basev);
    pi.insert(pi.end(), back.begin(), back.end());
    cands.push_back({e.tau, pi});
  }
  // add inverses
  size_t n0 = cands.size();
  for (size_t i = 0; i < n0; ++i)
    cands.push_back({inv(s.sig, cands[i].w), inv_pi(s, cands[i].pi)});

  Word cur = target;
  PiWord expr;
  auto take = [&](int i) {
    expr.insert(expr.end(), cands[i].pi.begin(), cands[i].pi.end());
    cur = mul(s.sig, inv(s.sig, cands[i].w), cur);
  };
  int guard = 0;
  while (!cur.empty()) {
    if (++guard > 400) return std::nullopt;
    long long curLen = word_length(s.sig, cur);
    int bestI = -1;
    long long best = curLen;
    for (size_t i = 0; i < cands.size(); ++i) {
      if (cands[i].w.empty()) continue;
      long long len = word_length(s.sig, mul(s.sig, inv(s.sig, cands[i].w), cur));
      if (len < best) { best = len; bestI = (int)i; }
    }
    if (bestI >= 0) { take(bestI); continue; }
    // greedy stalled: short BFS through longer words to any strictly shorter one
    struct Node {
      Word w;
      std::vector<int> toks;
    };
    std::vector<Node> frontier{{cur, {}}};
    std::set<std::string> seen{format_word(s.sig, cur)};
    std::vector<int> winner;
    for (int depth = 0; depth < 4 && winner.empty(); ++depth) {
      std::vector<Node> next;
      for (auto& nd : frontier) {
        for (size_t i = 0; i < cands.size(); ++i) {
          if (cands[i].w.empty()) continue;
          Word w2 = mul(s.sig, inv(s.sig, cands[i].w), nd.w);
          long long len = word_length(s.sig, w2);
          if (len > curLen + 6) continue;
          if (!seen.insert(format_word(s.sig, w2)).second) continue;
          Node n2{std::move(w2), nd.toks};
          n2.toks.push_back((int)i);
          if (len < curLen) {
            winner = n2.toks;
            break;
          }
          if (next.size() < 20000) next.push_back(std::move(n2));
        }
        if (!winner.empty()) break;
      }
      frontier = std::move(next);
    }
    if (winner.empty()) return std::nullopt;
    for (int i : winner) take(i);
  }
  PiWord out = normalize_pi(s, std::move(expr));
  if (!(eval_pi(s, out) == target)) return std::nullopt;
  return out;
}

}  // namespace detail

/* Fill caches, find a spanning tree, recover any missing marking data, and
 * record marking health. Structural garbage throws; semantic problems are
 * left for validate(). */
inline void finalize_splitting(MarkedSplitting& s) {
  if (s.nv <= 0) throw PreconditionError("splitting needs at least one vertex");
  for (auto& e : s.edg)
    if (e.o < 0 || e.o >= s.nv || e.t < 0 || e.t >= s.nv)
      throw PreconditionError("edge endpoint out of range");
  // a single vertex carrying the whole group is the trivial splitting; allow it
  if (s.edg.empty() && s.nv > 1) throw PreconditionError("disconnected splitting: no edges");
  for (auto& v : s.vtx) v.gens = subgroup_generators(s.sig, v.group);
  for (auto& e : s.edg) {
    if (e.rel.has_value() && e.relT.empty())
      e.relT = mul(s.sig, mul(s.sig, inv(s.sig, e.tau), *e.rel), e.tau);
    if (!e.rel.has_value()) e.relT = Word{};
  }
  s.markingIssue = detail::mark_tree(s);
  s.markingOk = s.markingIssue.empty();
  if (!s.markingOk) return;
  // free generator loops
  if ((int)s.genLoops.size() != s.sig.free_rank()) {
    s.genLoops.assign(s.sig.free_rank(), PiWord{});
    for (int i = 0; i < s.sig.free_rank() && s.markingOk; ++i) {
      auto e = detail::express_loop(s, word_of(Syllable{SylKind::Free, i, 1}));
      if (!e) {
        s.markingOk = false;
        s.markingIssue = "marking: no loop expression for generator " + s.sig.freeGens[i];
      } else {
        s.genLoops[i] = *e;
      }
    }
  } else {
    for (int i = 0; i < s.sig.free_rank() && s.markingOk; ++i) {
      if (!(eval_pi(s, s.genLoops[i]) == word_of(Syllable{SylKind::Free, i, 1}))) {
        s.markingOk = false;
        s.markingIssue = "marking: loop for " + s.sig.freeGens[i] + " evaluates wrong";
      }
    }
  }
  // peripheral marks
  if ((int)s.marks.size() != s.sig.num_factors()) {
    s.marks.assign(s.sig.num_factors(), MarkedSplitting::PerMark{});
    for (int i = 0; i < s.sig.num_factors() && s.markingOk; ++i) {
      bool found = false;
      for (int v = 0; v < s.nv && !found; ++v) {
        auto K = kurosh_decompose(s.sig, s.vtx[v].group);
        for (auto& part : K.parts) {
          if (part.factor != i) continue;
          bool full = s.sig.factors[i].kind == FactorKind::Finite
                          ? (int)part.elems.size() == s.sig.factors[i].order
                          : part.modulus == 1;
          if (!full) continue;
          // need pw with pw^-1 G_i pw inside the group: pw = conj^-1
          Word pw = inv(s.sig, part.conj);
          auto path = detail::express_loop(s, pw);
          if (!path) continue;
          MarkedSplitting::PerMark m;
          m.vertex = v;
          m.pw = pw;
          // loop expression evaluating to pw, then walk down to the vertex
          PiWord p = *path;
          PiWord down = detail::tree_path(s, s.basev, v);
          p.insert(p.end(), down.begin(), down.end());
          m.path = normalize_pi(s, std::move(p));
          s.marks[i] = std::move(m);
          found = true;
          break;
        }
      }
      if (!found) {
        s.markingOk = false;
        s.markingIssue = "marking: factor " + s.sig.factors[i].name + " has no elliptic mark";
      }
    }
  } else {
    for (int i = 0; i < s.sig.num_factors() && s.markingOk; ++i) {
      auto& m = s.marks[i];
      if (m.vertex < 0 || m.vertex >= s.nv || !(eval_pi(s, m.path) == m.pw)) {
        s.markingOk = false;
        s.markingIssue = "marking: bad mark for factor " + s.sig.factors[i].name;
        break;
      }
      std::vector<Word> reps;
      if (s.sig.factors[i].kind == FactorKind::Finite) {
        for (int e = 0; e < s.sig.factors[i].order; ++e)
          if (e != s.sig.factors[i].identity) reps.push_back(word_of(Syllable{SylKind::Per, i, e}));
      } else {
        reps.push_back(word_of(Syllable{SylKind::Per, i, 1}));
      }
      for (auto& g : reps) {
        Word in = mul(s.sig, mul(s.sig, inv(s.sig, m.pw), g), m.pw);
        if (!contains(s.sig, s.vtx[m.vertex].group, in)) {
          s.markingOk = false;
          s.markingIssue =
              "marking: factor " + s.sig.factors[i].name + " not elliptic at its mark";
          break;
        }
      }
    }
  }
}

/* Standard Grushko rose: one central trivial vertex, a spoke to each
 * peripheral factor vertex, a loop per free generator. */
inline MarkedSplitting standard_rose(const Signature& sig) {
  MarkedSplitting s;
  s.sig = sig;
  s.nv = 1 + sig.num_factors();
  s.basev = 0;
  s.vtx.resize(s.nv);
  s.vtx[0].group = core_graph_from_generators(sig, {});
  for (int i = 0; i < sig.num_factors(); ++i) {
    std::vector<Word> gens;
    if (sig.factors[i].kind == FactorKind::Finite) {
      for (int e = 0; e < sig.factors[i].order; ++e)
        if (e != sig.factors[i].identity) gens.push_back(word_of(Syllable{SylKind::Per, i, e}));
    } else {
      gens.push_back(word_of(Syllable{SylKind::Per, i, 1}));
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
    e.tau = word_of(Syllable{SylKind::Free, j, 1});
    s.edg.push_back(std::move(e));
  }
  if (s.edg.empty()) throw PreconditionError("empty signature has no rose");
  finalize_splitting(s);
  return s;
}

// ---- validation ---------------------------------------------------------------

namespace detail {

inline double euler_char_of_group(const Signature& sig, const CoreGraph& g) {
  auto K = kurosh_decompose(sig, g);
  double chi = 0;
  int pieces = 0;
  for (auto& p : K.parts) {
    if (p.modulus > 0)
      chi += 0.0;
    else
      chi += 1.0 / (double)sig.factors[p.factor].order;
    pieces++;
  }
  chi += 1.0 - (double)K.freeRank;
  chi -= (double)pieces;  // m parts joined to the free piece
  return chi;
}

inline double euler_char_ambient(const Signature& sig) {
  double chi = 0;
  for (auto& f : sig.factors) chi += f.kind == FactorKind::Finite ? 1.0 / (double)f.order : 0.0;
  return chi - (double)sig.num_factors() + 1.0 - (double)sig.free_rank();
}

}  // namespace detail

inline SplittingClass validate(const MarkedSplitting& s) {
  auto bad = [](const std::string& r) { return SplittingClass{SplittingKind::Invalid, r}; };
  if (!s.markingOk) return bad(s.markingIssue.empty() ? "marking" : s.markingIssue);

  // realization relations
  for (size_t ei = 0; ei < s.edg.size(); ++ei) {
    const auto& e = s.edg[ei];
    if (e.tree && !e.tau.empty()) return bad("tree edge with nontrivial stable letter");
    if (e.rel.has_value()) {
      if (e.rel->empty()) return bad("empty cyclic edge word");
      if (!contains(s.sig, s.vtx[e.o].group, *e.rel))
        return bad("edge word not in origin vertex group");
      Word rt = mul(s.sig, mul(s.sig, inv(s.sig, e.tau), *e.rel), e.tau);
      if (!contains(s.sig, s.vtx[e.t].group, rt))
        return bad("conjugated edge word not in target vertex group");
    }
  }

  // marking loops must evaluate correctly (rechecked: cheap)
  for (int i = 0; i < s.sig.free_rank(); ++i)
    if (!(eval_pi(s, s.genLoops[i]) == word_of(Syllable{SylKind::Free, i, 1})))
      return bad("marking: loop evaluation mismatch");

  // surjectivity of the evaluation map
  {
    std::vector<Word> allgens;
    for (auto& v : s.vtx)
      for (auto& g : v.gens) allgens.push_back(g);
    for (auto& e : s.edg)
      if (!e.tau.empty()) allgens.push_back(e.tau);
    auto whole = core_graph_from_generators(s.sig, allgens);
    if (!whole_group(s.sig, whole)) return bad("marking: evaluation not surjective");
  }

  // peripheral accounting: each factor elliptic exactly once across vertices
  for (int i = 0; i < s.sig.num_factors(); ++i) {
    int count = 0;
    for (auto& v : s.vtx) {
      auto K = kurosh_decompose(s.sig, v.group);
      for (auto& p : K.parts) {
        if (p.factor != i) continue;
        bool full = s.sig.factors[i].kind == FactorKind::Finite
                        ? (int)p.elems.size() == s.sig.factors[i].order
                        : p.modulus == 1;
        if (!full) return bad("vertex group meets a peripheral factor in a proper subgroup");
        count++;
      }
    }
    if (count != 1) return bad("peripheral factor not elliptic exactly once");
  }

  // Euler characteristic balance
  {
    double lhs = 0;
    for (auto& v : s.vtx) lhs += detail::euler_char_of_group(s.sig, v.group);
    for (auto& e : s.edg) lhs -= e.rel.has_value() ? 0.0 : 1.0;
    double rhs = detail::euler_char_ambient(s.sig);
    if (std::abs(lhs - rhs) > 1e-9) return bad("Euler characteristic imbalance");
  }

  // minimality: no valence-1 vertex carried by its edge group
  {
    std::vector<int> val(s.nv, 0);
    std::vector<int> incident(s.nv, -1);
    for (int ei = 0; ei < (int)s.edg.size(); ++ei) {
      val[s.edg[ei].o]++;
      val[s.edg[ei].t]++;
      incident[s.edg[ei].o] = ei;
      incident[s.edg[ei].t] = ei;
    }
    for (int v = 0; v < s.nv; ++v) {
      if (val[v] != 1) continue;
      const auto& e = s.edg[incident[v]];
      const auto& gens = s.vtx[v].gens;
      if (!e.rel.has_value()) {
        if (gens.empty()) return bad("valence-1 vertex with trivial group");
      } else {
        Word side = v == e.o ? *e.rel : e.relT;
        bool inside = true;
        for (auto& g : gens)
          if (!power_in_cyclic(s.sig, side, g)) { inside = false; break; }
        if (inside) return bad("valence-1 vertex equal to its edge group");
      }
    }
    for (int v = 0; v < s.nv; ++v)
      if (val[v] == 0 && s.nv > 1) return bad("isolated vertex");
  }

  // classify
  bool allTrivial = true, zOk = true;
  for (auto& e : s.edg) {
    if (e.rel.has_value()) {
      allTrivial = false;
      if (!nonperipheral(s.sig, *e.rel)) zOk = false;
    }
  }
  if (!zOk) return bad("cyclic edge group is peripheral");
  if (!allTrivial) return SplittingClass{SplittingKind::ZSplitting, ""};
  bool grushko = true;
  for (auto& v : s.vtx) {
    if (v.gens.empty()) continue;  // trivial
    auto K = kurosh_decompose(s.sig, v.group);
    bool peripheralVertex = K.freeRank == 0 && K.parts.size() == 1;
    if (peripheralVertex) {
      auto& p = K.parts[0];
      bool full = s.sig.factors[p.factor].kind == FactorKind::Finite
                      ? (int)p.elems.size() == s.sig.factors[p.factor].order
                      : p.modulus == 1;
      peripheralVertex = full;
    }
    if (!peripheralVertex) { grushko = false; break; }
  }
  return SplittingClass{grushko ? SplittingKind::Grushko : SplittingKind::FreeSplitting, ""};
}

// ---- collapse -----------------------------------------------------------------

/* Collapse a set of edges; merged vertex groups are generated by the old
 * component groups together with the collapsed stable letters. */
inline MarkedSplitting collapse(const MarkedSplitting& s, const std::set<int>& edges) {
  for (int e : edges)
    if (e < 0 || e >= (int)s.edg.size()) throw PreconditionError("collapse: bad edge index");
  if (edges.size() == s.edg.size())
    throw PreconditionError("collapse: would remove every edge");

  // components under collapsed edges
  std::vector<int> comp(s.nv, -1);
  {
    std::vector<std::vector<int>> adj(s.nv);
    for (int ei : edges) {
      adj[s.edg[ei].o].push_back(s.edg[ei].t);
      adj[s.edg[ei].t].push_back(s.edg[ei].o);
    }
    int nc = 0;
    for (int v = 0; v < s.nv; ++v) {
      if (comp[v] >= 0) continue;
      std::vector<int> st{v};
      comp[v] = nc;
      while (!st.empty()) {
        int u = st.back();
        st.pop_back();
        for (int w2 : adj[u])
          if (comp[w2] < 0) { comp[w2] = nc; st.push_back(w2); }
      }
      nc++;
    }
    MarkedSplitting r;
    r.sig = s.sig;
    r.nv = nc;
    r.basev = comp[s.basev];
    r.vtx.resize(nc);
    for (int c = 0; c < nc; ++c) {
      std::vector<Word> gens;
      for (int v = 0; v < s.nv; ++v)
        if (comp[v] == c)
          for (auto& g : s.vtx[v].gens) gens.push_back(g);
      for (int ei : edges)
        if (comp[s.edg[ei].o] == c && !s.edg[ei].tau.empty()) gens.push_back(s.edg[ei].tau);
      r.vtx[c].group = core_graph_from_generators(s.sig, gens);
    }
    std::vector<int> emap(s.edg.size(), -1);
    for (int ei = 0; ei < (int)s.edg.size(); ++ei) {
      if (edges.count(ei)) continue;
      MarkedSplitting::Edg e;
      e.o = comp[s.edg[ei].o];
      e.t = comp[s.edg[ei].t];
      e.rel = s.edg[ei].rel;
      e.tau = s.edg[ei].tau;
      emap[ei] = (int)r.edg.size();
      r.edg.push_back(std::move(e));
    }
    // transport marking loops structurally
    auto transport = [&](const PiWord& p) {
      PiWord out;
      for (const auto& it : p) {
        PiItem j;
        if (it.crossing) {
          if (edges.count(it.edge)) {
            const Word& t = s.edg[it.edge].tau;
            if (t.empty()) continue;
            j.crossing = false;
            j.vertex = comp[s.edg[it.edge].t];
            j.a = it.dir > 0 ? t : inv(s.sig, t);
          } else {
            j.crossing = true;
            j.edge = emap[it.edge];
            j.dir = it.dir;
          }
        } else {
          j.crossing = false;
          j.vertex = comp[it.vertex];
          j.a = it.a;
        }
        out.push_back(std::move(j));
      }
      return out;  // normalized in finalize path below
    };
    r.genLoops.clear();
    for (auto& L : s.genLoops) r.genLoops.push_back(transport(L));
    r.marks.clear();
    for (auto& m : s.marks) {
      MarkedSplitting::PerMark nm;
      nm.vertex = comp[m.vertex];
      nm.pw = m.pw;
      nm.path = transport(m.path);
      r.marks.push_back(std::move(nm));
    }
    for (auto& L : r.genLoops) L = normalize_pi(r, L);
    for (auto& m : r.marks) m.path = normalize_pi(r, m.path);
    finalize_splitting(r);
    return r;
  }
}

// ---- equivalence ----------------------------------------------------------------

namespace detail {

/* Deterministic battery of test words; agreement of translation lengths on
 * these certifies nothing by itself, but any disagreement separates the
 * splittings for sure. */
inline std::vector<Word> test_words(const Signature& sig) {
  std::vector<Word> ws;
  std::vector<Word> letters;
  for (int i = 0; i < sig.free_rank(); ++i)
    letters.push_back(word_of(Syllable{SylKind::Free, i, 1}));
  for (int i = 0; i < sig.num_factors(); ++i) {
    if (sig.factors[i].kind == FactorKind::Finite) {
      for (int e = 0; e < sig.factors[i].order; ++e)
        if (e != sig.factors[i].identity) letters.push_back(word_of(Syllable{SylKind::Per, i, e}));
    } else {
      letters.push_back(word_of(Syllable{SylKind::Per, i, 1}));
    }
  }
  for (auto& a : letters) ws.push_back(a);
  for (auto& a : letters)
    for (auto& b : letters) {
      Word w = mul(sig, a, b);
      if (!w.empty()) ws.push_back(w);
    }
  for (auto& a : letters)
    for (auto& b : letters) {
      Word w = mul(sig, a, inv(sig, b));
      if (!w.empty()) ws.push_back(w);
      Word v = mul(sig, mul(sig, a, a), b);
      if (!v.empty()) ws.push_back(v);
      Word u = mul(sig, mul(sig, a, b), inv(sig, a));
      if (!u.empty()) ws.push_back(u);
    }
  std::sort(ws.begin(), ws.end());
  ws.erase(std::unique(ws.begin(), ws.end()), ws.end());
  return ws;
}

}  // namespace detail

/* Equivariant-homeomorphism test. Translation lengths separate splittings;
 * agreement on the battery plus a matched graph isomorphism with conjugate
 * vertex/edge data accepts. Negative answers at the bound are plain false. */
inline bool equivalent(const MarkedSplitting& s1, const MarkedSplitting& s2,
                       long long conjBound = 8) {
  if (s1.nv != s2.nv || s1.edg.size() != s2.edg.size()) return false;
  for (auto& w : detail::test_words(s1.sig))
    if (translation_length(s1, w) != translation_length(s2, w)) return false;

  // degree-sequence quick check
  auto degseq = [](const MarkedSplitting& s) {
    std::vector<int> d(s.nv, 0);
    for (auto& e : s.edg) { d[e.o]++; d[e.t]++; }
    std::sort(d.begin(), d.end());
    return d;
  };
  if (degseq(s1) != degseq(s2)) return false;

  // try to match vertices by conjugate groups, edges by incidence
  std::vector<int> perm(s1.nv, -1);
  std::vector<char> used(s2.nv, 0);
  std::vector<std::optional<Word>> conjs(s1.nv);
  auto groupsConj = [&](int v1, int v2) {
    return conjugate_subgroups(s1.sig, s1.vtx[v1].group, s2.vtx[v2].group, conjBound);
  };
  // incidence multiset fingerprints per vertex
  auto edgesAt = [](const MarkedSplitting& s, int v) {
    int n = 0;
    for (auto& e : s.edg) n += (e.o == v) + (e.t == v);
    return n;
  };
  std::function<bool(int)> match = [&](int v1) -> bool {
    if (v1 == s1.nv) {
      // edge structure must match under perm as a multiset
      std::multiset<std::pair<int, int>> E1, E2;
      for (auto& e : s1.edg)
        E1.insert({std::min(perm[e.o], perm[e.t]), std::max(perm[e.o], perm[e.t])});
      for (auto& e : s2.edg) E2.insert({std::min(e.o, e.t), std::max(e.o, e.t)});
      return E1 == E2;
    }
    for (int v2 = 0; v2 < s2.nv; ++v2) {
      if (used[v2] || edgesAt(s1, v1) != edgesAt(s2, v2)) continue;
      auto c = groupsConj(v1, v2);
      if (!c) continue;
      perm[v1] = v2;
      used[v2] = 1;
      conjs[v1] = c;
      if (match(v1 + 1)) return true;
      perm[v1] = -1;
      used[v2] = 0;
    }
    return false;
  };
  return match(0);
}

// ---- refinement -----------------------------------------------------------------

/* r collapses onto s for some edge subset. */
inline bool is_collapse_of(const MarkedSplitting& r, const MarkedSplitting& s,
                           long long conjBound = 8) {
  int m = (int)r.edg.size();
  if (m > 20) throw PreconditionError("refinement graph too large");
  for (int mask = 0; mask < (1 << m); ++mask) {
    std::set<int> D;
    for (int i = 0; i < m; ++i)
      if (mask & (1 << i)) D.insert(i);
    if (D.size() == r.edg.size()) continue;
    MarkedSplitting c;
    try {
      c = collapse(r, D);
    } catch (const PreconditionError&) {
      continue;
    }
    if (c.edg.size() != s.edg.size() || c.nv != s.nv) continue;
    if (equivalent(c, s, conjBound)) return true;
  }
  return false;
}

/* Bounded search over a caller-supplied universe of candidate refinements. */
inline std::optional<MarkedSplitting> common_refinement(
    const MarkedSplitting& s1, const MarkedSplitting& s2,
    const std::vector<MarkedSplitting>& universe, long long volumeBound,
    long long conjBound = 8) {
  if (equivalent(s1, s2, conjBound)) return s1;
  for (const auto& r : universe) {
    if ((long long)r.edg.size() > volumeBound) continue;
    if (is_collapse_of(r, s1, conjBound) && is_collapse_of(r, s2, conjBound)) return r;
  }
  return std::nullopt;
}

// ---- serialization ---------------------------------------------------------------

namespace detail {

inline std::optional<int> literal_peripheral(const Signature& sig, const CoreGraph& g) {
  auto K = kurosh_decompose(sig, g);
  if (K.freeRank != 0 || K.parts.size() != 1) return std::nullopt;
  auto& p = K.parts[0];
  bool full = sig.factors[p.factor].kind == FactorKind::Finite
                  ? (int)p.elems.size() == sig.factors[p.factor].order
                  : p.modulus == 1;
  if (!full || !p.conj.empty()) return std::nullopt;
  return p.factor;
}

inline std::optional<Word> cyclic_shape(const Signature& sig, const CoreGraph& g) {
  auto K = kurosh_decompose(sig, g);
  if (K.parts.empty() && K.freeRank == 1) return K.freePart[0];
  if (K.parts.size() == 1 && K.freeRank == 0) {
    auto& p = K.parts[0];
    if (p.modulus > 0)
      return conj(sig, p.conj, word_of(Syllable{SylKind::Per, p.factor, p.modulus}));
  }
  return std::nullopt;
}

/* Words embedded in single-line descriptors use the middle-dot separator. */
inline std::string compact_word(const Signature& sig, const Word& w) {
  std::string t = format_word(sig, w);
  std::string out;
  for (char c : t) {
    if (c == ' ')
      out += "\xc2\xb7";
    else
      out += c;
  }
  return out;
}

}  // namespace detail

/* Text form. Vertex groups that are neither trivial, a literal factor, nor
 * cyclic are written as generator lists inline with group=gens:<w>&<w>&... */
inline std::string serialize_splitting(const MarkedSplitting& s) {
  std::ostringstream o;
  for (int v = 0; v < s.nv; ++v) {
    o << "vertex " << v << " group=";
    if (s.vtx[v].gens.empty()) {
      o << "trivial";
    } else if (auto p = detail::literal_peripheral(s.sig, s.vtx[v].group)) {
      o << "P" << *p;
    } else if (auto c = detail::cyclic_shape(s.sig, s.vtx[v].group)) {
      o << "cyclic:" << detail::compact_word(s.sig, *c);
    } else {
      o << "gens:";
      for (size_t i = 0; i < s.vtx[v].gens.size(); ++i) {
        if (i) o << "&";
        o << detail::compact_word(s.sig, s.vtx[v].gens[i]);
      }
    }
    o << "\n";
  }
  for (int ei = 0; ei < (int)s.edg.size(); ++ei) {
    const auto& e = s.edg[ei];
    o << "edge " << ei << " " << e.o << " " << e.t << " group=";
    if (e.rel.has_value())
      o << "cyclic:" << detail::compact_word(s.sig, *e.rel);
    else
      o << "trivial";
    o << "\n";
  }
  bool any = false;
  std::ostringstream m;
  m << "marking";
  for (int ei = 0; ei < (int)s.edg.size(); ++ei) {
    if (s.edg[ei].tau.empty()) continue;
    m << " e" << ei << "=" << detail::compact_word(s.sig, s.edg[ei].tau);
    any = true;
  }
  if (any) o << m.str() << "\n";
  return o.str();
}

/* loader resolves core:<name> vertex group references to file contents */
inline MarkedSplitting parse_splitting(
    const Signature& sig, const std::string& text,
    const std::function<std::string(const std::string&)>& loader = nullptr) {
  MarkedSplitting s;
  s.sig = sig;
  std::istringstream in(text);
  std::string line;
  std::map<int, int> vmap;
  struct RawEdge {
    int id, a, b;
    std::optional<Word> rel;
    Word tau;
  };
  std::vector<RawEdge> raw;
  std::vector<std::pair<int, CoreGraph>> verts;
  std::map<int, Word> marking;
  auto parse_group = [&](const std::string& g) -> CoreGraph {
    if (g == "trivial") return core_graph_from_generators(sig, {});
    if (g.size() > 1 && g[0] == 'P') {
      int fi = std::stoi(g.substr(1));
      if (fi < 0 || fi >= sig.num_factors()) throw ParseError("bad factor index: " + g);
      std::vector<Word> gens;
      if (sig.factors[fi].kind == FactorKind::Finite) {
        for (int e = 0; e < sig.factors[fi].order; ++e)
          if (e != sig.factors[fi].identity) gens.push_back(word_of(Syllable{SylKind::Per, fi, e}));
      } else {
        gens.push_back(word_of(Syllable{SylKind::Per, fi, 1}));
      }
      return core_graph_from_generators(sig, gens);
    }
    if (g.rfind("cyclic:", 0) == 0)
      return core_graph_from_generators(sig, {parse_word(sig, g.substr(7))});
    if (g.rfind("core:", 0) == 0) {
      if (!loader) throw ParseError("core file reference without a loader: " + g);
      return parse_core(sig, loader(g.substr(5)));
    }
    if (g.rfind("gens:", 0) == 0) {
      std::vector<Word> gens;
      std::string rest = g.substr(5);
      size_t pos = 0;
      while (pos <= rest.size()) {
        size_t amp = rest.find('&', pos);
        std::string tok = rest.substr(pos, amp == std::string::npos ? std::string::npos : amp - pos);
        if (!tok.empty()) gens.push_back(parse_word(sig, tok));
        if (amp == std::string::npos) break;
        pos = amp + 1;
      }
      return core_graph_from_generators(sig, gens);
    }
    throw ParseError("unknown group descriptor: " + g);
  };
  auto rest_of = [](std::istringstream& ls) {
    std::string r;
    std::getline(ls, r);
    size_t b = r.find_first_not_of(" \t");
    size_t e = r.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : r.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string kw;
    if (!(ls >> kw)) continue;
    if (kw == "vertex") {
      int id;
      if (!(ls >> id)) throw ParseError("bad vertex line: " + line);
      std::string g = rest_of(ls);
      if (g.rfind("group=", 0) != 0) throw ParseError("bad vertex line: " + line);
      verts.push_back({id, parse_group(g.substr(6))});
    } else if (kw == "edge") {
      RawEdge e;
      if (!(ls >> e.id >> e.a >> e.b)) throw ParseError("bad edge line: " + line);
      std::string g = rest_of(ls);
      if (g.rfind("group=", 0) != 0) throw ParseError("bad edge line: " + line);
      std::string gd = g.substr(6);
      if (gd == "trivial")
        e.rel = std::nullopt;
      else if (gd.rfind("cyclic:", 0) == 0)
        e.rel = parse_word(sig, gd.substr(7));
      else
        throw ParseError("unknown edge group: " + gd);
      raw.push_back(std::move(e));
    } else if (kw == "marking") {
      std::string tok;
      while (ls >> tok) {
        auto eq = tok.find('=');
        if (eq == std::string::npos || tok[0] != 'e') throw ParseError("bad marking token: " + tok);
        int ei = std::stoi(tok.substr(1, eq - 1));
        marking[ei] = parse_word(sig, tok.substr(eq + 1));
      }
    } else if (kw[0] == '#') {
      continue;
    } else {
      throw ParseError("unknown line: " + line);
    }
  }
  std::sort(verts.begin(), verts.end(), [](auto& a, auto& b) { return a.first < b.first; });
  for (auto& [id, g] : verts) {
    vmap[id] = (int)s.vtx.size();
    s.vtx.push_back({std::move(g), {}});
  }
  s.nv = (int)s.vtx.size();
  s.basev = 0;
  std::sort(raw.begin(), raw.end(), [](auto& a, auto& b) { return a.id < b.id; });
  for (auto& e : raw) {
    if (!vmap.count(e.a) || !vmap.count(e.b)) throw ParseError("edge references unknown vertex");
    MarkedSplitting::Edg ed;
    ed.o = vmap[e.a];
    ed.t = vmap[e.b];
    ed.rel = e.rel;
    if (marking.count(e.id)) ed.tau = marking[e.id];
    s.edg.push_back(std::move(ed));
  }
  finalize_splitting(s);
  return s;
}

}  // namespace gforge
