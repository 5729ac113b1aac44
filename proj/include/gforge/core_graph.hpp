#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gforge/word.hpp"

namespace gforge {

/* Folded subgroup graph over a free product. Free generators label ordinary
 * directed edges. Peripheral structure lives in "clouds": a cloud is one
 * orbit of a peripheral factor touching the subgroup, stored as a partial
 * coset table (finite factors: element -> vertex; cyclic factors: vertex ->
 * integer offset with a modulus). The stabilizer of a cloud's root coset is
 * the peripheral part the cloud contributes in the Kurosh decomposition. */
struct CoreGraph {
  struct FreeEdge {
    int u, gen, v;  // u * gen = v
    friend bool operator<(const FreeEdge& a, const FreeEdge& b) {
      return std::tuple(a.u, a.gen, a.v) < std::tuple(b.u, b.gen, b.v);
    }
    friend bool operator==(const FreeEdge& a, const FreeEdge& b) {
      return a.u == b.u && a.gen == b.gen && a.v == b.v;
    }
  };
  struct FinCloud {
    int factor;
    std::vector<std::pair<int, int>> pos;  // element -> vertex, sorted by element
    int root() const { return pos.empty() ? -1 : pos.front().second; }
    /* Stabilizer of the root coset (the label set at the identity's vertex,
     * right-translated back to a subgroup if the gauge lacks the identity). */
    std::vector<int> stab(const PeripheralFactor& F) const {
      int r = -1;
      for (auto& [e, v] : pos)
        if (e == F.identity) r = v;
      if (r < 0 && !pos.empty()) {
        int l0 = pos.front().first, v0 = pos.front().second;
        std::vector<int> P;
        for (auto& [e, v] : pos)
          if (v == v0) P.push_back(F.mul(e, F.inv(l0)));
        std::sort(P.begin(), P.end());
        return P;
      }
      std::vector<int> P;
      for (auto& [e, v] : pos)
        if (v == r) P.push_back(e);
      return P;
    }
  };
  struct CycCloud {
    int factor;
    long long modulus = 0;                       // 0: trivial stabilizer
    std::vector<std::pair<int, long long>> off;  // vertex -> offset, sorted by vertex
  };

  int nv = 0;
  int base = 0;
  std::vector<FreeEdge> fe;
  std::vector<FinCloud> fin;
  std::vector<CycCloud> cyc;

  bool trivial() const { return fe.empty() && fin.empty() && cyc.empty(); }
};

namespace detail {

struct CoreBuilder {
  struct PerEdge {
    int u, factor;
    long long g;  // finite: element index; cyclic: exponent
    int v;
  };
  int nv = 0;
  int base = 0;
  std::vector<CoreGraph::FreeEdge> fe;
  std::vector<PerEdge> pe;
  std::vector<int> uf;

  int fresh() {
    uf.push_back(nv);
    return nv++;
  }
  int find(int x) {
    while (uf[x] != x) x = uf[x] = uf[uf[x]];
    return x;
  }
  bool unite(int a, int b) {
    a = find(a), b = find(b);
    if (a == b) return false;
    uf[std::max(a, b)] = std::min(a, b);
    return true;
  }
};

inline void add_word_path(const Signature& sig, CoreBuilder& B, const Word& w) {
  (void)sig;
  if (w.empty()) return;
  int cur = B.base;
  for (size_t i = 0; i < w.size(); ++i) {
    const Syllable& s = w.syl[i];
    bool last = i + 1 == w.size();
    if (s.k == SylKind::Free) {
      long long n = s.v > 0 ? s.v : -s.v;
      for (long long j = 0; j < n; ++j) {
        int nxt = (last && j + 1 == n) ? B.base : B.fresh();
        if (s.v > 0)
          B.fe.push_back({cur, s.idx, nxt});
        else
          B.fe.push_back({nxt, s.idx, cur});
        cur = nxt;
      }
    } else {
      int nxt = last ? B.base : B.fresh();
      B.pe.push_back({cur, s.idx, s.v, nxt});
      cur = nxt;
    }
  }
}

/* One folding pass; returns true if any merge happened. */
inline bool fold_pass(const Signature& sig, CoreBuilder& B) {
  bool merged = false;
  auto F = [&](int x) { return B.find(x); };

  {  // free edge determinism, both directions
    std::map<std::pair<int, int>, int> out, in;
    for (auto& e : B.fe) {
      int u = F(e.u), v = F(e.v);
      auto [it, fresh] = out.try_emplace({u, e.gen}, v);
      if (!fresh && it->second != v) merged |= B.unite(it->second, v);
      auto [jt, fresh2] = in.try_emplace({v, e.gen}, u);
      if (!fresh2 && jt->second != u) merged |= B.unite(jt->second, u);
    }
    if (merged) return true;
  }

  for (int fi = 0; fi < sig.num_factors(); ++fi) {
    // collect this factor's edges and component structure
    std::map<int, std::vector<std::pair<long long, int>>> adj;  // u -> (g, v)
    for (auto& e : B.pe) {
      if (e.factor != fi) continue;
      int u = F(e.u), v = F(e.v);
      adj[u].push_back({e.g, v});
      if (sig.factors[fi].kind == FactorKind::Finite)
        adj[v].push_back({sig.factors[fi].inv((int)e.g), u});
      else
        adj[v].push_back({-e.g, u});
    }
    std::set<int> seen;
    for (auto& [start, _] : adj) {
      if (seen.count(start)) continue;
      std::vector<int> comp;
      {
        std::vector<int> st{start};
        seen.insert(start);
        while (!st.empty()) {
          int u = st.back();
          st.pop_back();
          comp.push_back(u);
          for (auto& [g, v] : adj[u])
            if (!seen.count(v)) { seen.insert(v); st.push_back(v); }
        }
      }
      int root = *std::min_element(comp.begin(), comp.end());
      if (sig.factors[fi].kind == FactorKind::Finite) {
        const auto& T = sig.factors[fi];
        std::vector<int> pos(T.order, -1);
        pos[T.identity] = root;
        bool changed = true;
        while (changed) {
          changed = false;
          for (int x = 0; x < T.order; ++x) {
            if (pos[x] < 0) continue;
            for (auto& [g, v] : adj[pos[x]]) {
              int y = T.mul(x, (int)g);
              if (pos[y] < 0) { pos[y] = v; changed = true; }
              else if (pos[y] != v) { B.unite(pos[y], v); return true; }
            }
          }
          // left closure under the root stabilizer
          std::vector<int> P;
          for (int x = 0; x < T.order; ++x)
            if (pos[x] == root) P.push_back(x);
          for (int p : P)
            for (int x = 0; x < T.order; ++x) {
              if (pos[x] < 0) continue;
              int y = T.mul(p, x);
              if (pos[y] < 0) { pos[y] = pos[x]; changed = true; }
              else if (pos[y] != pos[x]) { B.unite(pos[y], pos[x]); return true; }
            }
        }
      } else {
        std::map<int, long long> off;
        long long d = 0;
        off[root] = 0;
        std::vector<int> st{root};
        while (!st.empty()) {
          int u = st.back();
          st.pop_back();
          for (auto& [g, v] : adj[u]) {
            long long o = off[u] + g;
            auto it = off.find(v);
            if (it == off.end()) { off[v] = o; st.push_back(v); }
            else if (it->second != o) {
              long long D = o - it->second;
              d = std::gcd(d, D < 0 ? -D : D);
            }
          }
        }
        if (d > 0) {
          std::map<long long, int> byres;
          for (auto& [v, o] : off) {
            long long r = ((o % d) + d) % d;
            auto [it, fresh] = byres.try_emplace(r, v);
            if (!fresh && it->second != v) { B.unite(it->second, v); return true; }
          }
        } else {
          std::map<long long, int> byoff;
          for (auto& [v, o] : off) {
            auto [it, fresh] = byoff.try_emplace(o, v);
            if (!fresh && it->second != v) { B.unite(it->second, v); return true; }
          }
        }
      }
    }
  }
  return merged;
}

inline void compact(const Signature& sig, CoreBuilder& B) {
  std::vector<int> remap(B.nv, -1);
  int n = 0;
  for (int i = 0; i < B.nv; ++i)
    if (B.find(i) == i) remap[i] = n++;
  for (int i = 0; i < B.nv; ++i) remap[i] = remap[B.find(i)];
  std::set<CoreGraph::FreeEdge> fes;
  for (auto& e : B.fe) fes.insert({remap[e.u], e.gen, remap[e.v]});
  std::vector<CoreBuilder::PerEdge> pes;
  std::set<std::tuple<int, int, long long, int>> pset;
  for (auto& e : B.pe) {
    auto key = std::tuple(remap[e.u], e.factor, e.g, remap[e.v]);
    if (pset.insert(key).second) pes.push_back({remap[e.u], e.factor, e.g, remap[e.v]});
  }
  B.nv = n;
  B.base = remap[B.base];
  B.fe.assign(fes.begin(), fes.end());
  B.pe = std::move(pes);
  B.uf.resize(n);
  std::iota(B.uf.begin(), B.uf.end(), 0);
  (void)sig;
}

}  // namespace detail

/* Assembles the folded graph: folds to a fixpoint, extracts cloud coset
 * tables, prunes dangling non-base vertices, renumbers canonically. */
inline CoreGraph finish_core(const Signature& sig, detail::CoreBuilder& B) {
  while (true) {
    detail::compact(sig, B);
    if (!detail::fold_pass(sig, B)) break;
  }
  detail::compact(sig, B);

  CoreGraph G;
  G.nv = B.nv;
  G.base = B.base;
  G.fe = B.fe;

  // clouds from the stable peripheral edges
  for (int fi = 0; fi < sig.num_factors(); ++fi) {
    std::map<int, std::vector<std::pair<long long, int>>> adj;
    for (auto& e : B.pe) {
      if (e.factor != fi) continue;
      adj[e.u].push_back({e.g, e.v});
      if (sig.factors[fi].kind == FactorKind::Finite)
        adj[e.v].push_back({sig.factors[fi].inv((int)e.g), e.u});
      else
        adj[e.v].push_back({-e.g, e.u});
    }
    std::set<int> seen;
    for (auto& [start, _] : adj) {
      if (seen.count(start)) continue;
      std::vector<int> comp;
      std::vector<int> st{start};
      seen.insert(start);
      while (!st.empty()) {
        int u = st.back();
        st.pop_back();
        comp.push_back(u);
        for (auto& [g, v] : adj[u])
          if (!seen.count(v)) { seen.insert(v); st.push_back(v); }
      }
      int root = *std::min_element(comp.begin(), comp.end());
      if (sig.factors[fi].kind == FactorKind::Finite) {
        const auto& T = sig.factors[fi];
        std::vector<int> pos(T.order, -1);
        pos[T.identity] = root;
        bool changed = true;
        while (changed) {
          changed = false;
          for (int x = 0; x < T.order; ++x) {
            if (pos[x] < 0) continue;
            for (auto& [g, v] : adj[pos[x]]) {
              int y = T.mul(x, (int)g);
              if (pos[y] < 0) { pos[y] = v; changed = true; }
            }
          }
          std::vector<int> P;
          for (int x = 0; x < T.order; ++x)
            if (pos[x] == root) P.push_back(x);
          for (int p : P)
            for (int x = 0; x < T.order; ++x)
              if (pos[x] >= 0 && pos[T.mul(p, x)] < 0) { pos[T.mul(p, x)] = pos[x]; changed = true; }
        }
        CoreGraph::FinCloud c;
        c.factor = fi;
        for (int x = 0; x < T.order; ++x)
          if (pos[x] >= 0) c.pos.push_back({x, pos[x]});
        G.fin.push_back(std::move(c));
      } else {
        std::map<int, long long> off;
        long long d = 0;
        off[root] = 0;
        std::vector<int> st2{root};
        while (!st2.empty()) {
          int u = st2.back();
          st2.pop_back();
          for (auto& [g, v] : adj[u]) {
            long long o = off[u] + g;
            auto it = off.find(v);
            if (it == off.end()) { off[v] = o; st2.push_back(v); }
            else {
              long long D = o - it->second;
              d = std::gcd(d, D < 0 ? -D : D);
            }
          }
        }
        CoreGraph::CycCloud c;
        c.factor = fi;
        c.modulus = d;
        for (auto& [v, o] : off) c.off.push_back({v, d > 0 ? ((o % d) + d) % d : o});
        G.cyc.push_back(std::move(c));
      }
    }
  }

  // prune dangling non-base vertices; drop inert clouds
  bool pruned = true;
  while (pruned) {
    pruned = false;
    for (size_t i = 0; i < G.fin.size(); ++i) {
      // a single label means a single coset with trivial stabilizer
      if (G.fin[i].pos.size() == 1) {
        G.fin.erase(G.fin.begin() + i);
        pruned = true;
        break;
      }
    }
    if (pruned) continue;
    for (size_t i = 0; i < G.cyc.size(); ++i) {
      if (G.cyc[i].modulus == 0 && G.cyc[i].off.size() == 1) {
        G.cyc.erase(G.cyc.begin() + i);
        pruned = true;
        break;
      }
    }
    if (pruned) continue;
    std::vector<int> deg(G.nv, 0);
    for (auto& e : G.fe) { deg[e.u]++; deg[e.v]++; }
    for (auto& c : G.fin) {
      std::set<int> verts;
      for (auto& [e, v] : c.pos) verts.insert(v);
      for (int v : verts) deg[v]++;
    }
    for (auto& c : G.cyc)
      for (auto& [v, o] : c.off) deg[v]++;
    for (int v = 0; v < G.nv; ++v) {
      if (v == G.base || deg[v] != 1) continue;
      // remove the single incident attachment
      for (size_t i = 0; i < G.fe.size(); ++i)
        if (G.fe[i].u == v || G.fe[i].v == v) { G.fe.erase(G.fe.begin() + i); pruned = true; break; }
      if (!pruned)
        for (auto& c : G.fin) {
          size_t before = c.pos.size();
          c.pos.erase(std::remove_if(c.pos.begin(), c.pos.end(),
                                     [&](auto& p) { return p.second == v; }),
                      c.pos.end());
          if (c.pos.size() != before) { pruned = true; break; }
        }
      if (!pruned)
        for (auto& c : G.cyc) {
          size_t before = c.off.size();
          c.off.erase(std::remove_if(c.off.begin(), c.off.end(),
                                     [&](auto& p) { return p.first == v; }),
                      c.off.end());
          if (c.off.size() != before) { pruned = true; break; }
        }
      if (pruned) break;
    }
    if (pruned) {
      // drop emptied clouds
      G.fin.erase(std::remove_if(G.fin.begin(), G.fin.end(),
                                 [](auto& c) { return c.pos.empty(); }),
                  G.fin.end());
      G.cyc.erase(std::remove_if(G.cyc.begin(), G.cyc.end(),
                                 [](auto& c) { return c.off.empty(); }),
                  G.cyc.end());
    }
  }

  // drop isolated leftovers of the prune
  {
    std::set<int> used{G.base};
    for (auto& e : G.fe) { used.insert(e.u); used.insert(e.v); }
    for (auto& c : G.fin)
      for (auto& [e, v] : c.pos) used.insert(v);
    for (auto& c : G.cyc)
      for (auto& [v, o] : c.off) used.insert(v);
    std::vector<int> remap(G.nv, -1);
    int n = 0;
    for (int v : used) remap[v] = n++;
    for (auto& e : G.fe) { e.u = remap[e.u]; e.v = remap[e.v]; }
    for (auto& c : G.fin)
      for (auto& p : c.pos) p.second = remap[p.second];
    for (auto& c : G.cyc)
      for (auto& p : c.off) p.first = remap[p.first];
    G.base = remap[G.base];
    G.nv = n;
  }

  /* Renumber by BFS from the base. Neighbor order uses only gauge-invariant
   * data (generator, direction, label deltas), so the result is independent
   * of construction history. */
  std::vector<int> order(G.nv, -1);
  {
    auto finLabels = [&](const CoreGraph::FinCloud& c, int v) {
      std::vector<int> L;
      for (auto& [e, u] : c.pos)
        if (u == v) L.push_back(e);
      return L;
    };
    auto finDelta = [&](const CoreGraph::FinCloud& c, int u, int v) {
      const auto& T = sig.factors[c.factor];
      int best = -1;
      for (int x : finLabels(c, u))
        for (int y : finLabels(c, v)) {
          int d = T.mul(T.inv(x), y);
          if (best < 0 || d < best) best = d;
        }
      return best;
    };
    int n = 0;
    std::vector<int> queue{G.base};
    order[G.base] = n++;
    for (size_t qi = 0; qi < queue.size(); ++qi) {
      int u = queue[qi];
      std::vector<std::tuple<int, int, long long, int>> nbrs;  // (kind, factor/gen key, delta, vertex)
      for (auto& e : G.fe) {
        if (e.u == u) nbrs.push_back({0, e.gen * 2, 0, e.v});
        if (e.v == u) nbrs.push_back({0, e.gen * 2 + 1, 0, e.u});
      }
      for (auto& c : G.fin) {
        if (finLabels(c, u).empty()) continue;
        std::set<int> verts;
        for (auto& [e, v] : c.pos) verts.insert(v);
        for (int v : verts)
          if (v != u) nbrs.push_back({1, c.factor, finDelta(c, u, v), v});
      }
      for (auto& c : G.cyc) {
        long long ou = 0;
        bool in = false;
        for (auto& [v, o] : c.off)
          if (v == u) { in = true; ou = o; }
        if (!in) continue;
        for (auto& [v, o] : c.off)
          if (v != u) nbrs.push_back({2, c.factor, o - ou, v});
      }
      std::sort(nbrs.begin(), nbrs.end());
      for (auto& [k, key, d, v] : nbrs)
        if (order[v] < 0) { order[v] = n++; queue.push_back(v); }
    }
    for (int v = 0; v < G.nv; ++v)
      if (order[v] < 0) order[v] = n++;
  }
  {
    CoreGraph H;
    H.nv = G.nv;
    H.base = order[G.base];
    for (auto& e : G.fe) H.fe.push_back({order[e.u], e.gen, order[e.v]});
    std::sort(H.fe.begin(), H.fe.end());
    for (auto& c : G.fin) {
      CoreGraph::FinCloud d;
      d.factor = c.factor;
      for (auto& [e, v] : c.pos) d.pos.push_back({e, order[v]});
      // gauge: identity label sits on the lowest-numbered vertex
      const auto& T = sig.factors[c.factor];
      int rootv = d.pos.front().second;
      for (auto& [e, v] : d.pos) rootv = std::min(rootv, v);
      int g0 = -1;
      for (auto& [e, v] : d.pos)
        if (v == rootv && (g0 < 0 || e < g0)) g0 = e;
      for (auto& p : d.pos) p.first = T.mul(T.inv(g0), p.first);
      std::sort(d.pos.begin(), d.pos.end());
      H.fin.push_back(std::move(d));
    }
    for (auto& c : G.cyc) {
      CoreGraph::CycCloud d;
      d.factor = c.factor;
      d.modulus = c.modulus;
      long long shift = 0;
      int rootv = -1;
      for (auto& [v, o] : c.off)
        if (rootv < 0 || order[v] < rootv) { rootv = order[v]; shift = o; }
      for (auto& [v, o] : c.off) {
        long long oo = o - shift;
        if (d.modulus > 0) oo = ((oo % d.modulus) + d.modulus) % d.modulus;
        d.off.push_back({order[v], oo});
      }
      std::sort(d.off.begin(), d.off.end());
      H.cyc.push_back(std::move(d));
    }
    std::sort(H.fin.begin(), H.fin.end(), [](auto& a, auto& b) {
      return std::tuple(a.factor, a.pos) < std::tuple(b.factor, b.pos);
    });
    std::sort(H.cyc.begin(), H.cyc.end(), [](auto& a, auto& b) {
      return std::tuple(a.factor, a.modulus, a.off) < std::tuple(b.factor, b.modulus, b.off);
    });
    G = std::move(H);
  }
  return G;
}

inline CoreGraph core_graph_from_generators(const Signature& sig, const std::vector<Word>& gens) {
  detail::CoreBuilder B;
  B.base = B.fresh();
  for (const auto& w : gens) detail::add_word_path(sig, B, w);
  return finish_core(sig, B);
}

// ---- queries ---------------------------------------------------------------

namespace detail {

struct Reader {
  const Signature& sig;
  const CoreGraph& G;
  std::map<std::pair<int, int>, int> fwd, bwd;
  std::map<std::pair<int, int>, int> fincloud;  // (vertex, factor) -> index in G.fin
  std::map<std::pair<int, int>, int> cyccloud;

  explicit Reader(const Signature& s, const CoreGraph& g) : sig(s), G(g) {
    for (auto& e : G.fe) { fwd[{e.u, e.gen}] = e.v; bwd[{e.v, e.gen}] = e.u; }
    for (int i = 0; i < (int)G.fin.size(); ++i)
      for (auto& [e, v] : G.fin[i].pos) fincloud[{v, G.fin[i].factor}] = i;
    for (int i = 0; i < (int)G.cyc.size(); ++i)
      for (auto& [v, o] : G.cyc[i].off) cyccloud[{v, G.cyc[i].factor}] = i;
  }

  /* One syllable step from vertex u; -1 if the word leaves the graph. */
  int step(int u, const Syllable& s) const {
    if (s.k == SylKind::Free) {
      long long n = s.v > 0 ? s.v : -s.v;
      for (long long j = 0; j < n && u >= 0; ++j) {
        auto& m = s.v > 0 ? fwd : bwd;
        auto it = m.find({u, s.idx});
        u = it == m.end() ? -1 : it->second;
      }
      return u;
    }
    if (sig.factors[s.idx].kind == FactorKind::Finite) {
      auto it = fincloud.find({u, s.idx});
      if (it == fincloud.end()) return -1;
      const auto& c = G.fin[it->second];
      const auto& T = sig.factors[s.idx];
      int rep = -1;
      for (auto& [e, v] : c.pos)
        if (v == u) { rep = e; break; }
      int target = T.mul(rep, (int)s.v);
      for (auto& [e, v] : c.pos)
        if (e == target) return v;
      return -1;
    }
    auto it = cyccloud.find({u, s.idx});
    if (it == cyccloud.end()) return -1;
    const auto& c = G.cyc[it->second];
    long long o = 0;
    for (auto& [v, oo] : c.off)
      if (v == u) o = oo;
    long long t = o + s.v;
    if (c.modulus > 0) t = ((t % c.modulus) + c.modulus) % c.modulus;
    for (auto& [v, oo] : c.off)
      if (oo == t) return v;
    return -1;
  }
};

}  // namespace detail

inline bool contains(const Signature& sig, const CoreGraph& G, const Word& w) {
  detail::Reader R(sig, G);
  int u = G.base;
  for (const auto& s : w.syl) {
    u = R.step(u, s);
    if (u < 0) return false;
  }
  return u == G.base;
}

inline bool whole_group(const Signature& sig, const CoreGraph& G) {
  for (int i = 0; i < sig.free_rank(); ++i)
    if (!contains(sig, G, word_of(Syllable{SylKind::Free, i, 1}))) return false;
  for (int i = 0; i < sig.num_factors(); ++i) {
    if (sig.factors[i].kind == FactorKind::Cyclic) {
      if (!contains(sig, G, word_of(Syllable{SylKind::Per, i, 1}))) return false;
    } else {
      for (int e = 0; e < sig.factors[i].order; ++e)
        if (e != sig.factors[i].identity &&
            !contains(sig, G, word_of(Syllable{SylKind::Per, i, e})))
          return false;
    }
  }
  return true;
}

struct KuroshPart {
  int factor;
  Word conj;                // part = conj * P * conj^-1
  std::vector<int> elems;   // finite: the subgroup elements
  long long modulus = 0;    // cyclic: P = <z^modulus>
};

struct KuroshData {
  std::vector<KuroshPart> parts;
  std::vector<Word> freePart;  // free-part generators
  int freeRank = 0;
};

namespace detail {

/* Spanning-tree data over the bipartite graph of free vertices and clouds.
 * sigma gauges vertices (path word base -> vertex), csigma gauges clouds, and
 * every non-tree transition gets its Schreier word plus its index into the
 * free part of the basis (-1 when the word collapses to the identity). The
 * exact identities the maps encode:
 *   free edge i (u,gen,v):   sigma[u] * gen = g * sigma[v]
 *   fin cloud ci, vertex v:  csigma[ci] * lab_v = g * sigma[v]
 *   cyc cloud ci, vertex v:  csigma[nf+ci] * z^off_v = g * sigma[v]
 * with g the recorded Schreier word (identity for tree transitions). */
struct SpanningWalk {
  std::vector<Word> sigma;
  std::vector<Word> csigma;  // fin clouds first, then cyc clouds
  std::vector<int> centry;
  std::map<int, std::pair<Word, int>> feGen;
  std::map<std::pair<int, int>, std::pair<Word, int>> finGen;
  std::map<std::pair<int, int>, std::pair<Word, int>> cycGen;
  std::vector<Word> freePart;
};

inline SpanningWalk spanning_walk(const Signature& sig, const CoreGraph& G) {
  SpanningWalk W;
  int nf = (int)G.fin.size(), nc = (int)G.cyc.size();
  int NB = G.nv + nf + nc;
  std::vector<int> seen(NB, 0);
  W.sigma.resize(G.nv);
  W.csigma.resize(nf + nc);
  W.centry.assign(nf + nc, -1);
  std::vector<int> queue{G.base};
  seen[G.base] = 1;
  std::vector<char> feUsed(G.fe.size(), 0);
  auto schreier = [&](Word g) {
    int idx = -1;
    if (!g.empty()) {
      idx = (int)W.freePart.size();
      W.freePart.push_back(g);
    }
    return std::pair<Word, int>{std::move(g), idx};
  };

  for (size_t qi = 0; qi < queue.size(); ++qi) {
    int u = queue[qi];
    if (u < G.nv) {
      for (size_t i = 0; i < G.fe.size(); ++i) {
        const auto& e = G.fe[i];
        if (e.u != u && e.v != u) continue;
        int v = e.u == u ? e.v : e.u;
        if (!seen[v]) {
          seen[v] = 1;
          feUsed[i] = 1;
          W.sigma[v] = mul(sig, W.sigma[u],
                           word_of(Syllable{SylKind::Free, e.gen, e.u == u ? 1 : -1}));
          queue.push_back(v);
        } else if (!feUsed[i]) {
          feUsed[i] = 2;  // mark non-tree once
          Word g = mul(sig, mul(sig, W.sigma[e.u], word_of(Syllable{SylKind::Free, e.gen, 1})),
                       inv(sig, W.sigma[e.v]));
          W.feGen[(int)i] = schreier(std::move(g));
        }
      }
      for (int ci = 0; ci < nf; ++ci) {
        const auto& c = G.fin[ci];
        long long lab = -1;
        for (auto& [el, v] : c.pos)
          if (v == u && lab < 0) lab = el;
        if (lab < 0) continue;
        int node = G.nv + ci;
        if (!seen[node]) {
          seen[node] = 1;
          W.centry[ci] = u;
          Word lw;
          if ((int)lab != sig.factors[c.factor].identity)
            lw = word_of(Syllable{SylKind::Per, c.factor, lab});
          W.csigma[ci] = mul(sig, W.sigma[u], inv(sig, lw));
          queue.push_back(node);
        }
      }
      for (int ci = 0; ci < nc; ++ci) {
        const auto& c = G.cyc[ci];
        bool in = false;
        long long lab = 0;
        for (auto& [v, o] : c.off)
          if (v == u) { in = true; lab = o; }
        if (!in) continue;
        int node = G.nv + nf + ci;
        if (!seen[node]) {
          seen[node] = 1;
          W.centry[nf + ci] = u;
          Word lw;
          if (lab != 0) lw = word_of(Syllable{SylKind::Per, c.factor, lab});
          W.csigma[nf + ci] = mul(sig, W.sigma[u], inv(sig, lw));
          queue.push_back(node);
        }
      }
    } else if (u < G.nv + nf) {
      int ci = u - G.nv;
      const auto& c = G.fin[ci];
      const auto& T = sig.factors[c.factor];
      std::set<int> verts;
      for (auto& [el, v] : c.pos) verts.insert(v);
      for (int v : verts) {
        long long lab = -1;
        for (auto& [el, vv] : c.pos)
          if (vv == v && lab < 0) lab = el;
        Word lw;
        if ((int)lab != T.identity) lw = word_of(Syllable{SylKind::Per, c.factor, lab});
        if (!seen[v]) {
          seen[v] = 1;
          W.sigma[v] = mul(sig, W.csigma[ci], lw);
          queue.push_back(v);
        } else if (v != W.centry[ci]) {
          Word g = mul(sig, mul(sig, W.csigma[ci], lw), inv(sig, W.sigma[v]));
          W.finGen[{ci, v}] = schreier(std::move(g));
        }
      }
    } else {
      int ci = u - G.nv - nf;
      const auto& c = G.cyc[ci];
      for (auto& [v, o] : c.off) {
        Word lw;
        if (o != 0) lw = word_of(Syllable{SylKind::Per, c.factor, o});
        if (!seen[v]) {
          seen[v] = 1;
          W.sigma[v] = mul(sig, W.csigma[nf + ci], lw);
          queue.push_back(v);
        } else if (v != W.centry[nf + ci]) {
          Word g = mul(sig, mul(sig, W.csigma[nf + ci], lw), inv(sig, W.sigma[v]));
          W.cycGen[{ci, v}] = schreier(std::move(g));
        }
      }
    }
  }
  return W;
}

}  // namespace detail

/* Spanning-tree generators: Schreier words for the non-tree transitions plus
 * conjugated cloud stabilizers. Also yields the Kurosh decomposition. */
inline KuroshData kurosh_decompose(const Signature& sig, const CoreGraph& G) {
  auto W = detail::spanning_walk(sig, G);
  KuroshData K;
  K.freePart = std::move(W.freePart);
  K.freeRank = (int)K.freePart.size();
  int nf = (int)G.fin.size();
  for (int ci = 0; ci < nf; ++ci) {
    const auto& c = G.fin[ci];
    const auto& T = sig.factors[c.factor];
    auto P = c.stab(T);
    if (P.size() <= 1) continue;
    KuroshPart part;
    part.factor = c.factor;
    part.conj = W.csigma[ci];
    part.elems = P;
    K.parts.push_back(std::move(part));
  }
  for (int ci = 0; ci < (int)G.cyc.size(); ++ci) {
    const auto& c = G.cyc[ci];
    if (c.modulus == 0) continue;
    KuroshPart part;
    part.factor = c.factor;
    part.conj = W.csigma[nf + ci];
    part.modulus = c.modulus;
    K.parts.push_back(std::move(part));
  }
  return K;
}

/* All subgroup generators as explicit words. */
inline std::vector<Word> subgroup_generators(const Signature& sig, const CoreGraph& G) {
  KuroshData K = kurosh_decompose(sig, G);
  std::vector<Word> gens = K.freePart;
  for (auto& p : K.parts) {
    if (p.modulus > 0) {
      gens.push_back(conj(sig, p.conj, word_of(Syllable{SylKind::Per, p.factor, p.modulus})));
    } else {
      for (int e : p.elems)
        if (e != sig.factors[p.factor].identity)
          gens.push_back(conj(sig, p.conj, word_of(Syllable{SylKind::Per, p.factor, e})));
    }
  }
  return gens;
}

namespace detail {

/* Generated names stay lowercase alphabetic: a..z, aa, ab, ... */
inline std::string alpha_name(const std::string& prefix, int i) {
  std::string tail;
  int n = i;
  do {
    tail.insert(tail.begin(), char('a' + n % 26));
    n = n / 26 - 1;
  } while (n >= 0);
  return prefix + tail;
}

}  // namespace detail

/* Presents a subgroup on its own signature: one peripheral factor per Kurosh
 * part (named pa, pb, ...), one free generator per free-part word (ta, tb,
 * ...). embed maps inner words to ambient ones; express rewrites an ambient
 * member word into inner coordinates by walking the graph and translating
 * every non-tree transition through the spanning gauges, so that
 * embed(express(w)) == w exactly. */
struct KuroshRewriter {
  Signature outer;
  CoreGraph graph;
  KuroshData data;
  Signature inner;
  detail::SpanningWalk walk;
  std::vector<int> finPart, cycPart;  // cloud -> part index, -1 if trivial stabilizer
  std::map<std::pair<int, int>, int> fwdE, bwdE;  // (vertex, gen) -> free edge index
  std::map<std::pair<int, int>, int> finAt, cycAt;  // (vertex, factor) -> cloud index

  Word embed(const Word& w) const {
    Word out;
    for (const auto& syl : w.syl) {
      if (syl.k == SylKind::Free) {
        out = mul(outer, out, pow(outer, data.freePart[syl.idx], syl.v));
        continue;
      }
      const auto& part = data.parts[syl.idx];
      Word g;
      if (part.modulus > 0)
        g = word_of(Syllable{SylKind::Per, part.factor, syl.v * part.modulus});
      else
        g = word_of(Syllable{SylKind::Per, part.factor, part.elems[(size_t)syl.v]});
      out = mul(outer, out, conj(outer, part.conj, g));
    }
    return out;
  }

  std::optional<Word> express(const Word& w) const {
    std::vector<Syllable> out;
    auto emitGauge = [&](const std::map<std::pair<int, int>, std::pair<Word, int>>& gens,
                         int cloud, int vertex, long long sign) {
      auto it = gens.find({cloud, vertex});
      if (it != gens.end() && it->second.second >= 0)
        out.push_back(Syllable{SylKind::Free, it->second.second, sign});
    };
    int u = graph.base;
    for (const auto& syl : w.syl) {
      if (syl.k == SylKind::Free) {
        long long n = syl.v > 0 ? syl.v : -syl.v;
        long long d = syl.v > 0 ? 1 : -1;
        for (long long j = 0; j < n; ++j) {
          const auto& m = d > 0 ? fwdE : bwdE;
          auto it = m.find({u, syl.idx});
          if (it == m.end()) return std::nullopt;
          int ei = it->second;
          auto g = walk.feGen.find(ei);
          if (g != walk.feGen.end() && g->second.second >= 0)
            out.push_back(Syllable{SylKind::Free, g->second.second, d});
          u = d > 0 ? graph.fe[ei].v : graph.fe[ei].u;
        }
      } else if (outer.factors[syl.idx].kind == FactorKind::Finite) {
        auto ci = finAt.find({u, syl.idx});
        if (ci == finAt.end()) return std::nullopt;
        const auto& c = graph.fin[ci->second];
        const auto& T = outer.factors[syl.idx];
        auto labAt = [&](int vert) {
          for (auto& [el, vv] : c.pos)
            if (vv == vert) return el;
          return -1;
        };
        int target = T.mul(labAt(u), (int)syl.v);
        int v = -1;
        for (auto& [el, vv] : c.pos)
          if (el == target) v = vv;
        if (v < 0) return std::nullopt;
        int p = T.mul(target, T.inv(labAt(v)));
        emitGauge(walk.finGen, ci->second, u, -1);
        if (p != T.identity) {
          int pi = finPart[ci->second];
          const auto& elems = data.parts[pi].elems;
          long long pe = std::lower_bound(elems.begin(), elems.end(), p) - elems.begin();
          out.push_back(Syllable{SylKind::Per, pi, pe});
        }
        emitGauge(walk.finGen, ci->second, v, 1);
        u = v;
      } else {
        auto ci = cycAt.find({u, syl.idx});
        if (ci == cycAt.end()) return std::nullopt;
        const auto& c = graph.cyc[ci->second];
        auto offAt = [&](int vert) {
          for (auto& [vv, o] : c.off)
            if (vv == vert) return o;
          return (long long)0;
        };
        long long t = offAt(u) + syl.v;
        if (c.modulus > 0) t = ((t % c.modulus) + c.modulus) % c.modulus;
        int v = -1;
        for (auto& [vv, o] : c.off)
          if (o == t) v = vv;
        if (v < 0) return std::nullopt;
        long long q = offAt(u) + syl.v - offAt(v);  // multiple of the modulus
        emitGauge(walk.cycGen, ci->second, u, -1);
        if (q != 0) out.push_back(Syllable{SylKind::Per, cycPart[ci->second], q / c.modulus});
        emitGauge(walk.cycGen, ci->second, v, 1);
        u = v;
      }
    }
    if (u != graph.base) return std::nullopt;
    return normalize(inner, out);
  }
};

inline KuroshRewriter kurosh_rewriter(const Signature& sig, const CoreGraph& G) {
  KuroshRewriter R;
  R.outer = sig;
  R.graph = G;
  R.walk = detail::spanning_walk(sig, G);
  R.data = kurosh_decompose(sig, G);
  std::vector<PeripheralFactor> fs;
  for (size_t i = 0; i < R.data.parts.size(); ++i) {
    const auto& p = R.data.parts[i];
    if (p.modulus > 0) {
      fs.push_back(make_cyclic_factor(detail::alpha_name("p", (int)i)));
      continue;
    }
    const auto& T = sig.factors[p.factor];
    int n = (int)p.elems.size();
    std::vector<int> table(n * n);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        int prod = T.mul(p.elems[a], p.elems[b]);
        table[a * n + b] =
            (int)(std::lower_bound(p.elems.begin(), p.elems.end(), prod) - p.elems.begin());
      }
    fs.push_back(make_finite_factor(detail::alpha_name("p", (int)i), n, std::move(table)));
  }
  std::vector<std::string> gens;
  for (int j = 0; j < R.data.freeRank; ++j) gens.push_back(detail::alpha_name("t", j));
  R.inner = make_signature(std::move(fs), std::move(gens));

  int partIdx = 0;
  for (int ci = 0; ci < (int)G.fin.size(); ++ci)
    R.finPart.push_back(G.fin[ci].stab(sig.factors[G.fin[ci].factor]).size() > 1 ? partIdx++ : -1);
  for (int ci = 0; ci < (int)G.cyc.size(); ++ci)
    R.cycPart.push_back(G.cyc[ci].modulus > 0 ? partIdx++ : -1);

  for (int i = 0; i < (int)G.fe.size(); ++i) {
    R.fwdE[{G.fe[i].u, G.fe[i].gen}] = i;
    R.bwdE[{G.fe[i].v, G.fe[i].gen}] = i;
  }
  for (int i = 0; i < (int)G.fin.size(); ++i)
    for (auto& [e, v] : G.fin[i].pos) R.finAt[{v, G.fin[i].factor}] = i;
  for (int i = 0; i < (int)G.cyc.size(); ++i)
    for (auto& [v, o] : G.cyc[i].off) R.cycAt[{v, G.cyc[i].factor}] = i;
  return R;
}

inline std::string canonical_code(const Signature& sig, const CoreGraph& G) {
  std::ostringstream o;
  o << G.nv << ';' << G.base << ';';
  for (auto& e : G.fe) o << e.u << ',' << e.gen << ',' << e.v << ';';
  o << '|';
  for (auto& c : G.fin) {
    o << 'f' << c.factor << ':';
    for (auto& [e, v] : c.pos) o << e << '>' << v << ',';
    o << ';';
  }
  for (auto& c : G.cyc) {
    o << 'c' << c.factor << '%' << c.modulus << ':';
    for (auto& [v, of] : c.off) o << v << '>' << of << ',';
    o << ';';
  }
  (void)sig;
  return o.str();
}

/* cH2c^-1 = H1 for some c with word length <= bound. Verified candidates come
 * from Schreier-word pairs plus a short raw enumeration. */
inline std::optional<Word> conjugate_subgroups(const Signature& sig, const CoreGraph& h1,
                                               const CoreGraph& h2, long long bound) {
  auto g1 = subgroup_generators(sig, h1), g2 = subgroup_generators(sig, h2);
  auto verify = [&](const Word& c) {
    for (auto& g : g2)
      if (!contains(sig, h1, conj(sig, c, g))) return false;
    for (auto& g : g1)
      if (!contains(sig, h2, conj(sig, inv(sig, c), g))) return false;
    return true;
  };
  if (h1.trivial() && h2.trivial()) return identity_word();

  // Schreier words to every vertex of each graph, walking the structure
  auto schreier = [&](const CoreGraph& G) {
    std::vector<Word> sg(G.nv);
    std::vector<int> seen(G.nv, 0);
    std::vector<int> q{G.base};
    seen[G.base] = 1;
    for (size_t qi = 0; qi < q.size(); ++qi) {
      int u = q[qi];
      auto push = [&](int v, const Word& step) {
        if (!seen[v]) {
          seen[v] = 1;
          sg[v] = mul(sig, sg[u], step);
          q.push_back(v);
        }
      };
      for (auto& e : G.fe) {
        if (e.u == u) push(e.v, word_of(Syllable{SylKind::Free, e.gen, 1}));
        if (e.v == u) push(e.u, word_of(Syllable{SylKind::Free, e.gen, -1}));
      }
      for (auto& c : G.fin) {
        const auto& T = sig.factors[c.factor];
        int labu = -1;
        for (auto& [el, v] : c.pos)
          if (v == u && labu < 0) labu = el;
        if (labu < 0) continue;
        for (auto& [el, v] : c.pos) {
          if (v == u) continue;
          int d = T.mul(T.inv(labu), el);
          push(v, word_of(Syllable{SylKind::Per, c.factor, d}));
        }
      }
      for (auto& c : G.cyc) {
        long long ou = 0;
        bool in = false;
        for (auto& [v, o] : c.off)
          if (v == u) { in = true; ou = o; }
        if (!in) continue;
        for (auto& [v, o] : c.off)
          if (v != u) push(v, word_of(Syllable{SylKind::Per, c.factor, o - ou}));
      }
    }
    return sg;
  };
  auto s1 = schreier(h1), s2 = schreier(h2);
  std::vector<Word> gauges{identity_word()};
  for (int fi = 0; fi < sig.num_factors(); ++fi) {
    if (sig.factors[fi].kind == FactorKind::Finite) {
      for (int e = 0; e < sig.factors[fi].order; ++e)
        if (e != sig.factors[fi].identity)
          gauges.push_back(word_of(Syllable{SylKind::Per, fi, e}));
    } else {
      for (long long e : {1, -1, 2, -2}) gauges.push_back(word_of(Syllable{SylKind::Per, fi, e}));
    }
  }
  for (auto& w1 : s1)
    for (auto& w2 : s2)
      for (auto& g : gauges) {
        Word c = mul(sig, mul(sig, w1, g), inv(sig, w2));
        if (word_length(sig, c) <= bound && verify(c)) return c;
      }
  // raw fallback over short words
  std::vector<Word> frontier{identity_word()};
  std::set<std::string> seenw{format_word(sig, identity_word())};
  long long rawBound = std::min<long long>(bound, 4);
  for (long long depth = 0; depth < rawBound; ++depth) {
    std::vector<Word> next;
    for (auto& w : frontier) {
      std::vector<Syllable> steps;
      for (int g = 0; g < sig.free_rank(); ++g) {
        steps.push_back(Syllable{SylKind::Free, g, 1});
        steps.push_back(Syllable{SylKind::Free, g, -1});
      }
      for (int fi = 0; fi < sig.num_factors(); ++fi) {
        if (sig.factors[fi].kind == FactorKind::Finite) {
          for (int e = 0; e < sig.factors[fi].order; ++e)
            if (e != sig.factors[fi].identity) steps.push_back(Syllable{SylKind::Per, fi, e});
        } else {
          steps.push_back(Syllable{SylKind::Per, fi, 1});
          steps.push_back(Syllable{SylKind::Per, fi, -1});
        }
      }
      for (auto& s : steps) {
        Word c = mul(sig, w, word_of(s));
        if (word_length(sig, c) > rawBound) continue;
        if (!seenw.insert(format_word(sig, c)).second) continue;
        if (verify(c)) return c;
        next.push_back(c);
      }
    }
    frontier = std::move(next);
  }
  return std::nullopt;
}

/* Loops at the base of length <= L, as canonical normal forms. */
inline std::vector<Word> elements_up_to(const Signature& sig, const CoreGraph& G, long long L) {
  detail::Reader R(sig, G);
  std::set<Word> out;
  // state: vertex, accumulated word (normalized); explore one-letter steps
  struct State {
    int v;
    Word w;
  };
  std::vector<State> frontier{{G.base, identity_word()}};
  std::set<std::pair<int, std::string>> seen{{G.base, "1"}};
  while (!frontier.empty()) {
    std::vector<State> next;
    for (auto& st : frontier) {
      if (st.v == G.base && !st.w.empty()) out.insert(st.w);
      std::vector<Syllable> steps;
      for (int g = 0; g < sig.free_rank(); ++g) {
        steps.push_back(Syllable{SylKind::Free, g, 1});
        steps.push_back(Syllable{SylKind::Free, g, -1});
      }
      for (int fi = 0; fi < sig.num_factors(); ++fi) {
        if (sig.factors[fi].kind == FactorKind::Finite) {
          for (int e = 0; e < sig.factors[fi].order; ++e)
            if (e != sig.factors[fi].identity) steps.push_back(Syllable{SylKind::Per, fi, e});
        } else {
          for (long long e = 1; e <= L; ++e) {
            steps.push_back(Syllable{SylKind::Per, fi, e});
            steps.push_back(Syllable{SylKind::Per, fi, -e});
          }
        }
      }
      for (auto& s : steps) {
        int v2 = R.step(st.v, s);
        if (v2 < 0) continue;
        Word w2 = mul(sig, st.w, word_of(s));
        if (word_length(sig, w2) > L || w2.empty()) continue;
        auto key = std::pair(v2, format_word(sig, w2));
        if (!seen.insert(key).second) continue;
        next.push_back({v2, w2});
      }
    }
    frontier = std::move(next);
  }
  return std::vector<Word>(out.begin(), out.end());
}

/* Text form: vertex and edge lists. Clouds flatten to labeled edges from
 * their root; parsing rebuilds by refolding the Schreier generators, which
 * reproduces the graph exactly (folding is canonical). */
inline std::string serialize_core(const Signature& sig, const CoreGraph& G) {
  std::ostringstream o;
  for (int v = 0; v < G.nv; ++v) {
    o << "vertex " << v;
    if (v == G.base) o << " base";
    o << "\n";
  }
  int eid = 0;
  for (auto& e : G.fe)
    o << "edge " << eid++ << " " << e.u << " " << e.v << " label="
      << sig.freeGens[e.gen] << "\n";
  for (auto& c : G.fin) {
    int r = c.root();
    for (auto& [el, v] : c.pos) {
      if (el == sig.factors[c.factor].identity) continue;
      o << "edge " << eid++ << " " << r << " " << v << " label="
        << format_word(sig, word_of(Syllable{SylKind::Per, c.factor, el})) << "\n";
    }
  }
  for (auto& c : G.cyc) {
    int r = c.off.empty() ? -1 : c.off.front().first;
    long long r0 = c.off.empty() ? 0 : c.off.front().second;
    for (auto& [v, off] : c.off) {
      if (v == r && off == r0) continue;
      o << "edge " << eid++ << " " << r << " " << v << " label="
        << format_word(sig, word_of(Syllable{SylKind::Per, c.factor, off - r0})) << "\n";
    }
    if (c.modulus > 0)
      o << "edge " << eid++ << " " << r << " " << r << " label="
        << format_word(sig, word_of(Syllable{SylKind::Per, c.factor, c.modulus})) << "\n";
  }
  return o.str();
}

inline CoreGraph parse_core(const Signature& sig, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::map<int, int> vmap;
  int base = -1, nv = 0;
  struct RawE {
    int u, v;
    Word label;
  };
  std::vector<RawE> edges;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string kw;
    if (!(ls >> kw)) continue;
    if (kw == "vertex") {
      int id;
      if (!(ls >> id)) throw ParseError("bad vertex line: " + line);
      if (vmap.count(id)) throw ParseError("duplicate vertex id");
      vmap[id] = nv++;
      std::string flag;
      if (ls >> flag && flag == "base") base = vmap[id];
    } else if (kw == "edge") {
      int id, u, v;
      std::string lab;
      if (!(ls >> id >> u >> v >> lab) || lab.rfind("label=", 0) != 0)
        throw ParseError("bad edge line: " + line);
      if (!vmap.count(u) || !vmap.count(v)) throw ParseError("edge references unknown vertex");
      edges.push_back({vmap[u], vmap[v], parse_word(sig, lab.substr(6))});
    } else if (kw[0] == '#') {
      continue;
    } else {
      throw ParseError("unknown line in core file: " + line);
    }
  }
  if (nv == 0) return core_graph_from_generators(sig, {});
  if (base < 0) base = 0;
  // Schreier words via spanning tree over the raw edges, then refold
  std::vector<Word> sg(nv);
  std::vector<int> seen(nv, 0);
  seen[base] = 1;
  std::vector<int> q{base};
  std::vector<int> treeEdge(edges.size(), 0);
  for (size_t qi = 0; qi < q.size(); ++qi) {
    int u = q[qi];
    for (size_t ei = 0; ei < edges.size(); ++ei) {
      if (edges[ei].u == u && !seen[edges[ei].v]) {
        seen[edges[ei].v] = 1;
        sg[edges[ei].v] = mul(sig, sg[u], edges[ei].label);
        treeEdge[ei] = 1;
        q.push_back(edges[ei].v);
      } else if (edges[ei].v == u && !seen[edges[ei].u]) {
        seen[edges[ei].u] = 1;
        sg[edges[ei].u] = mul(sig, sg[u], inv(sig, edges[ei].label));
        treeEdge[ei] = 1;
        q.push_back(edges[ei].u);
      }
    }
  }
  for (int v = 0; v < nv; ++v)
    if (!seen[v]) throw ParseError("core file graph not connected");
  std::vector<Word> gens;
  for (size_t ei = 0; ei < edges.size(); ++ei) {
    if (treeEdge[ei]) continue;
    Word g = mul(sig, mul(sig, sg[edges[ei].u], edges[ei].label), inv(sig, sg[edges[ei].v]));
    if (!g.empty()) gens.push_back(g);
  }
  return core_graph_from_generators(sig, gens);
}

}  // namespace gforge
