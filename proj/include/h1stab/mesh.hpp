#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <queue>
#include <set>
#include <vector>

#include "h1stab/common.hpp"

namespace h1stab {

enum class ElemKind { Unrefined, RedChild, Green1, Green2, Green3, BlueChild };

inline bool is_green(ElemKind k) {
    return k == ElemKind::Green1 || k == ElemKind::Green2 || k == ElemKind::Green3;
}

struct MeshElement {
    bool quad = true;
    std::array<int, 4> verts{-1, -1, -1, -1};  // ccw; verts[3] = -1 for triangles
    ElemKind kind = ElemKind::Unrefined;
    int parent = -1;
    int macro = -1;
    Rational area_ratio{1, 1};  // |K_T| / |T|
    std::array<int, 4> children{-1, -1, -1, -1};
    int n_children = 0;
    bool alive = true;

    int nv() const { return quad ? 4 : 3; }
    double gen() const { return area_ratio.log2_exact().value(); }
    GenValue gen_exact() const { return area_ratio.log2_exact(); }
};

struct HangingNode {
    int vertex = -1;  // lies at the midpoint of edge (a, b)
    int a = -1;
    int b = -1;
};

/// Quadrilateral/triangle mesh with the refinement forest.  The active mesh is
/// the set of alive leaves; ancestors stay in the arena so green/blue patterns
/// can be undone and generations recovered exactly.
class Mesh {
public:
    std::vector<Vec2> vertices;
    std::vector<MeshElement> elements;
    std::vector<HangingNode> hanging;  // rebuilt after every refinement call

    /// rows x cols grid of congruent parallelograms sheared by `skew`.
    static Mesh make_initial(int rows, int cols, double skew) {
        if (rows < 1 || cols < 1) throw std::invalid_argument("grid must be at least 1x1");
        Mesh m;
        for (int j = 0; j <= rows; ++j)
            for (int i = 0; i <= cols; ++i) m.vertices.push_back({i + skew * j, double(j)});
        auto vid = [cols](int i, int j) { return j * (cols + 1) + i; };
        for (int j = 0; j < rows; ++j)
            for (int i = 0; i < cols; ++i) {
                MeshElement e;
                e.verts = {vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)};
                e.macro = int(m.elements.size());
                m.elements.push_back(e);
            }
        return m;
    }

    bool is_active(int e) const { return elements[e].alive && elements[e].n_children == 0; }

    std::vector<int> active_elements() const {
        std::vector<int> out;
        for (int e = 0; e < int(elements.size()); ++e)
            if (is_active(e)) out.push_back(e);
        return out;
    }

    int find_midpoint(int a, int b) const {
        auto it = midpoints_.find(std::minmax(a, b));
        return it == midpoints_.end() ? -1 : it->second;
    }

    int midpoint(int a, int b) {
        auto key = std::minmax(a, b);
        auto it = midpoints_.find(key);
        if (it != midpoints_.end()) return it->second;
        int id = int(vertices.size());
        vertices.push_back((vertices[a] + vertices[b]) * 0.5);
        midpoints_.emplace(key, id);
        return id;
    }

    double element_area(int e) const {
        const MeshElement& el = elements[e];
        double s = 0.0;
        for (int k = 0; k < el.nv(); ++k) {
            Vec2 p = vertices[el.verts[k]], q = vertices[el.verts[(k + 1) % el.nv()]];
            s += cross(p, q);
        }
        return 0.5 * s;
    }

    /// Copy of the vertex ids of an element, quad or triangle sized.
    std::vector<int> corner_ids(int e) const {
        const MeshElement& el = elements[e];
        return std::vector<int>(el.verts.begin(), el.verts.begin() + el.nv());
    }

    int n_initial_vertices() const {
        std::set<int> vs;
        for (const MeshElement& el : elements)
            if (el.parent < 0)
                for (int k = 0; k < el.nv(); ++k) vs.insert(el.verts[k]);
        return int(vs.size());
    }

    int initial_max_valence() const {
        std::map<int, int> count;
        for (const MeshElement& el : elements)
            if (el.parent < 0)
                for (int k = 0; k < el.nv(); ++k) ++count[el.verts[k]];
        int a0 = 0;
        for (auto& [v, c] : count) a0 = std::max(a0, c);
        return a0;
    }

    /// Recompute the hanging-node registry from the active elements.
    void rebuild_hanging() {
        hanging.clear();
        std::set<std::pair<int, int>> active_edges;
        for (int e : active_elements()) {
            auto vs = corner_ids(e);
            for (std::size_t k = 0; k < vs.size(); ++k)
                active_edges.insert(std::minmax(vs[k], vs[(k + 1) % vs.size()]));
        }
        std::set<int> seen;
        for (int e : active_elements()) {
            auto vs = corner_ids(e);
            for (std::size_t k = 0; k < vs.size(); ++k) {
                int a = vs[k], b = vs[(k + 1) % vs.size()];
                int m = find_midpoint(a, b);
                if (m < 0) continue;
                bool fine_side = active_edges.count(std::minmax(a, m)) ||
                                 active_edges.count(std::minmax(m, b));
                // the (a,b) side is this element, unsplit; the other side is finer
                if (fine_side && !seen.count(m)) {
                    hanging.push_back({m, a, b});
                    seen.insert(m);
                }
            }
        }
        std::sort(hanging.begin(), hanging.end(),
                  [](const HangingNode& l, const HangingNode& r) { return l.vertex < r.vertex; });
    }

    const std::map<std::pair<int, int>, int>& midpoint_map() const { return midpoints_; }
    void register_midpoint(int a, int b, int v) { midpoints_.emplace(std::minmax(a, b), v); }

private:
    std::map<std::pair<int, int>, int> midpoints_;
};

/// Incidence snapshot of the active mesh used by the distance and weight
/// queries.  V(T) is the set of mesh vertices lying in T, hanging nodes on
/// its edges included.
struct Topology {
    std::vector<int> active;                      // element ids
    std::vector<std::vector<int>> elem_vertices;  // V(T), per active element
    std::vector<std::vector<int>> elem_targets;   // vertices carrying basis nodes of N(T)
    std::vector<double> elem_gen;
    std::vector<std::vector<int>> vertex_elems;  // vertex -> positions into active
    std::vector<std::vector<int>> vertex_adj;    // share-an-element graph
};

inline Topology build_topology(const Mesh& m) {
    Topology t;
    t.active = m.active_elements();
    std::map<int, const HangingNode*> hang_by_vertex;
    std::map<std::pair<int, int>, std::vector<int>> hang_by_edge;
    for (const HangingNode& h : m.hanging) {
        hang_by_vertex[h.vertex] = &h;
        hang_by_edge[std::minmax(h.a, h.b)].push_back(h.vertex);
    }
    t.elem_vertices.resize(t.active.size());
    t.elem_targets.resize(t.active.size());
    t.elem_gen.resize(t.active.size());
    t.vertex_elems.assign(m.vertices.size(), {});
    for (std::size_t pos = 0; pos < t.active.size(); ++pos) {
        int e = t.active[pos];
        auto vs = m.corner_ids(e);
        t.elem_gen[pos] = m.elements[e].gen();
        std::vector<int>& ev = t.elem_vertices[pos];
        ev = vs;
        for (std::size_t k = 0; k < vs.size(); ++k) {
            auto it = hang_by_edge.find(std::minmax(vs[k], vs[(k + 1) % vs.size()]));
            if (it != hang_by_edge.end())
                for (int hv : it->second) ev.push_back(hv);
        }
        std::vector<int>& tg = t.elem_targets[pos];
        for (int v : vs) {
            auto it = hang_by_vertex.find(v);
            if (it == hang_by_vertex.end()) {
                tg.push_back(v);
            } else {
                // a hanging corner carries no basis node; the coarse edge's far
                // endpoint enters N(T) through the constraint instead
                int a = it->second->a, b = it->second->b;
                bool has_a = std::find(vs.begin(), vs.end(), a) != vs.end();
                tg.push_back(has_a ? b : a);
            }
        }
        for (int v : ev) t.vertex_elems[v].push_back(int(pos));
    }
    t.vertex_adj.assign(m.vertices.size(), {});
    for (const std::vector<int>& ev : t.elem_vertices)
        for (int v : ev)
            for (int w : ev)
                if (v != w) t.vertex_adj[v].push_back(w);
    for (std::vector<int>& adj : t.vertex_adj) {
        std::sort(adj.begin(), adj.end());
        adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
    }
    return t;
}

/// Breadth-first levels of the share-an-element vertex graph from `start`.
inline std::vector<int> bfs_levels(const Topology& t, int start) {
    std::vector<int> level(t.vertex_adj.size(), -1);
    std::queue<int> q;
    level[start] = 0;
    q.push(start);
    while (!q.empty()) {
        int v = q.front();
        q.pop();
        for (int w : t.vertex_adj[v])
            if (level[w] < 0) {
                level[w] = level[v] + 1;
                q.push(w);
            }
    }
    return level;
}

/// Minimal element-chain length between two mesh vertices (Def.-3.4 distance).
inline int dist(const Mesh& m, int a, int b) {
    if (a == b) return 0;
    Topology t = build_topology(m);
    std::vector<int> level = bfs_levels(t, a);
    if (level[b] < 0) throw std::runtime_error("mesh is disconnected");
    return level[b];
}

/// F(z) = max_v (value[v] - mu * d(z, v)) for all z at once; a max-heap label
/// pass over the vertex graph (every hop costs mu).
inline std::vector<double> max_propagate(const Topology& t, std::vector<double> value, double mu) {
    const double ninf = -std::numeric_limits<double>::infinity();
    std::priority_queue<std::pair<double, int>> heap;
    for (std::size_t v = 0; v < value.size(); ++v)
        if (value[v] > ninf) heap.push({value[v], int(v)});
    std::vector<double> best(value.size(), ninf);
    while (!heap.empty()) {
        auto [val, v] = heap.top();
        heap.pop();
        if (val <= best[v]) continue;
        best[v] = val;
        for (int w : t.vertex_adj[v])
            if (val - mu > best[w]) heap.push({val - mu, w});
    }
    return best;
}

namespace detail {

inline std::vector<double> weight_exponents(const Mesh& m, const Topology& t, double mu) {
    const double ninf = -std::numeric_limits<double>::infinity();
    // G0: best generation among elements containing the vertex (distance 0)
    std::vector<double> g0(m.vertices.size(), ninf);
    std::vector<double> gt(m.vertices.size(), ninf);
    for (std::size_t pos = 0; pos < t.active.size(); ++pos) {
        for (int v : t.elem_vertices[pos]) g0[v] = std::max(g0[v], t.elem_gen[pos]);
        for (int v : t.elem_targets[pos]) gt[v] = std::max(gt[v], t.elem_gen[pos]);
    }
    std::vector<double> e = max_propagate(t, std::move(gt), mu);
    for (std::size_t v = 0; v < e.size(); ++v) {
        e[v] = std::max(e[v], g0[v]);
        if (e[v] == ninf) {
            e[v] = 0.0;  // orphan vertex of an undone pattern; not part of the active mesh
            continue;
        }
        if (e[v] < -1e-9) throw std::logic_error("weight exponent must be nonnegative");
        e[v] = std::max(e[v], 0.0);
    }
    return e;
}

}  // namespace detail

/// Exponents e_z = max_T (gen(T) - mu dist(z, T)) for every vertex; h_z = 2^{-e_z/2}.
inline std::vector<double> weight_exponents_all(const Mesh& m, double mu) {
    Topology t = build_topology(m);
    return detail::weight_exponents(m, t, mu);
}

/// Single-vertex weight by direct breadth-first search (the contract form).
inline double weight_hz(const Mesh& m, double mu, int z) {
    Topology t = build_topology(m);
    std::vector<int> level = bfs_levels(t, z);
    double e = 0.0;
    bool any = false;
    for (std::size_t pos = 0; pos < t.active.size(); ++pos) {
        const auto& ev = t.elem_vertices[pos];
        double d;
        if (std::find(ev.begin(), ev.end(), z) != ev.end()) {
            d = 0.0;
        } else {
            d = std::numeric_limits<double>::infinity();
            for (int v : t.elem_targets[pos])
                if (level[v] >= 0) d = std::min(d, double(level[v]));
        }
        if (std::isfinite(d)) {
            e = any ? std::max(e, t.elem_gen[pos] - mu * d) : t.elem_gen[pos] - mu * d;
            any = true;
        }
    }
    if (!any) throw std::runtime_error("vertex sees no element");
    if (e < -1e-9) throw std::logic_error("weight exponent must be nonnegative");
    return std::exp2(-0.5 * std::max(e, 0.0));
}

/// Empirical Lemma-4.4 diagnostics: the largest generation gap not explained
/// by mu times the vertex distance, against the explicit lemma constant.
struct MuBoundDiagnostics {
    double mu = 2.0;
    double max_excess = 0.0;          // max (gen(T') - gen(T) - mu dist(z, z'))
    double c_mu = 0.0;                // 4 + #V(T_0) (alpha_0 + 1)
    bool ok = true;
    int alpha0 = 0;
    int n_initial_vertices = 0;
    double max_gen_gap_at_vertex = 0.0;  // max over single vertices (dist 0)
};

inline MuBoundDiagnostics check_mu_bound(const Mesh& m, double mu) {
    Topology t = build_topology(m);
    const double ninf = -std::numeric_limits<double>::infinity();
    std::vector<double> gmax(m.vertices.size(), ninf), gmin(m.vertices.size(), -ninf);
    for (std::size_t pos = 0; pos < t.active.size(); ++pos)
        for (int v : t.elem_vertices[pos]) {
            gmax[v] = std::max(gmax[v], t.elem_gen[pos]);
            gmin[v] = std::min(gmin[v], t.elem_gen[pos]);
        }
    MuBoundDiagnostics d;
    d.mu = mu;
    d.alpha0 = m.initial_max_valence();
    d.n_initial_vertices = m.n_initial_vertices();
    d.c_mu = 4.0 + double(d.n_initial_vertices) * (d.alpha0 + 1);
    std::vector<double> reach = max_propagate(t, gmax, mu);
    d.max_excess = ninf;
    for (std::size_t v = 0; v < m.vertices.size(); ++v) {
        if (gmax[v] == ninf) continue;  // vertex of an undone pattern, not in the active mesh
        d.max_excess = std::max(d.max_excess, reach[v] - gmin[v]);
        d.max_gen_gap_at_vertex = std::max(d.max_gen_gap_at_vertex, gmax[v] - gmin[v]);
    }
    d.ok = d.max_excess <= d.c_mu + 1e-9;
    return d;
}

}  // namespace h1stab
