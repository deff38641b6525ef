#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <set>
#include <vector>

#include "h1stab/mesh.hpp"

namespace h1stab {

namespace detail {

inline void add_child(Mesh& m, int parent, MeshElement child) {
    MeshElement& p = m.elements[parent];
    child.parent = parent;
    child.macro = p.macro;
    int id = int(m.elements.size());
    p.children[p.n_children++] = id;
    m.elements.push_back(std::move(child));
}

inline MeshElement make_quad(const Mesh& m, int parent, std::array<int, 4> vs, ElemKind kind,
                             Rational factor) {
    MeshElement e;
    e.quad = true;
    e.verts = vs;
    e.kind = kind;
    e.area_ratio = m.elements[parent].area_ratio.times(factor);
    return e;
}

inline MeshElement make_tri(const Mesh& m, int parent, std::array<int, 3> vs, ElemKind kind,
                            Rational factor) {
    MeshElement e;
    e.quad = false;
    e.verts = {vs[0], vs[1], vs[2], -1};
    e.kind = kind;
    e.area_ratio = m.elements[parent].area_ratio.times(factor);
    return e;
}

/// Center of a parallelogram as the midpoint of the canonical diagonal, so
/// red and blue refinements of the same element share the vertex.
inline int center_vertex(Mesh& m, const std::array<int, 4>& v) {
    auto d1 = std::minmax(v[0], v[2]), d2 = std::minmax(v[1], v[3]);
    return d1 < d2 ? m.midpoint(d1.first, d1.second) : m.midpoint(d2.first, d2.second);
}

/// Red: four sub-quads joining the midpoints of opposite edges.
inline void red_refine(Mesh& m, int e) {
    auto v = m.elements[e].verts;
    int m01 = m.midpoint(v[0], v[1]), m12 = m.midpoint(v[1], v[2]);
    int m23 = m.midpoint(v[2], v[3]), m30 = m.midpoint(v[3], v[0]);
    int c = center_vertex(m, v);
    add_child(m, e, make_quad(m, e, {v[0], m01, c, m30}, ElemKind::RedChild, {4, 1}));
    add_child(m, e, make_quad(m, e, {m01, v[1], m12, c}, ElemKind::RedChild, {4, 1}));
    add_child(m, e, make_quad(m, e, {c, m12, v[2], m23}, ElemKind::RedChild, {4, 1}));
    add_child(m, e, make_quad(m, e, {m30, c, m23, v[3]}, ElemKind::RedChild, {4, 1}));
}

inline std::array<int, 4> rotated(const std::array<int, 4>& v, int k) {
    return {v[k % 4], v[(k + 1) % 4], v[(k + 2) % 4], v[(k + 3) % 4]};
}

/// Green 1: the midpoint of edge k joined to both opposite vertices.
inline void green1_refine(Mesh& m, int e, int k) {
    auto v = rotated(m.elements[e].verts, k);
    int mid = m.midpoint(v[0], v[1]);
    add_child(m, e, make_tri(m, e, {v[0], mid, v[3]}, ElemKind::Green1, {4, 1}));
    add_child(m, e, make_tri(m, e, {mid, v[2], v[3]}, ElemKind::Green1, {2, 1}));
    add_child(m, e, make_tri(m, e, {mid, v[1], v[2]}, ElemKind::Green1, {4, 1}));
}

/// Green 2: midpoints of the adjacent edges k, k+1 joined to each other and
/// to the vertex shared by the other two edges.
inline void green2_refine(Mesh& m, int e, int k) {
    auto v = rotated(m.elements[e].verts, k);
    int m01 = m.midpoint(v[0], v[1]), m12 = m.midpoint(v[1], v[2]);
    add_child(m, e, make_tri(m, e, {v[0], m01, v[3]}, ElemKind::Green2, {4, 1}));
    add_child(m, e, make_tri(m, e, {m01, v[1], m12}, ElemKind::Green2, {8, 1}));
    add_child(m, e, make_tri(m, e, {m01, m12, v[3]}, ElemKind::Green2, {8, 3}));
    add_child(m, e, make_tri(m, e, {m12, v[2], v[3]}, ElemKind::Green2, {4, 1}));
}

/// Green 3: midpoints of the opposite edges k, k+2 joined.
inline void green3_refine(Mesh& m, int e, int k) {
    auto v = rotated(m.elements[e].verts, k);
    int m01 = m.midpoint(v[0], v[1]), m23 = m.midpoint(v[2], v[3]);
    add_child(m, e, make_quad(m, e, {v[0], m01, m23, v[3]}, ElemKind::Green3, {2, 1}));
    add_child(m, e, make_quad(m, e, {m01, v[1], v[2], m23}, ElemKind::Green3, {2, 1}));
}

/// Blue: the quad's midpoint joined to the midpoints of the adjacent edges
/// k, k+1 and to the vertex shared by the other two edges.  Two trapezoid
/// children of area ratio 8/3 and one parallelogram of ratio 4; corner cycles
/// are stored so the bilinear extraction yields c1 = 0, c2 in {1, 0, -1/2}.
inline void blue_refine(Mesh& m, int e, int k) {
    auto v = rotated(m.elements[e].verts, k);
    int m01 = m.midpoint(v[0], v[1]), m12 = m.midpoint(v[1], v[2]);
    int c = center_vertex(m, v);
    add_child(m, e, make_quad(m, e, {m01, c, v[3], v[0]}, ElemKind::BlueChild, {8, 3}));
    add_child(m, e, make_quad(m, e, {m01, v[1], m12, c}, ElemKind::BlueChild, {4, 1}));
    add_child(m, e, make_quad(m, e, {v[2], v[3], c, m12}, ElemKind::BlueChild, {8, 3}));
}

/// Remove the (green/blue) children of `parent`, reactivating it.
inline void undo_children(Mesh& m, int parent) {
    MeshElement& p = m.elements[parent];
    for (int i = 0; i < p.n_children; ++i) {
        m.elements[p.children[i]].alive = false;
        p.children[i] = -1;
    }
    p.n_children = 0;
}

struct EdgeIndex {
    std::set<std::pair<int, int>> active_edges;
    std::map<std::pair<int, int>, std::vector<int>> edge_elems;

    explicit EdgeIndex(const Mesh& m) {
        for (int e : m.active_elements()) {
            auto vs = m.corner_ids(e);
            for (std::size_t i = 0; i < vs.size(); ++i) {
                auto key = std::minmax(vs[i], vs[(i + 1) % vs.size()]);
                active_edges.insert(key);
                edge_elems[key].push_back(e);
            }
        }
    }

    bool has(int a, int b) const { return active_edges.count(std::minmax(a, b)) > 0; }

    /// Is the far side of edge (a, b) refined to a finer level?
    bool is_split(const Mesh& m, int a, int b) const {
        int mid = m.find_midpoint(a, b);
        if (mid < 0) return false;
        if (has(a, mid) || has(mid, b)) return true;
        return is_split(m, a, mid) || is_split(m, mid, b);
    }

    /// Does edge (a, b) carry two or more hanging levels?
    bool is_double_split(const Mesh& m, int a, int b) const {
        int mid = m.find_midpoint(a, b);
        if (mid < 0) return false;
        return is_split(m, a, mid) || is_split(m, mid, b);
    }

    int neighbor_across(int elem, int a, int b) const {
        auto it = edge_elems.find(std::minmax(a, b));
        if (it == edge_elems.end()) return -1;
        for (int e : it->second)
            if (e != elem) return e;
        return -1;
    }
};

/// Marked ids may point at green/blue children or refined ancestors; resolve
/// to the active red-lineage elements that will actually be red-refined.
inline std::set<int> resolve_marks(const Mesh& m, const std::set<int>& marked) {
    std::set<int> out;
    for (int e : marked) {
        if (e < 0 || e >= int(m.elements.size())) throw std::invalid_argument("marked id out of range");
        if (m.is_active(e)) out.insert(e);
    }
    return out;
}

/// The Q-R loop: red-refine marks, then keep marking until the mesh is
/// 1-irregular and no element has more than three refined edge-neighbors.
inline void qr_pass(Mesh& m, std::set<int> marked) {
    marked = resolve_marks(m, marked);
    for (int iter = 0; iter < 4096; ++iter) {
        if (marked.empty()) {
            m.rebuild_hanging();
            return;
        }
        for (int e : marked) {
            if (!m.is_active(e)) continue;
            if (!m.elements[e].quad || m.elements[e].kind == ElemKind::BlueChild ||
                is_green(m.elements[e].kind))
                throw std::logic_error("Q-R may only refine red-lineage quadrilaterals");
            red_refine(m, e);
        }
        marked.clear();
        EdgeIndex idx(m);
        for (int e : m.active_elements()) {
            auto vs = m.corner_ids(e);
            int refined_neighbors = 0;
            bool mark = false;
            for (std::size_t i = 0; i < vs.size(); ++i) {
                int a = vs[i], b = vs[(i + 1) % vs.size()];
                if (idx.is_split(m, a, b)) ++refined_neighbors;
                if (idx.is_double_split(m, a, b)) mark = true;  // 1-irregularity
            }
            if (refined_neighbors > 3) mark = true;  // 3-neighbor rule
            if (mark) marked.insert(e);
        }
    }
    throw ClosureCapError("Q-R closure did not reach a fixpoint");
}

/// Local indices of an element's split edges.
inline std::vector<int> split_edges(const Mesh& m, const EdgeIndex& idx, int e) {
    auto vs = m.corner_ids(e);
    std::vector<int> out;
    for (std::size_t i = 0; i < vs.size(); ++i)
        if (idx.is_split(m, vs[i], vs[(i + 1) % vs.size()])) out.push_back(int(i));
    return out;
}

/// Undo all green (or blue) pattern children; parents of marked ones get re-marked.
inline void undo_patterns(Mesh& m, std::set<int>& marked, bool blue) {
    std::set<int> parents;
    for (int e : m.active_elements()) {
        ElemKind k = m.elements[e].kind;
        if ((blue && k == ElemKind::BlueChild) || (!blue && is_green(k)))
            parents.insert(m.elements[e].parent);
    }
    std::set<int> new_marked;
    for (int id : marked) {
        if (id < 0 || id >= int(m.elements.size())) throw std::invalid_argument("marked id out of range");
        const MeshElement& el = m.elements[id];
        bool undone_child = parents.count(el.parent) &&
                            (is_green(el.kind) || el.kind == ElemKind::BlueChild);
        new_marked.insert(undone_child ? el.parent : id);
    }
    for (int p : parents) undo_children(m, p);
    marked = std::move(new_marked);
}

}  // namespace detail

/// Red refinement with 1-irregularity and the 3-neighbor rule (Algorithm Q-R).
/// The input must be free of green/blue children.
inline Mesh refine_qr(Mesh m, const std::set<int>& marked) {
    for (int e : m.active_elements())
        if (is_green(m.elements[e].kind) || m.elements[e].kind == ElemKind::BlueChild)
            throw std::invalid_argument("refine_qr requires a red-only mesh");
    detail::qr_pass(m, marked);
    return m;
}

/// Red-green refinement (Algorithm Q-RG): undo greens, run Q-R, then match
/// green patterns until the mesh is conforming.
inline Mesh refine_qrg(Mesh m, std::set<int> marked) {
    detail::undo_patterns(m, marked, /*blue=*/false);
    for (int iter = 0;; ++iter) {
        if (iter == 64) throw ClosureCapError("Q-RG closure did not reach a fixpoint");
        detail::qr_pass(m, marked);
        marked.clear();
        detail::EdgeIndex idx(m);
        for (int e : m.active_elements())
            if (detail::split_edges(m, idx, e).size() >= 3) marked.insert(e);
        if (marked.empty()) break;
    }
    detail::EdgeIndex idx(m);
    for (int e : m.active_elements()) {
        std::vector<int> s = detail::split_edges(m, idx, e);
        if (s.empty()) continue;
        if (s.size() == 1) {
            detail::green1_refine(m, e, s[0]);
        } else if (s.size() == 2 && (s[1] - s[0] == 1 || s[1] - s[0] == 3)) {
            detail::green2_refine(m, e, s[1] - s[0] == 1 ? s[0] : s[1]);
        } else if (s.size() == 2 && s[1] - s[0] == 2) {
            detail::green3_refine(m, e, s[0]);
        } else {
            throw std::logic_error("unmatched hanging configuration in Q-RG");
        }
    }
    m.rebuild_hanging();
    if (!m.hanging.empty()) throw std::logic_error("Q-RG output is not conforming");
    return m;
}

/// Red-blue refinement (Algorithm Q-RB): undo blues, run Q-R, then eliminate
/// hanging nodes with blue patterns; configurations no blue pattern matches
/// are red-refined and the loop repeats (closure).
inline Mesh refine_qrb(Mesh m, std::set<int> marked) {
    detail::undo_patterns(m, marked, /*blue=*/true);
    for (int iter = 0;; ++iter) {
        if (iter == 64) throw ClosureCapError("Q-RB closure did not reach a fixpoint");
        detail::qr_pass(m, marked);
        marked.clear();
        detail::EdgeIndex idx(m);

        // sticky split demands: local edge index sets, grown to blue shapes
        std::map<int, std::set<int>> demand;
        for (int e : m.active_elements()) {
            std::vector<int> s = detail::split_edges(m, idx, e);
            if (!s.empty()) demand[e] = std::set<int>(s.begin(), s.end());
        }
        bool changed = true;
        int guard = 0;
        while (changed) {
            if (++guard > int(m.elements.size()) + 8)
                throw ClosureCapError("Q-RB demand propagation did not settle");
            changed = false;
            for (auto& [e, d] : demand) {
                if (d.size() != 1) continue;
                int k = *d.begin();
                int partner = std::min((k + 1) % 4, (k + 3) % 4);
                d.insert(partner);
                auto vs = m.corner_ids(e);
                int a = vs[partner], b = vs[(partner + 1) % 4];
                int n = idx.neighbor_across(e, a, b);
                if (n >= 0) {
                    auto nvs = m.corner_ids(n);
                    for (std::size_t i = 0; i < nvs.size(); ++i) {
                        auto key = std::minmax(nvs[i], nvs[(i + 1) % nvs.size()]);
                        if (key == std::minmax(a, b)) demand[n].insert(int(i));
                    }
                }
                changed = true;
                break;  // demand map mutated; restart the scan
            }
        }
        for (auto& [e, d] : demand) {
            bool adjacent_pair = d.size() == 2 && [&] {
                auto it = d.begin();
                int u = *it++, v = *it;
                return v - u == 1 || v - u == 3;
            }();
            if (!adjacent_pair) marked.insert(e);  // 2 opposite or >= 3: promote to red
        }
        if (!marked.empty()) continue;

        for (auto& [e, d] : demand) {
            auto it = d.begin();
            int u = *it++, v = *it;
            detail::blue_refine(m, e, v - u == 1 ? u : v);
        }
        break;
    }
    m.rebuild_hanging();
    if (!m.hanging.empty()) throw std::logic_error("Q-RB output is not conforming");
    return m;
}

}  // namespace h1stab
