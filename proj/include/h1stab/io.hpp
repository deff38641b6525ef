#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "h1stab/checker.hpp"
#include "h1stab/mesh.hpp"

namespace h1stab {

namespace detail {

inline const char* kind_name(ElemKind k) {
    switch (k) {
        case ElemKind::Unrefined: return "unrefined";
        case ElemKind::RedChild: return "red";
        case ElemKind::Green1: return "green1";
        case ElemKind::Green2: return "green2";
        case ElemKind::Green3: return "green3";
        case ElemKind::BlueChild: return "blue";
    }
    return "unrefined";
}

inline ElemKind kind_from_name(const std::string& s) {
    if (s == "unrefined") return ElemKind::Unrefined;
    if (s == "red") return ElemKind::RedChild;
    if (s == "green1") return ElemKind::Green1;
    if (s == "green2") return ElemKind::Green2;
    if (s == "green3") return ElemKind::Green3;
    if (s == "blue") return ElemKind::BlueChild;
    throw std::invalid_argument("unknown element kind: " + s);
}

inline std::uint64_t coord_key(double v) {
    std::uint64_t k;
    std::memcpy(&k, &v, sizeof k);
    return k;
}

}  // namespace detail

/// Mesh JSON document, version 1.  Dead (undone) elements are dropped and ids
/// compacted; the edge-midpoint index is rebuilt from coordinates on load.
inline nlohmann::json mesh_to_json(const Mesh& m) {
    nlohmann::json j;
    j["version"] = 1;
    std::vector<int> remap(m.elements.size(), -1);
    int next = 0;
    for (int e = 0; e < int(m.elements.size()); ++e)
        if (m.elements[e].alive) remap[e] = next++;
    j["vertices"] = nlohmann::json::array();
    for (const Vec2& v : m.vertices) j["vertices"].push_back({v.x, v.y});
    j["elements"] = nlohmann::json::array();
    j["macro_of"] = nlohmann::json::array();
    for (int e = 0; e < int(m.elements.size()); ++e) {
        const MeshElement& el = m.elements[e];
        if (!el.alive) continue;
        nlohmann::json je;
        je["shape"] = el.quad ? "quad" : "triangle";
        je["verts"] = std::vector<int>(el.verts.begin(), el.verts.begin() + el.nv());
        je["kind"] = detail::kind_name(el.kind);
        je["parent"] = el.parent >= 0 ? nlohmann::json(remap[el.parent]) : nlohmann::json(nullptr);
        je["area_ratio"] = {el.area_ratio.num, el.area_ratio.den};
        j["elements"].push_back(std::move(je));
        j["macro_of"].push_back(remap[el.macro]);
    }
    j["hanging"] = nlohmann::json::array();
    for (const HangingNode& h : m.hanging)
        j["hanging"].push_back({{"vertex", h.vertex}, {"edge", {h.a, h.b}}});
    return j;
}

inline Mesh mesh_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("version") || j["version"] != 1)
        throw std::invalid_argument("mesh file: unsupported or missing version");
    for (const char* key : {"vertices", "elements", "macro_of", "hanging"})
        if (!j.contains(key) || !j[key].is_array())
            throw std::invalid_argument(std::string("mesh file: missing array field ") + key);
    Mesh m;
    for (const auto& jv : j["vertices"]) {
        if (!jv.is_array() || jv.size() != 2) throw std::invalid_argument("mesh file: bad vertex");
        m.vertices.push_back({jv[0].get<double>(), jv[1].get<double>()});
    }
    int nv = int(m.vertices.size());
    if (j["macro_of"].size() != j["elements"].size())
        throw std::invalid_argument("mesh file: macro_of length mismatch");
    int idx = 0;
    for (const auto& je : j["elements"]) {
        MeshElement el;
        std::string shape = je.at("shape").get<std::string>();
        if (shape != "quad" && shape != "triangle")
            throw std::invalid_argument("mesh file: bad shape " + shape);
        el.quad = shape == "quad";
        auto verts = je.at("verts").get<std::vector<int>>();
        if (int(verts.size()) != el.nv()) throw std::invalid_argument("mesh file: bad vertex count");
        for (int v : verts)
            if (v < 0 || v >= nv) throw std::invalid_argument("mesh file: vertex id out of range");
        std::copy(verts.begin(), verts.end(), el.verts.begin());
        el.kind = detail::kind_from_name(je.at("kind").get<std::string>());
        if (je.at("parent").is_null()) {
            el.parent = -1;
        } else {
            el.parent = je.at("parent").get<int>();
            if (el.parent < 0 || el.parent >= idx)
                throw std::invalid_argument("mesh file: parent must precede child");
        }
        auto ratio = je.at("area_ratio").get<std::vector<std::int64_t>>();
        if (ratio.size() != 2 || ratio[0] <= 0 || ratio[1] <= 0)
            throw std::invalid_argument("mesh file: bad area_ratio");
        el.area_ratio = {ratio[0], ratio[1]};
        el.macro = j["macro_of"][idx].get<int>();
        m.elements.push_back(el);
        if (el.parent >= 0) {
            MeshElement& p = m.elements[el.parent];
            if (p.n_children == 4) throw std::invalid_argument("mesh file: too many children");
            p.children[p.n_children++] = idx;
        }
        ++idx;
    }
    for (int e = 0; e < idx; ++e) {
        const MeshElement& el = m.elements[e];
        if (el.macro < 0 || el.macro >= idx || m.elements[el.macro].parent >= 0)
            throw std::invalid_argument("mesh file: macro_of must point at an initial element");
        if (m.is_active(e) && m.element_area(e) <= 0)
            throw std::invalid_argument("mesh file: element not positively oriented");
    }
    // rebuild the edge-midpoint index from exact coordinates
    std::map<std::pair<std::uint64_t, std::uint64_t>, int> at;
    for (int v = 0; v < nv; ++v)
        at[{detail::coord_key(m.vertices[v].x), detail::coord_key(m.vertices[v].y)}] = v;
    auto try_register = [&](int a, int b) {
        Vec2 mid = (m.vertices[a] + m.vertices[b]) * 0.5;
        auto it = at.find({detail::coord_key(mid.x), detail::coord_key(mid.y)});
        if (it != at.end() && m.find_midpoint(a, b) < 0) m.register_midpoint(a, b, it->second);
    };
    for (const MeshElement& el : m.elements) {
        int n = el.nv();
        for (int k = 0; k < n; ++k) try_register(el.verts[k], el.verts[(k + 1) % n]);
        if (el.quad) {
            try_register(el.verts[0], el.verts[2]);
            try_register(el.verts[1], el.verts[3]);
        }
    }
    for (const auto& jh : j["hanging"]) {
        HangingNode h;
        h.vertex = jh.at("vertex").get<int>();
        auto edge = jh.at("edge").get<std::vector<int>>();
        if (edge.size() != 2) throw std::invalid_argument("mesh file: bad hanging edge");
        h.a = edge[0];
        h.b = edge[1];
        for (int v : {h.vertex, h.a, h.b})
            if (v < 0 || v >= nv) throw std::invalid_argument("mesh file: hanging id out of range");
        Vec2 mid = (m.vertices[h.a] + m.vertices[h.b]) * 0.5;
        if (norm(m.vertices[h.vertex] - mid) > 1e-12)
            throw std::invalid_argument("mesh file: hanging vertex not at edge midpoint");
        m.hanging.push_back(h);
    }
    return m;
}

inline void save_mesh(const Mesh& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << mesh_to_json(m).dump(1) << "\n";
}

inline Mesh load_mesh(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    nlohmann::json j;
    in >> j;
    return mesh_from_json(j);
}

/// Legacy VTK (3.0, ASCII, POLYGONS) of the active elements, with the
/// generation as cell data.
inline void write_vtk(const Mesh& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    std::vector<int> active = m.active_elements();
    out << "# vtk DataFile Version 3.0\nh1stab mesh\nASCII\nDATASET POLYDATA\n";
    out << "POINTS " << m.vertices.size() << " double\n";
    out.precision(17);
    for (const Vec2& v : m.vertices) out << v.x << " " << v.y << " 0\n";
    std::size_t list_len = 0;
    for (int e : active) list_len += 1 + m.elements[e].nv();
    out << "POLYGONS " << active.size() << " " << list_len << "\n";
    for (int e : active) {
        out << m.elements[e].nv();
        for (int k = 0; k < m.elements[e].nv(); ++k) out << " " << m.elements[e].verts[k];
        out << "\n";
    }
    out << "CELL_DATA " << active.size() << "\nSCALARS generation double 1\nLOOKUP_TABLE default\n";
    for (int e : active) out << m.elements[e].gen() << "\n";
}

inline nlohmann::json report_to_json(const StabilityReport& r) {
    nlohmann::json j;
    j["mu"] = r.mu;
    j["p"] = r.p;
    j["verdict"] = r.verdict == Verdict::Stable ? "Stable" : "NotCertified";
    j["min_lambda"] = r.min_lambda;
    j["worst_element"] = r.worst_element;
    j["mu_bound_ok"] = r.mu_bound_ok;
    j["mu_bound"] = {{"max_excess", r.mu_diag.max_excess},
                     {"c_mu", r.mu_diag.c_mu},
                     {"alpha0", r.mu_diag.alpha0},
                     {"n_initial_vertices", r.mu_diag.n_initial_vertices},
                     {"max_gen_gap_at_vertex", r.mu_diag.max_gen_gap_at_vertex}};
    j["hz_over_ht"] = {{"min", r.min_hz_over_ht}, {"max", r.max_hz_over_ht}};
    j["max_ht_over_hz"] = r.max_ht_over_hz;
    j["notes"] = r.notes;
    j["per_element"] = nlohmann::json::array();
    for (auto [e, lam] : r.per_element) j["per_element"].push_back({{"element", e}, {"lambda_min", lam}});
    return j;
}

}  // namespace h1stab
