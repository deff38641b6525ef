#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "h1stab/eig.hpp"
#include "h1stab/hanging.hpp"
#include "h1stab/mesh.hpp"
#include "h1stab/weights.hpp"

namespace h1stab {

/// Parameters of the bilinear map B(x,y) = (x0,y0) + R(theta) [S H (x,y) + (a xy, b xy)].
struct BilinearParams {
    double x0 = 0, y0 = 0, theta = 0, s = 0;
    double h_x = 1, h_y = 1, alpha = 0, beta = 0;
    double c1 = 0;  // beta / h_y
    double c2 = 0;  // (alpha - beta s) / h_x
};

/// Recover the map parameters from the four ccw corners (B(0,0), B(1,0),
/// B(1,1), B(0,1)); throws on degenerate quadrilaterals.
inline BilinearParams extract_bilinear_params(const std::array<Vec2, 4>& q) {
    BilinearParams bp;
    bp.x0 = q[0].x;
    bp.y0 = q[0].y;
    Vec2 u = q[1] - q[0];
    bp.h_x = norm(u);
    if (bp.h_x < 1e-14) throw std::invalid_argument("degenerate quadrilateral: zero-length base");
    bp.theta = std::atan2(u.y, u.x);
    double c = std::cos(bp.theta), s = std::sin(bp.theta);
    auto unrotate = [&](Vec2 v) { return Vec2{c * v.x + s * v.y, -s * v.x + c * v.y}; };
    Vec2 v = unrotate(q[3] - q[0]);
    bp.h_y = v.y;
    if (bp.h_y < 1e-14) throw std::invalid_argument("degenerate quadrilateral: zero or negative height");
    bp.s = v.x / bp.h_y;
    Vec2 w = unrotate(q[2] - q[0]);
    bp.alpha = w.x - bp.h_x - bp.s * bp.h_y;
    bp.beta = w.y - bp.h_y;
    bp.c1 = bp.beta / bp.h_y;
    bp.c2 = (bp.alpha - bp.beta * bp.s) / bp.h_x;
    // the Jacobian determinant h_x h_y (1 + c1 x + c2 y) must stay positive
    for (double x : {0.0, 1.0})
        for (double y : {0.0, 1.0})
            if (1.0 + bp.c1 * x + bp.c2 * y <= 1e-12)
                throw std::invalid_argument("degenerate quadrilateral: vanishing Jacobian");
    return bp;
}

/// Forward evaluation of the map, for round-trip validation.
inline Vec2 bilinear_map(const BilinearParams& bp, double x, double y) {
    double px = bp.h_x * x + bp.s * bp.h_y * y + bp.alpha * x * y;
    double py = bp.h_y * y + bp.beta * x * y;
    double c = std::cos(bp.theta), s = std::sin(bp.theta);
    return {bp.x0 + c * px - s * py, bp.y0 + s * px + c * py};
}

enum class Verdict { Stable, NotCertified };

struct StabilityReport {
    double mu = 2.0;
    int p = 1;
    std::vector<std::pair<int, double>> per_element;  // (element id, lambda_min)
    double min_lambda = 1.0;
    int worst_element = -1;
    bool mu_bound_ok = true;
    MuBoundDiagnostics mu_diag;
    Verdict verdict = Verdict::Stable;
    std::vector<std::string> notes;
    double min_hz_over_ht = 0.0;  // Lemma-3.2 hypothesis, measured
    double max_hz_over_ht = 0.0;
    double max_ht_over_hz = 0.0;
};

namespace detail {

/// Quantized cache key so identical local pencils are solved once per mesh.
struct PencilKey {
    std::vector<std::int64_t> q;
    bool operator<(const PencilKey& o) const { return q < o.q; }
};

inline std::int64_t quantize(double v) { return std::llround(v * 1e9); }

struct CertifyContext {
    int p;
    RefElement quad_el, tri_el;
    MassMatrices quad_mass, tri_mass;
    std::optional<CholeskyFactor> tri_factor;
    std::map<double, CholeskyFactor> quad_factors;  // keyed by c2 (c1 = 0 on our meshes)
    std::map<int, HangingPatch> patches;
    std::map<int, CholeskyFactor> patch_factors;
    std::map<PencilKey, double> cache;

    explicit CertifyContext(int p_)
        : p(p_),
          quad_el(make_ref_element(ElemShape::Square, p_)),
          tri_el(make_ref_element(ElemShape::Triangle, p_)),
          quad_mass(mass_matrices(quad_el)),
          tri_mass(mass_matrices(tri_el)) {}
};

inline double solve_triangle(CertifyContext& ctx, const std::array<double, 3>& expo) {
    double lo = std::min({expo[0], expo[1], expo[2]});
    PencilKey key{{0, quantize(expo[0] - lo), quantize(expo[1] - lo), quantize(expo[2] - lo)}};
    auto it = ctx.cache.find(key);
    if (it != ctx.cache.end()) return it->second;
    WeightConfig cfg{{expo[0] - lo, expo[1] - lo, expo[2] - lo}, 0};
    NodeWeights w = node_weights(ctx.tri_el, cfg);
    if (!ctx.tri_factor) ctx.tri_factor.emplace(ctx.tri_mass.m_l);
    double lam = ctx.tri_factor->lambda_min(assemble_a(ctx.tri_mass.m_l, w));
    ctx.cache.emplace(key, lam);
    return lam;
}

inline double solve_quad(CertifyContext& ctx, const std::array<double, 4>& expo, double c1, double c2) {
    double lo = std::min({expo[0], expo[1], expo[2], expo[3]});
    PencilKey key{{1, quantize(expo[0] - lo), quantize(expo[1] - lo), quantize(expo[2] - lo),
                   quantize(expo[3] - lo), quantize(c1), quantize(c2)}};
    auto it = ctx.cache.find(key);
    if (it != ctx.cache.end()) return it->second;
    WeightConfig cfg{{expo[0] - lo, expo[1] - lo, expo[2] - lo, expo[3] - lo}, 0};
    NodeWeights w = node_weights(ctx.quad_el, cfg);
    SymPair pencil = general_quad_pencils(ctx.quad_mass, w, c1, c2);
    double lam;
    if (std::abs(c1) < 1e-12) {
        double c2key = std::round(c2 * 1e9) / 1e9;
        auto fit = ctx.quad_factors.find(c2key);
        if (fit == ctx.quad_factors.end())
            fit = ctx.quad_factors.emplace(c2key, CholeskyFactor(pencil.m)).first;
        lam = fit->second.lambda_min(pencil.a);
    } else {
        lam = lambda_min(pencil);
    }
    ctx.cache.emplace(key, lam);
    return lam;
}

inline double solve_hanging(CertifyContext& ctx, int nh, const PatchExponents& e) {
    double lo = std::min({e.z1, e.z2, e.z3, e.w_b, e.w_l});
    PencilKey key{{2 + nh, quantize(e.z1 - lo), quantize(e.z2 - lo), quantize(e.z3 - lo),
                   quantize(e.w_b - lo), quantize(e.w_l - lo)}};
    auto it = ctx.cache.find(key);
    if (it != ctx.cache.end()) return it->second;
    auto pit = ctx.patches.find(nh);
    if (pit == ctx.patches.end()) {
        pit = ctx.patches.emplace(nh, build_patch(ctx.p, nh)).first;
        ctx.patch_factors.emplace(nh, CholeskyFactor(pit->second.mass));
    }
    NodeWeights w = patch_node_weights(pit->second, e);
    double lam = ctx.patch_factors.at(nh).lambda_min(assemble_a(pit->second.mass, w));
    ctx.cache.emplace(key, lam);
    return lam;
}

}  // namespace detail

/// Certify H1-stability of a concrete mesh for degree p and grading mu:
/// computes the Def.-3.5 weights from the actual mesh, solves the local
/// eigenvalue problem of every element (affine, bilinear or hanging-node
/// constrained), and combines the sign check with the Lemma-4.4 bound.
inline StabilityReport certify(const Mesh& mesh, int p, double mu) {
    StabilityReport rep;
    rep.mu = mu;
    rep.p = p;
    bool has_hanging = !mesh.hanging.empty();
    if (p < 1 || (has_hanging ? p > 5 : p > 9))
        throw std::invalid_argument(has_hanging ? "hanging-node certification supports p in [1, 5]"
                                                : "certification supports p in [1, 9]");

    Topology topo = build_topology(mesh);
    std::vector<double> expo = detail::weight_exponents(mesh, topo, mu);
    rep.mu_diag = check_mu_bound(mesh, mu);
    rep.mu_bound_ok = rep.mu_diag.ok;

    std::map<int, const HangingNode*> hang_by_vertex;
    for (const HangingNode& h : mesh.hanging) hang_by_vertex[h.vertex] = &h;

    detail::CertifyContext ctx(p);
    rep.min_lambda = std::numeric_limits<double>::infinity();
    rep.min_hz_over_ht = std::numeric_limits<double>::infinity();
    rep.max_hz_over_ht = 0.0;
    rep.max_ht_over_hz = 0.0;

    for (std::size_t pos = 0; pos < topo.active.size(); ++pos) {
        int eid = topo.active[pos];
        const MeshElement& el = mesh.elements[eid];
        auto corners = mesh.corner_ids(eid);

        double h_t = 0.0;
        for (std::size_t i = 0; i < corners.size(); ++i)
            for (std::size_t j = i + 1; j < corners.size(); ++j)
                h_t = std::max(h_t, norm(mesh.vertices[corners[i]] - mesh.vertices[corners[j]]));
        for (int v : topo.elem_vertices[pos]) {
            double hz = std::exp2(-0.5 * expo[v]);
            rep.min_hz_over_ht = std::min(rep.min_hz_over_ht, hz / h_t);
            rep.max_hz_over_ht = std::max(rep.max_hz_over_ht, hz / h_t);
            rep.max_ht_over_hz = std::max(rep.max_ht_over_hz, h_t / hz);
        }

        double lam;
        try {
            if (!el.quad) {
                lam = detail::solve_triangle(ctx, {expo[corners[0]], expo[corners[1]], expo[corners[2]]});
            } else {
                std::vector<int> hang_corner;
                for (int i = 0; i < 4; ++i)
                    if (hang_by_vertex.count(corners[i])) hang_corner.push_back(i);
                if (hang_corner.empty()) {
                    std::array<Vec2, 4> q;
                    for (int i = 0; i < 4; ++i) q[i] = mesh.vertices[corners[i]];
                    BilinearParams bp = extract_bilinear_params(q);
                    lam = detail::solve_quad(
                        ctx, {expo[corners[0]], expo[corners[1]], expo[corners[2]], expo[corners[3]]},
                        bp.c1, bp.c2);
                } else {
                    // map onto the reference patch: shared conforming corner at the
                    // origin, first hanging edge as the local left edge
                    int nh = int(hang_corner.size());
                    if (nh > 2) throw std::logic_error("more than two hanging corners on an element");
                    auto far_end = [&](int corner_pos) {
                        const HangingNode* h = hang_by_vertex.at(corners[corner_pos]);
                        bool has_a = std::find(corners.begin(), corners.end(), h->a) != corners.end();
                        return has_a ? std::make_pair(h->a, h->b) : std::make_pair(h->b, h->a);
                    };
                    PatchExponents pe;
                    if (nh == 1) {
                        int hpos = hang_corner[0];
                        auto [mate, far] = far_end(hpos);
                        int mate_pos = int(std::find(corners.begin(), corners.end(), mate) -
                                           corners.begin());
                        // local frame: z1 = mate, z4 = hanging corner, z3 opposite z1
                        int z2_pos = -1;
                        for (int i = 0; i < 4; ++i)
                            if (i != hpos && i != mate_pos && (i + 2) % 4 != mate_pos) z2_pos = i;
                        int z3_pos = (mate_pos + 2) % 4;
                        pe.z1 = expo[corners[mate_pos]];
                        pe.z2 = expo[corners[z2_pos]];
                        pe.z3 = expo[corners[z3_pos]];
                        pe.w_l = expo[far];
                    } else {
                        auto [mate0, far0] = far_end(hang_corner[0]);
                        auto [mate1, far1] = far_end(hang_corner[1]);
                        if (mate0 != mate1)
                            throw std::logic_error("hanging edges of an element must share a corner");
                        int mate_pos = int(std::find(corners.begin(), corners.end(), mate0) -
                                           corners.begin());
                        pe.z1 = expo[corners[mate_pos]];
                        pe.z3 = expo[corners[(mate_pos + 2) % 4]];
                        // left/bottom roles are symmetric in the patch
                        pe.w_l = expo[far0];
                        pe.w_b = expo[far1];
                    }
                    lam = detail::solve_hanging(ctx, nh, pe);
                }
            }
        } catch (const NotSpdError& err) {
            rep.notes.push_back("element " + std::to_string(eid) + ": " + err.what());
            rep.verdict = Verdict::NotCertified;
            rep.per_element.emplace_back(eid, std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        rep.per_element.emplace_back(eid, lam);
        if (lam < rep.min_lambda) {
            rep.min_lambda = lam;
            rep.worst_element = eid;
        }
    }
    if (rep.min_lambda > 0.0 && rep.mu_bound_ok && rep.notes.empty()) {
        rep.verdict = Verdict::Stable;
    } else {
        rep.verdict = Verdict::NotCertified;
        if (!(rep.min_lambda > 0.0))
            rep.notes.push_back("minimal eigenvalue is not positive");
        if (!rep.mu_bound_ok) rep.notes.push_back("Lemma-4.4 generation bound violated");
    }
    return rep;
}

}  // namespace h1stab
