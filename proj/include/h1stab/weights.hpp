#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <mutex>
#include <set>
#include <vector>

#include "h1stab/common.hpp"
#include "h1stab/eig.hpp"
#include "h1stab/integrate.hpp"
#include "h1stab/polybasis.hpp"

namespace h1stab {

enum class Strategy { QR, QRG, QRB, Triangle };

/// Attainable element generations of a refinement strategy, as offsets within
/// one period of 2: gen(T) ∈ {offset + 2k}.  The 8/3 area factor of green-2
/// and blue children contributes the exact offset log2(8/3) = 3 - log2(3).
struct GenerationSet {
    Strategy strategy = Strategy::QR;
    std::vector<GenValue> offsets;

    static GenerationSet make(Strategy s) {
        switch (s) {
            case Strategy::QR: return {s, {{0, 0}}};
            case Strategy::QRG: return {s, {{0, 0}, {1, 0}, {3, 1}}};
            case Strategy::QRB: return {s, {{0, 0}, {3, 1}}};
            case Strategy::Triangle: return {s, {{0, 0}, {1, 0}}};
        }
        throw std::invalid_argument("unknown strategy");
    }

    /// Union of the quadrilateral strategies' offsets, used for the reference
    /// tables of affine parallelogram elements.
    static GenerationSet quad_union() { return {Strategy::QRG, {{0, 0}, {1, 0}, {3, 1}}}; }

    bool contains(GenValue g) const {
        for (const GenValue& o : offsets) {
            GenValue d = g - o;
            if (d.b == 0 && d.a >= 0 && d.a % 2 == 0) return true;
        }
        return false;
    }
};

/// Normalized per-vertex exponent assignment: h_z = 2^{-e_z/2}, min e_z = 0.
struct WeightConfig {
    std::vector<double> exponents;
    double mu = 2.0;
};

/// Per-node weights h_a^+ and h_a^- (interpolated separately off the vertices).
struct NodeWeights {
    std::vector<double> h_plus;
    std::vector<double> h_minus;
};

/// Exponent values attainable as differences of two generations reduced by a
/// multiple of mu, folded into [0, span].  Exact GenValue bookkeeping keeps
/// log2(8/3) offsets from collapsing under a float tolerance.
inline std::vector<double> exponent_candidates(const GenerationSet& gs, double mu, double span) {
    int imu = int(std::lround(mu));
    if (std::abs(mu - imu) > 1e-12 || imu < 1 || imu > 4)
        throw std::invalid_argument("mu must be one of 1, 2, 3, 4");
    if (gs.offsets.empty()) throw std::invalid_argument("empty generation set");
    std::set<std::pair<std::int64_t, std::int64_t>> seen;
    std::vector<double> out;
    for (const GenValue& o1 : gs.offsets)
        for (const GenValue& o2 : gs.offsets) {
            GenValue base = o1 - o2;
            for (int m = -16; m <= 16; ++m)
                for (int j = -16; j <= 16; ++j) {
                    GenValue v{base.a + 2 * m - imu * j, base.b};
                    double val = v.value();
                    if (val < -1e-12 || val > span + 1e-12) continue;
                    if (seen.insert({v.a, v.b}).second) out.push_back(std::max(0.0, val));
                }
        }
    std::sort(out.begin(), out.end());
    return out;
}

namespace detail {

/// Index permutations of the square's corners (order (0,0),(1,0),(1,1),(0,1))
/// under the dihedral group, and of the triangle's corners under S3.
inline const std::vector<std::array<int, 4>>& corner_symmetries(int n_vertices) {
    static const std::vector<std::array<int, 4>> quad = [] {
        std::array<Vec2, 4> pts{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
        std::vector<std::array<Vec2, 4>> images;
        auto apply = [&](auto f) {
            std::array<Vec2, 4> im;
            for (int i = 0; i < 4; ++i) im[i] = f(pts[i]);
            images.push_back(im);
        };
        apply([](Vec2 v) { return Vec2{v.x, v.y}; });
        apply([](Vec2 v) { return Vec2{1 - v.y, v.x}; });
        apply([](Vec2 v) { return Vec2{1 - v.x, 1 - v.y}; });
        apply([](Vec2 v) { return Vec2{v.y, 1 - v.x}; });
        apply([](Vec2 v) { return Vec2{1 - v.x, v.y}; });
        apply([](Vec2 v) { return Vec2{v.x, 1 - v.y}; });
        apply([](Vec2 v) { return Vec2{v.y, v.x}; });
        apply([](Vec2 v) { return Vec2{1 - v.y, 1 - v.x}; });
        std::vector<std::array<int, 4>> perms;
        for (const auto& im : images) {
            std::array<int, 4> perm{};
            for (int i = 0; i < 4; ++i)
                for (int k = 0; k < 4; ++k)
                    if (im[i] == pts[k]) perm[i] = k;
            perms.push_back(perm);
        }
        return perms;
    }();
    static const std::vector<std::array<int, 4>> tri = [] {
        std::vector<std::array<int, 4>> perms;
        std::array<int, 3> base{0, 1, 2};
        std::sort(base.begin(), base.end());
        do perms.push_back({base[0], base[1], base[2], -1});
        while (std::next_permutation(base.begin(), base.end()));
        return perms;
    }();
    return n_vertices == 4 ? quad : tri;
}

inline std::vector<double> permuted(const std::vector<double>& e, const std::array<int, 4>& perm) {
    std::vector<double> out(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) out[perm[i]] = e[i];
    return out;
}

}  // namespace detail

/// All normalized exponent tuples over the candidate set with min = 0.
/// With reduce_by_symmetry the list is quotiented by the reference element's
/// symmetry group (valid when the pencil is symmetry-invariant, i.e. affine).
inline std::vector<WeightConfig> enumerate_configs(const GenerationSet& gs, double mu,
                                                   int n_vertices, bool reduce_by_symmetry = false) {
    if (n_vertices != 3 && n_vertices != 4)
        throw std::invalid_argument("n_vertices must be 3 or 4");
    std::vector<double> cand = exponent_candidates(gs, mu, mu);
    const auto& perms = detail::corner_symmetries(n_vertices);
    std::set<std::vector<double>> seen;
    std::vector<WeightConfig> out;
    std::vector<int> idx(n_vertices, 0);
    while (true) {
        std::vector<double> e(n_vertices);
        for (int i = 0; i < n_vertices; ++i) e[i] = cand[idx[i]];
        if (*std::min_element(e.begin(), e.end()) == 0.0) {
            std::vector<double> key = e;
            if (reduce_by_symmetry) {
                for (const auto& perm : perms) key = std::min(key, detail::permuted(e, perm));
            }
            if (seen.insert(key).second) out.push_back({key, mu});
        }
        int d = n_vertices - 1;
        while (d >= 0 && ++idx[d] == int(cand.size())) idx[d--] = 0;
        if (d < 0) break;
    }
    return out;
}

/// Weights for every Lagrange node from the vertex exponents: vertices carry
/// h^± = 2^{∓e/2}; everything else interpolates the two families separately
/// (1-D along edges, bilinear / barycentric inside).
inline NodeWeights node_weights(const RefElement& el, const WeightConfig& cfg) {
    int nv = el.n_vertices();
    if (int(cfg.exponents.size()) != nv)
        throw std::invalid_argument("config must carry one exponent per vertex");
    std::array<double, 4> hp{}, hm{};
    for (int v = 0; v < nv; ++v) {
        hp[v] = std::exp2(-0.5 * cfg.exponents[v]);
        hm[v] = std::exp2(0.5 * cfg.exponents[v]);
    }
    NodeWeights w;
    w.h_plus.reserve(el.nodes.size());
    w.h_minus.reserve(el.nodes.size());
    for (const RefNode& n : el.nodes) {
        if (el.shape == ElemShape::Square) {
            auto bilin = [&](const std::array<double, 4>& c) {
                return c[0] * (1 - n.x) * (1 - n.y) + c[1] * n.x * (1 - n.y) +
                       c[2] * n.x * n.y + c[3] * (1 - n.x) * n.y;
            };
            w.h_plus.push_back(bilin(hp));
            w.h_minus.push_back(bilin(hm));
        } else {
            auto bary = [&](const std::array<double, 4>& c) {
                return c[0] * (1 - n.x - n.y) + c[1] * n.x + c[2] * n.y;
            };
            w.h_plus.push_back(bary(hp));
            w.h_minus.push_back(bary(hm));
        }
    }
    return w;
}

/// (A)_ab = (h_a^+ h_b^- + h_b^+ h_a^-)/2 * (M)_ab.
inline Matrix assemble_a(const Matrix& mass, const NodeWeights& w) {
    int n = mass.rows();
    if (int(w.h_plus.size()) != n || int(w.h_minus.size()) != n)
        throw std::invalid_argument("assemble_a: dimension mismatch");
    for (int i = 0; i < n; ++i)
        if (!(w.h_plus[i] > 0.0) || !(w.h_minus[i] > 0.0))
            throw std::invalid_argument("assemble_a: non-positive weight");
    Matrix a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            a(i, j) = 0.5 * (w.h_plus[i] * w.h_minus[j] + w.h_plus[j] * w.h_minus[i]) * mass(i, j);
    return a;
}

/// Pencil of the bilinear-map eigenproblem: Â = A_L + c1 A_x + c2 A_y,
/// M̂ = M_L + c1 M_x + c2 M_y with c1 = β/h_y, c2 = (α - βs)/h_x.
inline SymPair general_quad_pencils(const MassMatrices& mass, const NodeWeights& w,
                                    double c1, double c2) {
    Matrix a = assemble_a(mass.m_l, w);
    Matrix m = mass.m_l;
    if (c1 != 0.0) {
        a = a + scaled(assemble_a(mass.m_x, w), c1);
        m = m + scaled(mass.m_x, c1);
    }
    if (c2 != 0.0) {
        a = a + scaled(assemble_a(mass.m_y, w), c2);
        m = m + scaled(mass.m_y, c2);
    }
    return {std::move(a), std::move(m)};
}

/// Geometry family a table column sweeps over.
struct GeometryCase {
    enum class Kind { Affine, GeneralQuad, QRBQuad } kind = Kind::Affine;
    double c = 0.25;  // nonlinearity bound for GeneralQuad

    static GeometryCase affine() { return {Kind::Affine, 0.0}; }
    static GeometryCase general_quad(double c) { return {Kind::GeneralQuad, c}; }
    static GeometryCase qrb_quad() { return {Kind::QRBQuad, 0.0}; }

    /// (c1, c2) combinations that must be checked: the four box corners plus
    /// the origin for the general case, the blue-pattern values for Q-RB.
    std::vector<std::pair<double, double>> combos() const {
        switch (kind) {
            case Kind::Affine: return {{0.0, 0.0}};
            case Kind::GeneralQuad:
                return {{-c, -2 * c}, {c, -2 * c}, {-c, 2 * c}, {c, 2 * c}, {0.0, 0.0}};
            case Kind::QRBQuad: return {{0.0, -0.5}, {0.0, 0.0}, {0.0, 1.0}};
        }
        return {};
    }
};

/// Minimum of lambda_min over every weight configuration and geometry corner;
/// the table generator behind the appendix tables without hanging nodes.
inline double min_lambda_table(ElemShape shape, int p, const GenerationSet& gs, double mu,
                               const GeometryCase& geom) {
    RefElement el = make_ref_element(shape, p);
    MassMatrices mass = mass_matrices(el);
    auto combos = geom.combos();
    // Symmetry reduction of configurations is only valid when the pencil is
    // invariant under corner relabeling, which fails once M_x / M_y enter.
    bool affine = geom.kind == GeometryCase::Kind::Affine;
    std::vector<WeightConfig> cfgs = enumerate_configs(gs, mu, el.n_vertices(), affine);

    std::vector<CholeskyFactor> factors;
    for (auto [c1, c2] : combos) {
        Matrix m = mass.m_l;
        if (c1 != 0.0) m = m + scaled(mass.m_x, c1);
        if (c2 != 0.0) m = m + scaled(mass.m_y, c2);
        factors.emplace_back(std::move(m));
    }

    std::vector<double> partial(cfgs.size(), 0.0);
    std::exception_ptr error;
    std::mutex error_mutex;
    parallel_chunks(cfgs.size(), [&](std::size_t b, std::size_t e) {
        try {
            for (std::size_t i = b; i < e; ++i) {
                const NodeWeights w = node_weights(el, cfgs[i]);
                Matrix al = assemble_a(mass.m_l, w);
                double best = std::numeric_limits<double>::infinity();
                for (std::size_t c = 0; c < combos.size(); ++c) {
                    auto [c1, c2] = combos[c];
                    Matrix a = al;
                    if (c1 != 0.0) a = a + scaled(assemble_a(mass.m_x, w), c1);
                    if (c2 != 0.0) a = a + scaled(assemble_a(mass.m_y, w), c2);
                    best = std::min(best, factors[c].lambda_min(a));
                }
                partial[i] = best;
            }
        } catch (...) {
            std::scoped_lock lock(error_mutex);
            if (!error) error = std::current_exception();
        }
    });
    if (error) std::rethrow_exception(error);
    double out = std::numeric_limits<double>::infinity();
    for (double v : partial) out = std::min(out, v);
    return out;
}

}  // namespace h1stab
