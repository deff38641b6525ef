#pragma once

#include <algorithm>
#include <cmath>
#include <mutex>
#include <vector>

#include "h1stab/eig.hpp"
#include "h1stab/integrate.hpp"
#include "h1stab/polybasis.hpp"
#include "h1stab/weights.hpp"

namespace h1stab {

/// One basis node of the constrained patch space.
struct PatchNode {
    enum class Kind {
        SharedCorner,  ///< z1, the coarse corner the hanging edges meet at
        Fine,          ///< unconstrained Lagrange node of T, local grid (i, j)
        CoarseLeft,    ///< node k of the left coarse neighbor's edge polynomial
        CoarseBottom,  ///< node k of the bottom coarse neighbor's edge polynomial
    } kind = Kind::Fine;
    int i = 0;
    int j = 0;
    int k = 0;
};

/// The reference situation of Fig.-2 type 1-irregular meshes: T is the fine
/// square [0,1/2]^2 of a red-refined coarse square, with its left edge (and for
/// two hanging nodes also its bottom edge) lying on an unrefined neighbor.
/// In T-local coordinates z1 = (0,0) is the shared conforming corner,
/// z2 = (1,0), z3 = (1,1), z4 = (0,1); z4 (and z2 when n_hanging = 2) hang.
struct HangingPatch {
    int p = 1;
    int n_hanging = 0;
    RefElement element;            // Q_p on T
    std::vector<PatchNode> free_nodes;
    Matrix constraint;             // C: local Lagrange coefficients = C * free values
    Matrix mass;                   // M(T) = C^T M_loc C over free nodes
};

inline HangingPatch build_patch(int p, int n_hanging) {
    if (n_hanging < 0 || n_hanging > 2) throw std::invalid_argument("n_hanging must be 0, 1 or 2");
    if (n_hanging == 0) {
        if (p < 1 || p > 12) throw std::out_of_range("unsupported degree");
    } else if (p < 1 || p > 5) {
        throw std::out_of_range("hanging-node patches support p in [1, 5]");
    }
    HangingPatch patch;
    patch.p = p;
    patch.n_hanging = n_hanging;
    patch.element = make_ref_element(ElemShape::Square, p);
    int nn = (p + 1) * (p + 1);

    bool left_hangs = n_hanging >= 1;
    bool bottom_hangs = n_hanging == 2;
    std::vector<int> col_of(nn, -1);
    auto local = [p](int i, int j) { return j * (p + 1) + i; };

    if (left_hangs) patch.free_nodes.push_back({PatchNode::Kind::SharedCorner, 0, 0, 0});
    for (int j = 0; j <= p; ++j)
        for (int i = 0; i <= p; ++i) {
            if (left_hangs && i == 0) continue;
            if (bottom_hangs && j == 0) continue;
            col_of[local(i, j)] = int(patch.free_nodes.size());
            patch.free_nodes.push_back({PatchNode::Kind::Fine, i, j, 0});
        }
    int left_base = int(patch.free_nodes.size());
    if (left_hangs)
        for (int k = 1; k <= p; ++k) patch.free_nodes.push_back({PatchNode::Kind::CoarseLeft, 0, 0, k});
    int bottom_base = int(patch.free_nodes.size());
    if (bottom_hangs)
        for (int k = 1; k <= p; ++k) patch.free_nodes.push_back({PatchNode::Kind::CoarseBottom, 0, 0, k});

    patch.constraint = Matrix(nn, int(patch.free_nodes.size()));
    Matrix& c = patch.constraint;
    for (int j = 0; j <= p; ++j)
        for (int i = 0; i <= p; ++i) {
            int row = local(i, j);
            if (col_of[row] >= 0) {
                c(row, col_of[row]) = 1.0;
            } else if (i == 0 && j == 0) {
                c(row, 0) = 1.0;  // the shared corner is its own degree of freedom
            } else if (left_hangs && i == 0) {
                // T's edge is the near half of the coarse edge: coarse parameter j/(2p)
                std::vector<double> card = eval_lagrange_1d(p, double(j) / (2 * p));
                c(row, 0) = card[0];
                for (int k = 1; k <= p; ++k) c(row, left_base + k - 1) = card[k];
            } else {
                std::vector<double> card = eval_lagrange_1d(p, double(i) / (2 * p));
                c(row, 0) = card[0];
                for (int k = 1; k <= p; ++k) c(row, bottom_base + k - 1) = card[k];
            }
        }

    // |T| = 1/4 in the coarse frame's units
    Matrix m_loc = scaled(mass_matrices(patch.element).m_l, 0.25);
    patch.mass = patch.constraint.transposed() * (m_loc * patch.constraint);
    for (int i = 0; i < patch.mass.rows(); ++i)
        for (int j = 0; j < i; ++j) {
            double v = 0.5 * (patch.mass(i, j) + patch.mass(j, i));
            patch.mass(i, j) = patch.mass(j, i) = v;
        }
    return patch;
}

/// Exponents carried by the conforming vertices around the patch.  Entries
/// irrelevant for the given n_hanging are ignored (hanging vertices never own
/// a weight; their value interpolates along the coarse edge).
struct PatchExponents {
    double z1 = 0;  ///< shared coarse corner (0,0)
    double z2 = 0;  ///< T corner (1,0); a variable unless it hangs (n_hanging = 2)
    double z3 = 0;  ///< T corner (1,1), the red-refinement center
    double z4 = 0;  ///< T corner (0,1); a variable only when nothing hangs
    double w_b = 0; ///< far end of the bottom coarse edge
    double w_l = 0; ///< far end of the left coarse edge
};

/// Weights of the patch's free nodes under the calibrated interpolation rule:
/// conforming vertices carry 2^{∓e/2}; coarse-edge nodes interpolate linearly
/// between the coarse edge's endpoints; hanging corners take the coarse-edge
/// value at the midpoint; fine nodes interpolate the corner values bilinearly.
/// The h^+ and h^- families interpolate independently throughout.
inline NodeWeights patch_node_weights(const HangingPatch& patch, const PatchExponents& e) {
    auto hp_of = [](double ex) { return std::exp2(-0.5 * ex); };
    auto hm_of = [](double ex) { return std::exp2(0.5 * ex); };
    bool left_hangs = patch.n_hanging >= 1;
    bool bottom_hangs = patch.n_hanging == 2;
    int p = patch.p;

    std::array<double, 4> hp{}, hm{};  // T corners z1, z2, z3, z4
    hp[0] = hp_of(e.z1); hm[0] = hm_of(e.z1);
    hp[2] = hp_of(e.z3); hm[2] = hm_of(e.z3);
    if (bottom_hangs) {
        hp[1] = 0.5 * (hp_of(e.z1) + hp_of(e.w_b));
        hm[1] = 0.5 * (hm_of(e.z1) + hm_of(e.w_b));
    } else {
        hp[1] = hp_of(e.z2); hm[1] = hm_of(e.z2);
    }
    if (left_hangs) {
        hp[3] = 0.5 * (hp_of(e.z1) + hp_of(e.w_l));
        hm[3] = 0.5 * (hm_of(e.z1) + hm_of(e.w_l));
    } else {
        hp[3] = hp_of(e.z4); hm[3] = hm_of(e.z4);
    }
    auto bilin = [](const std::array<double, 4>& c, double x, double y) {
        return c[0] * (1 - x) * (1 - y) + c[1] * x * (1 - y) + c[2] * x * y + c[3] * (1 - x) * y;
    };

    NodeWeights w;
    for (const PatchNode& n : patch.free_nodes) {
        switch (n.kind) {
            case PatchNode::Kind::SharedCorner:
                w.h_plus.push_back(hp_of(e.z1));
                w.h_minus.push_back(hm_of(e.z1));
                break;
            case PatchNode::Kind::Fine: {
                double x = double(n.i) / p, y = double(n.j) / p;
                w.h_plus.push_back(bilin(hp, x, y));
                w.h_minus.push_back(bilin(hm, x, y));
                break;
            }
            case PatchNode::Kind::CoarseLeft: {
                double t = double(n.k) / p;
                w.h_plus.push_back((1 - t) * hp_of(e.z1) + t * hp_of(e.w_l));
                w.h_minus.push_back((1 - t) * hm_of(e.z1) + t * hm_of(e.w_l));
                break;
            }
            case PatchNode::Kind::CoarseBottom: {
                double t = double(n.k) / p;
                w.h_plus.push_back((1 - t) * hp_of(e.z1) + t * hp_of(e.w_b));
                w.h_minus.push_back((1 - t) * hm_of(e.z1) + t * hm_of(e.w_b));
                break;
            }
        }
    }
    return w;
}

/// Constrained local pencil (A(T), M(T)) over the patch's free nodes.
inline SymPair patch_pencil(const HangingPatch& patch, const NodeWeights& w) {
    if (int(w.h_plus.size()) != patch.mass.rows())
        throw std::invalid_argument("patch_pencil: weights do not match free nodes");
    return {assemble_a(patch.mass, w), patch.mass};
}

/// Minimum lambda over all weight configurations of the patch; the generator
/// behind the hanging-node tables.  Exponent variables sit on the conforming
/// vertices (z1, z3, the far coarse ends, and z2 when only one edge hangs);
/// pairs not sharing an element admit exponent gaps up to 2*mu.
inline double min_lambda_hanging_table(int p, int n_hanging, double mu) {
    if (n_hanging != 1 && n_hanging != 2) throw std::invalid_argument("n_hanging must be 1 or 2");
    HangingPatch patch = build_patch(p, n_hanging);
    CholeskyFactor factor(patch.mass);
    GenerationSet qr = GenerationSet::make(Strategy::QR);
    std::vector<double> cand = exponent_candidates(qr, mu, 2 * mu);

    // element-chain distances between the exponent variables in the Fig.-2 mesh
    std::vector<double PatchExponents::*> vars;
    Matrix dist(4, 4);
    if (n_hanging == 1) {
        vars = {&PatchExponents::z1, &PatchExponents::z2, &PatchExponents::z3, &PatchExponents::w_l};
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) dist(i, j) = i == j ? 0 : 1;
        dist(1, 3) = dist(3, 1) = 2;  // z2 and w_l share no element
    } else {
        vars = {&PatchExponents::z1, &PatchExponents::z3, &PatchExponents::w_b, &PatchExponents::w_l};
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) dist(i, j) = i == j ? 0 : 1;
        dist(2, 3) = dist(3, 2) = 2;  // the two far coarse ends
    }

    std::vector<std::array<double, 4>> tuples;
    std::array<int, 4> idx{0, 0, 0, 0};
    while (true) {
        std::array<double, 4> t{cand[idx[0]], cand[idx[1]], cand[idx[2]], cand[idx[3]]};
        bool ok = *std::min_element(t.begin(), t.end()) == 0.0;
        for (int i = 0; ok && i < 4; ++i)
            for (int j = i + 1; ok && j < 4; ++j)
                if (std::abs(t[i] - t[j]) > mu * dist(i, j) + 1e-9) ok = false;
        if (ok) tuples.push_back(t);
        int d = 3;
        while (d >= 0 && ++idx[d] == int(cand.size())) idx[d--] = 0;
        if (d < 0) break;
    }

    std::vector<double> partial(tuples.size(), 0.0);
    std::exception_ptr error;
    std::mutex error_mutex;
    parallel_chunks(tuples.size(), [&](std::size_t b, std::size_t en) {
        try {
            for (std::size_t i = b; i < en; ++i) {
                PatchExponents e;
                for (int v = 0; v < 4; ++v) e.*(vars[v]) = tuples[i][v];
                NodeWeights w = patch_node_weights(patch, e);
                partial[i] = factor.lambda_min(assemble_a(patch.mass, w));
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
