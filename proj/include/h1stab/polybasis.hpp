#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "h1stab/common.hpp"

namespace h1stab {

enum class ElemShape { Triangle, Square };

enum class NodeKind { Vertex, Edge, Interior };

struct RefNode {
    double x = 0.0;
    double y = 0.0;
    NodeKind kind = NodeKind::Interior;
    int edge_id = -1;  // valid when kind == Edge
};

/// Reference element with the uniform Lagrange node layout.
///
/// Node order is lexicographic in (j, i): squares run over the tensor grid
/// (i/p, j/p), triangles over the principal lattice i + j <= p.
/// Edge ids: 0 bottom (y=0), 1 right / hypotenuse, 2 top (square only), 3 left;
/// the triangle uses 0 bottom, 1 hypotenuse (x+y=1), 2 left.
struct RefElement {
    ElemShape shape = ElemShape::Square;
    int degree = 1;
    std::vector<RefNode> nodes;
    std::array<int, 4> corners{-1, -1, -1, -1};  // node ids of the vertices, ccw from origin

    int n_vertices() const { return shape == ElemShape::Triangle ? 3 : 4; }
};

inline RefElement make_ref_element(ElemShape shape, int p) {
    if (p < 1 || p > 12) throw std::out_of_range("polynomial degree must be in [1, 12]");
    RefElement el;
    el.shape = shape;
    el.degree = p;
    auto classify_square = [p](int i, int j) -> RefNode {
        double x = double(i) / p, y = double(j) / p;
        bool x0 = i == 0, x1 = i == p, y0 = j == 0, y1 = j == p;
        if ((x0 || x1) && (y0 || y1)) return {x, y, NodeKind::Vertex, -1};
        if (y0) return {x, y, NodeKind::Edge, 0};
        if (x1) return {x, y, NodeKind::Edge, 1};
        if (y1) return {x, y, NodeKind::Edge, 2};
        if (x0) return {x, y, NodeKind::Edge, 3};
        return {x, y, NodeKind::Interior, -1};
    };
    auto classify_tri = [p](int i, int j) -> RefNode {
        double x = double(i) / p, y = double(j) / p;
        bool x0 = i == 0, y0 = j == 0, hyp = i + j == p;
        if ((x0 && y0) || (y0 && hyp) || (x0 && hyp)) return {x, y, NodeKind::Vertex, -1};
        if (y0) return {x, y, NodeKind::Edge, 0};
        if (hyp) return {x, y, NodeKind::Edge, 1};
        if (x0) return {x, y, NodeKind::Edge, 2};
        return {x, y, NodeKind::Interior, -1};
    };
    if (shape == ElemShape::Square) {
        for (int j = 0; j <= p; ++j)
            for (int i = 0; i <= p; ++i) el.nodes.push_back(classify_square(i, j));
        el.corners = {0, p, (p + 1) * (p + 1) - 1, p * (p + 1)};  // (0,0),(1,0),(1,1),(0,1)
    } else {
        for (int j = 0; j <= p; ++j)
            for (int i = 0; i <= p - j; ++i) el.nodes.push_back(classify_tri(i, j));
        el.corners = {0, p, int(el.nodes.size()) - 1, -1};  // (0,0),(1,0),(0,1)
    }
    return el;
}

/// 1-D Lagrange cardinal values at the uniform nodes {k/p}, barycentric form.
inline std::vector<double> eval_lagrange_1d(int p, double t) {
    std::vector<double> out(p + 1, 0.0);
    // barycentric weights for uniform nodes: w_k ∝ (-1)^k C(p,k)
    std::vector<double> w(p + 1);
    w[0] = 1.0;
    for (int k = 1; k <= p; ++k) w[k] = -w[k - 1] * double(p - k + 1) / double(k);
    for (int k = 0; k <= p; ++k) {
        double d = t - double(k) / p;
        if (std::abs(d) < 1e-14) {
            out.assign(p + 1, 0.0);
            out[k] = 1.0;
            return out;
        }
        out[k] = w[k] / d;
    }
    double s = 0.0;
    for (double v : out) s += v;
    for (double& v : out) v /= s;
    return out;
}

/// Values of all Lagrange basis functions at (x, y) inside the reference domain.
inline std::vector<double> eval_basis(const RefElement& el, double x, double y) {
    const double tol = 1e-12;
    int p = el.degree;
    if (el.shape == ElemShape::Square) {
        if (x < -tol || x > 1 + tol || y < -tol || y > 1 + tol)
            throw std::domain_error("point outside reference square");
        auto lx = eval_lagrange_1d(p, x);
        auto ly = eval_lagrange_1d(p, y);
        std::vector<double> out;
        out.reserve(el.nodes.size());
        for (int j = 0; j <= p; ++j)
            for (int i = 0; i <= p; ++i) out.push_back(lx[i] * ly[j]);
        return out;
    }
    if (x < -tol || y < -tol || x + y > 1 + tol)
        throw std::domain_error("point outside reference triangle");
    // cardinal product formula on the principal lattice
    std::vector<double> out;
    out.reserve(el.nodes.size());
    double z = 1.0 - x - y;
    for (int j = 0; j <= p; ++j)
        for (int i = 0; i <= p - j; ++i) {
            int k = p - i - j;
            double v = 1.0;
            for (int r = 0; r < i; ++r) v *= (p * x - r) / double(i - r);
            for (int s = 0; s < j; ++s) v *= (p * y - s) / double(j - s);
            for (int t = 0; t < k; ++t) v *= (p * z - t) / double(k - t);
            out.push_back(v);
        }
    return out;
}

}  // namespace h1stab
