#pragma once

#include <cmath>
#include <vector>

#include "h1stab/matrix.hpp"
#include "h1stab/polybasis.hpp"

namespace h1stab {

/// Reference mass matrices: (M_L)_ab = ∫ φ_a φ_b, (M_x)_ab = ∫ φ_a φ_b x̂,
/// (M_y)_ab = ∫ φ_a φ_b ŷ over the reference domain, in RefElement node order.
struct MassMatrices {
    Matrix m_l;
    Matrix m_x;
    Matrix m_y;
};

struct GaussRule {
    std::vector<double> x;
    std::vector<double> w;
};

/// n-point Gauss-Legendre rule on [0, 1]; exact for degree <= 2n-1.
inline GaussRule gauss_legendre_01(int n) {
    GaussRule r;
    r.x.resize(n);
    r.w.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        // Newton iteration from the Chebyshev-based initial guess
        double t = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double pp = 1.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = t;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            pp = n * (t * p1 - p0) / (t * t - 1.0);
            if (t == 0.0 && n % 2 == 1) break;  // middle node is exact
            double dt = p1 / pp;
            t -= dt;
            if (std::abs(dt) < 1e-15) break;
        }
        double w = 2.0 / ((1.0 - t * t) * pp * pp);
        r.x[i] = 0.5 * (1.0 - t);
        r.w[i] = 0.5 * w;
        r.x[n - 1 - i] = 0.5 * (1.0 + t);
        r.w[n - 1 - i] = 0.5 * w;
    }
    return r;
}

/// Mass matrices with quadrature exact for every integrand in scope
/// (degree 2p+1 on the square; Duffy transform with one extra point per axis
/// compensates the Jacobian on the triangle).
inline MassMatrices mass_matrices(const RefElement& el, int extra_order = 0) {
    int p = el.degree;
    int nq = p + 2 + extra_order;
    GaussRule g = gauss_legendre_01(nq);
    int n = int(el.nodes.size());
    MassMatrices mm{Matrix(n, n), Matrix(n, n), Matrix(n, n)};
    auto accumulate = [&](double x, double y, double w) {
        std::vector<double> phi = eval_basis(el, x, y);
        for (int a = 0; a < n; ++a) {
            double wa = w * phi[a];
            for (int b = a; b < n; ++b) {
                double v = wa * phi[b];
                mm.m_l(a, b) += v;
                mm.m_x(a, b) += v * x;
                mm.m_y(a, b) += v * y;
            }
        }
    };
    for (int i = 0; i < nq; ++i)
        for (int j = 0; j < nq; ++j) {
            if (el.shape == ElemShape::Square) {
                accumulate(g.x[i], g.x[j], g.w[i] * g.w[j]);
            } else {
                // Duffy: (u, v) -> (u, v(1-u)), Jacobian (1-u)
                double u = g.x[i], v = g.x[j];
                accumulate(u, v * (1.0 - u), g.w[i] * g.w[j] * (1.0 - u));
            }
        }
    for (Matrix* m : {&mm.m_l, &mm.m_x, &mm.m_y})
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < a; ++b) (*m)(a, b) = (*m)(b, a);
    return mm;
}

}  // namespace h1stab
