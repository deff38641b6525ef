#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "h1stab/common.hpp"
#include "h1stab/matrix.hpp"

namespace h1stab {

/// Pencil (A, M) of the generalized symmetric eigenvalue problem A x = lambda M x.
struct SymPair {
    Matrix a;
    Matrix m;
};

namespace detail {

inline void require_symmetric(const Matrix& x, const char* name) {
    if (x.rows() != x.cols())
        throw std::invalid_argument(std::string(name) + ": matrix not square");
    if (max_abs_asymmetry(x) > 1e-10)
        throw std::invalid_argument(std::string(name) + ": asymmetry exceeds 1e-10");
}

inline void symmetrize(Matrix& x) {
    for (int i = 0; i < x.rows(); ++i)
        for (int j = i + 1; j < x.cols(); ++j) {
            double v = 0.5 * (x(i, j) + x(j, i));
            x(i, j) = x(j, i) = v;
        }
}

/// In-place lower Cholesky M = L L^T; throws NotSpdError on a nonpositive pivot.
inline void cholesky(Matrix& m) {
    int n = m.rows();
    for (int j = 0; j < n; ++j) {
        double d = m(j, j);
        for (int k = 0; k < j; ++k) d -= m(j, k) * m(j, k);
        if (!(d > 0.0)) throw NotSpdError("Cholesky pivot " + std::to_string(j) + " nonpositive");
        double l = std::sqrt(d);
        m(j, j) = l;
        for (int i = j + 1; i < n; ++i) {
            double s = m(i, j);
            for (int k = 0; k < j; ++k) s -= m(i, k) * m(j, k);
            m(i, j) = s / l;
        }
        for (int k = 0; k < j; ++k) m(k, j) = 0.0;  // keep strict lower form
    }
}

/// B = L^{-1} A L^{-T} for lower-triangular L (A symmetric, B symmetric).
inline Matrix reduce_to_standard(const Matrix& a, const Matrix& l) {
    int n = a.rows();
    Matrix y = a;  // will hold L^{-1} A, column by column (forward substitution)
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            double s = y(i, j);
            for (int k = 0; k < i; ++k) s -= l(i, k) * y(k, j);
            y(i, j) = s / l(i, i);
        }
    Matrix b(n, n);  // B^T = L^{-1} Y^T, i.e. forward-substitute rows of Y
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double s = y(i, j);
            for (int k = 0; k < j; ++k) s -= l(j, k) * b(i, k);
            b(i, j) = s / l(j, j);
        }
    symmetrize(b);
    return b;
}

/// Householder reduction of a symmetric matrix to tridiagonal (d, e); destroys a.
inline void tridiagonalize(Matrix& a, std::vector<double>& d, std::vector<double>& e) {
    int n = a.rows();
    d.assign(n, 0.0);
    e.assign(n, 0.0);
    for (int i = n - 1; i >= 1; --i) {
        int l = i - 1;
        double h = 0.0, scale = 0.0;
        if (l > 0) {
            for (int k = 0; k <= l; ++k) scale += std::abs(a(i, k));
            if (scale == 0.0) {
                e[i] = a(i, l);
            } else {
                for (int k = 0; k <= l; ++k) {
                    a(i, k) /= scale;
                    h += a(i, k) * a(i, k);
                }
                double f = a(i, l);
                double g = (f >= 0.0) ? -std::sqrt(h) : std::sqrt(h);
                e[i] = scale * g;
                h -= f * g;
                a(i, l) = f - g;
                f = 0.0;
                for (int j = 0; j <= l; ++j) {
                    g = 0.0;
                    for (int k = 0; k <= j; ++k) g += a(j, k) * a(i, k);
                    for (int k = j + 1; k <= l; ++k) g += a(k, j) * a(i, k);
                    e[j] = g / h;
                    f += e[j] * a(i, j);
                }
                double hh = f / (h + h);
                for (int j = 0; j <= l; ++j) {
                    f = a(i, j);
                    e[j] = g = e[j] - hh * f;
                    for (int k = 0; k <= j; ++k) a(j, k) -= f * e[k] + g * a(i, k);
                }
            }
        } else {
            e[i] = a(i, l);
        }
        d[i] = h;
    }
    for (int i = 0; i < n; ++i) d[i] = a(i, i);
}

/// Eigenvalues of a symmetric tridiagonal matrix via implicit QL with shifts.
inline void tridiag_eigenvalues(std::vector<double>& d, std::vector<double>& e) {
    int n = int(d.size());
    for (int i = 1; i < n; ++i) e[i - 1] = e[i];
    e[n - 1] = 0.0;
    for (int l = 0; l < n; ++l) {
        int iter = 0;
        int m;
        do {
            for (m = l; m < n - 1; ++m) {
                double dd = std::abs(d[m]) + std::abs(d[m + 1]);
                if (std::abs(e[m]) <= std::numeric_limits<double>::epsilon() * dd) break;
            }
            if (m != l) {
                if (iter++ == 64) throw std::runtime_error("tridiagonal QL failed to converge");
                double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
                double r = std::hypot(g, 1.0);
                g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
                double s = 1.0, c = 1.0, p = 0.0;
                for (int i = m - 1; i >= l; --i) {
                    double f = s * e[i];
                    double b = c * e[i];
                    r = std::hypot(f, g);
                    e[i + 1] = r;
                    if (r == 0.0) {
                        d[i + 1] -= p;
                        e[m] = 0.0;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[i + 1] - p;
                    r = (d[i] - g) * s + 2.0 * c * b;
                    p = s * r;
                    d[i + 1] = g + p;
                    g = c * r - b;
                }
                if (r == 0.0 && m - 1 >= l) continue;
                d[l] -= p;
                e[l] = g;
                e[m] = 0.0;
            }
        } while (m != l);
    }
}

/// Smallest eigenvalue of a symmetric matrix (destroys the argument).
inline double sym_lambda_min(Matrix& b) {
    int n = b.rows();
    if (n == 1) return b(0, 0);
    std::vector<double> d, e;
    tridiagonalize(b, d, e);
    tridiag_eigenvalues(d, e);
    return *std::min_element(d.begin(), d.end());
}

/// Cyclic Jacobi sweeps; rotates until the off-diagonal Frobenius norm drops
/// below 1e-13 of the total.  Kept as an independent route for cross-checks.
inline double jacobi_sym_lambda_min(Matrix& a) {
    int n = a.rows();
    if (n == 1) return a(0, 0);
    double fro = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) fro += a(i, j) * a(i, j);
    fro = std::sqrt(fro);
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += 2.0 * a(i, j) * a(i, j);
        if (std::sqrt(off) < 1e-13 * std::max(fro, 1e-300)) break;
        for (int p = 0; p < n - 1; ++p)
            for (int q = p + 1; q < n; ++q) {
                double apq = a(p, q);
                if (apq == 0.0) continue;
                double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int k = 0; k < n; ++k) {
                    double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
    }
    double mn = a(0, 0);
    for (int i = 1; i < n; ++i) mn = std::min(mn, a(i, i));
    return mn;
}

}  // namespace detail

/// Cached Cholesky factor of M, reusable across many A's sharing the same M.
class CholeskyFactor {
public:
    explicit CholeskyFactor(Matrix m) : l_(std::move(m)) {
        detail::require_symmetric(l_, "lambda_min: M");
        detail::symmetrize(l_);
        detail::cholesky(l_);
    }
    const Matrix& l() const { return l_; }

    double lambda_min(const Matrix& a) const {
        detail::require_symmetric(a, "lambda_min: A");
        Matrix b = detail::reduce_to_standard(a, l_);
        return detail::sym_lambda_min(b);
    }

private:
    Matrix l_;
};

/// Smallest eigenvalue of A x = lambda M x with M symmetric positive definite.
/// Throws NotSpdError when M has no Cholesky factorization.
inline double lambda_min(const SymPair& pair) {
    CholeskyFactor chol(pair.m);
    return chol.lambda_min(pair.a);
}

/// Same quantity through Cholesky + cyclic Jacobi; independent convergence path.
inline double lambda_min_jacobi(const SymPair& pair) {
    detail::require_symmetric(pair.a, "lambda_min: A");
    Matrix l = pair.m;
    detail::require_symmetric(l, "lambda_min: M");
    detail::symmetrize(l);
    detail::cholesky(l);
    Matrix b = detail::reduce_to_standard(pair.a, l);
    return detail::jacobi_sym_lambda_min(b);
}

}  // namespace h1stab
