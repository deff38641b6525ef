#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace h1stab {

/// Dense row-major matrix, just large enough for local element problems.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols) : r_(rows), c_(cols), d_(std::size_t(rows) * cols, 0.0) {}

    int rows() const { return r_; }
    int cols() const { return c_; }

    double& operator()(int i, int j) { return d_[std::size_t(i) * c_ + j]; }
    double operator()(int i, int j) const { return d_[std::size_t(i) * c_ + j]; }

    double* data() { return d_.data(); }
    const double* data() const { return d_.data(); }

    bool operator==(const Matrix&) const = default;

    Matrix transposed() const {
        Matrix t(c_, r_);
        for (int i = 0; i < r_; ++i)
            for (int j = 0; j < c_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

private:
    int r_ = 0, c_ = 0;
    std::vector<double> d_;
};

inline Matrix operator*(const Matrix& a, const Matrix& b) {
    assert(a.cols() == b.rows());
    Matrix out(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i)
        for (int k = 0; k < a.cols(); ++k) {
            double aik = a(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    return out;
}

inline Matrix operator+(const Matrix& a, const Matrix& b) {
    assert(a.rows() == b.rows() && a.cols() == b.cols());
    Matrix out = a;
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) out(i, j) += b(i, j);
    return out;
}

inline Matrix scaled(const Matrix& a, double s) {
    Matrix out = a;
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) out(i, j) *= s;
    return out;
}

inline double max_abs_asymmetry(const Matrix& a) {
    double m = 0.0;
    for (int i = 0; i < a.rows(); ++i)
        for (int j = i + 1; j < a.cols(); ++j) m = std::max(m, std::abs(a(i, j) - a(j, i)));
    return m;
}

}  // namespace h1stab
