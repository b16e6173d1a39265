#include "gsd/matrix.hpp"

#include <cmath>
#include <utility>

namespace gsd {

DenseMatrix::DenseMatrix(std::size_t r, std::size_t c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != rows * cols) {
        throw ShapeError("DenseMatrix: " + std::to_string(data.size()) +
                         " values do not fill " + shape_str());
    }
}

std::string DenseMatrix::shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

bool all_finite(const DenseMatrix& m) {
    for (double v : m.data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

bool all_finite(const Vector& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

void require_finite(const DenseMatrix& m, const std::string& what) {
    if (!all_finite(m)) throw ValidationError(what + ": non-finite entries");
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols != b.rows) {
        throw ShapeError("matmul: " + a.shape_str() + " incompatible with " + b.shape_str());
    }
    DenseMatrix c(a.rows, b.cols);
    const std::size_t m = a.rows, kk = a.cols, n = b.cols;
    // i-k-j order with 4-row blocking: the j loop is a contiguous axpy the
    // compiler vectorizes, and each B row feeds four output rows.
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
        const double* a0 = a.row_ptr(i);
        const double* a1 = a.row_ptr(i + 1);
        const double* a2 = a.row_ptr(i + 2);
        const double* a3 = a.row_ptr(i + 3);
        double* c0 = c.row_ptr(i);
        double* c1 = c.row_ptr(i + 1);
        double* c2 = c.row_ptr(i + 2);
        double* c3 = c.row_ptr(i + 3);
        for (std::size_t k = 0; k < kk; ++k) {
            const double v0 = a0[k], v1 = a1[k], v2 = a2[k], v3 = a3[k];
            const double* brow = b.row_ptr(k);
            for (std::size_t j = 0; j < n; ++j) {
                const double bj = brow[j];
                c0[j] += v0 * bj;
                c1[j] += v1 * bj;
                c2[j] += v2 * bj;
                c3[j] += v3 * bj;
            }
        }
    }
    for (; i < m; ++i) {
        const double* arow = a.row_ptr(i);
        double* crow = c.row_ptr(i);
        for (std::size_t k = 0; k < kk; ++k) {
            const double aik = arow[k];
            const double* brow = b.row_ptr(k);
            for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols != b.cols) {
        throw ShapeError("matmul_nt: " + a.shape_str() + " incompatible with " + b.shape_str() +
                         "^T");
    }
    // Transposing b first keeps the inner loop a contiguous axpy, which
    // vectorizes; the dot-product form stalls on the reduction.
    return matmul(a, transpose(b));
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows != b.rows) {
        throw ShapeError("matmul_tn: " + a.shape_str() + "^T incompatible with " + b.shape_str());
    }
    DenseMatrix c(a.cols, b.cols);
    const std::size_t n = b.cols;
    // Same axpy pattern as matmul, blocked over four output rows.
    for (std::size_t k = 0; k < a.rows; ++k) {
        const double* arow = a.row_ptr(k);
        const double* brow = b.row_ptr(k);
        std::size_t i = 0;
        for (; i + 4 <= a.cols; i += 4) {
            const double v0 = arow[i], v1 = arow[i + 1], v2 = arow[i + 2], v3 = arow[i + 3];
            double* c0 = c.row_ptr(i);
            double* c1 = c.row_ptr(i + 1);
            double* c2 = c.row_ptr(i + 2);
            double* c3 = c.row_ptr(i + 3);
            for (std::size_t j = 0; j < n; ++j) {
                const double bj = brow[j];
                c0[j] += v0 * bj;
                c1[j] += v1 * bj;
                c2[j] += v2 * bj;
                c3[j] += v3 * bj;
            }
        }
        for (; i < a.cols; ++i) {
            const double aki = arow[i];
            double* crow = c.row_ptr(i);
            for (std::size_t j = 0; j < n; ++j) crow[j] += aki * brow[j];
        }
    }
    return c;
}

DenseMatrix transpose(const DenseMatrix& m) {
    DenseMatrix t(m.cols, m.rows);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) t(j, i) = m(i, j);
    return t;
}

Vector matvec(const DenseMatrix& m, const Vector& x) {
    if (x.size() != m.cols) {
        throw ShapeError("matvec: " + m.shape_str() + " incompatible with vector of length " +
                         std::to_string(x.size()));
    }
    Vector y(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* row = m.row_ptr(i);
        double s = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) s += row[j] * x[j];
        y[i] = s;
    }
    return y;
}

Vector matvec_t(const DenseMatrix& m, const Vector& x) {
    if (x.size() != m.rows) {
        throw ShapeError("matvec_t: " + m.shape_str() + "^T incompatible with vector of length " +
                         std::to_string(x.size()));
    }
    Vector y(m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* row = m.row_ptr(i);
        const double xi = x[i];
        for (std::size_t j = 0; j < m.cols; ++j) y[j] += xi * row[j];
    }
    return y;
}

double dot(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) {
        throw ShapeError("dot: lengths " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(const Vector& v) { return std::sqrt(dot(v, v)); }

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows != b.rows || a.cols != b.cols) {
        throw ShapeError("max_abs_diff: " + a.shape_str() + " vs " + b.shape_str());
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = std::fabs(a.data[i] - b.data[i]);
        if (d > m) m = d;
    }
    return m;
}

double max_abs(const DenseMatrix& m) {
    double r = 0.0;
    for (double v : m.data) {
        const double a = std::fabs(v);
        if (a > r) r = a;
    }
    return r;
}

}  // namespace gsd
