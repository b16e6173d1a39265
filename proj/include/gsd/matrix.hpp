#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gsd/errors.hpp"

namespace gsd {

using Vector = std::vector<double>;

// Row-major dense matrix of 64-bit floats; the universal carrier for
// features, weights and bases.
struct DenseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // size rows * cols

    DenseMatrix() = default;
    DenseMatrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}
    DenseMatrix(std::size_t r, std::size_t c, std::vector<double> values);

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    double* row_ptr(std::size_t i) { return data.data() + i * cols; }
    const double* row_ptr(std::size_t i) const { return data.data() + i * cols; }

    std::size_t size() const { return rows * cols; }
    bool empty() const { return rows == 0 || cols == 0; }
    std::string shape_str() const;

    static DenseMatrix identity(std::size_t n);
};

bool all_finite(const DenseMatrix& m);
bool all_finite(const Vector& v);

// Throws ValidationError naming `what` if m contains NaN or Inf.
void require_finite(const DenseMatrix& m, const std::string& what);

// C = A * B. Shapes must satisfy a.cols == b.rows.
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);

// C = A * B^T and C = A^T * B. Same kernels the hot paths use; shapes are
// checked against the transposed operand.
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);

DenseMatrix transpose(const DenseMatrix& m);

// y = M * x (x has m.cols entries) and y = M^T * x (x has m.rows entries).
Vector matvec(const DenseMatrix& m, const Vector& x);
Vector matvec_t(const DenseMatrix& m, const Vector& x);

double dot(const Vector& a, const Vector& b);
double norm2(const Vector& v);

// max |a_ij - b_ij| over all entries; shapes must match.
double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);
double max_abs(const DenseMatrix& m);

}  // namespace gsd
