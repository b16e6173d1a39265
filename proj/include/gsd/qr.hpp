#pragma once

#include "gsd/matrix.hpp"

namespace gsd {

// Thin QR factorization of a D x B matrix: q is D x min(D,B) with
// orthonormal columns, r is min(D,B) x B upper triangular with exact zeros
// below the diagonal, and q * r reconstructs the input.
struct QrResult {
    DenseMatrix q;
    DenseMatrix r;
};

// Householder QR with T = min(rows, cols) reflections. The reflector at
// step t uses alpha = sign(z_1) * ||z||_2 with sign(0) = +1; a zero column
// tail skips its reflection and leaves a zero on the diagonal of r, so
// rank-deficient input is legal and handled by numerical_rank().
// Reflectors are applied to column vectors directly; the full D x D
// reflector is never materialized.
QrResult householder_qr(const DenseMatrix& g);

// Number of diagonal entries of an upper-triangular r with
// |r_ii| > rel_tol * max_j |r_jj|. Returns 0 for the all-zero matrix.
// Entries below the diagonal must be stored as exact zeros.
std::size_t numerical_rank(const DenseMatrix& r, double rel_tol = 1e-10);

}  // namespace gsd
