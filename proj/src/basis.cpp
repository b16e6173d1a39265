#include "gsd/basis.hpp"

#include <cmath>
#include <utility>

#include "gsd/qr.hpp"

namespace gsd {

Vector compute_anchor(const DenseMatrix& globals) {
    if (globals.rows == 0) throw ValidationError("compute_anchor: empty batch");
    // Shifted-origin mean: row 0 plus the mean of deviations from it. For
    // a batch of identical rows the deviations are exactly zero, so the
    // anchor equals the row bit-for-bit and the guide matrix centers to
    // the exact zero matrix (its rank must be 0, not roundoff noise).
    Vector anchor(globals.row_ptr(0), globals.row_ptr(0) + globals.cols);
    if (globals.rows == 1) return anchor;
    Vector dev(globals.cols, 0.0);
    for (std::size_t i = 0; i < globals.rows; ++i) {
        const double* row = globals.row_ptr(i);
        for (std::size_t j = 0; j < globals.cols; ++j) dev[j] += row[j] - anchor[j];
    }
    const double inv_b = 1.0 / static_cast<double>(globals.rows);
    for (std::size_t j = 0; j < globals.cols; ++j) anchor[j] += dev[j] * inv_b;
    return anchor;
}

DenseMatrix center_and_stack(const DenseMatrix& globals, const Vector& anchor) {
    if (anchor.size() != globals.cols) {
        throw ShapeError("center_and_stack: anchor length " + std::to_string(anchor.size()) +
                         " vs feature dim " + std::to_string(globals.cols));
    }
    DenseMatrix guide(globals.cols, globals.rows);
    for (std::size_t i = 0; i < globals.rows; ++i) {
        const double* row = globals.row_ptr(i);
        for (std::size_t j = 0; j < globals.cols; ++j) guide(j, i) = row[j] - anchor[j];
    }
    return guide;
}

SemanticBasis build_semantic_basis(const DenseMatrix& guide, std::size_t requested_k,
                                   double rank_tol, Vector anchor) {
    SemanticBasis basis;
    basis.requested_k = requested_k;
    basis.anchor = std::move(anchor);
    if (requested_k == 0) {
        basis.u = DenseMatrix(guide.rows, 0);
        return basis;
    }
    const QrResult qr = householder_qr(guide);
    const std::size_t rank = numerical_rank(qr.r, rank_tol);
    basis.effective_k = std::min(requested_k, rank);
    basis.u = DenseMatrix(guide.rows, basis.effective_k);
    for (std::size_t i = 0; i < guide.rows; ++i)
        for (std::size_t k = 0; k < basis.effective_k; ++k) basis.u(i, k) = qr.q(i, k);
    return basis;
}

SemanticBasis estimate_semantic_basis(const DenseMatrix& globals, std::size_t requested_k,
                                      double rank_tol) {
    Vector anchor = compute_anchor(globals);
    const DenseMatrix guide = center_and_stack(globals, anchor);
    return build_semantic_basis(guide, requested_k, rank_tol, std::move(anchor));
}

double cosine_to_anchor(const Vector& g, const Vector& anchor) {
    if (g.size() != anchor.size()) {
        throw ShapeError("cosine_to_anchor: lengths " + std::to_string(g.size()) + " vs " +
                         std::to_string(anchor.size()));
    }
    const double ng = norm2(g);
    const double na = norm2(anchor);
    if (ng == 0.0 || na == 0.0) return 0.0;
    return dot(g, anchor) / (ng * na);
}

}  // namespace gsd
