#pragma once

#include <cstddef>

#include "gsd/matrix.hpp"

namespace gsd {

// Default relative tolerance for rank truncation of the guide matrix.
inline constexpr double kDefaultRankTol = 1e-10;

// Orthonormal basis of the batch's dominant semantic subspace, together
// with the anchor it was centered on. effective_k is requested_k clamped
// to the numerical rank of the centered guide matrix; a batch of duplicate
// images legally yields effective_k = 0 and an empty basis.
struct SemanticBasis {
    DenseMatrix u;       // D x effective_k, orthonormal columns
    Vector anchor;       // length D; empty when built from a raw guide matrix
    std::size_t requested_k = 0;
    std::size_t effective_k = 0;

    bool empty() const { return effective_k == 0; }
};

// Arithmetic mean over the rows of a B x D batch of global features.
Vector compute_anchor(const DenseMatrix& globals);

// Centered guide matrix: column i of the D x B result is globals row i
// minus the anchor (note the transpose).
DenseMatrix center_and_stack(const DenseMatrix& globals, const Vector& anchor);

// First min(requested_k, numerical rank) columns of the Q factor of the
// guide matrix. requested_k = 0 yields an empty basis, which makes the
// downstream projection the identity.
SemanticBasis build_semantic_basis(const DenseMatrix& guide, std::size_t requested_k,
                                   double rank_tol = kDefaultRankTol, Vector anchor = {});

// compute_anchor + center_and_stack + build_semantic_basis in one call.
SemanticBasis estimate_semantic_basis(const DenseMatrix& globals, std::size_t requested_k,
                                      double rank_tol = kDefaultRankTol);

// Cosine similarity in [-1, 1]; zero-norm input is defined as 0 so callers
// can flag such samples instead of dividing by zero.
double cosine_to_anchor(const Vector& g, const Vector& anchor);

}  // namespace gsd
