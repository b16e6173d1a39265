#pragma once

#include <cstddef>

#include "gsd/basis.hpp"
#include "gsd/matrix.hpp"

namespace gsd {

// How the frozen stream aggregates tokens into the per-image global feature.
enum class AnchorMode { GAP, CLS };

// Where the evaluation-time basis comes from: re-estimated from each eval
// batch (transductive, mirrors training) or frozen from the last training
// batch (deployment-style).
enum class EvalBasisMode { PerBatch, FrozenTrainBasis };

// Placement and size of the semantic projection inside the detector.
struct GsdConfig {
    std::size_t num_tail_layers = 2;  // how many final blocks receive the projection
    std::size_t requested_k = 8;
    AnchorMode anchor_mode = AnchorMode::GAP;
    EvalBasisMode eval_basis_mode = EvalBasisMode::PerBatch;

    bool active() const { return num_tail_layers > 0 && requested_k > 0; }
};

// F * U * U^T, evaluated as (F * U) * U^T so the D x D projector is never
// materialized. Every output row lies in span(U); an empty basis gives the
// zero matrix.
DenseMatrix semantic_component(const DenseMatrix& f, const SemanticBasis& basis);

// F - F * U * U^T = F (I - U U^T): projection onto the semantic null space.
// An empty basis returns f unchanged (bit-identical). The same map is its
// own adjoint, so this function also backpropagates upstream gradients
// through itself with U treated as a constant.
DenseMatrix decouple(const DenseMatrix& f, const SemanticBasis& basis);

// max over rows and basis columns of |<row, u_k>|; the diagnostic for the
// null-space guarantee.
double residual_orthogonality(const DenseMatrix& f_prime, const SemanticBasis& basis);

// decouple() applied in place to rows 1.. of a token matrix; row 0 (the
// classification token) bypasses the projection. The backward pass reuses
// this on gradients, since the projector is its own adjoint.
void decouple_patch_rows_inplace(DenseMatrix& tokens, const SemanticBasis& basis);

}  // namespace gsd
