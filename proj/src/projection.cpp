#include "gsd/projection.hpp"

#include <cmath>

namespace gsd {

namespace {

void check_dim(const DenseMatrix& f, const SemanticBasis& basis, const char* who) {
    if (!basis.empty() && f.cols != basis.u.rows) {
        throw ShapeError(std::string(who) + ": features " + f.shape_str() +
                         " incompatible with basis " + basis.u.shape_str());
    }
}

}  // namespace

DenseMatrix semantic_component(const DenseMatrix& f, const SemanticBasis& basis) {
    check_dim(f, basis, "semantic_component");
    if (basis.empty()) return DenseMatrix(f.rows, f.cols);
    const DenseMatrix coeff = matmul(f, basis.u);     // N x K
    return matmul_nt(coeff, basis.u);                 // N x D
}

DenseMatrix decouple(const DenseMatrix& f, const SemanticBasis& basis) {
    check_dim(f, basis, "decouple");
    if (basis.empty()) return f;
    const DenseMatrix coeff = matmul(f, basis.u);  // N x K
    const std::size_t k_eff = basis.effective_k;
    DenseMatrix out = f;
    // out -= coeff * U^T, fused to avoid a temporary; rows of U are
    // contiguous so each subtraction is a short dot product.
    for (std::size_t i = 0; i < f.rows; ++i) {
        double* orow = out.row_ptr(i);
        const double* crow = coeff.row_ptr(i);
        for (std::size_t j = 0; j < f.cols; ++j) {
            const double* urow = basis.u.row_ptr(j);
            double s = 0.0;
            for (std::size_t k = 0; k < k_eff; ++k) s += crow[k] * urow[k];
            orow[j] -= s;
        }
    }
    return out;
}

void decouple_patch_rows_inplace(DenseMatrix& tokens, const SemanticBasis& basis) {
    if (basis.empty()) return;
    if (tokens.rows < 2) {
        throw ShapeError("decouple_patch_rows_inplace: token matrix " + tokens.shape_str() +
                         " has no patch rows");
    }
    DenseMatrix patch_rows(tokens.rows - 1, tokens.cols);
    std::copy(tokens.data.begin() + static_cast<std::ptrdiff_t>(tokens.cols), tokens.data.end(),
              patch_rows.data.begin());
    patch_rows = decouple(patch_rows, basis);
    std::copy(patch_rows.data.begin(), patch_rows.data.end(),
              tokens.data.begin() + static_cast<std::ptrdiff_t>(tokens.cols));
}

double residual_orthogonality(const DenseMatrix& f_prime, const SemanticBasis& basis) {
    check_dim(f_prime, basis, "residual_orthogonality");
    if (basis.empty()) return 0.0;
    double worst = 0.0;
    for (std::size_t i = 0; i < f_prime.rows; ++i) {
        const double* row = f_prime.row_ptr(i);
        for (std::size_t k = 0; k < basis.effective_k; ++k) {
            double d = 0.0;
            for (std::size_t j = 0; j < f_prime.cols; ++j) d += row[j] * basis.u(j, k);
            d = std::fabs(d);
            if (d > worst) worst = d;
        }
    }
    return worst;
}

}  // namespace gsd
