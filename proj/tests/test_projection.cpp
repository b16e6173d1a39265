#include <cmath>

#include "doctest.h"
#include "gsd/basis.hpp"
#include "gsd/projection.hpp"
#include "gsd/qr.hpp"
#include "gsd/rng.hpp"
#include "gsd/train.hpp"

using namespace gsd;

namespace {

DenseMatrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
    DenseMatrix m(r, c);
    for (double& v : m.data) v = rng.normal();
    return m;
}

SemanticBasis random_basis(Rng& rng, std::size_t d, std::size_t k) {
    return build_semantic_basis(random_matrix(rng, d, k), k);
}

double max_row_norm(const DenseMatrix& f) {
    double worst = 0.0;
    for (std::size_t i = 0; i < f.rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < f.cols; ++j) s += f(i, j) * f(i, j);
        worst = std::max(worst, std::sqrt(s));
    }
    return worst;
}

}  // namespace

TEST_CASE("semantic_component matches the explicit projector") {
    Rng rng(31);
    const SemanticBasis basis = random_basis(rng, 16, 3);
    REQUIRE(basis.effective_k == 3);
    const DenseMatrix f = random_matrix(rng, 7, 16);
    const DenseMatrix fast = semantic_component(f, basis);
    const DenseMatrix explicit_p = matmul(f, matmul_nt(basis.u, basis.u));
    CHECK(max_abs_diff(fast, explicit_p) < 1e-12);
}

TEST_CASE("semantic_component edge cases") {
    Rng rng(32);
    const DenseMatrix f = random_matrix(rng, 4, 8);
    const SemanticBasis empty = build_semantic_basis(DenseMatrix(8, 2), 2);
    CHECK(max_abs(semantic_component(f, empty)) == 0.0);

    // a row inside span(U) is a fixed point
    const SemanticBasis basis = random_basis(rng, 8, 2);
    DenseMatrix row(1, 8);
    for (std::size_t j = 0; j < 8; ++j) row(0, j) = basis.u(j, 0);
    CHECK(max_abs_diff(semantic_component(row, basis), row) < 1e-12);

    const DenseMatrix wrong(3, 9);
    CHECK_THROWS_AS(semantic_component(wrong, basis), ShapeError);
}

TEST_CASE("decouple removes exactly the span and keeps the rest") {
    Rng rng(33);
    const SemanticBasis basis = random_basis(rng, 12, 4);
    const DenseMatrix f = random_matrix(rng, 9, 12);

    const DenseMatrix f_prime = decouple(f, basis);

    // Null-space guarantee, relative to each row's norm.
    for (std::size_t i = 0; i < f_prime.rows; ++i) {
        double rownorm = 0.0;
        for (std::size_t j = 0; j < 12; ++j) rownorm += f(i, j) * f(i, j);
        rownorm = std::sqrt(rownorm);
        for (std::size_t k = 0; k < 4; ++k) {
            double d = 0.0;
            for (std::size_t j = 0; j < 12; ++j) d += f_prime(i, j) * basis.u(j, k);
            CHECK(std::fabs(d) <= 1e-8 * rownorm);
        }
    }

    // Complementarity is near-exact.
    const DenseMatrix sum = semantic_component(f, basis);
    double worst = 0.0;
    for (std::size_t i = 0; i < f.data.size(); ++i)
        worst = std::max(worst, std::fabs(sum.data[i] + f_prime.data[i] - f.data[i]));
    CHECK(worst <= 1e-12);

    // Idempotency.
    CHECK(max_abs_diff(decouple(f_prime, basis), f_prime) <= 1e-10);

    // Norm contraction per row.
    for (std::size_t i = 0; i < f.rows; ++i) {
        double before = 0.0, after = 0.0;
        for (std::size_t j = 0; j < 12; ++j) {
            before += f(i, j) * f(i, j);
            after += f_prime(i, j) * f_prime(i, j);
        }
        CHECK(std::sqrt(after) <= std::sqrt(before) * (1.0 + 1e-12));
    }
}

TEST_CASE("decouple with an empty basis is the identity, bit for bit") {
    Rng rng(34);
    const DenseMatrix f = random_matrix(rng, 5, 6);
    const SemanticBasis empty = build_semantic_basis(DenseMatrix(6, 3), 0);
    const DenseMatrix out = decouple(f, empty);
    CHECK(out.data == f.data);
}

TEST_CASE("decouple annihilates rows inside the span") {
    Rng rng(35);
    const SemanticBasis basis = random_basis(rng, 10, 3);
    DenseMatrix f(4, 10);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t k = 0; k < 3; ++k) {
            const double c = rng.normal();
            for (std::size_t j = 0; j < 10; ++j) f(i, j) += c * basis.u(j, k);
        }
    }
    CHECK(max_abs(decouple(f, basis)) < 1e-12);
}

TEST_CASE("equal spans give equal decouple output") {
    Rng rng(36);
    const std::size_t d = 14, k = 4;
    const SemanticBasis b1 = random_basis(rng, d, k);

    // Rotate the basis columns by a random orthogonal K x K matrix.
    const QrResult rot = householder_qr(random_matrix(rng, k, k));
    SemanticBasis b2 = b1;
    b2.u = matmul(b1.u, rot.q);

    const DenseMatrix f = random_matrix(rng, 6, d);
    CHECK(max_abs_diff(decouple(f, b1), decouple(f, b2)) < 1e-9);
}

TEST_CASE("residual_orthogonality equals the nested-loop oracle") {
    Rng rng(37);
    const SemanticBasis basis = random_basis(rng, 9, 3);
    const DenseMatrix f = random_matrix(rng, 5, 9);

    double oracle = 0.0;
    for (std::size_t i = 0; i < f.rows; ++i)
        for (std::size_t k = 0; k < basis.effective_k; ++k) {
            double dot_ik = 0.0;
            for (std::size_t j = 0; j < f.cols; ++j) dot_ik += f(i, j) * basis.u(j, k);
            oracle = std::max(oracle, std::fabs(dot_ik));
        }
    CHECK(residual_orthogonality(f, basis) == doctest::Approx(oracle).epsilon(1e-15));

    // Worst case: a row equal to a basis vector has unit inner product.
    DenseMatrix u_row(2, 9);
    for (std::size_t j = 0; j < 9; ++j) u_row(0, j) = u_row(1, j) = basis.u(j, 0);
    CHECK(residual_orthogonality(u_row, basis) == doctest::Approx(1.0).epsilon(1e-12));

    // Decoupled input sits at the tolerance floor.
    const DenseMatrix f_prime = decouple(f, basis);
    CHECK(residual_orthogonality(f_prime, basis) <= 1e-8 * max_row_norm(f));
}

TEST_CASE("null-space guarantee over many random instances") {
    Rng rng(38);
    for (int it = 0; it < 100; ++it) {
        const std::size_t d = 4 + rng.next_below(29);
        const std::size_t k = 1 + rng.next_below(std::min<std::size_t>(d, 8));
        const SemanticBasis basis = random_basis(rng, d, k);
        const DenseMatrix f = random_matrix(rng, 1 + rng.next_below(8), d);
        const DenseMatrix f_prime = decouple(f, basis);
        CHECK(residual_orthogonality(f_prime, basis) <= 1e-8 * std::max(1e-30, max_row_norm(f)));
    }
}

TEST_CASE("gradient through decouple is the same projection") {
    Rng rng(39);
    const std::size_t n = 3, d = 8, k = 2;
    const SemanticBasis basis = random_basis(rng, d, k);
    const DenseMatrix f = random_matrix(rng, n, d);

    // loss(F) = ||decouple(F)||^2 / 2  =>  dloss/dF = F (I - U U^T).
    const DenseMatrix analytic = decouple(f, basis);

    auto loss = [&](const Vector& flat) {
        DenseMatrix m(n, d, flat);
        const DenseMatrix out = decouple(m, basis);
        double s = 0.0;
        for (double v : out.data) s += v * v;
        return 0.5 * s;
    };
    const double err = finite_difference_check(loss, f.data, analytic.data, 1e-6);
    CHECK(err <= 1e-8);
}
