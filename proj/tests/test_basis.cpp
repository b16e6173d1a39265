#include <cmath>

#include "doctest.h"
#include "gsd/basis.hpp"
#include "gsd/qr.hpp"
#include "gsd/rng.hpp"

using namespace gsd;

namespace {

DenseMatrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
    DenseMatrix m(r, c);
    for (double& v : m.data) v = rng.normal();
    return m;
}

// U U^T, the explicit projector used to compare spans.
DenseMatrix projector(const SemanticBasis& b) {
    if (b.empty()) return DenseMatrix(b.u.rows, b.u.rows);
    return matmul_nt(b.u, b.u);
}

// Rank-r matrix as a sum of r outer products.
DenseMatrix random_low_rank(Rng& rng, std::size_t d, std::size_t b, std::size_t r) {
    DenseMatrix g(d, b);
    for (std::size_t t = 0; t < r; ++t) {
        Vector u(d), v(b);
        for (double& x : u) x = rng.normal();
        for (double& x : v) x = rng.normal();
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < b; ++j) g(i, j) += u[i] * v[j];
    }
    return g;
}

}  // namespace

TEST_CASE("compute_anchor means over rows") {
    const DenseMatrix g(2, 2, {1, 2, 3, 4});
    const Vector a = compute_anchor(g);
    CHECK(a[0] == 2.0);
    CHECK(a[1] == 3.0);

    const DenseMatrix single(1, 3, {5, 6, 7});
    CHECK(compute_anchor(single) == Vector{5, 6, 7});

    const DenseMatrix sym(2, 2, {1, -2, -1, 2});
    CHECK(compute_anchor(sym) == Vector{0, 0});

    CHECK_THROWS_AS(compute_anchor(DenseMatrix(0, 4)), ValidationError);
}

TEST_CASE("center_and_stack transposes and centers") {
    const DenseMatrix g(2, 2, {1, 2, 3, 4});
    const DenseMatrix guide = center_and_stack(g, {2, 3});
    CHECK(guide.rows == 2);
    CHECK(guide.cols == 2);
    CHECK(guide(0, 0) == -1.0);
    CHECK(guide(0, 1) == 1.0);
    CHECK(guide(1, 0) == -1.0);
    CHECK(guide(1, 1) == 1.0);

    // duplicates centered at themselves collapse to zero
    const DenseMatrix dup(3, 2, {7, 8, 7, 8, 7, 8});
    CHECK(max_abs(center_and_stack(dup, {7, 8})) == 0.0);

    CHECK_THROWS_AS(center_and_stack(g, {1, 2, 3}), ShapeError);
}

TEST_CASE("centering with the anchor zeroes column sums") {
    Rng rng(21);
    const DenseMatrix g = random_matrix(rng, 6, 4);
    const DenseMatrix guide = center_and_stack(g, compute_anchor(g));
    for (std::size_t i = 0; i < guide.rows; ++i) {
        double row_sum = 0.0;  // columns of the guide are the batch axis
        for (std::size_t j = 0; j < guide.cols; ++j) row_sum += guide(i, j);
        CHECK(std::fabs(row_sum) < 1e-12);
    }
}

TEST_CASE("build_semantic_basis clamps to rank") {
    CHECK(build_semantic_basis(DenseMatrix(8, 4), 4).effective_k == 0);

    const DenseMatrix guide(2, 1, {3, 4});
    const SemanticBasis b = build_semantic_basis(guide, 1);
    REQUIRE(b.effective_k == 1);
    CHECK(b.u(0, 0) == doctest::Approx(-0.6).epsilon(1e-14));
    CHECK(b.u(1, 0) == doctest::Approx(-0.8).epsilon(1e-14));

    Rng rng(22);
    const DenseMatrix low = random_low_rank(rng, 64, 8, 2);
    const SemanticBasis clamped = build_semantic_basis(low, 5);
    CHECK(clamped.requested_k == 5);
    CHECK(clamped.effective_k == 2);

    CHECK(build_semantic_basis(low, 0).empty());
}

TEST_CASE("basis columns are orthonormal") {
    Rng rng(23);
    const DenseMatrix guide = random_matrix(rng, 32, 12);
    const SemanticBasis b = build_semantic_basis(guide, 6);
    REQUIRE(b.effective_k == 6);
    const DenseMatrix utu = matmul_tn(b.u, b.u);
    CHECK(max_abs_diff(utu, DenseMatrix::identity(6)) <= 1e-10);
}

TEST_CASE("subspace is scale invariant") {
    Rng rng(24);
    const DenseMatrix guide = random_matrix(rng, 24, 10);
    DenseMatrix scaled = guide;
    for (double& v : scaled.data) v *= 37.5;
    const DenseMatrix p1 = projector(build_semantic_basis(guide, 5));
    const DenseMatrix p2 = projector(build_semantic_basis(scaled, 5));
    CHECK(max_abs_diff(p1, p2) < 1e-9);
}

TEST_CASE("column permutation preserves the span at full effective rank") {
    Rng rng(25);
    const DenseMatrix guide = random_low_rank(rng, 16, 8, 3);
    DenseMatrix permuted(16, 8);
    const std::size_t perm[8] = {5, 2, 7, 0, 3, 6, 1, 4};
    for (std::size_t i = 0; i < 16; ++i)
        for (std::size_t j = 0; j < 8; ++j) permuted(i, j) = guide(i, perm[j]);
    const SemanticBasis b1 = build_semantic_basis(guide, 8);
    const SemanticBasis b2 = build_semantic_basis(permuted, 8);
    CHECK(b1.effective_k == 3);
    CHECK(b2.effective_k == 3);
    CHECK(max_abs_diff(projector(b1), projector(b2)) < 1e-9);
}

TEST_CASE("planted dominant subspace is captured") {
    Rng rng(26);
    const std::size_t d = 32, b = 48, dim_s = 3;
    // Orthonormal planted directions.
    const QrResult qr = householder_qr(random_matrix(rng, d, dim_s));
    const DenseMatrix s_dirs = qr.q;

    DenseMatrix globals(b, d);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t t = 0; t < dim_s; ++t) {
            const double coef = rng.normal(0.0, 3.0);
            for (std::size_t j = 0; j < d; ++j) globals(i, j) += coef * s_dirs(j, t);
        }
        for (std::size_t j = 0; j < d; ++j) globals(i, j) += rng.normal(0.0, 0.05);
    }

    const SemanticBasis basis = estimate_semantic_basis(globals, dim_s);
    REQUIRE(basis.effective_k == dim_s);

    // Energy of vectors drawn from the planted subspace under U U^T.
    double captured = 0.0, total = 0.0;
    for (int it = 0; it < 50; ++it) {
        Vector x(d, 0.0);
        for (std::size_t t = 0; t < dim_s; ++t) {
            const double coef = rng.normal();
            for (std::size_t j = 0; j < d; ++j) x[j] += coef * s_dirs(j, t);
        }
        const Vector coeff = matvec_t(basis.u, x);
        captured += dot(coeff, coeff);
        total += dot(x, x);
    }
    CHECK(captured / total >= 0.90);
}

TEST_CASE("cosine_to_anchor") {
    const Vector a{1.0, 0.0};
    CHECK(cosine_to_anchor(a, a) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(cosine_to_anchor({0.0, 1.0}, a) == doctest::Approx(0.0));
    CHECK(cosine_to_anchor({1.0, 1.0}, a) == doctest::Approx(0.70710678118654752).epsilon(1e-12));
    CHECK(cosine_to_anchor({0.0, 0.0}, a) == 0.0);
    CHECK_THROWS_AS(cosine_to_anchor({1.0}, a), ShapeError);
}
