#include "gsd/qr.hpp"

#include <cmath>
#include <vector>

namespace gsd {

namespace {

// One stored reflection: acts on rows [offset, offset + w.size()) as
// v -= 2 * w * (w . v). Empty w means the step was skipped.
struct Reflector {
    std::size_t offset = 0;
    std::vector<double> w;
};

void apply_reflector(const Reflector& h, double* v) {
    if (h.w.empty()) return;
    const std::size_t n = h.w.size();
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) d += h.w[i] * v[h.offset + i];
    d *= 2.0;
    for (std::size_t i = 0; i < n; ++i) v[h.offset + i] -= d * h.w[i];
}

}  // namespace

QrResult householder_qr(const DenseMatrix& g) {
    if (g.rows == 0 || g.cols == 0) {
        throw ShapeError("householder_qr: empty matrix " + g.shape_str());
    }
    require_finite(g, "householder_qr");

    const std::size_t d = g.rows;
    const std::size_t b = g.cols;
    const std::size_t t_steps = std::min(d, b);

    // Work column-major: each column is contiguous while reflections sweep
    // down the rows.
    std::vector<std::vector<double>> col(b, std::vector<double>(d));
    for (std::size_t j = 0; j < b; ++j)
        for (std::size_t i = 0; i < d; ++i) col[j][i] = g(i, j);

    std::vector<Reflector> reflectors(t_steps);
    for (std::size_t t = 0; t < t_steps; ++t) {
        const std::size_t len = d - t;
        double norm_z = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
            const double v = col[t][t + i];
            norm_z += v * v;
        }
        norm_z = std::sqrt(norm_z);
        if (norm_z == 0.0) continue;  // degenerate column: H^(t) = I, r_tt = 0

        const double z1 = col[t][t];
        const double alpha = (z1 >= 0.0 ? norm_z : -norm_z);  // sign(0) = +1

        Reflector& h = reflectors[t];
        h.offset = t;
        h.w.resize(len);
        for (std::size_t i = 0; i < len; ++i) h.w[i] = col[t][t + i];
        h.w[0] += alpha;
        double norm_u = 0.0;
        for (double v : h.w) norm_u += v * v;
        norm_u = std::sqrt(norm_u);
        for (double& v : h.w) v /= norm_u;

        // The pivot column maps to -alpha * e_1 analytically; store that
        // exactly instead of the roundoff-contaminated reflection.
        col[t][t] = -alpha;
        for (std::size_t i = t + 1; i < d; ++i) col[t][i] = 0.0;
        for (std::size_t j = t + 1; j < b; ++j) apply_reflector(h, col[j].data());
    }

    QrResult out;
    out.r = DenseMatrix(t_steps, b);
    for (std::size_t i = 0; i < t_steps; ++i)
        for (std::size_t j = i; j < b; ++j) out.r(i, j) = col[j][i];

    // q column j = H^(1) ... H^(T) e_j; reflectors with offset > j fix e_j.
    out.q = DenseMatrix(d, t_steps);
    std::vector<double> v(d);
    for (std::size_t j = 0; j < t_steps; ++j) {
        std::fill(v.begin(), v.end(), 0.0);
        v[j] = 1.0;
        for (std::size_t t = j + 1; t-- > 0;) apply_reflector(reflectors[t], v.data());
        for (std::size_t i = 0; i < d; ++i) out.q(i, j) = v[i];
    }
    return out;
}

std::size_t numerical_rank(const DenseMatrix& r, double rel_tol) {
    if (rel_tol <= 0.0) {
        throw ValidationError("numerical_rank: rel_tol must be > 0");
    }
    for (std::size_t i = 1; i < r.rows; ++i) {
        const std::size_t jmax = std::min<std::size_t>(i, r.cols);
        for (std::size_t j = 0; j < jmax; ++j) {
            if (r(i, j) != 0.0) {
                throw ValidationError("numerical_rank: input is not upper triangular at (" +
                                      std::to_string(i) + "," + std::to_string(j) + ")");
            }
        }
    }
    const std::size_t n = std::min(r.rows, r.cols);
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::fabs(r(i, i)));
    if (max_diag == 0.0) return 0;
    std::size_t rank = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (std::fabs(r(i, i)) > rel_tol * max_diag) ++rank;
    }
    return rank;
}

}  // namespace gsd
