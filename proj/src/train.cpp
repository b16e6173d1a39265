#include "gsd/train.hpp"

#include <cmath>

namespace gsd {

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

namespace {

void check_labels(const Vector& logits, const Vector& labels) {
    if (logits.size() != labels.size() || logits.empty()) {
        throw ValidationError("bce: " + std::to_string(logits.size()) + " logits vs " +
                              std::to_string(labels.size()) + " labels");
    }
    for (double y : labels) {
        if (y != 0.0 && y != 1.0) {
            throw ValidationError("bce: label " + std::to_string(y) + " is not in {0,1}");
        }
    }
}

}  // namespace

double bce_loss(const Vector& logits, const Vector& labels) {
    check_labels(logits, labels);
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        double p = sigmoid(logits[i]);
        p = std::min(std::max(p, kProbClamp), 1.0 - kProbClamp);
        total += labels[i] == 1.0 ? -std::log(p) : -std::log(1.0 - p);
    }
    return total / static_cast<double>(logits.size());
}

Vector bce_grad(const Vector& logits, const Vector& labels) {
    check_labels(logits, labels);
    const double inv_b = 1.0 / static_cast<double>(logits.size());
    Vector g(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double p = sigmoid(logits[i]);
        // Inside the clamp the loss is locally constant in the logit.
        g[i] = (p < kProbClamp || p > 1.0 - kProbClamp) ? 0.0 : (p - labels[i]) * inv_b;
    }
    return g;
}

namespace {

DenseMatrix colsum_row(const DenseMatrix& x) {
    DenseMatrix s(1, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double* row = x.row_ptr(i);
        for (std::size_t j = 0; j < x.cols; ++j) s.data[j] += row[j];
    }
    return s;
}

void add_into(DenseMatrix& dst, const DenseMatrix& src) {
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

DenseMatrix layer_norm_backward(const DenseMatrix& dy, const DenseMatrix& x,
                                const DenseMatrix& gamma, const Vector& mean,
                                const Vector& inv_std, DenseMatrix& dgamma, DenseMatrix& dbeta) {
    const std::size_t n = x.rows, d = x.cols;
    const double inv_d = 1.0 / static_cast<double>(d);
    DenseMatrix dx(n, d);
    const double* g = gamma.row_ptr(0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* xrow = x.row_ptr(i);
        const double* dyrow = dy.row_ptr(i);
        double* dxrow = dx.row_ptr(i);
        const double mu = mean[i], r = inv_std[i];
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double xhat = (xrow[j] - mu) * r;
            const double dyg = dyrow[j] * g[j];
            s1 += dyg;
            s2 += dyg * xhat;
            dgamma.data[j] += dyrow[j] * xhat;
            dbeta.data[j] += dyrow[j];
        }
        s1 *= inv_d;
        s2 *= inv_d;
        for (std::size_t j = 0; j < d; ++j) {
            const double xhat = (xrow[j] - mu) * r;
            dxrow[j] = r * (dyrow[j] * g[j] - s1 - xhat * s2);
        }
    }
    return dx;
}

// Gradient wrt the block input given the gradient wrt the block output.
DenseMatrix block_backward(const BlockParams& p, const EncoderConfig& cfg, const BlockCache& c,
                           const DenseMatrix& d_out, BlockParams& g) {
    const std::size_t n = c.x_in.rows, d = c.x_in.cols;
    const std::size_t heads = cfg.heads, dh = cfg.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    // MLP path: x_out = x_mid + gelu(h2 W1 + b1) W2 + b2
    DenseMatrix d_act = matmul_nt(d_out, p.mlp_w2);  // N x H
    add_into(g.mlp_w2, matmul_tn(c.mlp_act, d_out));
    add_into(g.mlp_b2, colsum_row(d_out));
    DenseMatrix d_pre = d_act;
    // SiLU'(x) = s (1 + x (1 - s)) with the cached s = sigmoid(x).
    for (std::size_t i = 0; i < d_pre.data.size(); ++i) {
        const double s = c.mlp_sig.data[i];
        d_pre.data[i] *= s * (1.0 + c.mlp_pre.data[i] * (1.0 - s));
    }
    add_into(g.mlp_w1, matmul_tn(c.h2, d_pre));
    add_into(g.mlp_b1, colsum_row(d_pre));
    const DenseMatrix d_h2 = matmul_nt(d_pre, p.mlp_w1);  // N x D

    DenseMatrix d_x_mid =
        layer_norm_backward(d_h2, c.x_mid, p.ln2_gamma, c.ln2_mean, c.ln2_inv_std, g.ln2_gamma,
                            g.ln2_beta);
    add_into(d_x_mid, d_out);  // residual branch

    // Attention output projection: att_out = attn_concat Wo + bo
    DenseMatrix d_concat = matmul_nt(d_x_mid, p.attn.wo);  // N x D
    add_into(g.attn.wo, matmul_tn(c.attn_concat, d_x_mid));
    add_into(g.attn.bo, colsum_row(d_x_mid));

    DenseMatrix d_q(n, d), d_k(n, d), d_v(n, d);
    DenseMatrix qh(n, dh), kh(n, dh), vh_t(dh, n), doh(n, dh);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dh;
        const DenseMatrix& prob = c.attn[h];

        // Contiguous per-head buffers keep all four products on the
        // blocked matmul kernels.
        for (std::size_t i = 0; i < n; ++i) {
            const double* qrow = c.q.row_ptr(i) + off;
            const double* krow = c.k.row_ptr(i) + off;
            const double* vrow = c.v.row_ptr(i) + off;
            const double* drow = d_concat.row_ptr(i) + off;
            for (std::size_t t = 0; t < dh; ++t) {
                qh(i, t) = qrow[t];
                kh(i, t) = krow[t];
                vh_t(t, i) = vrow[t];
                doh(i, t) = drow[t];
            }
        }
        DenseMatrix d_p = matmul(doh, vh_t);            // N x N
        const DenseMatrix d_vh = matmul_tn(prob, doh);  // N x dh

        // Softmax rows: dS = P o (dP - rowsum(dP o P)); the score scale is
        // folded in here.
        DenseMatrix& d_s = d_p;
        for (std::size_t i = 0; i < n; ++i) {
            const double* pi = prob.row_ptr(i);
            double* dpi = d_s.row_ptr(i);
            double rowdot = 0.0;
            for (std::size_t j = 0; j < n; ++j) rowdot += dpi[j] * pi[j];
            for (std::size_t j = 0; j < n; ++j) dpi[j] = scale * pi[j] * (dpi[j] - rowdot);
        }
        const DenseMatrix d_qh = matmul(d_s, kh);     // N x dh
        const DenseMatrix d_kh = matmul_tn(d_s, qh);  // N x dh

        for (std::size_t i = 0; i < n; ++i) {
            double* dq = d_q.row_ptr(i) + off;
            double* dk = d_k.row_ptr(i) + off;
            double* dv = d_v.row_ptr(i) + off;
            for (std::size_t t = 0; t < dh; ++t) {
                dq[t] = d_qh(i, t);
                dk[t] = d_kh(i, t);
                dv[t] = d_vh(i, t);
            }
        }
    }

    // Q/K/V projections from h1
    DenseMatrix d_h1 = matmul_nt(d_q, p.attn.wq);
    add_into(d_h1, matmul_nt(d_k, p.attn.wk));
    add_into(d_h1, matmul_nt(d_v, p.attn.wv));
    add_into(g.attn.wq, matmul_tn(c.h1, d_q));
    add_into(g.attn.bq, colsum_row(d_q));
    add_into(g.attn.wk, matmul_tn(c.h1, d_k));
    add_into(g.attn.bk, colsum_row(d_k));
    add_into(g.attn.wv, matmul_tn(c.h1, d_v));
    add_into(g.attn.bv, colsum_row(d_v));

    DenseMatrix d_x_in =
        layer_norm_backward(d_h1, c.x_in, p.ln1_gamma, c.ln1_mean, c.ln1_inv_std, g.ln1_gamma,
                            g.ln1_beta);
    add_into(d_x_in, d_x_mid);  // residual branch
    return d_x_in;
}

}  // namespace

void encoder_backward_from_tokens(const EncoderModel& model, const ForwardCache& cache,
                                  const SemanticBasis* basis, const DenseMatrix& d_tokens,
                                  GradTable& grads) {
    const EncoderConfig& cfg = model.config;
    const std::size_t n = cfg.num_tokens(), d = cfg.dim;
    if (d_tokens.rows != n || d_tokens.cols != d) {
        throw ShapeError("encoder_backward_from_tokens: gradient " + d_tokens.shape_str() +
                         " vs tokens " + std::to_string(n) + "x" + std::to_string(d));
    }

    DenseMatrix dx = d_tokens;

    for (std::size_t l = cfg.depth; l-- > 0;) {
        const BlockCache& c = cache.blocks[l];
        dx = block_backward(model.blocks[l], cfg, c, dx, grads.blocks[l]);
        if (c.gsd_applied) {
            // The projector is symmetric, so the gradient passes through
            // the same null-space map with U held constant.
            decouple_patch_rows_inplace(dx, *basis);
        }
    }

    add_into(grads.pos_embed, dx);
    DenseMatrix d_patch_tokens(n - 1, d);
    std::copy(dx.data.begin() + static_cast<std::ptrdiff_t>(d), dx.data.end(),
              d_patch_tokens.data.begin());
    add_into(grads.patch_embed, matmul_tn(cache.patches, d_patch_tokens));
}

void encoder_backward_from_cls(const EncoderModel& model, const ForwardCache& cache,
                               const SemanticBasis* basis, const Vector& d_cls,
                               GradTable& grads) {
    const std::size_t d = model.config.dim;
    if (d_cls.size() != d) {
        throw ShapeError("encoder_backward_from_cls: d_cls length " +
                         std::to_string(d_cls.size()) + " vs dim " + std::to_string(d));
    }
    DenseMatrix d_tokens(model.config.num_tokens(), d);
    std::copy(d_cls.begin(), d_cls.end(), d_tokens.row_ptr(0));
    encoder_backward_from_tokens(model, cache, basis, d_tokens, grads);
}

BackwardResult backward(const EncoderModel& detector, const std::vector<DenseMatrix>& images,
                        const Vector& labels, const GsdConfig* gsd, const SemanticBasis* basis) {
    if (images.size() != labels.size() || images.empty()) {
        throw ValidationError("backward: " + std::to_string(images.size()) + " images vs " +
                              std::to_string(labels.size()) + " labels");
    }
    BackwardResult res;
    res.grads = zeros_like(detector);
    res.logits.resize(images.size());
    check_labels(res.logits, labels);

    // One image at a time: the per-sample loss gradient only needs that
    // sample's logit and the batch size, so caches never pile up.
    const std::size_t d = detector.config.dim;
    const double inv_b = 1.0 / static_cast<double>(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        ForwardCache cache;
        res.logits[i] = forward(detector, images[i], gsd, basis, false, &cache).logit;
        const double p = sigmoid(res.logits[i]);
        const double dl =
            (p < kProbClamp || p > 1.0 - kProbClamp) ? 0.0 : (p - labels[i]) * inv_b;
        Vector d_cls(d);
        for (std::size_t j = 0; j < d; ++j) {
            res.grads.head_w(j, 0) += cache.cls_final[j] * dl;
            d_cls[j] = detector.head_w(j, 0) * dl;
        }
        res.grads.head_b(0, 0) += dl;
        encoder_backward_from_cls(detector, cache, basis, d_cls, res.grads);
    }
    res.loss = bce_loss(res.logits, labels);
    return res;
}

void adamw_update_tensor(DenseMatrix& param, const DenseMatrix& grad, DenseMatrix& m,
                         DenseMatrix& v, std::size_t step, const AdamHyper& hyper) {
    if (param.rows != grad.rows || param.cols != grad.cols) {
        throw ShapeError("adamw: param " + param.shape_str() + " vs grad " + grad.shape_str());
    }
    const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < param.data.size(); ++i) {
        const double g = grad.data[i];
        m.data[i] = hyper.beta1 * m.data[i] + (1.0 - hyper.beta1) * g;
        v.data[i] = hyper.beta2 * v.data[i] + (1.0 - hyper.beta2) * g * g;
        const double mhat = m.data[i] / bc1;
        const double vhat = v.data[i] / bc2;
        param.data[i] -=
            hyper.lr * (mhat / (std::sqrt(vhat) + hyper.eps) + hyper.weight_decay * param.data[i]);
    }
}

void adamw_step(EncoderModel& model, const GradTable& grads, OptimizerState& state) {
    ++state.step;
    std::vector<DenseMatrix*> p, m, v;
    std::vector<const DenseMatrix*> g;
    visit_params(model, [&](const std::string&, DenseMatrix& t) { p.push_back(&t); });
    visit_params(const_cast<GradTable&>(grads),
                 [&](const std::string&, DenseMatrix& t) { g.push_back(&t); });
    visit_params(state.m, [&](const std::string&, DenseMatrix& t) { m.push_back(&t); });
    visit_params(state.v, [&](const std::string&, DenseMatrix& t) { v.push_back(&t); });
    if (p.size() != g.size() || p.size() != m.size()) {
        throw ShapeError("adamw_step: model and gradient tables differ in size");
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
        adamw_update_tensor(*p[i], *g[i], *m[i], *v[i], state.step, state.hyper);
    }
}

double finite_difference_check(const std::function<double(const Vector&)>& f, const Vector& point,
                               const Vector& analytic, double h) {
    if (point.size() != analytic.size()) {
        throw ShapeError("finite_difference_check: point length " + std::to_string(point.size()) +
                         " vs gradient length " + std::to_string(analytic.size()));
    }
    if (!(h > 0.0)) throw ValidationError("finite_difference_check: h must be > 0");
    Vector x = point;
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + h;
        const double fp = f(x);
        x[i] = orig - h;
        const double fm = f(x);
        x[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw NumericalError("finite_difference_check: non-finite evaluation at coordinate " +
                                 std::to_string(i));
        }
        const double numeric = (fp - fm) / (2.0 * h);
        const double err = std::fabs(analytic[i] - numeric) /
                           std::max(1.0, std::fabs(analytic[i]));
        if (err > worst) worst = err;
    }
    return worst;
}

Vector flatten_params(const EncoderModel& model) {
    Vector flat;
    visit_params(const_cast<EncoderModel&>(model), [&](const std::string&, DenseMatrix& t) {
        flat.insert(flat.end(), t.data.begin(), t.data.end());
    });
    return flat;
}

void unflatten_params(EncoderModel& model, const Vector& flat) {
    std::size_t off = 0;
    visit_params(model, [&](const std::string&, DenseMatrix& t) {
        if (off + t.data.size() > flat.size()) {
            throw ShapeError("unflatten_params: flat vector too short");
        }
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                  flat.begin() + static_cast<std::ptrdiff_t>(off + t.data.size()),
                  t.data.begin());
        off += t.data.size();
    });
    if (off != flat.size()) throw ShapeError("unflatten_params: flat vector too long");
}

}  // namespace gsd
