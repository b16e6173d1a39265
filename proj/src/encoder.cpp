#include "gsd/encoder.hpp"

#include <cmath>

#include "gsd/fastmath.hpp"
#include "gsd/rng.hpp"

namespace gsd {

void EncoderConfig::validate() const {
    if (patch_size == 0 || image_size % patch_size != 0) {
        throw ConfigError("encoder: image_size " + std::to_string(image_size) +
                          " not divisible by patch_size " + std::to_string(patch_size));
    }
    if (heads == 0 || dim % heads != 0) {
        throw ConfigError("encoder: dim " + std::to_string(dim) + " not divisible by heads " +
                          std::to_string(heads));
    }
    if (depth == 0) throw ConfigError("encoder: depth must be >= 1");
    if (mlp_hidden() == 0) throw ConfigError("encoder: mlp_ratio too small");
    if (num_patches() == 0) throw ConfigError("encoder: no patch tokens");
}

namespace {

DenseMatrix random_weight(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
    DenseMatrix w(rows, cols);
    for (double& v : w.data) v = rng.normal(0.0, stddev);
    return w;
}

void add_bias_rows(DenseMatrix& x, const DenseMatrix& bias) {
    for (std::size_t i = 0; i < x.rows; ++i) {
        double* row = x.row_ptr(i);
        const double* b = bias.row_ptr(0);
        for (std::size_t j = 0; j < x.cols; ++j) row[j] += b[j];
    }
}

DenseMatrix layer_norm_rows(const DenseMatrix& x, const DenseMatrix& gamma,
                            const DenseMatrix& beta, Vector& mean_out, Vector& inv_std_out) {
    const std::size_t n = x.rows, d = x.cols;
    DenseMatrix y(n, d);
    mean_out.resize(n);
    inv_std_out.resize(n);
    const double* g = gamma.row_ptr(0);
    const double* b = beta.row_ptr(0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = x.row_ptr(i);
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += row[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = row[j] - mu;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double r = 1.0 / std::sqrt(var + kLayerNormEps);
        mean_out[i] = mu;
        inv_std_out[i] = r;
        double* yrow = y.row_ptr(i);
        for (std::size_t j = 0; j < d; ++j) yrow[j] = (row[j] - mu) * r * g[j] + b[j];
    }
    return y;
}

void softmax_rows_inplace(DenseMatrix& s) {
    for (std::size_t i = 0; i < s.rows; ++i) {
        double* row = s.row_ptr(i);
        double mx = row[0];
        for (std::size_t j = 1; j < s.cols; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < s.cols; ++j) {
            row[j] = fast_exp(row[j] - mx);
            sum += row[j];
        }
        const double inv = 1.0 / sum;
        for (std::size_t j = 0; j < s.cols; ++j) row[j] *= inv;
    }
}

// Forward through one block; fills the cache when given.
DenseMatrix block_forward(const BlockParams& p, const EncoderConfig& cfg, const DenseMatrix& x_in,
                          BlockCache* cache) {
    const std::size_t n = x_in.rows, d = x_in.cols;
    const std::size_t heads = cfg.heads, dh = cfg.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Vector ln1_mean, ln1_inv_std;
    DenseMatrix h1 = layer_norm_rows(x_in, p.ln1_gamma, p.ln1_beta, ln1_mean, ln1_inv_std);

    DenseMatrix q = matmul(h1, p.attn.wq);
    add_bias_rows(q, p.attn.bq);
    DenseMatrix k = matmul(h1, p.attn.wk);
    add_bias_rows(k, p.attn.bk);
    DenseMatrix v = matmul(h1, p.attn.wv);
    add_bias_rows(v, p.attn.bv);

    DenseMatrix attn_concat(n, d);
    std::vector<DenseMatrix> attn(heads);
    DenseMatrix qh(n, dh), kh_t(dh, n), vh(n, dh);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dh;
        // Contiguous per-head views so the score/apply products run through
        // the blocked kernels; the scale is folded into the Q copy.
        for (std::size_t i = 0; i < n; ++i) {
            const double* qrow = q.row_ptr(i) + off;
            const double* krow = k.row_ptr(i) + off;
            const double* vrow = v.row_ptr(i) + off;
            double* qd = qh.row_ptr(i);
            double* vd = vh.row_ptr(i);
            for (std::size_t c = 0; c < dh; ++c) {
                qd[c] = qrow[c] * scale;
                kh_t(c, i) = krow[c];
                vd[c] = vrow[c];
            }
        }
        DenseMatrix s = matmul(qh, kh_t);
        softmax_rows_inplace(s);
        const DenseMatrix oh = matmul(s, vh);
        for (std::size_t i = 0; i < n; ++i) {
            const double* orow = oh.row_ptr(i);
            double* dst = attn_concat.row_ptr(i) + off;
            for (std::size_t c = 0; c < dh; ++c) dst[c] = orow[c];
        }
        attn[h] = std::move(s);
    }

    DenseMatrix att_out = matmul(attn_concat, p.attn.wo);
    add_bias_rows(att_out, p.attn.bo);

    DenseMatrix x_mid = x_in;
    for (std::size_t i = 0; i < x_mid.data.size(); ++i) x_mid.data[i] += att_out.data[i];

    Vector ln2_mean, ln2_inv_std;
    DenseMatrix h2 = layer_norm_rows(x_mid, p.ln2_gamma, p.ln2_beta, ln2_mean, ln2_inv_std);

    DenseMatrix mlp_pre = matmul(h2, p.mlp_w1);
    add_bias_rows(mlp_pre, p.mlp_b1);
    // SiLU: smooth (finite-difference friendly); the sigmoid is cached so
    // the backward pass needs no transcendentals.
    DenseMatrix mlp_sig(mlp_pre.rows, mlp_pre.cols);
    DenseMatrix mlp_act(mlp_pre.rows, mlp_pre.cols);
    for (std::size_t i = 0; i < mlp_pre.data.size(); ++i) {
        const double s = fast_sigmoid(mlp_pre.data[i]);
        mlp_sig.data[i] = s;
        mlp_act.data[i] = mlp_pre.data[i] * s;
    }
    DenseMatrix mlp_out = matmul(mlp_act, p.mlp_w2);
    add_bias_rows(mlp_out, p.mlp_b2);

    DenseMatrix x_out = x_mid;
    for (std::size_t i = 0; i < x_out.data.size(); ++i) x_out.data[i] += mlp_out.data[i];

    if (cache) {
        cache->x_in = x_in;
        cache->h1 = std::move(h1);
        cache->ln1_mean = std::move(ln1_mean);
        cache->ln1_inv_std = std::move(ln1_inv_std);
        cache->q = std::move(q);
        cache->k = std::move(k);
        cache->v = std::move(v);
        cache->attn = std::move(attn);
        cache->attn_concat = std::move(attn_concat);
        cache->x_mid = std::move(x_mid);
        cache->h2 = std::move(h2);
        cache->ln2_mean = std::move(ln2_mean);
        cache->ln2_inv_std = std::move(ln2_inv_std);
        cache->mlp_pre = std::move(mlp_pre);
        cache->mlp_sig = std::move(mlp_sig);
        cache->mlp_act = std::move(mlp_act);
    }
    return x_out;
}

}  // namespace

EncoderModel init_encoder(const EncoderConfig& config, std::uint64_t seed) {
    config.validate();
    EncoderModel m;
    m.config = config;
    const std::size_t d = config.dim, hdim = config.mlp_hidden();
    std::uint64_t stream = 0;
    auto next_rng = [&] { return Rng(derive_seed(seed, 0x6d6f64656cULL, stream++)); };

    {
        Rng rng = next_rng();
        m.patch_embed = random_weight(rng, config.patch_dim(), d,
                                      1.0 / std::sqrt(static_cast<double>(config.patch_dim())));
    }
    {
        Rng rng = next_rng();
        m.pos_embed = random_weight(rng, config.num_tokens(), d, 0.02);
    }
    m.blocks.resize(config.depth);
    const double wstd = 1.0 / std::sqrt(static_cast<double>(d));
    for (auto& b : m.blocks) {
        b.ln1_gamma = DenseMatrix(1, d, 1.0);
        b.ln1_beta = DenseMatrix(1, d, 0.0);
        {
            Rng rng = next_rng();
            b.attn.wq = random_weight(rng, d, d, wstd);
            b.attn.wk = random_weight(rng, d, d, wstd);
            b.attn.wv = random_weight(rng, d, d, wstd);
            b.attn.wo = random_weight(rng, d, d, wstd);
        }
        b.attn.bq = DenseMatrix(1, d);
        b.attn.bk = DenseMatrix(1, d);
        b.attn.bv = DenseMatrix(1, d);
        b.attn.bo = DenseMatrix(1, d);
        b.ln2_gamma = DenseMatrix(1, d, 1.0);
        b.ln2_beta = DenseMatrix(1, d, 0.0);
        {
            Rng rng = next_rng();
            b.mlp_w1 = random_weight(rng, d, hdim, wstd);
            b.mlp_w2 =
                random_weight(rng, hdim, d, 1.0 / std::sqrt(static_cast<double>(hdim)));
        }
        b.mlp_b1 = DenseMatrix(1, hdim);
        b.mlp_b2 = DenseMatrix(1, d);
    }
    {
        // Small but nonzero head so the body sees gradients from step one.
        Rng rng = next_rng();
        m.head_w = random_weight(rng, d, 1, 0.02);
    }
    m.head_b = DenseMatrix(1, 1);
    return m;
}

EncoderModel zeros_like(const EncoderModel& like) {
    EncoderModel z = like;
    visit_params(z, [](const std::string&, DenseMatrix& t) {
        std::fill(t.data.begin(), t.data.end(), 0.0);
    });
    return z;
}

bool params_equal(const EncoderModel& a, const EncoderModel& b) {
    if (!(a.config == b.config)) return false;
    bool equal = true;
    std::vector<const DenseMatrix*> ta, tb;
    visit_params(const_cast<EncoderModel&>(a),
                 [&](const std::string&, DenseMatrix& t) { ta.push_back(&t); });
    visit_params(const_cast<EncoderModel&>(b),
                 [&](const std::string&, DenseMatrix& t) { tb.push_back(&t); });
    for (std::size_t i = 0; i < ta.size(); ++i) {
        if (ta[i]->rows != tb[i]->rows || ta[i]->cols != tb[i]->cols ||
            ta[i]->data != tb[i]->data) {
            equal = false;
            break;
        }
    }
    return equal;
}

DenseMatrix patchify(const DenseMatrix& image, std::size_t patch_size) {
    if (patch_size == 0 || image.rows % patch_size != 0 || image.cols % patch_size != 0) {
        throw ShapeError("patchify: image " + image.shape_str() + " not divisible by patch size " +
                         std::to_string(patch_size));
    }
    const std::size_t pr = image.rows / patch_size, pc = image.cols / patch_size;
    DenseMatrix out(pr * pc, patch_size * patch_size);
    for (std::size_t a = 0; a < pr; ++a) {
        for (std::size_t b = 0; b < pc; ++b) {
            double* row = out.row_ptr(a * pc + b);
            for (std::size_t i = 0; i < patch_size; ++i)
                for (std::size_t j = 0; j < patch_size; ++j)
                    row[i * patch_size + j] = image(a * patch_size + i, b * patch_size + j);
        }
    }
    return out;
}

DenseMatrix unpatchify(const DenseMatrix& patches, std::size_t height, std::size_t width,
                       std::size_t patch_size) {
    if (patch_size == 0 || height % patch_size != 0 || width % patch_size != 0) {
        throw ShapeError("unpatchify: image " + std::to_string(height) + "x" +
                         std::to_string(width) + " not divisible by patch size " +
                         std::to_string(patch_size));
    }
    const std::size_t pr = height / patch_size, pc = width / patch_size;
    if (patches.rows != pr * pc || patches.cols != patch_size * patch_size) {
        throw ShapeError("unpatchify: patches " + patches.shape_str() + " do not tile " +
                         std::to_string(height) + "x" + std::to_string(width));
    }
    DenseMatrix image(height, width);
    for (std::size_t a = 0; a < pr; ++a)
        for (std::size_t b = 0; b < pc; ++b) {
            const double* row = patches.row_ptr(a * pc + b);
            for (std::size_t i = 0; i < patch_size; ++i)
                for (std::size_t j = 0; j < patch_size; ++j)
                    image(a * patch_size + i, b * patch_size + j) = row[i * patch_size + j];
        }
    return image;
}

Vector extract_global(const DenseMatrix& tokens, AnchorMode mode) {
    if (tokens.rows < 2) {
        throw ValidationError("extract_global: need the classification token plus patches, got " +
                              tokens.shape_str());
    }
    Vector g(tokens.cols, 0.0);
    if (mode == AnchorMode::CLS) {
        const double* row = tokens.row_ptr(0);
        g.assign(row, row + tokens.cols);
        return g;
    }
    for (std::size_t i = 1; i < tokens.rows; ++i) {
        const double* row = tokens.row_ptr(i);
        for (std::size_t j = 0; j < tokens.cols; ++j) g[j] += row[j];
    }
    const double inv = 1.0 / static_cast<double>(tokens.rows - 1);
    for (double& v : g) v *= inv;
    return g;
}

namespace {

// Embedded input tokens: row 0 is the classification slot (pos_embed row 0
// alone), rows 1.. are projected patches plus their positional embeddings.
DenseMatrix build_input_tokens(const EncoderModel& model, const DenseMatrix& image,
                               DenseMatrix* patches_out) {
    const EncoderConfig& cfg = model.config;
    const std::size_t n = cfg.num_tokens(), d = cfg.dim;
    DenseMatrix patches = patchify(image, cfg.patch_size);
    const DenseMatrix x = matmul(patches, model.patch_embed);
    DenseMatrix tokens(n, d);
    for (std::size_t j = 0; j < d; ++j) tokens(0, j) = model.pos_embed(0, j);
    for (std::size_t i = 1; i < n; ++i) {
        double* row = tokens.row_ptr(i);
        const double* xrow = x.row_ptr(i - 1);
        const double* prow = model.pos_embed.row_ptr(i);
        for (std::size_t j = 0; j < d; ++j) row[j] = xrow[j] + prow[j];
    }
    if (patches_out) *patches_out = std::move(patches);
    return tokens;
}

}  // namespace

ForwardTrace forward(const EncoderModel& model, const DenseMatrix& image, const GsdConfig* gsd,
                     const SemanticBasis* basis, bool trace, ForwardCache* cache) {
    const EncoderConfig& cfg = model.config;
    const std::size_t n = cfg.num_tokens(), d = cfg.dim, depth = cfg.depth;

    const bool gsd_active = gsd != nullptr && gsd->active();
    if (gsd_active && basis == nullptr) {
        throw ConfigError("forward: GSD is active but no basis was provided");
    }
    if (gsd != nullptr && gsd->num_tail_layers > depth) {
        throw ConfigError("forward: num_tail_layers " + std::to_string(gsd->num_tail_layers) +
                          " exceeds encoder depth " + std::to_string(depth));
    }
    const std::size_t first_equipped =
        gsd_active ? depth - gsd->num_tail_layers : depth;
    const bool apply_gsd = gsd_active && basis != nullptr && !basis->empty();

    DenseMatrix patches;
    DenseMatrix tokens = build_input_tokens(model, image, &patches);

    ForwardTrace out;
    if (cache) {
        cache->patches = std::move(patches);
        cache->blocks.resize(depth);
    }
    if (trace) out.layer_inputs.reserve(depth);

    for (std::size_t l = 0; l < depth; ++l) {
        const bool equipped = apply_gsd && l >= first_equipped;
        if (equipped) decouple_patch_rows_inplace(tokens, *basis);
        if (trace) out.layer_inputs.push_back(tokens);

        BlockCache* bc = cache ? &cache->blocks[l] : nullptr;
        const bool want_attn = trace && l + 1 == depth;
        BlockCache local;
        BlockCache* use = bc ? bc : (want_attn ? &local : nullptr);
        tokens = block_forward(model.blocks[l], cfg, tokens, use);
        if (bc) bc->gsd_applied = equipped;
        if (want_attn) {
            const BlockCache& src = bc ? *bc : local;
            out.cls_attention = DenseMatrix(cfg.heads, n);
            for (std::size_t h = 0; h < cfg.heads; ++h)
                for (std::size_t j = 0; j < n; ++j) out.cls_attention(h, j) = src.attn[h](0, j);
        }
    }

    out.penultimate.assign(tokens.row_ptr(0), tokens.row_ptr(0) + d);
    double logit = model.head_b(0, 0);
    for (std::size_t j = 0; j < d; ++j) logit += out.penultimate[j] * model.head_w(j, 0);
    out.logit = logit;
    if (cache) {
        cache->cls_final = out.penultimate;
        cache->tokens_out = std::move(tokens);
    }
    return out;
}

DenseMatrix encode_final_tokens(const EncoderModel& model, const DenseMatrix& image) {
    DenseMatrix tokens = build_input_tokens(model, image, nullptr);
    for (std::size_t l = 0; l < model.config.depth; ++l)
        tokens = block_forward(model.blocks[l], model.config, tokens, nullptr);
    return tokens;
}

DenseMatrix frozen_globals(const EncoderModel& frozen, const std::vector<DenseMatrix>& images,
                           AnchorMode mode) {
    if (images.empty()) throw ValidationError("frozen_globals: empty batch");
    DenseMatrix globals(images.size(), frozen.config.dim);
    for (std::size_t i = 0; i < images.size(); ++i) {
        const Vector g = extract_global(encode_final_tokens(frozen, images[i]), mode);
        std::copy(g.begin(), g.end(), globals.row_ptr(i));
    }
    return globals;
}

DualStreamResult dual_stream_forward(const EncoderModel& frozen, const EncoderModel& detector,
                                     const std::vector<DenseMatrix>& images,
                                     const GsdConfig& gsd) {
    if (!(frozen.config == detector.config)) {
        throw ConfigError("dual_stream_forward: stream configs differ");
    }
    if (images.empty()) throw ValidationError("dual_stream_forward: empty batch");

    DualStreamResult res;
    const DenseMatrix globals = frozen_globals(frozen, images, gsd.anchor_mode);
    res.basis = estimate_semantic_basis(globals, gsd.requested_k);

    res.logits.resize(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        ForwardTrace t = forward(detector, images[i], &gsd, &res.basis, true);
        res.logits[i] = t.logit;
        const std::size_t depth = detector.config.depth;
        const std::size_t first_equipped =
            gsd.active() ? depth - gsd.num_tail_layers : depth;
        if (gsd.active() && !res.basis.empty()) {
            for (std::size_t l = first_equipped; l < depth; ++l) {
                const DenseMatrix& x = t.layer_inputs[l];
                DenseMatrix patch_rows(x.rows - 1, x.cols);
                std::copy(x.data.begin() + static_cast<std::ptrdiff_t>(x.cols), x.data.end(),
                          patch_rows.data.begin());
                res.residual_ortho =
                    std::max(res.residual_ortho, residual_orthogonality(patch_rows, res.basis));
                for (std::size_t r = 0; r < patch_rows.rows; ++r) {
                    double nrm = 0.0;
                    const double* row = patch_rows.row_ptr(r);
                    for (std::size_t c = 0; c < patch_rows.cols; ++c) nrm += row[c] * row[c];
                    res.max_row_norm = std::max(res.max_row_norm, std::sqrt(nrm));
                }
            }
        }
    }
    return res;
}

}  // namespace gsd
