#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gsd/basis.hpp"
#include "gsd/matrix.hpp"
#include "gsd/projection.hpp"

namespace gsd {

inline constexpr double kLayerNormEps = 1e-5;

// Architecture of the small patch transformer. Both streams of the dual
// architecture share one config.
struct EncoderConfig {
    std::size_t image_size = 32;
    std::size_t patch_size = 4;
    std::size_t dim = 64;
    std::size_t heads = 4;
    std::size_t depth = 6;
    double mlp_ratio = 4.0;

    std::size_t patch_dim() const { return patch_size * patch_size; }
    std::size_t num_patches() const {
        const std::size_t per_side = image_size / patch_size;
        return per_side * per_side;
    }
    // One classification token plus the patch tokens.
    std::size_t num_tokens() const { return num_patches() + 1; }
    std::size_t head_dim() const { return dim / heads; }
    std::size_t mlp_hidden() const { return static_cast<std::size_t>(dim * mlp_ratio); }

    void validate() const;
    bool operator==(const EncoderConfig&) const = default;
};

struct AttentionParams {
    DenseMatrix wq, bq, wk, bk, wv, bv, wo, bo;  // weights D x D, biases 1 x D
};

struct BlockParams {
    DenseMatrix ln1_gamma, ln1_beta;  // 1 x D
    AttentionParams attn;
    DenseMatrix ln2_gamma, ln2_beta;
    DenseMatrix mlp_w1, mlp_b1;  // D x H, 1 x H
    DenseMatrix mlp_w2, mlp_b2;  // H x D, 1 x D
};

// Named-parameter set of the encoder. Row 0 of pos_embed doubles as the
// learnable classification-token embedding (the token content starts at
// zero), so the parameter table stays exactly: patch projection,
// positional embeddings, per-block weights, classification head.
struct EncoderModel {
    EncoderConfig config;
    DenseMatrix patch_embed;  // P^2 x D
    DenseMatrix pos_embed;    // N x D
    std::vector<BlockParams> blocks;
    DenseMatrix head_w;  // D x 1
    DenseMatrix head_b;  // 1 x 1
};

// Deterministic initialization; identical (config, seed) gives bit-identical
// models.
EncoderModel init_encoder(const EncoderConfig& config, std::uint64_t seed);

// Same shapes as `like`, all entries zero. Gradient tables and optimizer
// moments are encoder-shaped.
EncoderModel zeros_like(const EncoderModel& like);

// Visits every parameter tensor with a stable dotted name, in a fixed
// order shared by checkpoints, gradients and optimizer state.
template <typename Model, typename Fn>
void visit_params(Model& model, Fn&& fn) {
    fn("patch_embed", model.patch_embed);
    fn("pos_embed", model.pos_embed);
    for (std::size_t l = 0; l < model.blocks.size(); ++l) {
        auto& b = model.blocks[l];
        const std::string p = "block" + std::to_string(l) + ".";
        fn(p + "ln1.gamma", b.ln1_gamma);
        fn(p + "ln1.beta", b.ln1_beta);
        fn(p + "attn.wq", b.attn.wq);
        fn(p + "attn.bq", b.attn.bq);
        fn(p + "attn.wk", b.attn.wk);
        fn(p + "attn.bk", b.attn.bk);
        fn(p + "attn.wv", b.attn.wv);
        fn(p + "attn.bv", b.attn.bv);
        fn(p + "attn.wo", b.attn.wo);
        fn(p + "attn.bo", b.attn.bo);
        fn(p + "ln2.gamma", b.ln2_gamma);
        fn(p + "ln2.beta", b.ln2_beta);
        fn(p + "mlp.w1", b.mlp_w1);
        fn(p + "mlp.b1", b.mlp_b1);
        fn(p + "mlp.w2", b.mlp_w2);
        fn(p + "mlp.b2", b.mlp_b2);
    }
    fn("head.w", model.head_w);
    fn("head.b", model.head_b);
}

// True when every tensor of a and b is bit-identical (used by the
// frozen-stream immutability checks).
bool params_equal(const EncoderModel& a, const EncoderModel& b);

// Row-major patch tokenization: one row per patch, pixels flattened
// row-major within the patch. Image rows/cols must be divisible by
// patch_size.
DenseMatrix patchify(const DenseMatrix& image, std::size_t patch_size);

// Inverse of patchify for an image of the given height/width.
DenseMatrix unpatchify(const DenseMatrix& patches, std::size_t height, std::size_t width,
                       std::size_t patch_size);

// Per-image global feature: GAP = mean of the patch tokens (excluding the
// classification token in row 0), CLS = row 0 itself.
Vector extract_global(const DenseMatrix& tokens, AnchorMode mode);

// Observable outputs of one forward pass.
struct ForwardTrace {
    double logit = 0.0;
    // Classification-token representation entering the head (always filled).
    Vector penultimate;
    // Block-input token matrices (after GSD where equipped); trace only.
    std::vector<DenseMatrix> layer_inputs;
    // Final-block attention of the classification-token query, one row per
    // head, rows sum to 1; trace only.
    DenseMatrix cls_attention;
};

// Cached activations of one forward pass, consumed by the backward pass.
struct BlockCache {
    DenseMatrix x_in;             // block input, after GSD where equipped
    bool gsd_applied = false;
    DenseMatrix h1;               // LN1 output
    Vector ln1_mean, ln1_inv_std;
    DenseMatrix q, k, v;          // N x D
    std::vector<DenseMatrix> attn;  // per-head N x N softmax rows
    DenseMatrix attn_concat;      // N x D, heads concatenated, pre-output-projection
    DenseMatrix x_mid;            // after the attention residual
    DenseMatrix h2;               // LN2 output
    Vector ln2_mean, ln2_inv_std;
    DenseMatrix mlp_pre;          // N x H preactivation
    DenseMatrix mlp_sig;          // N x H sigmoid(preactivation)
    DenseMatrix mlp_act;          // N x H SiLU output
};

struct ForwardCache {
    DenseMatrix patches;  // N_patches x P^2
    std::vector<BlockCache> blocks;
    DenseMatrix tokens_out;  // final-block output tokens
    Vector cls_final;        // penultimate representation (row 0 of tokens_out)
};

// Single-image forward. If gsd is active (num_tail_layers > 0 and
// requested_k > 0) a basis must be provided; an empty basis or inactive
// gsd reproduces the plain encoder bit-for-bit. The classification token
// bypasses the projection but still takes part in attention.
ForwardTrace forward(const EncoderModel& model, const DenseMatrix& image,
                     const GsdConfig* gsd = nullptr, const SemanticBasis* basis = nullptr,
                     bool trace = false, ForwardCache* cache = nullptr);

// Final-block token matrix of the plain encoder (no GSD, no head).
DenseMatrix encode_final_tokens(const EncoderModel& model, const DenseMatrix& image);

// Frozen-stream global features for a batch: one row per image.
DenseMatrix frozen_globals(const EncoderModel& frozen, const std::vector<DenseMatrix>& images,
                           AnchorMode mode);

struct DualStreamResult {
    Vector logits;
    SemanticBasis basis;
    // Diagnostics over all equipped layers and images.
    double residual_ortho = 0.0;
    double max_row_norm = 0.0;
};

// Full dual-stream pass: frozen stream -> anchor -> guide matrix -> basis,
// then the detector forward with GSD in its final blocks sharing that
// basis.
DualStreamResult dual_stream_forward(const EncoderModel& frozen, const EncoderModel& detector,
                                     const std::vector<DenseMatrix>& images,
                                     const GsdConfig& gsd);

}  // namespace gsd
