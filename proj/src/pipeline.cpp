#include "gsd/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "gsd/fastmath.hpp"
#include "gsd/io.hpp"
#include "gsd/metrics.hpp"
#include "gsd/rng.hpp"

namespace gsd {

namespace {

constexpr std::uint64_t kTagFrozenInit = 0x66726f7a;  // "froz"
constexpr std::uint64_t kTagIdentHead = 0x69646864;   // "idhd"
constexpr std::uint64_t kTagPreShuffle = 0x70736866;  // "pshf"
constexpr std::uint64_t kTagShuffle = 0x73686866;     // "shff"

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = rng.next_below(i);
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

void require_finite_loss(double loss, std::size_t epoch, const char* phase) {
    if (!std::isfinite(loss)) {
        throw NumericalError(std::string(phase) + ": non-finite loss at epoch " +
                             std::to_string(epoch));
    }
}

SemanticBasis batch_basis(const DenseMatrix& globals_cache,
                          const std::vector<std::size_t>& sample_ids, std::size_t requested_k) {
    DenseMatrix globals(sample_ids.size(), globals_cache.cols);
    for (std::size_t i = 0; i < sample_ids.size(); ++i) {
        const double* src = globals_cache.row_ptr(sample_ids[i]);
        std::copy(src, src + globals_cache.cols, globals.row_ptr(i));
    }
    return estimate_semantic_basis(globals, requested_k);
}

}  // namespace

DenseMatrix dataset_frozen_globals(const EncoderModel& frozen, const Dataset& ds,
                                   AnchorMode mode) {
    DenseMatrix globals(ds.samples.size(), frozen.config.dim);
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const Vector g = extract_global(encode_final_tokens(frozen, ds.image(i)), mode);
        std::copy(g.begin(), g.end(), globals.row_ptr(i));
    }
    return globals;
}

EncoderModel pretrain_identity_encoder(const EncoderConfig& cfg, const Dataset& train,
                                       const TrainParams& params) {
    EncoderModel model = init_encoder(cfg, derive_seed(params.seed, kTagFrozenInit));
    std::uint32_t n_classes = 0;
    for (const SynthSample& s : train.samples)
        n_classes = std::max(n_classes, s.identity_id + 1);
    if (n_classes < 2) throw ValidationError("pretrain: need at least 2 identities");

    const std::size_t d = cfg.dim;
    DenseMatrix head_w(d, n_classes);
    DenseMatrix head_b(1, n_classes);
    {
        Rng rng(derive_seed(params.seed, kTagIdentHead));
        for (double& v : head_w.data) v = rng.normal(0.0, 1.0 / std::sqrt(double(d)));
    }
    DenseMatrix head_w_m(d, n_classes), head_w_v(d, n_classes);
    DenseMatrix head_b_m(1, n_classes), head_b_v(1, n_classes);

    AdamHyper hyper;
    hyper.lr = params.pretrain_lr;
    hyper.weight_decay = params.weight_decay;
    OptimizerState state(model, hyper);

    const std::size_t n = train.samples.size();
    for (std::size_t epoch = 1; epoch <= params.pretrain_epochs; ++epoch) {
        const std::vector<std::size_t> order =
            shuffled_indices(n, derive_seed(params.seed, kTagPreShuffle, epoch));
        for (std::size_t start = 0; start < n; start += params.batch) {
            const std::size_t bsz = std::min(params.batch, n - start);
            GradTable grads = zeros_like(model);
            DenseMatrix head_w_grad(d, n_classes);
            DenseMatrix head_b_grad(1, n_classes);
            double batch_loss = 0.0;
            const double inv_b = 1.0 / static_cast<double>(bsz);

            for (std::size_t bi = 0; bi < bsz; ++bi) {
                const std::size_t si = order[start + bi];
                ForwardCache cache;
                forward(model, train.image(si), nullptr, nullptr, false, &cache);
                // Identity is read from the GAP of the final patch tokens,
                // the same global feature the basis is built from later, so
                // identity structure concentrates in the patch stream the
                // projection can reach, not in the classification token.
                const Vector gap = extract_global(cache.tokens_out, AnchorMode::GAP);

                Vector logits(n_classes);
                for (std::uint32_t c = 0; c < n_classes; ++c) {
                    double u = head_b(0, c);
                    for (std::size_t j = 0; j < d; ++j) u += gap[j] * head_w(j, c);
                    logits[c] = u;
                }
                double mx = logits[0];
                for (double v : logits) mx = std::max(mx, v);
                double denom = 0.0;
                Vector q(n_classes);
                for (std::uint32_t c = 0; c < n_classes; ++c) {
                    q[c] = fast_exp(logits[c] - mx);
                    denom += q[c];
                }
                const double inv_denom = 1.0 / denom;
                for (double& v : q) v *= inv_denom;
                const std::uint32_t y = train.samples[si].identity_id;
                batch_loss -= std::log(std::max(q[y], 1e-300)) * inv_b;

                Vector d_gap(d, 0.0);
                for (std::uint32_t c = 0; c < n_classes; ++c) {
                    const double du = (q[c] - (c == y ? 1.0 : 0.0)) * inv_b;
                    head_b_grad(0, c) += du;
                    for (std::size_t j = 0; j < d; ++j) {
                        head_w_grad(j, c) += gap[j] * du;
                        d_gap[j] += head_w(j, c) * du;
                    }
                }
                // GAP spreads the gradient evenly over the patch rows.
                const std::size_t n_tokens = cfg.num_tokens();
                DenseMatrix d_tokens(n_tokens, d);
                const double inv_patches = 1.0 / static_cast<double>(n_tokens - 1);
                for (std::size_t r = 1; r < n_tokens; ++r)
                    for (std::size_t j = 0; j < d; ++j) d_tokens(r, j) = d_gap[j] * inv_patches;
                encoder_backward_from_tokens(model, cache, nullptr, d_tokens, grads);
            }
            require_finite_loss(batch_loss, epoch, "pretrain");
            adamw_step(model, grads, state);
            adamw_update_tensor(head_w, head_w_grad, head_w_m, head_w_v, state.step, hyper);
            adamw_update_tensor(head_b, head_b_grad, head_b_m, head_b_v, state.step, hyper);
        }
    }
    return model;  // identity head discarded; binary head still zero
}

EvalOutput score_dataset(const EncoderModel& detector, const Dataset& ds, const GsdConfig& gsd,
                         const DenseMatrix* globals_cache, const SemanticBasis* fixed_basis,
                         std::size_t batch_size, bool collect_features) {
    const std::size_t n = ds.samples.size();
    if (batch_size == 0) throw ValidationError("score_dataset: batch_size must be > 0");
    EvalOutput out;
    out.logits.resize(n);
    if (collect_features) out.penultimate.resize(n);

    const bool active = gsd.active();
    const GsdConfig* gsd_ptr = active ? &gsd : nullptr;

    auto score_one = [&](std::size_t i, const SemanticBasis* basis) {
        const ForwardTrace t = forward(detector, ds.image(i), gsd_ptr, basis, false, nullptr);
        out.logits[i] = t.logit;
        if (collect_features) out.penultimate[i] = t.penultimate;
    };

    if (!active) {
        for (std::size_t i = 0; i < n; ++i) score_one(i, nullptr);
        return out;
    }
    if (fixed_basis != nullptr) {
        for (std::size_t i = 0; i < n; ++i) score_one(i, fixed_basis);
        return out;
    }
    if (globals_cache == nullptr || globals_cache->rows != n) {
        throw ValidationError("score_dataset: per-batch mode needs frozen globals for the split");
    }
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t bsz = std::min(batch_size, n - start);
        std::vector<std::size_t> ids(bsz);
        std::iota(ids.begin(), ids.end(), start);
        const SemanticBasis basis = batch_basis(*globals_cache, ids, gsd.requested_k);
        for (std::size_t i = start; i < start + bsz; ++i) score_one(i, &basis);
    }
    return out;
}

EpochRow metrics_row(std::size_t epoch, const std::string& split, const Dataset& ds,
                     const Vector& logits) {
    Vector labels(ds.samples.size());
    std::vector<std::uint32_t> groups(ds.samples.size());
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        labels[i] = ds.samples[i].label;
        groups[i] = ds.samples[i].group_id;
    }
    EpochRow row;
    row.epoch = epoch;
    row.split = split;
    row.loss = bce_loss(logits, labels);
    row.auc_frame = roc_auc(logits, labels);
    row.auc_group = group_auc(logits, labels, groups);
    row.acc = accuracy(logits, labels);
    return row;
}

TrainResult train_loop(const RunConfig& config) {
    const EncoderConfig enc_cfg = config.encoder();
    const GsdConfig gsd = config.gsd();
    const TrainParams params = config.train();

    namespace fs = std::filesystem;
    const fs::path data_dir = config.data_dir();
    auto load_split = [&](const char* name) {
        const std::string path = (data_dir / name).string();
        Dataset ds = read_dataset(path);
        if (ds.image_size != enc_cfg.image_size) {
            throw ConfigError("dataset " + path + " has image size " +
                              std::to_string(ds.image_size) + ", encoder expects " +
                              std::to_string(enc_cfg.image_size));
        }
        return ds;
    };
    const Dataset train_ds = load_split(kTrainAFile);
    const Dataset test_a = load_split(kTestAFile);
    const Dataset test_b = load_split(kTestBFile);

    TrainResult result;
    if (!params.frozen_ckpt.empty()) {
        LoadedModel loaded = load_model(params.frozen_ckpt);
        if (!(loaded.model.config == enc_cfg)) {
            throw ConfigError("frozen checkpoint " + params.frozen_ckpt +
                              " does not match encoder config");
        }
        result.frozen = std::move(loaded.model);
    } else if (params.frozen_random_init) {
        result.frozen = init_encoder(enc_cfg, derive_seed(params.seed, kTagFrozenInit));
    } else {
        result.frozen = pretrain_identity_encoder(enc_cfg, train_ds, params);
    }
    result.detector = result.frozen;  // fine-tuning starts from the frozen weights

    const bool active = gsd.active();
    DenseMatrix train_globals, test_a_globals, test_b_globals;
    if (active) {
        // Frozen features depend only on the (fixed) inputs, so one pass
        // per split serves every epoch and batch.
        train_globals = dataset_frozen_globals(result.frozen, train_ds, gsd.anchor_mode);
        test_a_globals = dataset_frozen_globals(result.frozen, test_a, gsd.anchor_mode);
        test_b_globals = dataset_frozen_globals(result.frozen, test_b, gsd.anchor_mode);
    }

    AdamHyper hyper;
    hyper.lr = params.lr;
    hyper.weight_decay = params.weight_decay;
    OptimizerState state(result.detector, hyper);

    const std::size_t n = train_ds.samples.size();
    const GsdConfig* gsd_ptr = active ? &gsd : nullptr;

    for (std::size_t epoch = 1; epoch <= params.epochs; ++epoch) {
        const std::vector<std::size_t> order =
            shuffled_indices(n, derive_seed(params.seed, kTagShuffle, epoch));
        Vector train_logits(n, 0.0);
        double epoch_loss = 0.0;

        for (std::size_t start = 0; start < n; start += params.batch) {
            const std::size_t bsz = std::min(params.batch, n - start);
            std::vector<std::size_t> ids(order.begin() + start, order.begin() + start + bsz);

            std::vector<DenseMatrix> images;
            images.reserve(bsz);
            Vector labels(bsz);
            for (std::size_t i = 0; i < bsz; ++i) {
                images.push_back(train_ds.image(ids[i]));
                labels[i] = train_ds.samples[ids[i]].label;
            }

            SemanticBasis basis;
            if (active) basis = batch_basis(train_globals, ids, gsd.requested_k);
            const SemanticBasis* basis_ptr = active ? &basis : nullptr;

            const BackwardResult res =
                backward(result.detector, images, labels, gsd_ptr, basis_ptr);
            require_finite_loss(res.loss, epoch, "train");
            adamw_step(result.detector, res.grads, state);

            epoch_loss += res.loss * static_cast<double>(bsz);
            for (std::size_t i = 0; i < bsz; ++i) train_logits[ids[i]] = res.logits[i];
            if (active && epoch == params.epochs && start + bsz >= n) {
                result.last_train_basis = std::move(basis);
            }
        }

        EpochRow train_row = metrics_row(epoch, "train_a", train_ds, train_logits);
        train_row.loss = epoch_loss / static_cast<double>(n);
        result.trace.push_back(train_row);

        const EvalOutput eval_a = score_dataset(result.detector, test_a, gsd,
                                                active ? &test_a_globals : nullptr, nullptr,
                                                params.batch);
        result.trace.push_back(metrics_row(epoch, "test_a", test_a, eval_a.logits));
        const EvalOutput eval_b = score_dataset(result.detector, test_b, gsd,
                                                active ? &test_b_globals : nullptr, nullptr,
                                                params.batch);
        result.trace.push_back(metrics_row(epoch, "test_b", test_b, eval_b.logits));
    }
    return result;
}

std::string trace_csv(const std::vector<EpochRow>& rows) {
    std::string out = "epoch,split,loss,auc_frame,auc_group,acc\n";
    for (const EpochRow& r : rows) {
        out += std::to_string(r.epoch) + "," + r.split + "," + format_double(r.loss) + "," +
               format_double(r.auc_frame) + "," + format_double(r.auc_group) + "," +
               format_double(r.acc) + "\n";
    }
    return out;
}

}  // namespace gsd
