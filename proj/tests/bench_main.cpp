// Rough single-core throughput probe for the training hot path; prints
// per-image forward/backward times so run budgets can be sanity-checked.

#include <chrono>
#include <cstdio>
#include <vector>

#include "gsd/encoder.hpp"
#include "gsd/rng.hpp"
#include "gsd/synthgen.hpp"
#include "gsd/train.hpp"

using namespace gsd;
using Clock = std::chrono::steady_clock;

int main() {
    EncoderConfig cfg;  // defaults: 32x32, patch 4, D=64, 4 heads, depth 6
    EncoderModel model = init_encoder(cfg, 7);

    SynthConfig synth;
    synth.seed = 3;
    Dataset ds = generate_split(synth);
    std::vector<DenseMatrix> images;
    Vector labels;
    for (std::size_t i = 0; i < 32; ++i) {
        images.push_back(ds.image(i));
        labels.push_back(ds.samples[i].label);
    }

    // basis from random globals
    DenseMatrix globals(32, cfg.dim);
    Rng rng(99);
    for (double& v : globals.data) v = rng.normal();
    SemanticBasis basis = estimate_semantic_basis(globals, 8);
    GsdConfig gsd;

    auto t0 = Clock::now();
    double sink = 0.0;
    const int fwd_iters = 128;
    for (int it = 0; it < fwd_iters; ++it) {
        sink += forward(model, images[it % 32], &gsd, &basis).logit;
    }
    auto t1 = Clock::now();
    const double fwd_us =
        std::chrono::duration<double, std::micro>(t1 - t0).count() / fwd_iters;

    auto t2 = Clock::now();
    const int bwd_iters = 4;
    for (int it = 0; it < bwd_iters; ++it) {
        BackwardResult r = backward(model, images, labels, &gsd, &basis);
        sink += r.loss;
    }
    auto t3 = Clock::now();
    const double bwd_us =
        std::chrono::duration<double, std::micro>(t3 - t2).count() / (bwd_iters * 32.0);

    std::printf("forward: %.1f us/image\n", fwd_us);
    std::printf("forward+backward: %.1f us/image\n", bwd_us);
    std::printf("epoch of 800 train images (fwd+bwd): %.2f s\n", bwd_us * 800 / 1e6);
    std::printf("eval of 800 images (fwd): %.2f s\n", fwd_us * 800 / 1e6);
    std::printf("(sink %.3f)\n", sink);
    return 0;
}
