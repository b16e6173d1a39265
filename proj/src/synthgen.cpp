#include "gsd/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gsd/rng.hpp"

namespace gsd {

namespace {

constexpr std::uint64_t kTagBank = 0x62616e6b;      // "bank"
constexpr std::uint64_t kTagNoise = 0x6e6f6973;     // "nois"
constexpr std::uint64_t kTagArtifact = 0x61727466;  // "artf"
constexpr std::uint64_t kTagSample = 0x73616d70;    // "samp"

// Interior tone shift of the domain-A blend region, relative to
// artifact_strength. Low-frequency content lands in the semantic subspace
// the frozen stream spans, so it is the shortcut the projection removes.
constexpr double kInteriorShift = 1.2;

// Seam step-edge amplitude relative to artifact_strength: deliberately
// fainter than the interior shift, so the edge cue only gets learned under
// undivided gradient pressure.
constexpr double kSeamAmp = 0.6;

// Domain-B checkerboard amplitude relative to artifact_strength: fainter
// than the domain-A seam, so only a detector that committed to the
// high-frequency cue still fires across the shift.
constexpr double kCheckerAmp = 0.5;

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

}  // namespace

void SynthConfig::validate() const {
    if (n_identities < 2) throw ValidationError("synth: n_identities must be >= 2");
    if (samples_per_identity == 0 || samples_per_identity % 2 != 0) {
        throw ValidationError("synth: samples_per_identity must be even and > 0");
    }
    if (image_size < 8) throw ValidationError("synth: image_size must be >= 8");
    if (semantic_strength < 0.0 || artifact_strength < 0.0 || noise_sigma < 0.0) {
        throw ValidationError("synth: strengths must be >= 0");
    }
}

DenseMatrix Dataset::image(std::size_t index) const {
    const SynthSample& s = samples.at(index);
    DenseMatrix img(image_size, image_size);
    std::copy(s.pixels.begin(), s.pixels.end(), img.data.begin());
    return img;
}

std::vector<DenseMatrix> make_identity_bank(std::size_t n, std::size_t image_size,
                                            std::uint64_t seed) {
    if (n < 2) throw ValidationError("make_identity_bank: need at least 2 identities");
    constexpr std::size_t kCoarse = 4;  // low-frequency content only
    std::vector<DenseMatrix> bank;
    bank.reserve(n);
    for (std::size_t id = 0; id < n; ++id) {
        Rng rng(derive_seed(seed, kTagBank, id));
        DenseMatrix coarse(kCoarse, kCoarse);
        for (double& v : coarse.data) v = rng.normal();

        DenseMatrix img(image_size, image_size);
        const double step = image_size > 1
                                ? static_cast<double>(kCoarse - 1) / static_cast<double>(image_size - 1)
                                : 0.0;
        for (std::size_t i = 0; i < image_size; ++i) {
            const double u = static_cast<double>(i) * step;
            const std::size_t u0 = std::min<std::size_t>(static_cast<std::size_t>(u), kCoarse - 2);
            const double fu = u - static_cast<double>(u0);
            for (std::size_t j = 0; j < image_size; ++j) {
                const double v = static_cast<double>(j) * step;
                const std::size_t v0 =
                    std::min<std::size_t>(static_cast<std::size_t>(v), kCoarse - 2);
                const double fv = v - static_cast<double>(v0);
                img(i, j) = coarse(u0, v0) * (1.0 - fu) * (1.0 - fv) +
                            coarse(u0 + 1, v0) * fu * (1.0 - fv) +
                            coarse(u0, v0 + 1) * (1.0 - fu) * fv +
                            coarse(u0 + 1, v0 + 1) * fu * fv;
            }
        }
        double lo = img.data[0], hi = img.data[0];
        for (double v : img.data) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (hi > lo) {
            const double inv = 1.0 / (hi - lo);
            for (double& v : img.data) v = (v - lo) * inv;
        } else {
            std::fill(img.data.begin(), img.data.end(), 0.5);
        }
        bank.push_back(std::move(img));
    }
    return bank;
}

SynthSample render_sample(const std::vector<DenseMatrix>& bank, std::size_t identity_id,
                          bool is_fake, Domain domain, const SynthConfig& config,
                          std::uint64_t sample_seed) {
    if (identity_id >= bank.size()) {
        throw ValidationError("render_sample: identity " + std::to_string(identity_id) +
                              " out of range (bank size " + std::to_string(bank.size()) + ")");
    }
    const std::size_t s = config.image_size;
    const DenseMatrix& base = bank[identity_id];
    if (base.rows != s || base.cols != s) {
        throw ShapeError("render_sample: bank pattern " + base.shape_str() +
                         " vs image size " + std::to_string(s));
    }

    DenseMatrix artifact(s, s);
    if (is_fake) {
        Rng rng(derive_seed(sample_seed, kTagArtifact, static_cast<std::uint64_t>(domain)));
        if (domain == Domain::A) {
            // Rectangular blend region: the interior's local mean shifts up
            // (an easy low-frequency cue) and the two-pixel seam carries a
            // zero-mean step edge (the subtle high-frequency cue).
            const std::size_t min_side = std::min<std::size_t>(8, s / 2);
            const std::size_t max_side = std::max<std::size_t>(s / 2, min_side + 1);
            const std::size_t w = min_side + rng.next_below(max_side - min_side + 1);
            const std::size_t h = min_side + rng.next_below(max_side - min_side + 1);
            const std::size_t x0 = rng.next_below(s - h + 1);
            const std::size_t y0 = rng.next_below(s - w + 1);
            for (std::size_t i = 0; i < h; ++i) {
                for (std::size_t j = 0; j < w; ++j) {
                    const std::size_t depth =
                        std::min(std::min(i, h - 1 - i), std::min(j, w - 1 - j));
                    if (depth == 0) artifact(x0 + i, y0 + j) = kSeamAmp;
                    else if (depth == 1) artifact(x0 + i, y0 + j) = -kSeamAmp;
                    else artifact(x0 + i, y0 + j) = kInteriorShift;
                }
            }
        } else {
            // High-frequency checkerboard patch (zero mean, seeded phase).
            const double sign = (rng.uniform() < 0.5 ? 1.0 : -1.0) * kCheckerAmp;
            const std::size_t max_side = std::min<std::size_t>(10, s);
            const std::size_t w = 4 + rng.next_below(max_side - 3);
            const std::size_t h = 4 + rng.next_below(max_side - 3);
            const std::size_t x0 = rng.next_below(s - h + 1);
            const std::size_t y0 = rng.next_below(s - w + 1);
            for (std::size_t i = 0; i < h; ++i)
                for (std::size_t j = 0; j < w; ++j)
                    artifact(x0 + i, y0 + j) = ((i + j) % 2 == 0 ? sign : -sign);
        }
    }

    Rng noise(derive_seed(sample_seed, kTagNoise));
    SynthSample out;
    out.pixels.resize(s * s);
    for (std::size_t i = 0; i < s * s; ++i) {
        const double v = config.semantic_strength * base.data[i] +
                         config.noise_sigma * noise.normal() +
                         config.artifact_strength * artifact.data[i];
        // Stored as float32 on disk; quantize now so in-memory and loaded
        // datasets are bit-identical.
        out.pixels[i] = static_cast<double>(static_cast<float>(clamp01(v)));
    }
    out.label = is_fake ? 1 : 0;
    out.identity_id = static_cast<std::uint32_t>(identity_id);
    out.domain = domain;
    return out;
}

Dataset generate_split(const SynthConfig& config) {
    config.validate();
    const std::vector<DenseMatrix> bank =
        make_identity_bank(config.n_identities, config.image_size, config.seed);

    const std::size_t per_label = config.samples_per_identity / 2;
    const std::size_t groups_per_label = (per_label + kGroupSize - 1) / kGroupSize;

    Dataset ds;
    ds.image_size = config.image_size;
    ds.samples.reserve(config.total_samples());
    std::size_t global_index = 0;
    for (std::size_t id = 0; id < config.n_identities; ++id) {
        for (int fake = 0; fake <= 1; ++fake) {
            for (std::size_t k = 0; k < per_label; ++k) {
                const std::uint64_t sample_seed =
                    derive_seed(config.seed, kTagSample, global_index);
                SynthSample sample =
                    render_sample(bank, id, fake == 1, config.domain, config, sample_seed);
                sample.group_id = static_cast<std::uint32_t>(
                    (id * 2 + static_cast<std::size_t>(fake)) * groups_per_label + k / kGroupSize);
                ds.samples.push_back(std::move(sample));
                ++global_index;
            }
        }
    }
    return ds;
}

std::string manifest_csv(const Dataset& dataset) {
    std::string out = "index,identity,label,group,domain\n";
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        const SynthSample& s = dataset.samples[i];
        out += std::to_string(i) + "," + std::to_string(s.identity_id) + "," +
               std::to_string(static_cast<int>(s.label)) + "," + std::to_string(s.group_id) +
               "," + (s.domain == Domain::A ? "A" : "B") + "\n";
    }
    return out;
}

}  // namespace gsd
