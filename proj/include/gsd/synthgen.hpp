#pragma once

#include <cstdint>
#include <vector>

#include "gsd/matrix.hpp"

namespace gsd {

// Which artifact family a split carries: A plants rectangular seams with a
// shifted local mean (blending-boundary analog), B plants high-frequency
// checkerboard patches (spectral-artifact analog).
enum class Domain : std::uint8_t { A = 0, B = 1 };

// Frames per group; groups are the video-level analog for group AUC.
inline constexpr std::size_t kGroupSize = 10;

struct SynthConfig {
    std::size_t n_identities = 20;
    std::size_t samples_per_identity = 40;  // half real, half fake
    std::size_t image_size = 32;
    double semantic_strength = 1.0;
    double artifact_strength = 0.15;
    double noise_sigma = 0.05;
    Domain domain = Domain::A;
    std::uint64_t seed = 0;

    void validate() const;
    std::size_t total_samples() const { return n_identities * samples_per_identity; }
};

struct SynthSample {
    Vector pixels;  // image_size^2 values in [0,1], row-major
    std::uint8_t label = 0;  // 0 real, 1 fake
    std::uint32_t identity_id = 0;
    std::uint32_t group_id = 0;
    Domain domain = Domain::A;
};

struct Dataset {
    std::size_t image_size = 0;
    std::vector<SynthSample> samples;

    DenseMatrix image(std::size_t index) const;
};

// n smooth, mutually distinct base patterns in [0,1]: low-frequency random
// fields (bilinear upsampling of a coarse Gaussian grid), min-max
// normalized. Deterministic in seed.
std::vector<DenseMatrix> make_identity_bank(std::size_t n, std::size_t image_size,
                                            std::uint64_t seed);

// pixels = clamp01(semantic_strength * base + noise + artifact). The noise
// stream depends only on the sample seed, so real/fake and A/B renders of
// one seed share it; artifact placement is seeded per (sample, domain).
// Pixel values are rounded to 32-bit float precision to match the on-disk
// representation exactly.
SynthSample render_sample(const std::vector<DenseMatrix>& bank, std::size_t identity_id,
                          bool is_fake, Domain domain, const SynthConfig& config,
                          std::uint64_t sample_seed);

// Balanced real/fake samples for every identity in a fixed deterministic
// order (identity-major, reals first), with contiguous groups of
// kGroupSize frames per (identity, label).
Dataset generate_split(const SynthConfig& config);

// Manifest rows: index,identity,label,group,domain.
std::string manifest_csv(const Dataset& dataset);

}  // namespace gsd
