#pragma once

#include <string>
#include <vector>

#include "gsd/config.hpp"
#include "gsd/encoder.hpp"
#include "gsd/synthgen.hpp"
#include "gsd/train.hpp"

namespace gsd {

struct EpochRow {
    std::size_t epoch = 0;  // 1-based
    std::string split;
    double loss = 0.0;
    double auc_frame = 0.0;
    double auc_group = 0.0;
    double acc = 0.0;
};

struct TrainResult {
    EncoderModel frozen;
    EncoderModel detector;
    SemanticBasis last_train_basis;  // empty when GSD was off
    std::vector<EpochRow> trace;
};

// Frozen-stream global feature of every sample, in dataset order.
DenseMatrix dataset_frozen_globals(const EncoderModel& frozen, const Dataset& ds,
                                   AnchorMode mode);

// Identity-classification pretraining over the synthetic identities: the
// desk-scale analog of semantic pretraining. The binary head stays zero;
// the temporary identity head is discarded.
EncoderModel pretrain_identity_encoder(const EncoderConfig& cfg, const Dataset& train,
                                       const TrainParams& params);

struct EvalOutput {
    Vector logits;
    // classification-token representations entering the head, one per
    // sample; filled when collect_features is set
    std::vector<Vector> penultimate;
    double residual_ortho = 0.0;
    double max_row_norm = 0.0;
};

// Scores a dataset in order. With GSD active the basis comes either from
// fixed_basis (deployment-style) or per batch from the frozen globals
// (transductive); globals_cache, when given, must hold
// dataset_frozen_globals rows for ds.
EvalOutput score_dataset(const EncoderModel& detector, const Dataset& ds, const GsdConfig& gsd,
                         const DenseMatrix* globals_cache, const SemanticBasis* fixed_basis,
                         std::size_t batch_size, bool collect_features = false);

EpochRow metrics_row(std::size_t epoch, const std::string& split, const Dataset& ds,
                     const Vector& logits);

// Full training protocol: obtain the frozen stream (pretrain, load, or
// random init), fine-tune the detector with GSD per config, and trace
// per-epoch metrics on train_a / test_a / test_b. Deterministic in
// (config, seed): identical trace bytes across runs.
TrainResult train_loop(const RunConfig& config);

std::string trace_csv(const std::vector<EpochRow>& rows);

// Dataset file names written by generate and read by train.
inline constexpr const char* kTrainAFile = "train_a.gsdd";
inline constexpr const char* kTestAFile = "test_a.gsdd";
inline constexpr const char* kTestBFile = "test_b.gsdd";

}  // namespace gsd
