#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "gsd/encoder.hpp"
#include "gsd/matrix.hpp"

namespace gsd {

// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] inside the
// loss, which is otherwise undefined at p in {0, 1}.
inline constexpr double kProbClamp = 1e-7;

double sigmoid(double z);

// Mean binary cross-entropy of sigmoid(logit) against {0,1} labels.
double bce_loss(const Vector& logits, const Vector& labels);

// d(bce_loss)/d(logit) per sample: (p - y) / batch, zero where the clamp
// saturates.
Vector bce_grad(const Vector& logits, const Vector& labels);

// Gradient tables are encoder-shaped: one tensor per trainable parameter.
using GradTable = EncoderModel;

// Backpropagates d(loss)/d(final token matrix) through the encoder body,
// accumulating into grads. Layers that applied GSD in the forward pass
// project the gradient with the same basis (U constant).
void encoder_backward_from_tokens(const EncoderModel& model, const ForwardCache& cache,
                                  const SemanticBasis* basis, const DenseMatrix& d_tokens,
                                  GradTable& grads);

// Same, for a loss that reads only the classification-token row.
void encoder_backward_from_cls(const EncoderModel& model, const ForwardCache& cache,
                               const SemanticBasis* basis, const Vector& d_cls,
                               GradTable& grads);

struct BackwardResult {
    double loss = 0.0;
    GradTable grads;
    Vector logits;
};

// Forward + reverse pass over a batch through the detector with GSD active
// as configured. Frozen-stream parameters are not part of the returned
// table: no gradient path reaches them.
BackwardResult backward(const EncoderModel& detector, const std::vector<DenseMatrix>& images,
                        const Vector& labels, const GsdConfig* gsd, const SemanticBasis* basis);

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// First/second moments plus the step counter of decoupled-weight-decay
// Adam, shaped like the model they update.
struct OptimizerState {
    AdamHyper hyper;
    std::size_t step = 0;
    EncoderModel m;
    EncoderModel v;

    OptimizerState(const EncoderModel& like, const AdamHyper& h)
        : hyper(h), m(zeros_like(like)), v(zeros_like(like)) {}
};

// Single-tensor AdamW update with bias correction; step is the 1-based
// step count already incremented by the caller.
void adamw_update_tensor(DenseMatrix& param, const DenseMatrix& grad, DenseMatrix& m,
                         DenseMatrix& v, std::size_t step, const AdamHyper& hyper);

// Full-model AdamW step; deterministic for identical inputs.
void adamw_step(EncoderModel& model, const GradTable& grads, OptimizerState& state);

// Max over coordinates of |analytic - numeric| / max(1, |analytic|), where
// numeric is the central difference of f at `point` with step h. Throws
// NumericalError naming the coordinate if an evaluation is non-finite.
double finite_difference_check(const std::function<double(const Vector&)>& f, const Vector& point,
                               const Vector& analytic, double h = 1e-6);

// Round-trip between a model's parameters and one flat coordinate vector
// (visit_params order); used by the gradient checks.
Vector flatten_params(const EncoderModel& model);
void unflatten_params(EncoderModel& model, const Vector& flat);

}  // namespace gsd
