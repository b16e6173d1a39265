#pragma once

#include <cstdint>
#include <vector>

#include "gsd/matrix.hpp"

namespace gsd {

// Mann-Whitney AUC: the fraction of (positive, negative) pairs where the
// positive scores higher, ties counted half. The pair count is accumulated
// in integers, so the result matches brute-force pair counting exactly.
// Throws ValidationError when only one class is present.
double roc_auc(const Vector& scores, const Vector& labels);

// Mean score per group, then roc_auc over the group means. Every group
// must be label-pure; singleton groups reduce to roc_auc bit-for-bit.
double group_auc(const Vector& scores, const Vector& labels,
                 const std::vector<std::uint32_t>& groups);

// Fraction correct at the fixed threshold sigmoid(score) > 0.5, i.e.
// score > 0; a zero logit classifies as negative.
double accuracy(const Vector& scores, const Vector& labels);

// Mean silhouette over points, Euclidean distances, in [-1, 1]. Singleton
// clusters contribute 0. Requires at least two clusters.
double silhouette(const DenseMatrix& features, const std::vector<std::uint32_t>& cluster_labels);

}  // namespace gsd
