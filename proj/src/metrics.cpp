#include "gsd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>

#include "gsd/errors.hpp"

namespace gsd {

namespace {

void check_binary_labels(const Vector& scores, const Vector& labels, const char* who) {
    if (scores.size() != labels.size() || scores.empty()) {
        throw ValidationError(std::string(who) + ": " + std::to_string(scores.size()) +
                              " scores vs " + std::to_string(labels.size()) + " labels");
    }
    for (double y : labels) {
        if (y != 0.0 && y != 1.0) {
            throw ValidationError(std::string(who) + ": label " + std::to_string(y) +
                                  " is not in {0,1}");
        }
    }
}

}  // namespace

double roc_auc(const Vector& scores, const Vector& labels) {
    check_binary_labels(scores, labels, "roc_auc");
    std::uint64_t n_pos = 0, n_neg = 0;
    for (double y : labels) (y == 1.0 ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0) {
        throw ValidationError("roc_auc: undefined for single-class input");
    }

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // 2*wins + ties, walking runs of equal scores from the bottom.
    std::uint64_t wins2 = 0, neg_below = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        std::uint64_t pos_run = 0, neg_run = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            (labels[order[j]] == 1.0 ? pos_run : neg_run)++;
            ++j;
        }
        wins2 += pos_run * (2 * neg_below + neg_run);
        neg_below += neg_run;
        i = j;
    }
    return static_cast<double>(wins2) /
           (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double group_auc(const Vector& scores, const Vector& labels,
                 const std::vector<std::uint32_t>& groups) {
    check_binary_labels(scores, labels, "group_auc");
    if (groups.size() != scores.size()) {
        throw ValidationError("group_auc: " + std::to_string(groups.size()) + " group ids vs " +
                              std::to_string(scores.size()) + " scores");
    }
    struct Acc {
        double sum = 0.0;
        std::uint64_t count = 0;
        double label = 0.0;
    };
    std::map<std::uint32_t, Acc> acc;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        auto [it, inserted] = acc.try_emplace(groups[i]);
        if (inserted) {
            it->second.label = labels[i];
        } else if (it->second.label != labels[i]) {
            throw ValidationError("group_auc: group " + std::to_string(groups[i]) +
                                  " mixes labels");
        }
        it->second.sum += scores[i];
        it->second.count += 1;
    }
    Vector mean_scores, group_labels;
    mean_scores.reserve(acc.size());
    group_labels.reserve(acc.size());
    for (const auto& [id, a] : acc) {
        mean_scores.push_back(a.sum / static_cast<double>(a.count));
        group_labels.push_back(a.label);
    }
    return roc_auc(mean_scores, group_labels);
}

double accuracy(const Vector& scores, const Vector& labels) {
    check_binary_labels(scores, labels, "accuracy");
    std::uint64_t correct = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        // sigmoid(score) > 0.5 <=> score > 0; a zero logit goes negative.
        const double predicted = scores[i] > 0.0 ? 1.0 : 0.0;
        if (predicted == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(scores.size());
}

double silhouette(const DenseMatrix& features, const std::vector<std::uint32_t>& cluster_labels) {
    const std::size_t n = features.rows;
    if (cluster_labels.size() != n || n == 0) {
        throw ValidationError("silhouette: " + std::to_string(cluster_labels.size()) +
                              " labels vs " + std::to_string(n) + " points");
    }
    std::map<std::uint32_t, std::uint64_t> cluster_sizes;
    for (std::uint32_t c : cluster_labels) cluster_sizes[c]++;
    if (cluster_sizes.size() < 2) {
        throw ValidationError("silhouette: undefined for a single cluster");
    }

    DenseMatrix dist(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double* a = features.row_ptr(i);
            const double* b = features.row_ptr(j);
            double s = 0.0;
            for (std::size_t c = 0; c < features.cols; ++c) {
                const double d = a[c] - b[c];
                s += d * d;
            }
            const double d = std::sqrt(s);
            dist(i, j) = d;
            dist(j, i) = d;
        }
    }

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t own = cluster_labels[i];
        if (cluster_sizes[own] == 1) continue;  // singleton: s_i = 0

        std::map<std::uint32_t, double> sums;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            sums[cluster_labels[j]] += dist(i, j);
        }
        const double a = sums[own] / static_cast<double>(cluster_sizes[own] - 1);
        double b = 0.0;
        bool first = true;
        for (const auto& [c, sum] : sums) {
            if (c == own) continue;
            const double m = sum / static_cast<double>(cluster_sizes[c]);
            if (first || m < b) {
                b = m;
                first = false;
            }
        }
        const double denom = std::max(a, b);
        total += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return total / static_cast<double>(n);
}

}  // namespace gsd
