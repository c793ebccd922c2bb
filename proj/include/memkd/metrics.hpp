#pragma once

#include <algorithm>
#include <iostream>
#include <numeric>
#include <vector>

#include "memkd/tensor.hpp"

namespace memkd {

struct MetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MetricReport {
    double accuracy = 0.0;
    double auc_roc = 0.0;
    double auc_prc = 0.0;
    std::vector<double> per_class_auc_roc;
    std::vector<double> per_class_auc_prc;
    std::size_t sample_count = 0;
};

/// Fraction of rows whose argmax equals the label; argmax ties break toward
/// the lowest class index.
inline double accuracy(const Tensor& pred_probs, const std::vector<int>& labels) {
    std::size_t M = pred_probs.dim(0), C = pred_probs.dim(1);
    if (M != labels.size()) throw MetricError("accuracy: row/label count mismatch");
    std::size_t correct = 0;
    for (std::size_t r = 0; r < M; ++r) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < C; ++c)
            if (pred_probs.at(r, c) > pred_probs.at(r, best)) best = c;
        if (static_cast<int>(best) == labels[r]) ++correct;
    }
    return M == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(M);
}

namespace detail {

/// One-vs-rest AUC-ROC via the Mann-Whitney rank statistic, half credit for ties.
inline double binary_roc_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
    std::size_t pos = 0, neg = 0;
    for (bool p : positive) p ? ++pos : ++neg;
    if (pos == 0 || neg == 0) throw MetricError("roc_auc: needs both classes present");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // rank-sum of positives with mean ranks over tied blocks
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        double mean_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
        for (std::size_t k = i; k < j; ++k)
            if (positive[order[k]]) rank_sum_pos += mean_rank;
        i = j;
    }
    double u = rank_sum_pos - 0.5 * static_cast<double>(pos) * static_cast<double>(pos + 1);
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

/// Average precision, step-wise (no interpolation); equal scores processed as
/// one block.
inline double binary_average_precision(const std::vector<double>& scores,
                                       const std::vector<bool>& positive) {
    std::size_t pos = 0;
    for (bool p : positive)
        if (p) ++pos;
    if (pos == 0 || pos == positive.size())
        throw MetricError("pr_auc: needs both classes present");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double ap = 0.0;
    double tp = 0.0, fp = 0.0, prev_recall = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        for (std::size_t k = i; k < j; ++k) positive[order[k]] ? ++tp : ++fp;
        double recall = tp / static_cast<double>(pos);
        double precision = tp / (tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return ap;
}

template <typename BinaryFn>
double macro_ovr(const Tensor& scores, const std::vector<int>& labels, BinaryFn&& fn,
                 std::vector<double>* per_class) {
    std::size_t M = scores.dim(0), C = scores.dim(1);
    if (M != labels.size()) throw MetricError("auc: row/label count mismatch");
    if (M < 2) throw MetricError("auc: need at least 2 samples");
    std::vector<std::size_t> counts(C, 0);
    for (int lab : labels) {
        if (lab < 0 || static_cast<std::size_t>(lab) >= C) throw MetricError("auc: label out of range");
        ++counts[static_cast<std::size_t>(lab)];
    }
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t c = 0; c < C; ++c) {
        if (counts[c] == 0) {
            std::cerr << "warning: class " << c << " absent from evaluation data, skipped in macro AUC\n";
            if (per_class) per_class->push_back(-1.0);
            continue;
        }
        if (counts[c] == M) throw MetricError("auc: undefined for single-class data");
        std::vector<double> col(M);
        std::vector<bool> pos(M);
        for (std::size_t r = 0; r < M; ++r) {
            col[r] = scores.at(r, c);
            pos[r] = labels[r] == static_cast<int>(c);
        }
        double v = fn(col, pos);
        if (per_class) per_class->push_back(v);
        sum += v;
        ++used;
    }
    if (used == 0) throw MetricError("auc: undefined for single-class data");
    return sum / static_cast<double>(used);
}

}  // namespace detail

inline double roc_auc_macro(const Tensor& scores, const std::vector<int>& labels,
                            std::vector<double>* per_class = nullptr) {
    return detail::macro_ovr(scores, labels, detail::binary_roc_auc, per_class);
}

inline double pr_auc_macro(const Tensor& scores, const std::vector<int>& labels,
                           std::vector<double>* per_class = nullptr) {
    return detail::macro_ovr(scores, labels, detail::binary_average_precision, per_class);
}

inline MetricReport evaluate_metrics(const Tensor& pred_probs, const std::vector<int>& labels) {
    MetricReport r;
    r.sample_count = labels.size();
    r.accuracy = accuracy(pred_probs, labels);
    r.auc_roc = roc_auc_macro(pred_probs, labels, &r.per_class_auc_roc);
    r.auc_prc = pr_auc_macro(pred_probs, labels, &r.per_class_auc_prc);
    return r;
}

struct WinTieLoss {
    std::size_t wins = 0, ties = 0, losses = 0;
};

/// Per aligned dataset: win if a-b > tol, loss if b-a > tol, else tie.
inline WinTieLoss win_tie_loss(const std::vector<double>& a, const std::vector<double>& b,
                               double tol = 1e-4) {
    if (a.size() != b.size()) throw MetricError("win_tie_loss: misaligned score lists");
    WinTieLoss r;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] - b[i] > tol)
            ++r.wins;
        else if (b[i] - a[i] > tol)
            ++r.losses;
        else
            ++r.ties;
    }
    return r;
}

/// table[method][dataset] -> per-method mean rank; methods ranked per dataset
/// by descending score, ties get the mean of the tied positions.
inline std::vector<double> average_rank(const std::vector<std::vector<double>>& table) {
    if (table.empty()) throw MetricError("average_rank: empty table");
    std::size_t methods = table.size(), datasets = table[0].size();
    if (datasets == 0) throw MetricError("average_rank: empty table");
    for (const auto& row : table)
        if (row.size() != datasets) throw MetricError("average_rank: missing cells");
    std::vector<double> sums(methods, 0.0);
    for (std::size_t d = 0; d < datasets; ++d) {
        std::vector<std::size_t> order(methods);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return table[a][d] > table[b][d]; });
        std::size_t i = 0;
        while (i < methods) {
            std::size_t j = i;
            while (j < methods && table[order[j]][d] == table[order[i]][d]) ++j;
            double mean_rank = 0.5 * static_cast<double>(i + 1 + j);
            for (std::size_t k = i; k < j; ++k) sums[order[k]] += mean_rank;
            i = j;
        }
    }
    for (double& s : sums) s /= static_cast<double>(datasets);
    return sums;
}

}  // namespace memkd
