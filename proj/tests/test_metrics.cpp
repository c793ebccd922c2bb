#include <catch2/catch_amalgamated.hpp>

#include "memkd/metrics.hpp"
#include "memkd/rng.hpp"

using namespace memkd;

namespace {

// O(M^2) pair-counting AUC-ROC oracle: concordant + half the ties.
double roc_oracle(const std::vector<double>& scores, const std::vector<bool>& pos) {
    double num = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i)
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (!pos[i] || pos[j]) continue;
            ++pairs;
            if (scores[i] > scores[j])
                num += 1.0;
            else if (scores[i] == scores[j])
                num += 0.5;
        }
    return num / static_cast<double>(pairs);
}

// Threshold-enumeration average-precision oracle.
double ap_oracle(const std::vector<double>& scores, const std::vector<bool>& pos) {
    std::vector<double> thresholds = scores;
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    std::size_t total_pos = 0;
    for (bool p : pos)
        if (p) ++total_pos;
    double ap = 0.0, prev_recall = 0.0;
    for (double th : thresholds) {
        std::size_t tp = 0, fp = 0;
        for (std::size_t i = 0; i < scores.size(); ++i)
            if (scores[i] >= th) pos[i] ? ++tp : ++fp;
        double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
        double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return ap;
}

struct Instance {
    Tensor scores;
    std::vector<int> labels;
};

Instance random_instance(Rng& rng, std::size_t max_m, std::size_t max_c, bool quantize) {
    std::size_t C = 2 + rng.next_below(max_c - 1);
    std::size_t M = 0;
    std::vector<int> labels;
    while (true) {
        M = 2 + rng.next_below(max_m - 1);
        labels.clear();
        for (std::size_t i = 0; i < M; ++i) labels.push_back(static_cast<int>(rng.next_below(C)));
        std::vector<int> counts(C, 0);
        for (int l : labels) ++counts[l];
        bool two_classes = false;
        for (int c : counts) two_classes = two_classes || (c > 0 && c < static_cast<int>(M));
        if (two_classes) break;
    }
    Tensor scores({M, C});
    for (std::size_t i = 0; i < M * C; ++i)
        scores[i] = quantize ? std::floor(rng.uniform(0.0, 5.0)) / 4.0 : rng.next_double();
    return {std::move(scores), std::move(labels)};
}

}  // namespace

TEST_CASE("accuracy") {
    SECTION("perfect one-hot predictions") {
        Tensor p({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
        CHECK(accuracy(p, {0, 1, 2}) == 1.0);
    }
    SECTION("all wrong") {
        Tensor p({2, 2}, {1, 0, 1, 0});
        CHECK(accuracy(p, {1, 1}) == 0.0);
    }
    SECTION("3 of 4 correct") {
        Tensor p({4, 2}, {0.9, 0.1, 0.2, 0.8, 0.6, 0.4, 0.3, 0.7});
        CHECK(accuracy(p, {0, 1, 0, 0}) == 0.75);
    }
    SECTION("argmax ties break toward the lowest class index") {
        Tensor p({1, 3}, {0.4, 0.4, 0.2});
        CHECK(accuracy(p, {0}) == 1.0);
        CHECK(accuracy(p, {1}) == 0.0);
    }
}

TEST_CASE("roc_auc_macro") {
    SECTION("perfectly ordered scores give 1") {
        Tensor s({4, 2}, {0.9, 0.1, 0.8, 0.2, 0.2, 0.8, 0.1, 0.9});
        CHECK(roc_auc_macro(s, {0, 0, 1, 1}) == 1.0);
    }
    SECTION("all-identical scores give 0.5") {
        Tensor s = Tensor::full({6, 2}, 0.5);
        CHECK(roc_auc_macro(s, {0, 1, 0, 1, 0, 1}) == 0.5);
    }
    SECTION("single-class data is an undefined-metric error") {
        Tensor s({3, 2}, {1, 0, 1, 0, 1, 0});
        CHECK_THROWS_AS(roc_auc_macro(s, {0, 0, 0}), MetricError);
    }
    SECTION("1 - AUC symmetry under score negation, tie-free binary") {
        Rng rng(3);
        Tensor s({10, 2});
        for (std::size_t i = 0; i < 20; ++i) s[i] = rng.next_double();
        std::vector<int> labels;
        for (std::size_t i = 0; i < 10; ++i) labels.push_back(static_cast<int>(i % 2));
        Tensor neg({10, 2});
        for (std::size_t i = 0; i < 20; ++i) neg[i] = -s[i];
        CHECK_THAT(roc_auc_macro(s, labels) + roc_auc_macro(neg, labels),
                   Catch::Matchers::WithinAbs(1.0, 1e-12));
    }
}

TEST_CASE("pr_auc_macro") {
    SECTION("perfect ranking gives 1") {
        Tensor s({4, 2}, {0.9, 0.1, 0.8, 0.2, 0.2, 0.8, 0.1, 0.9});
        CHECK(pr_auc_macro(s, {0, 0, 1, 1}) == 1.0);
    }
    SECTION("all-identical scores give the class prevalence") {
        Tensor s = Tensor::full({8, 2}, 0.3);
        std::vector<int> labels = {0, 0, 0, 0, 0, 0, 1, 1};  // prevalence 0.75 / 0.25
        std::vector<double> per_class;
        pr_auc_macro(s, labels, &per_class);
        CHECK_THAT(per_class[0], Catch::Matchers::WithinAbs(0.75, 1e-12));
        CHECK_THAT(per_class[1], Catch::Matchers::WithinAbs(0.25, 1e-12));
    }
    SECTION("single-class data is an undefined-metric error") {
        Tensor s({3, 2}, {1, 0, 1, 0, 1, 0});
        CHECK_THROWS_AS(pr_auc_macro(s, {1, 1, 1}), MetricError);
    }
}

TEST_CASE("both AUCs equal their brute-force oracles") {
    // 200 random instances, M <= 20, C <= 4, with deliberate score ties
    Rng rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        Instance inst = random_instance(rng, 20, 4, trial % 2 == 0);
        std::size_t M = inst.scores.dim(0), C = inst.scores.dim(1);
        double roc_sum = 0.0, ap_sum = 0.0;
        std::size_t used = 0;
        for (std::size_t c = 0; c < C; ++c) {
            std::vector<double> col(M);
            std::vector<bool> pos(M);
            std::size_t npos = 0;
            for (std::size_t r = 0; r < M; ++r) {
                col[r] = inst.scores.at(r, c);
                pos[r] = inst.labels[r] == static_cast<int>(c);
                if (pos[r]) ++npos;
            }
            if (npos == 0 || npos == M) continue;
            roc_sum += roc_oracle(col, pos);
            ap_sum += ap_oracle(col, pos);
            ++used;
        }
        if (used == 0) continue;
        INFO("trial " << trial);
        CHECK_THAT(roc_auc_macro(inst.scores, inst.labels),
                   Catch::Matchers::WithinAbs(roc_sum / static_cast<double>(used), 1e-12));
        CHECK_THAT(pr_auc_macro(inst.scores, inst.labels),
                   Catch::Matchers::WithinAbs(ap_sum / static_cast<double>(used), 1e-12));
    }
}

TEST_CASE("AUCs invariant under strictly increasing score transforms") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        Instance inst = random_instance(rng, 15, 3, false);
        Tensor exp_scores(inst.scores.shape()), affine(inst.scores.shape());
        for (std::size_t i = 0; i < inst.scores.numel(); ++i) {
            exp_scores[i] = std::exp(inst.scores[i]);
            affine[i] = 3.0 * inst.scores[i] + 11.0;
        }
        CHECK_THAT(roc_auc_macro(exp_scores, inst.labels),
                   Catch::Matchers::WithinAbs(roc_auc_macro(inst.scores, inst.labels), 1e-12));
        CHECK_THAT(roc_auc_macro(affine, inst.labels),
                   Catch::Matchers::WithinAbs(roc_auc_macro(inst.scores, inst.labels), 1e-12));
        CHECK_THAT(pr_auc_macro(exp_scores, inst.labels),
                   Catch::Matchers::WithinAbs(pr_auc_macro(inst.scores, inst.labels), 1e-12));
        CHECK_THAT(pr_auc_macro(affine, inst.labels),
                   Catch::Matchers::WithinAbs(pr_auc_macro(inst.scores, inst.labels), 1e-12));
    }
}

TEST_CASE("win_tie_loss") {
    SECTION("equal everywhere") {
        auto r = win_tie_loss({1, 2, 3}, {1, 2, 3});
        CHECK(r.wins == 0);
        CHECK(r.ties == 3);
        CHECK(r.losses == 0);
    }
    SECTION("a = b + 1 everywhere") {
        auto r = win_tie_loss({2, 3, 4}, {1, 2, 3});
        CHECK(r.wins == 3);
        CHECK(r.losses == 0);
    }
    SECTION("mixed [+1, 0, -1]") {
        auto r = win_tie_loss({1, 0, -1}, {0, 0, 0});
        CHECK(r.wins == 1);
        CHECK(r.ties == 1);
        CHECK(r.losses == 1);
    }
    SECTION("differences inside the tolerance are ties") {
        auto r = win_tie_loss({0.00005}, {0.0});
        CHECK(r.ties == 1);
    }
    SECTION("misaligned lists are an error") {
        CHECK_THROWS_AS(win_tie_loss({1.0}, {1.0, 2.0}), MetricError);
    }
}

TEST_CASE("average_rank") {
    SECTION("dominant method gets rank 1") {
        auto r = average_rank({{0.9, 0.8, 0.7}, {0.5, 0.6, 0.4}});
        CHECK(r[0] == 1.0);
        CHECK(r[1] == 2.0);
    }
    SECTION("A better on 3 of 4 datasets: 1.25 vs 1.75") {
        auto r = average_rank({{0.9, 0.9, 0.9, 0.1}, {0.5, 0.5, 0.5, 0.9}});
        CHECK(r[0] == 1.25);
        CHECK(r[1] == 1.75);
    }
    SECTION("ties share the mean rank") {
        auto r = average_rank({{0.5}, {0.5}, {0.1}});
        CHECK(r[0] == 1.5);
        CHECK(r[1] == 1.5);
        CHECK(r[2] == 3.0);
    }
    SECTION("ranks lie in [1, k] and sum to k(k+1)/2 per dataset") {
        Rng rng(8);
        std::vector<std::vector<double>> table(5, std::vector<double>(1));
        for (auto& row : table) row[0] = std::floor(rng.uniform(0.0, 3.0));
        auto r = average_rank(table);
        double sum = 0.0;
        for (double v : r) {
            CHECK(v >= 1.0);
            CHECK(v <= 5.0);
            sum += v;
        }
        CHECK_THAT(sum, Catch::Matchers::WithinAbs(15.0, 1e-12));
    }
    SECTION("missing cells are an error") {
        CHECK_THROWS_AS(average_rank({{1.0, 2.0}, {1.0}}), MetricError);
    }
}
