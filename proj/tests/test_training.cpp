#include <catch2/catch_amalgamated.hpp>

#include "memkd/training.hpp"

using namespace memkd;

namespace {

// Small, quickly learnable setup shared by the end-to-end tests.
struct Fixture {
    Dataset train, val, test;
    LstmConfig teacher_arch{1, 4, 1, 2};
    LstmConfig student_arch{1, 3, 1, 2};

    explicit Fixture(std::uint64_t seed = 11) {
        auto [tr, te] = make_synthetic(2, 24, 12, 16, 0.1, seed);
        auto [t, v] = split_train_val(tr, {0.25, seed});
        train = std::move(t);
        val = std::move(v);
        test = std::move(te);
    }

    TrainConfig quick_cfg(Method m) const {
        TrainConfig cfg;
        cfg.lr = 0.05;
        cfg.batch_size = 8;
        cfg.max_epochs = 3;
        cfg.patience = 2;
        cfg.method = m;
        return cfg;
    }
};

ModelBundle quick_teacher(const Fixture& fx) {
    TrainConfig cfg = fx.quick_cfg(Method::none);
    cfg.num_seeds = 1;
    return train_teacher(fx.train, fx.val, fx.teacher_arch, cfg).bundle;
}

}  // namespace

TEST_CASE("adam_step") {
    SECTION("zero gradients leave parameters untouched") {
        ParamSet p{{"w", Tensor({2}, {1.5, -2.0})}};
        GradSet g{{"w", Tensor::zeros({2})}};
        AdamState st = AdamState::init(p);
        adam_step(p, g, st, 0.1);
        CHECK(p.at("w") == Tensor({2}, {1.5, -2.0}));
    }
    SECTION("first step moves by ~lr against the gradient sign") {
        ParamSet p{{"w", Tensor({2}, {0.0, 0.0})}};
        GradSet g{{"w", Tensor({2}, {3.0, -0.2})}};
        AdamState st = AdamState::init(p);
        adam_step(p, g, st, 0.1);
        CHECK_THAT(p.at("w")[0], Catch::Matchers::WithinAbs(-0.1, 1e-6));
        CHECK_THAT(p.at("w")[1], Catch::Matchers::WithinAbs(0.1, 1e-6));
    }
    SECTION("drives theta^2 to near zero") {
        ParamSet p{{"w", Tensor({1}, {5.0})}};
        AdamState st = AdamState::init(p);
        for (int i = 0; i < 2000; ++i) {
            GradSet g{{"w", Tensor({1}, {2.0 * p.at("w")[0]})}};
            adam_step(p, g, st, 0.05);
        }
        CHECK(std::abs(p.at("w")[0]) < 1e-3);
    }
    SECTION("missing gradient is an error") {
        ParamSet p{{"w", Tensor({1}, {1.0})}};
        AdamState st = AdamState::init(p);
        CHECK_THROWS_AS(adam_step(p, GradSet{}, st, 0.1), TrainError);
    }
}

TEST_CASE("run_epochs early stopping") {
    TrainConfig cfg;
    cfg.patience = 2;
    cfg.max_epochs = 100;

    SECTION("stops patience epochs after the best and restores best weights") {
        // val losses: 3, 2, 1, 4, 5 -> best at epoch 2, stop after epoch 4
        std::vector<double> losses = {3, 2, 1, 4, 5, 6, 7};
        ParamSet params{{"w", Tensor({1}, {0.0})}};
        std::size_t epoch_seen = 0;
        auto step = [&](std::size_t e) {
            epoch_seen = e;
            params.at("w")[0] = static_cast<double>(e);
        };
        auto val = [&] { return losses[epoch_seen]; };
        EpochLoop loop = run_epochs(params, cfg, step, val);
        CHECK(loop.best_epoch == 2);
        CHECK(loop.trained_epochs == 5);
        CHECK(loop.val_loss_curve == std::vector<double>{3, 2, 1, 4, 5});
        CHECK(params.at("w")[0] == 2.0);  // restored to the epoch-2 weights
    }
    SECTION("monotone improvement runs to max_epochs") {
        cfg.max_epochs = 6;
        ParamSet params{{"w", Tensor({1}, {0.0})}};
        double v = 10.0;
        EpochLoop loop = run_epochs(params, cfg, [](std::size_t) {}, [&] { return v -= 1.0; });
        CHECK(loop.trained_epochs == 6);
        CHECK(loop.best_epoch == 5);
    }
    SECTION("ties do not count as improvement") {
        // equal losses from epoch 0 on: best stays at 0, stops at patience
        ParamSet params{{"w", Tensor({1}, {0.0})}};
        EpochLoop loop = run_epochs(params, cfg, [](std::size_t) {}, [] { return 1.0; });
        CHECK(loop.best_epoch == 0);
        CHECK(loop.trained_epochs == 3);
    }
    SECTION("non-finite validation loss is an error") {
        ParamSet params{{"w", Tensor({1}, {0.0})}};
        CHECK_THROWS_AS(run_epochs(params, cfg, [](std::size_t) {},
                                   [] { return std::numeric_limits<double>::quiet_NaN(); }),
                        TrainError);
    }
}

TEST_CASE("train_classifier_single determinism") {
    Fixture fx;
    TrainConfig cfg = fx.quick_cfg(Method::none);
    ParamSet p1, p2;
    RunResult r1 = train_classifier_single(fx.train, fx.val, fx.teacher_arch, cfg, 7, p1);
    RunResult r2 = train_classifier_single(fx.train, fx.val, fx.teacher_arch, cfg, 7, p2);
    CHECK(p1 == p2);
    CHECK(r1.val_loss_curve == r2.val_loss_curve);
    CHECK(r1.val_auc_prc == r2.val_auc_prc);
    ParamSet p3;
    RunResult r3 = train_classifier_single(fx.train, fx.val, fx.teacher_arch, cfg, 8, p3);
    CHECK(p1 != p3);
}

TEST_CASE("train_teacher seed selection") {
    Fixture fx;
    TrainConfig cfg = fx.quick_cfg(Method::none);
    cfg.num_seeds = 3;
    TeacherRun run = train_teacher(fx.train, fx.val, fx.teacher_arch, cfg);
    REQUIRE(run.per_seed.size() == 3);
    double best = -1.0;
    for (const auto& r : run.per_seed) best = std::max(best, r.val_auc_prc);
    CHECK(run.per_seed[run.best_seed_index].val_auc_prc == best);
    CHECK(run.bundle.creation_seed == cfg.base_seed + run.best_seed_index);
    CHECK(run.bundle.label_map == fx.train.label_map);
}

TEST_CASE("distill_student") {
    Fixture fx;
    ModelBundle teacher = quick_teacher(fx);

    SECTION("leaves the teacher parameters byte-identical") {
        ParamSet before = teacher.params;
        ParamSet out;
        for (Method m : {Method::kd, Method::fitnets, Method::memkd})
            distill_student(teacher, fx.train, fx.val, fx.student_arch, fx.quick_cfg(m), 3, out);
        CHECK(teacher.params == before);
    }
    SECTION("shared cache and no cache produce bit-identical runs") {
        TeacherCache cache = build_teacher_cache(teacher, fx.train);
        for (Method m : {Method::kd, Method::fitnets, Method::memkd}) {
            ParamSet with_cache, without;
            RunResult a = distill_student(teacher, fx.train, fx.val, fx.student_arch,
                                          fx.quick_cfg(m), 5, with_cache, &cache);
            RunResult b = distill_student(teacher, fx.train, fx.val, fx.student_arch,
                                          fx.quick_cfg(m), 5, without, nullptr);
            CHECK(with_cache == without);
            CHECK(run_result_json(a) == run_result_json(b));
        }
    }
    SECTION("method none matches memkd with beta = 0 bit-for-bit") {
        ParamSet plain, zero_beta;
        distill_student(teacher, fx.train, fx.val, fx.student_arch, fx.quick_cfg(Method::none), 4, plain);
        TrainConfig cfg = fx.quick_cfg(Method::memkd);
        cfg.kd.beta = 0.0;
        distill_student(teacher, fx.train, fx.val, fx.student_arch, cfg, 4, zero_beta);
        CHECK(plain == zero_beta);
    }
    SECTION("student output never contains the fitnets regressor") {
        ParamSet out;
        distill_student(teacher, fx.train, fx.val, fx.student_arch, fx.quick_cfg(Method::fitnets), 2, out);
        CHECK(!out.contains("reg.w"));
        CHECK(!out.contains("reg.b"));
        CHECK(out.size() == param_layout(fx.student_arch).size());
    }
    SECTION("class-count mismatch is an error") {
        LstmConfig bad = fx.student_arch;
        bad.num_classes = 5;
        ParamSet out;
        CHECK_THROWS_AS(
            distill_student(teacher, fx.train, fx.val, bad, fx.quick_cfg(Method::kd), 0, out),
            TrainError);
    }
}

TEST_CASE("grid_search_beta") {
    Fixture fx;
    ModelBundle teacher = quick_teacher(fx);
    TrainConfig cfg = fx.quick_cfg(Method::memkd);
    TeacherCache cache = build_teacher_cache(teacher, fx.train);
    GridSearchResult res =
        grid_search_beta(teacher, fx.train, fx.val, fx.student_arch, cfg, {0.1, 1.0, 10.0}, &cache);
    REQUIRE(res.cells.size() == 3);

    SECTION("selection rule: first cell reaching the maximum wins") {
        double best_prc = res.cells[0].second.val_auc_prc;
        double expected = res.cells[0].first;
        for (const auto& [beta, rr] : res.cells)
            if (rr.val_auc_prc > best_prc) {
                best_prc = rr.val_auc_prc;
                expected = beta;
            }
        CHECK(res.best_beta == expected);
    }
    SECTION("every cell records its beta and uses the single search seed") {
        for (std::size_t i = 0; i < res.cells.size(); ++i) {
            CHECK(res.cells[i].second.beta == res.cells[i].first);
            CHECK(res.cells[i].second.seed == cfg.base_seed);
        }
    }
    SECTION("empty grid is an error") {
        CHECK_THROWS_AS(
            grid_search_beta(teacher, fx.train, fx.val, fx.student_arch, cfg, {}, &cache),
            TrainError);
    }
}

TEST_CASE("aggregate_runs") {
    auto mk = [](double acc, double roc, double prc, bool failed = false) {
        RunResult r;
        r.test.accuracy = acc;
        r.test.auc_roc = roc;
        r.test.auc_prc = prc;
        r.failed = failed;
        return r;
    };
    SECTION("hand-computed mean and population std") {
        Aggregate a = aggregate_runs({mk(0.8, 0.9, 0.7), mk(0.6, 0.7, 0.9)});
        CHECK_THAT(a.acc_mean, Catch::Matchers::WithinAbs(0.7, 1e-15));
        CHECK_THAT(a.acc_std, Catch::Matchers::WithinAbs(0.1, 1e-15));
        CHECK_THAT(a.auc_prc_mean, Catch::Matchers::WithinAbs(0.8, 1e-15));
        CHECK(a.seed_count == 2);
        CHECK(a.failed_count == 0);
    }
    SECTION("failed runs are excluded but counted") {
        Aggregate a = aggregate_runs({mk(1.0, 1.0, 1.0), mk(0.0, 0.0, 0.0, true)});
        CHECK(a.seed_count == 1);
        CHECK(a.failed_count == 1);
        CHECK(a.acc_mean == 1.0);
        CHECK(a.acc_std == 0.0);
    }
    SECTION("single run has zero std") {
        Aggregate a = aggregate_runs({mk(0.5, 0.5, 0.5)});
        CHECK(a.acc_std == 0.0);
    }
}

TEST_CASE("run_result_json") {
    RunResult r;
    r.dataset = "d";
    r.method = "memkd";
    r.beta = 10.0;
    r.seed = 3;
    r.wall_clock_seconds = 123.456;
    nlohmann::json j = run_result_json(r);
    SECTION("wall clock never serialized (byte reproducibility)") {
        CHECK(j.dump().find("wall_clock") == std::string::npos);
    }
    SECTION("failure field only present on failed runs") {
        CHECK(!j.contains("failure"));
        r.failed = true;
        r.failure = "boom";
        CHECK(run_result_json(r)["failure"] == "boom");
    }
}

TEST_CASE("fnv1a_hex") {
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
    CHECK(fnv1a_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("gradient_check_model") {
    SECTION("all four objectives pass at the default tolerance") {
        for (std::uint64_t seed : {0ull, 1ull, 2ull}) {
            auto report = gradient_check_model(seed);
            REQUIRE(report.size() == 4);
            for (const auto& line : report) {
                INFO("seed " << seed << " method " << line.method << " err " << line.max_rel_error
                             << " " << line.note);
                CHECK(line.pass);
            }
        }
    }
    SECTION("self-test: a corrupted gradient is caught by the comparator") {
        // same harness pieces, with one analytic entry knocked off by 10%
        ParamSet p{{"w", Tensor({2}, {0.3, -0.4})}};
        auto loss = [](const ParamSet& ps) {
            return ps.at("w")[0] * ps.at("w")[0] + 2.0 * ps.at("w")[1];
        };
        GradSet analytic{{"w", Tensor({2}, {2.0 * 0.3, 2.0})}};
        GradSet numeric = finite_difference_gradient(loss, p, 1e-5);
        CHECK(grad_rel_error(analytic, numeric) <= 1e-4);
        analytic.at("w")[0] *= 1.1;
        CHECK(grad_rel_error(analytic, numeric) > 1e-4);
    }
}

TEST_CASE("predict_probs and dataset_ce_loss batching") {
    Fixture fx;
    ParamSet p = init_params(fx.student_arch, 21);
    SECTION("batch size does not change probabilities") {
        Tensor a = predict_probs(fx.test, p, fx.student_arch, 32);
        Tensor b = predict_probs(fx.test, p, fx.student_arch, 5);
        REQUIRE(a.shape() == b.shape());
        for (std::size_t i = 0; i < a.numel(); ++i)
            CHECK_THAT(a[i], Catch::Matchers::WithinAbs(b[i], 1e-12));
    }
    SECTION("rows are probability vectors") {
        Tensor a = predict_probs(fx.test, p, fx.student_arch);
        for (std::size_t r = 0; r < a.dim(0); ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < a.dim(1); ++c) {
                CHECK(a.at(r, c) >= 0.0);
                s += a.at(r, c);
            }
            CHECK_THAT(s, Catch::Matchers::WithinAbs(1.0, 1e-12));
        }
    }
    SECTION("ce loss is the sample-size weighted mean over batches") {
        double a = dataset_ce_loss(fx.test, p, fx.student_arch, 32);
        double b = dataset_ce_loss(fx.test, p, fx.student_arch, 5);
        CHECK_THAT(a, Catch::Matchers::WithinAbs(b, 1e-12));
    }
}
