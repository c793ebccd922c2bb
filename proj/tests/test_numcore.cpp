#include <catch2/catch_amalgamated.hpp>

#include "memkd/rng.hpp"
#include "memkd/tape.hpp"

using namespace memkd;

TEST_CASE("matmul basics") {
    Tape tape;
    Tensor m({2, 2}, {1, 2, 3, 4});

    SECTION("identity is neutral on both sides") {
        Var id = tape.constant(Tensor::identity(2));
        Var mv = tape.constant(m);
        CHECK(tape.value(matmul(id, mv)) == m);
        CHECK(tape.value(matmul(mv, id)) == m);
    }
    SECTION("zeros annihilate") {
        Var mv = tape.constant(m);
        Var z = tape.constant(Tensor::zeros({2, 3}));
        const Tensor& r = tape.value(matmul(mv, z));
        for (std::size_t i = 0; i < r.numel(); ++i) CHECK(r[i] == 0.0);
    }
    SECTION("hand-evaluated product") {
        Var a = tape.constant(m);
        Var b = tape.constant(Tensor({2, 1}, {1, 1}));
        const Tensor& r = tape.value(matmul(a, b));
        CHECK(r.at(0, 0) == 3.0);
        CHECK(r.at(1, 0) == 7.0);
    }
    SECTION("inner-extent mismatch names both shapes") {
        Var a = tape.constant(Tensor({2, 3}));
        Var b = tape.constant(Tensor({2, 3}));
        CHECK_THROWS_WITH(matmul(a, b), Catch::Matchers::ContainsSubstring("[2x3]"));
    }
}

TEST_CASE("elementwise ops") {
    Tape tape;
    SECTION("sigmoid(0) = 1/2, tanh(0) = 0") {
        Var x = tape.constant(Tensor({2}, {0.0, 0.0}));
        CHECK(tape.value(sigmoid(x))[0] == 0.5);
        CHECK(tape.value(tanh_op(x))[1] == 0.0);
    }
    SECTION("hadamard by hand") {
        Var a = tape.constant(Tensor({2}, {2, 3}));
        Var b = tape.constant(Tensor({2}, {4, 5}));
        const Tensor& r = tape.value(hadamard(a, b));
        CHECK(r[0] == 8.0);
        CHECK(r[1] == 15.0);
    }
    SECTION("no broadcasting: shape mismatch is an error") {
        Var a = tape.constant(Tensor({2}));
        Var b = tape.constant(Tensor({3}));
        CHECK_THROWS_AS(add(a, b), ShapeError);
        CHECK_THROWS_AS(sub(a, b), ShapeError);
        CHECK_THROWS_AS(hadamard(a, b), ShapeError);
    }
    SECTION("sigmoid/tanh stay inside their ranges") {
        Rng rng(11);
        Tensor big({64});
        for (std::size_t i = 0; i < big.numel(); ++i) big[i] = rng.uniform(-50.0, 50.0);
        Var x = tape.constant(big);
        // copy: tape.value() references are invalidated by the next push
        Tensor s = tape.value(sigmoid(x));
        Tensor t = tape.value(tanh_op(x));
        for (std::size_t i = 0; i < big.numel(); ++i) {
            CHECK(s[i] > 0.0);
            CHECK(s[i] <= 1.0);  // sigmoid(x) rounds to 1.0 for x beyond ~37
            CHECK(t[i] >= -1.0);
            CHECK(t[i] <= 1.0);
        }
    }
}

TEST_CASE("softmax rows") {
    Tape tape;
    SECTION("equal logits give the uniform row") {
        Var x = tape.constant(Tensor({1, 4}, {7, 7, 7, 7}));
        const Tensor& p = tape.value(softmax_rows(x));
        for (std::size_t c = 0; c < 4; ++c) CHECK_THAT(p[c], Catch::Matchers::WithinAbs(0.25, 1e-15));
    }
    SECTION("shift invariance") {
        Var a = tape.constant(Tensor({1, 3}, {0.3, -1.2, 2.0}));
        Var b = tape.constant(Tensor({1, 3}, {0.3 + 100, -1.2 + 100, 2.0 + 100}));
        const Tensor& pa = tape.value(softmax_rows(a));
        const Tensor& pb = tape.value(softmax_rows(b));
        for (std::size_t c = 0; c < 3; ++c) CHECK_THAT(pa[c], Catch::Matchers::WithinAbs(pb[c], 1e-15));
    }
    SECTION("[ln 1, ln 3] -> [0.25, 0.75]") {
        Var x = tape.constant(Tensor({1, 2}, {std::log(1.0), std::log(3.0)}));
        const Tensor& p = tape.value(softmax_rows(x));
        CHECK_THAT(p[0], Catch::Matchers::WithinAbs(0.25, 1e-12));
        CHECK_THAT(p[1], Catch::Matchers::WithinAbs(0.75, 1e-12));
    }
    SECTION("rows sum to one within 1e-12 on random input") {
        Rng rng(3);
        Tensor x({8, 5});
        for (std::size_t i = 0; i < x.numel(); ++i) x[i] = rng.uniform(-30.0, 30.0);
        const Tensor& p = tape.value(softmax_rows(tape.constant(x)));
        for (std::size_t r = 0; r < 8; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < 5; ++c) s += p.at(r, c);
            CHECK_THAT(s, Catch::Matchers::WithinAbs(1.0, 1e-12));
        }
    }
}

TEST_CASE("reductions") {
    Tape tape;
    CHECK(tape.value(l2_norm(tape.constant(Tensor({2}, {3, 4})))).item() == 5.0);
    CHECK(tape.value(reduce_mean(tape.constant(Tensor::zeros({7})))).item() == 0.0);
    CHECK(tape.value(reduce_sum(tape.constant(Tensor({3}, {1, 2, 3})))).item() == 6.0);
}

TEST_CASE("backward basics") {
    SECTION("root = sum(p) gives all-ones") {
        Tape tape;
        Var p = tape.leaf(Tensor({2, 3}, {1, -1, 2, 0, 5, 3}));
        GradSet g = tape.backward(reduce_sum(p), {{"p", p}});
        for (std::size_t i = 0; i < 6; ++i) CHECK(g.at("p")[i] == 1.0);
    }
    SECTION("root = |p|^2 gives 2p") {
        Tape tape;
        Var p = tape.leaf(Tensor({2}, {3, 4}));
        Var n = l2_norm(p);
        GradSet g = tape.backward(hadamard(n, n), {{"p", p}});
        CHECK_THAT(g.at("p")[0], Catch::Matchers::WithinAbs(6.0, 1e-12));
        CHECK_THAT(g.at("p")[1], Catch::Matchers::WithinAbs(8.0, 1e-12));
    }
    SECTION("untouched parameters get zero gradients") {
        Tape tape;
        Var p = tape.leaf(Tensor({2}, {1, 2}));
        Var q = tape.leaf(Tensor({3}, {1, 2, 3}));
        GradSet g = tape.backward(reduce_sum(p), {{"p", p}, {"q", q}});
        CHECK(g.at("q") == Tensor::zeros({3}));
    }
    SECTION("gradients accumulate over repeated uses") {
        Tape tape;
        Var p = tape.leaf(Tensor({2}, {1.5, -0.5}));
        GradSet g = tape.backward(reduce_sum(add(p, p)), {{"p", p}});
        CHECK(g.at("p")[0] == 2.0);
        CHECK(g.at("p")[1] == 2.0);
    }
    SECTION("non-scalar root is a contract error") {
        Tape tape;
        Var p = tape.leaf(Tensor({2}, {1, 2}));
        CHECK_THROWS_AS(tape.backward(p, {{"p", p}}), ValueError);
    }
    SECTION("backward sweep visits each node exactly once") {
        Tape tape;
        Var p = tape.leaf(Tensor({2}, {1, 2}));
        Var root = reduce_sum(sigmoid(add(p, p)));
        tape.backward(root, {{"p", p}});
        CHECK(tape.last_visit_count() == tape.size());
    }
}

TEST_CASE("finite-difference oracle") {
    SECTION("sum of squares at [1, -2]") {
        ParamSet p{{"theta", Tensor({2}, {1.0, -2.0})}};
        GradSet g = finite_difference_gradient(
            [](const ParamSet& ps) {
                double s = 0.0;
                for (double v : ps.at("theta").vec()) s += v * v;
                return s;
            },
            p, 1e-5);
        CHECK_THAT(g.at("theta")[0], Catch::Matchers::WithinAbs(2.0, 1e-8));
        CHECK_THAT(g.at("theta")[1], Catch::Matchers::WithinAbs(-4.0, 1e-8));
    }
    SECTION("constant loss gives zeros") {
        ParamSet p{{"theta", Tensor({3}, {1, 2, 3})}};
        GradSet g = finite_difference_gradient([](const ParamSet&) { return 42.0; }, p, 1e-5);
        CHECK(g.at("theta") == Tensor::zeros({3}));
    }
    SECTION("non-finite probe is a numeric error") {
        ParamSet p{{"theta", Tensor({1}, {0.0})}};
        CHECK_THROWS_AS(finite_difference_gradient(
                            [](const ParamSet& ps) { return std::log(ps.at("theta").at(0, 0)); }, p, 1e-5),
                        ValueError);
    }
}

namespace {

// Composite expression exercising every differentiable primitive.
Var composite(Tape& tape, const std::map<std::string, Var>& pv) {
    Var a = pv.at("a");  // [3 x 2]
    Var w = pv.at("w");  // [4 x 2]
    Var b = pv.at("b");  // [4]
    Var y = add_bias(linear(a, w), b);              // [3 x 4]
    Var z = hadamard(sigmoid(y), tanh_op(scale(y, 0.5)));
    Var p = softmax_rows(add_const(z, 0.1));
    Var q = sub(p, scale(z, 0.25));
    Var nrm = row_l2_norm(q);                        // [3]
    Var ratio = div_elem(nrm, add_const(nrm, 1.0));  // [3]
    Var mm = matmul(q, tape.constant(Tensor({4, 1}, {0.3, -0.2, 0.7, 0.1})));
    return add(add(reduce_mean(ratio), l2_norm(mm)),
               add(reduce_sum(hadamard(ratio, ratio)), reduce_mean(z)));
}

}  // namespace

TEST_CASE("backward matches finite differences on composed expressions") {
    // property: 100 random draws from U(-1, 1)
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed * 7919 + 13);
        ParamSet params;
        for (auto& [name, shape] :
             std::vector<std::pair<std::string, Shape>>{{"a", {3, 2}}, {"w", {4, 2}}, {"b", {4}}}) {
            Tensor t(shape);
            for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
            params[name] = std::move(t);
        }
        Tape tape;
        auto pv = bind_params(tape, params, true);
        GradSet analytic = tape.backward(composite(tape, pv), pv);
        GradSet numeric = finite_difference_gradient(
            [&](const ParamSet& p) {
                Tape t2;
                auto pv2 = bind_params(t2, p, false);
                return t2.value(composite(t2, pv2)).item();
            },
            params, 1e-5);
        double err = grad_rel_error(analytic, numeric);
        INFO("seed " << seed << " rel error " << err);
        REQUIRE(err <= 1e-4);
    }
}

TEST_CASE("loss primitives match finite differences") {
    Rng rng(99);
    ParamSet params;
    Tensor logits({3, 4});
    for (std::size_t i = 0; i < logits.numel(); ++i) logits[i] = rng.uniform(-1.0, 1.0);
    params["logits"] = logits;
    Tensor teacher({3, 4});
    for (std::size_t i = 0; i < teacher.numel(); ++i) teacher[i] = rng.uniform(-1.0, 1.0);
    Tensor target({3, 4});
    for (std::size_t i = 0; i < target.numel(); ++i) target[i] = rng.uniform(-1.0, 1.0);
    std::vector<int> labels = {0, 2, 3};

    auto check = [&](auto&& build) {
        Tape tape;
        auto pv = bind_params(tape, params, true);
        GradSet analytic = tape.backward(build(tape, pv.at("logits")), pv);
        GradSet numeric = finite_difference_gradient(
            [&](const ParamSet& p) {
                Tape t2;
                auto pv2 = bind_params(t2, p, false);
                return t2.value(build(t2, pv2.at("logits"))).item();
            },
            params, 1e-5);
        REQUIRE(grad_rel_error(analytic, numeric) <= 1e-4);
    };
    check([&](Tape&, Var l) { return softmax_cross_entropy(l, labels); });
    check([&](Tape&, Var l) { return kd_soft_targets(teacher, l, 3.0); });
    check([&](Tape&, Var l) { return mse_against(l, target); });
    check([&](Tape&, Var l) { return huber_sum(l, target, 0.7); });
}
