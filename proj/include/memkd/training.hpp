#pragma once

#include <chrono>
#include <cmath>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memkd/data.hpp"
#include "memkd/losses.hpp"
#include "memkd/lstm.hpp"
#include "memkd/metrics.hpp"
#include "memkd/model_io.hpp"

namespace memkd {

struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Method { none, kd, fitnets, memkd };

inline const char* method_name(Method m) {
    switch (m) {
        case Method::none: return "none";
        case Method::kd: return "kd";
        case Method::fitnets: return "fitnets";
        case Method::memkd: return "memkd";
    }
    return "?";
}

inline std::optional<Method> parse_method(const std::string& s) {
    if (s == "none") return Method::none;
    if (s == "kd") return Method::kd;
    if (s == "fitnets") return Method::fitnets;
    if (s == "memkd") return Method::memkd;
    return std::nullopt;
}

struct TrainConfig {
    double lr = 0.1;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 500;
    std::size_t patience = 50;
    std::uint64_t base_seed = 0;
    std::size_t num_seeds = 5;
    Method method = Method::none;
    KdLossConfig kd;

    void validate() const {
        if (lr <= 0.0) throw TrainError("learning rate must be positive");
        if (patience < 1 || max_epochs < 1 || batch_size < 1 || num_seeds < 1)
            throw TrainError("patience, epochs, batch size and seed count must be >= 1");
    }
};

// ---- Adam ----

struct AdamState {
    GradSet m, v;
    std::size_t step = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    static AdamState init(const ParamSet& params) {
        AdamState s;
        for (const auto& [name, t] : params) {
            s.m[name] = Tensor::zeros(t.shape());
            s.v[name] = Tensor::zeros(t.shape());
        }
        return s;
    }
};

/// Standard bias-corrected Adam update, in place.
inline void adam_step(ParamSet& params, const GradSet& grads, AdamState& state, double lr) {
    ++state.step;
    double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (auto& [name, p] : params) {
        auto git = grads.find(name);
        if (git == grads.end()) throw TrainError("adam_step: missing gradient for " + name);
        const Tensor& g = git->second;
        require_same_shape(p, g, "adam_step");
        Tensor& m = state.m.at(name);
        Tensor& v = state.v.at(name);
        for (std::size_t i = 0; i < p.numel(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

// ---- run bookkeeping ----

struct RunResult {
    std::string dataset;
    std::string method;
    double beta = 0.0;
    std::uint64_t seed = 0;
    std::size_t best_epoch = 0;
    std::size_t trained_epochs = 0;
    std::vector<double> val_loss_curve;
    double val_auc_prc = 0.0;
    MetricReport test;
    std::string config_digest;
    double wall_clock_seconds = 0.0;  // not serialized: runs must be byte-reproducible
    bool failed = false;
    std::string failure;
};

inline std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline nlohmann::json run_result_json(const RunResult& r) {
    nlohmann::json j;
    j["dataset"] = r.dataset;
    j["method"] = r.method;
    j["beta"] = r.beta;
    j["seed"] = r.seed;
    j["best_epoch"] = r.best_epoch;
    j["trained_epochs"] = r.trained_epochs;
    j["val_loss_curve"] = r.val_loss_curve;
    j["val_auc_prc"] = r.val_auc_prc;
    j["test"] = {{"accuracy", r.test.accuracy},
                 {"auc_roc", r.test.auc_roc},
                 {"auc_prc", r.test.auc_prc},
                 {"sample_count", r.test.sample_count}};
    j["config_digest"] = r.config_digest;
    j["failed"] = r.failed;
    if (r.failed) j["failure"] = r.failure;
    return j;
}

// ---- forward helpers ----

namespace detail {

/// Stack the selected samples into per-timestep [b x n] input blocks.
inline std::vector<Tensor> gather_inputs(const Dataset& d, const std::vector<std::size_t>& idx) {
    std::size_t T = d.series_length(), n = d.channels(), b = idx.size();
    std::vector<Tensor> blocks(T, Tensor({b, n}));
    for (std::size_t r = 0; r < b; ++r) {
        const Tensor& s = d.samples[idx[r]].series;
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t c = 0; c < n; ++c) blocks[t].at(r, c) = s.at(t, c);
    }
    return blocks;
}

inline std::vector<int> gather_labels(const Dataset& d, const std::vector<std::size_t>& idx) {
    std::vector<int> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(d.samples[i].label);
    return out;
}

}  // namespace detail

/// Class-probability matrix [M x C] over a whole dataset (batched, in order).
inline Tensor predict_probs(const Dataset& d, const ParamSet& params, const LstmConfig& cfg,
                            std::size_t batch_size = 32) {
    std::size_t M = d.size();
    Tensor probs({M, cfg.num_classes});
    for (const auto& batch : batch_indices(M, batch_size, false, 0)) {
        Tape tape;
        auto pv = bind_params(tape, params, false);
        LstmForward fwd = lstm_forward_batch(tape, detail::gather_inputs(d, batch), pv, cfg);
        const Tensor& p = tape.value(softmax_rows(fwd.logits));
        for (std::size_t r = 0; r < batch.size(); ++r)
            for (std::size_t c = 0; c < cfg.num_classes; ++c) probs.at(batch[r], c) = p.at(r, c);
    }
    return probs;
}

inline double dataset_ce_loss(const Dataset& d, const ParamSet& params, const LstmConfig& cfg,
                              std::size_t batch_size = 32) {
    double total = 0.0;
    for (const auto& batch : batch_indices(d.size(), batch_size, false, 0)) {
        Tape tape;
        auto pv = bind_params(tape, params, false);
        LstmForward fwd = lstm_forward_batch(tape, detail::gather_inputs(d, batch), pv, cfg);
        double ce = tape.value(softmax_cross_entropy(fwd.logits, detail::gather_labels(d, batch))).item();
        total += ce * static_cast<double>(batch.size());
    }
    return total / static_cast<double>(d.size());
}

// ---- teacher outputs (frozen supervision signals) ----

/// Cached per-sample teacher outputs over a dataset: [T x m_t] trajectory and
/// [C] logits per sample. Always computed sample-by-sample, so cached and
/// uncached distillation see bit-identical values.
struct TeacherCache {
    std::vector<Tensor> trajectories;
    std::vector<Tensor> logits;
};

inline TeacherCache build_teacher_cache(const ModelBundle& teacher, const Dataset& d) {
    TeacherCache cache;
    cache.trajectories.reserve(d.size());
    cache.logits.reserve(d.size());
    for (const auto& s : d.samples) {
        EvalForward f = lstm_forward(s.series, teacher.params, teacher.config);
        cache.trajectories.push_back(std::move(f.trajectory.hidden));
        cache.logits.push_back(std::move(f.logits));
    }
    return cache;
}

namespace detail {

/// Assemble teacher per-timestep [b x m_t] blocks for a batch from the cache.
inline std::vector<Tensor> teacher_hidden_blocks(const TeacherCache& cache,
                                                 const std::vector<std::size_t>& idx) {
    std::size_t b = idx.size();
    std::size_t T = cache.trajectories[idx[0]].dim(0);
    std::size_t m = cache.trajectories[idx[0]].dim(1);
    std::vector<Tensor> blocks(T, Tensor({b, m}));
    for (std::size_t r = 0; r < b; ++r) {
        const Tensor& traj = cache.trajectories[idx[r]];
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < m; ++j) blocks[t].at(r, j) = traj.at(t, j);
    }
    return blocks;
}

inline Tensor teacher_logit_block(const TeacherCache& cache, const std::vector<std::size_t>& idx,
                                  std::size_t C) {
    Tensor out({idx.size(), C});
    for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t c = 0; c < C; ++c) out.at(r, c) = cache.logits[idx[r]][c];
    return out;
}

}  // namespace detail

// ---- single training run ----

struct EpochLoop {
    ParamSet best_params;
    std::size_t best_epoch = 0;
    std::size_t trained_epochs = 0;
    std::vector<double> val_loss_curve;
};

/// Generic epoch loop with early stopping on validation loss (best-weights
/// restore). step_fn(epoch) runs one epoch of updates; val_fn() scores the
/// current parameters.
template <typename StepFn, typename ValFn>
EpochLoop run_epochs(ParamSet& params, const TrainConfig& cfg, StepFn&& step_fn, ValFn&& val_fn) {
    EpochLoop loop;
    loop.best_params = params;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        step_fn(epoch);
        double vl = val_fn();
        if (!std::isfinite(vl)) throw TrainError("non-finite validation loss at epoch " + std::to_string(epoch));
        loop.val_loss_curve.push_back(vl);
        loop.trained_epochs = epoch + 1;
        if (vl < best_val) {
            best_val = vl;
            loop.best_epoch = epoch;
            loop.best_params = params;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    params = loop.best_params;
    return loop;
}

/// One cross-entropy training run (the teacher protocol body).
inline RunResult train_classifier_single(const Dataset& train, const Dataset& val,
                                         const LstmConfig& arch, const TrainConfig& cfg,
                                         std::uint64_t seed, ParamSet& out_params) {
    cfg.validate();
    arch.validate();
    RunResult rr;
    rr.dataset = train.name;
    rr.method = "teacher";
    rr.seed = seed;
    auto t0 = std::chrono::steady_clock::now();

    ParamSet params = init_params(arch, seed);
    AdamState adam = AdamState::init(params);
    auto step_fn = [&](std::size_t epoch) {
        auto batches = batch_indices(train.size(), cfg.batch_size, true,
                                     Rng::derive(seed, 0xba7c, epoch).next_u64());
        for (const auto& batch : batches) {
            Tape tape;
            auto pv = bind_params(tape, params, true);
            LstmForward fwd = lstm_forward_batch(tape, detail::gather_inputs(train, batch), pv, arch);
            Var loss = softmax_cross_entropy(fwd.logits, detail::gather_labels(train, batch));
            GradSet grads = tape.backward(loss, pv);
            adam_step(params, grads, adam, cfg.lr);
        }
    };
    auto val_fn = [&] { return dataset_ce_loss(val, params, arch, cfg.batch_size); };
    EpochLoop loop = run_epochs(params, cfg, step_fn, val_fn);

    rr.best_epoch = loop.best_epoch;
    rr.trained_epochs = loop.trained_epochs;
    rr.val_loss_curve = std::move(loop.val_loss_curve);
    rr.val_auc_prc = pr_auc_macro(predict_probs(val, params, arch, cfg.batch_size),
                                  detail::gather_labels(val, [&] {
                                      std::vector<std::size_t> all(val.size());
                                      std::iota(all.begin(), all.end(), std::size_t{0});
                                      return all;
                                  }()));
    rr.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out_params = std::move(params);
    return rr;
}

struct TeacherRun {
    ModelBundle bundle;
    std::vector<RunResult> per_seed;
    std::size_t best_seed_index = 0;
};

/// Teacher protocol: one run per seed, early stop on validation loss, then
/// keep the seed with the highest validation AUC-PRC.
inline TeacherRun train_teacher(const Dataset& train, const Dataset& val, const LstmConfig& arch,
                                const TrainConfig& cfg) {
    TeacherRun out;
    double best_prc = -1.0;
    bool any_ok = false;
    for (std::size_t i = 0; i < cfg.num_seeds; ++i) {
        std::uint64_t seed = cfg.base_seed + i;
        ParamSet params;
        RunResult rr;
        try {
            rr = train_classifier_single(train, val, arch, cfg, seed, params);
        } catch (const std::exception& e) {
            rr.seed = seed;
            rr.method = "teacher";
            rr.failed = true;
            rr.failure = e.what();
            out.per_seed.push_back(std::move(rr));
            continue;
        }
        if (rr.val_auc_prc > best_prc) {
            best_prc = rr.val_auc_prc;
            out.bundle.params = params;
            out.bundle.creation_seed = seed;
            out.best_seed_index = i;
        }
        any_ok = true;
        out.per_seed.push_back(std::move(rr));
    }
    if (!any_ok) throw TrainError("train_teacher: every seed failed");
    out.bundle.config = arch;
    out.bundle.label_map = train.label_map;
    return out;
}

// ---- distillation ----

/// Train a student against a frozen teacher with the configured objective.
/// The teacher cache may be shared across runs; when absent it is built here
/// (sample-by-sample either way, so results do not depend on caching).
inline RunResult distill_student(const ModelBundle& teacher, const Dataset& train, const Dataset& val,
                                 const LstmConfig& student_arch, const TrainConfig& cfg,
                                 std::uint64_t seed, ParamSet& out_params,
                                 const TeacherCache* shared_cache = nullptr) {
    cfg.validate();
    student_arch.validate();
    if (teacher.config.num_classes != student_arch.num_classes)
        throw TrainError("distill_student: teacher has " + std::to_string(teacher.config.num_classes) +
                         " classes, student " + std::to_string(student_arch.num_classes));
    RunResult rr;
    rr.dataset = train.name;
    rr.method = method_name(cfg.method);
    rr.beta = cfg.method == Method::none ? 0.0 : cfg.kd.beta;
    rr.seed = seed;
    auto t0 = std::chrono::steady_clock::now();

    bool needs_teacher = cfg.method != Method::none;
    TeacherCache local_cache;
    const TeacherCache* cache = shared_cache;
    if (needs_teacher && !cache) {
        local_cache = build_teacher_cache(teacher, train);
        cache = &local_cache;
    }

    ParamSet params = init_params(student_arch, seed);
    if (cfg.method == Method::fitnets) {
        // regressor m_s -> m_t, trained jointly; same init family as the LSTM
        double bound = 1.0 / std::sqrt(static_cast<double>(student_arch.hidden_dim));
        Rng reg_rng = Rng::derive(seed, 0xf17);
        Tensor w({teacher.config.hidden_dim, student_arch.hidden_dim});
        for (std::size_t i = 0; i < w.numel(); ++i) w[i] = reg_rng.uniform(-bound, bound);
        params["reg.w"] = std::move(w);
        params["reg.b"] = Tensor::zeros({teacher.config.hidden_dim});
    }
    AdamState adam = AdamState::init(params);
    bool warned_short = false;

    auto step_fn = [&](std::size_t epoch) {
        auto batches = batch_indices(train.size(), cfg.batch_size, true,
                                     Rng::derive(seed, 0xba7c, epoch).next_u64());
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            const auto& batch = batches[bi];
            Tape tape;
            auto pv = bind_params(tape, params, true);
            LstmForward fwd =
                lstm_forward_batch(tape, detail::gather_inputs(train, batch), pv, student_arch);
            Var ce = softmax_cross_entropy(fwd.logits, detail::gather_labels(train, batch));
            Var loss;
            switch (cfg.method) {
                case Method::none:
                    loss = ce;
                    break;
                case Method::kd: {
                    Var kd = kd_soft_targets(
                        detail::teacher_logit_block(*cache, batch, student_arch.num_classes),
                        fwd.logits, cfg.kd.tau);
                    loss = total_train_loss(ce, kd, cfg.kd.alpha, cfg.kd.beta);
                    break;
                }
                case Method::fitnets: {
                    Var hint = fitnets_hint_batch(tape, fwd.trajectory,
                                                  detail::teacher_hidden_blocks(*cache, batch), pv);
                    loss = total_train_loss(ce, hint, cfg.kd.alpha, cfg.kd.beta);
                    break;
                }
                case Method::memkd: {
                    Rng pair_rng = Rng::derive(seed, 0x9a14, epoch, bi);
                    bool degraded = false;
                    Var kd = memkd_loss_batch(tape, fwd.trajectory,
                                              detail::teacher_hidden_blocks(*cache, batch), cfg.kd,
                                              pair_rng, &degraded);
                    if (degraded && !warned_short) {
                        std::cerr << "warning: T < 3, MemKD degraded to the short-pair term only\n";
                        warned_short = true;
                    }
                    loss = total_train_loss(ce, kd, cfg.kd.alpha, cfg.kd.beta);
                    break;
                }
            }
            GradSet grads = tape.backward(loss, pv);
            adam_step(params, grads, adam, cfg.lr);
        }
    };
    auto val_fn = [&] {
        // early stopping tracks the classification objective on held-out data
        ParamSet model_only;
        for (const auto& [name, t] : params)
            if (!name.starts_with("reg.")) model_only[name] = t;
        return dataset_ce_loss(val, model_only, student_arch, cfg.batch_size);
    };
    EpochLoop loop = run_epochs(params, cfg, step_fn, val_fn);

    rr.best_epoch = loop.best_epoch;
    rr.trained_epochs = loop.trained_epochs;
    rr.val_loss_curve = std::move(loop.val_loss_curve);
    ParamSet model_only;
    for (const auto& [name, t] : params)
        if (!name.starts_with("reg.")) model_only[name] = t;
    std::vector<std::size_t> all(val.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    rr.val_auc_prc = pr_auc_macro(predict_probs(val, model_only, student_arch, cfg.batch_size),
                                  detail::gather_labels(val, all));
    rr.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out_params = std::move(model_only);
    return rr;
}

/// Grid search over beta on a single fixed seed; ties prefer the smaller beta.
struct GridSearchResult {
    double best_beta = 0.0;
    std::vector<std::pair<double, RunResult>> cells;
};

inline GridSearchResult grid_search_beta(const ModelBundle& teacher, const Dataset& train,
                                         const Dataset& val, const LstmConfig& student_arch,
                                         const TrainConfig& cfg, const std::vector<double>& grid,
                                         const TeacherCache* cache = nullptr) {
    if (grid.empty()) throw TrainError("grid_search_beta: empty grid");
    GridSearchResult out;
    double best_prc = -1.0;
    bool any_ok = false;
    for (double beta : grid) {
        TrainConfig c = cfg;
        c.kd.beta = beta;
        ParamSet params;
        RunResult rr;
        try {
            rr = distill_student(teacher, train, val, student_arch, c, cfg.base_seed, params, cache);
        } catch (const std::exception& e) {
            rr.beta = beta;
            rr.failed = true;
            rr.failure = e.what();
            out.cells.emplace_back(beta, std::move(rr));
            continue;
        }
        if (rr.val_auc_prc > best_prc) {
            best_prc = rr.val_auc_prc;
            out.best_beta = beta;
        }
        any_ok = true;
        out.cells.emplace_back(beta, std::move(rr));
    }
    if (!any_ok) throw TrainError("grid_search_beta: every cell failed");
    return out;
}

/// Mean and population std per metric over the non-failed seeds.
struct Aggregate {
    double acc_mean = 0, acc_std = 0;
    double auc_roc_mean = 0, auc_roc_std = 0;
    double auc_prc_mean = 0, auc_prc_std = 0;
    std::size_t seed_count = 0;
    std::size_t failed_count = 0;
};

inline Aggregate aggregate_runs(const std::vector<RunResult>& runs) {
    Aggregate a;
    std::vector<double> acc, roc, prc;
    for (const auto& r : runs) {
        if (r.failed) {
            ++a.failed_count;
            continue;
        }
        acc.push_back(r.test.accuracy);
        roc.push_back(r.test.auc_roc);
        prc.push_back(r.test.auc_prc);
    }
    a.seed_count = acc.size();
    auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
        if (v.empty()) return;
        mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        sd = std::sqrt(var / static_cast<double>(v.size()));
    };
    mean_std(acc, a.acc_mean, a.acc_std);
    mean_std(roc, a.auc_roc_mean, a.auc_roc_std);
    mean_std(prc, a.auc_prc_mean, a.auc_prc_std);
    return a;
}

// ---- end-to-end gradient check ----

struct GradCheckLine {
    std::string method;
    double max_rel_error = 0.0;
    bool pass = false;
    std::string note;
};

/// Backward-vs-central-differences check of every objective on the tiny
/// preset (T=6, n=2, m_t=4, m_s=3, C=2, batch 2).
inline std::vector<GradCheckLine> gradient_check_model(std::uint64_t seed, double step = 1e-5,
                                                       double tol = 1e-4) {
    LstmConfig teacher_arch{2, 4, 2, 2};
    LstmConfig student_arch{2, 3, 1, 2};
    constexpr std::size_t T = 6, B = 2;
    Rng rng(seed);

    std::vector<Tensor> inputs(T, Tensor({B, teacher_arch.input_dim}));
    for (auto& blk : inputs)
        for (std::size_t i = 0; i < blk.numel(); ++i) blk[i] = rng.uniform(-1.0, 1.0);
    std::vector<int> labels = {0, 1};
    ParamSet teacher_params = init_params(teacher_arch, rng.next_u64());

    // frozen teacher signals, from the same batched path the loss uses
    std::vector<Tensor> teacher_hidden;
    Tensor teacher_logits;
    {
        Tape tape;
        auto pv = bind_params(tape, teacher_params, false);
        LstmForward fwd = lstm_forward_batch(tape, inputs, pv, teacher_arch);
        for (Var h : fwd.trajectory.hidden) teacher_hidden.push_back(tape.value(h));
        teacher_logits = tape.value(fwd.logits);
    }

    KdLossConfig kd;
    kd.beta = 1.0;
    std::uint64_t pair_seed = rng.next_u64();

    std::vector<GradCheckLine> report;
    for (Method method : {Method::none, Method::kd, Method::fitnets, Method::memkd}) {
        ParamSet params = init_params(student_arch, seed + 17);
        if (method == Method::fitnets) {
            Rng reg_rng = Rng::derive(seed, 0xf17);
            Tensor w({teacher_arch.hidden_dim, student_arch.hidden_dim});
            for (std::size_t i = 0; i < w.numel(); ++i) w[i] = reg_rng.uniform(-0.5, 0.5);
            params["reg.w"] = std::move(w);
            params["reg.b"] = Tensor::zeros({teacher_arch.hidden_dim});
        }
        auto build_loss = [&](Tape& tape, const std::map<std::string, Var>& pv) {
            LstmForward fwd = lstm_forward_batch(tape, inputs, pv, student_arch);
            Var ce = softmax_cross_entropy(fwd.logits, labels);
            switch (method) {
                case Method::none:
                    return ce;
                case Method::kd:
                    return total_train_loss(ce, kd_soft_targets(teacher_logits, fwd.logits, kd.tau),
                                            kd.alpha, kd.beta);
                case Method::fitnets:
                    return total_train_loss(ce, fitnets_hint_batch(tape, fwd.trajectory, teacher_hidden, pv),
                                            kd.alpha, kd.beta);
                case Method::memkd: {
                    Rng pair_rng(pair_seed);
                    return total_train_loss(
                        ce, memkd_loss_batch(tape, fwd.trajectory, teacher_hidden, kd, pair_rng),
                        kd.alpha, kd.beta);
                }
            }
            return ce;
        };
        GradCheckLine line;
        line.method = method_name(method);
        try {
            Tape tape;
            auto pv = bind_params(tape, params, true);
            GradSet analytic = tape.backward(build_loss(tape, pv), pv);
            GradSet numeric = finite_difference_gradient(
                [&](const ParamSet& p) {
                    Tape t2;
                    auto pv2 = bind_params(t2, p, false);
                    return t2.value(build_loss(t2, pv2)).item();
                },
                params, step);
            line.max_rel_error = grad_rel_error(analytic, numeric);
            line.pass = line.max_rel_error <= tol;
        } catch (const std::exception& e) {
            line.pass = false;
            line.note = e.what();
        }
        report.push_back(std::move(line));
    }
    return report;
}

}  // namespace memkd
