#pragma once

#include <algorithm>
#include <vector>

#include "memkd/lstm.hpp"
#include "memkd/rng.hpp"
#include "memkd/tape.hpp"

namespace memkd {

/// (t, z) index pair, 1-based timesteps: compares h^(t+z) against h^(t).
struct TimePair {
    std::size_t t;
    std::size_t z;
    bool operator==(const TimePair&) const = default;
};

using PairSet = std::vector<TimePair>;

/// One normalized memory-change ratio per pair, in PairSet order.
using MemorySignature = std::vector<double>;

struct KdLossConfig {
    double alpha = 1.0;
    double beta = 1.0;
    double tau = 4.0;      // soft-target temperature
    double delta = 1.0;    // smooth-L1 threshold
    std::size_t long_pair_count = 0;  // 0 means T-1 at use time
    double epsilon = 1e-8;  // norm-denominator guard

    std::size_t effective_k(std::size_t T) const {
        return long_pair_count > 0 ? long_pair_count : T - 1;
    }
};

inline void validate_pairs(const PairSet& pairs, std::size_t T) {
    for (const auto& p : pairs)
        if (p.t < 1 || p.z < 1 || p.t + p.z > T)
            throw ValueError("pair (t=" + std::to_string(p.t) + ", z=" + std::to_string(p.z) +
                             ") out of range for T=" + std::to_string(T));
}

/// All (t, 1) pairs: (1,1) ... (T-1,1).
inline PairSet short_pairs(std::size_t T) {
    if (T < 2) throw ValueError("short_pairs: need T >= 2, got " + std::to_string(T));
    PairSet out;
    out.reserve(T - 1);
    for (std::size_t t = 1; t < T; ++t) out.push_back({t, 1});
    return out;
}

/// K distinct pairs drawn uniformly without replacement from
/// {(t, z) : t >= 1, z >= 2, t + z <= T}. K past the population size
/// returns the whole population.
inline PairSet sample_pairs_long(std::size_t T, std::size_t K, Rng& rng) {
    if (T < 3) throw ValueError("sample_pairs_long: need T >= 3, got " + std::to_string(T));
    if (K < 1) throw ValueError("sample_pairs_long: need K >= 1");
    PairSet population;
    for (std::size_t t = 1; t + 2 <= T; ++t)
        for (std::size_t z = 2; t + z <= T; ++z) population.push_back({t, z});
    if (K >= population.size()) return population;
    rng.shuffle(population);
    population.resize(K);
    std::sort(population.begin(), population.end(), [](const TimePair& a, const TimePair& b) {
        return a.t != b.t ? a.t < b.t : a.z < b.z;
    });
    return population;
}

/// s_{t,z} = ||h^(t+z) - h^(t)|| / (||h^(t)|| + eps) over a [T x m] trajectory.
inline MemorySignature memory_signature(const HiddenTrajectory& traj, const PairSet& pairs,
                                        double epsilon) {
    std::size_t T = traj.seq_len(), m = traj.hidden_dim();
    validate_pairs(pairs, T);
    MemorySignature out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) {
        double dn = 0.0, hn = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            double d = traj.hidden.at(p.t + p.z - 1, j) - traj.hidden.at(p.t - 1, j);
            dn += d * d;
            double h = traj.hidden.at(p.t - 1, j);
            hn += h * h;
        }
        out.push_back(std::sqrt(dn) / (std::sqrt(hn) + epsilon));
    }
    return out;
}

/// Mean smooth-L1 penalty between two aligned scalar lists.
inline double smooth_l1(const std::vector<double>& a, const std::vector<double>& b, double delta) {
    if (a.size() != b.size())
        throw ShapeError("smooth_l1: length mismatch " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
    if (delta <= 0.0) throw ValueError("smooth_l1: delta must be positive");
    if (a.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += detail::huber(a[i] - b[i], delta);
    return s / static_cast<double>(a.size());
}

/// Mean cross-entropy (plain evaluation path; the tape primitive backs training).
inline double cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    Tape tape;
    Var l = tape.constant(logits);
    return tape.value(softmax_cross_entropy(l, labels)).item();
}

// ---- batched, differentiable loss paths used in training ----

/// Per-pair signature entries for a batched trajectory: for each pair, a [b]
/// vector of ratios. Differentiable w.r.t. the trajectory.
inline std::vector<Var> batch_signature(Tape& tape, const BatchTrajectory& traj, const PairSet& pairs,
                                        double epsilon) {
    validate_pairs(pairs, traj.seq_len());
    std::vector<Var> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) {
        Var d = sub(traj.hidden[p.t + p.z - 1], traj.hidden[p.t - 1]);
        Var num = row_l2_norm(d);
        Var den = add_const(row_l2_norm(traj.hidden[p.t - 1]), epsilon);
        out.push_back(div_elem(num, den));
    }
    return out;
}

/// Plain-tensor signature entries for a cached teacher trajectory set.
/// teacher_hidden[t] is the [b x m_t] block at timestep t+1.
inline std::vector<Tensor> const_batch_signature(const std::vector<Tensor>& hidden, const PairSet& pairs,
                                                 double epsilon) {
    std::size_t T = hidden.size();
    validate_pairs(pairs, T);
    std::size_t b = hidden[0].dim(0), m = hidden[0].dim(1);
    std::vector<Tensor> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) {
        const Tensor& ha = hidden[p.t + p.z - 1];
        const Tensor& hb = hidden[p.t - 1];
        Tensor s({b});
        for (std::size_t r = 0; r < b; ++r) {
            double dn = 0.0, hn = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                double d = ha.at(r, j) - hb.at(r, j);
                dn += d * d;
                hn += hb.at(r, j) * hb.at(r, j);
            }
            s[r] = std::sqrt(dn) / (std::sqrt(hn) + epsilon);
        }
        out.push_back(std::move(s));
    }
    return out;
}

/// Smooth-L1 discrepancy between student signature vars and constant teacher
/// signature, averaged over all (pair, sample) entries.
inline Var signature_discrepancy(Tape& tape, const std::vector<Var>& student_sig,
                                 const std::vector<Tensor>& teacher_sig, double delta) {
    if (student_sig.size() != teacher_sig.size())
        throw ShapeError("signature_discrepancy: pair-count mismatch");
    Var total = tape.constant(Tensor::scalar(0.0));
    std::size_t entries = 0;
    for (std::size_t i = 0; i < student_sig.size(); ++i) {
        total = add(total, huber_sum(student_sig[i], teacher_sig[i], delta));
        entries += teacher_sig[i].numel();
    }
    return scale(total, entries > 0 ? 1.0 / static_cast<double>(entries) : 0.0);
}

/// L_MemKD = L_short + L_long on one batch. teacher_hidden[t] holds the
/// frozen teacher's top-layer states; the same sampled long pairs are applied
/// to both sides. T < 3 degrades to the short term only.
inline Var memkd_loss_batch(Tape& tape, const BatchTrajectory& student_traj,
                            const std::vector<Tensor>& teacher_hidden, const KdLossConfig& cfg,
                            Rng& rng, bool* degraded_to_short = nullptr) {
    std::size_t T = student_traj.seq_len();
    if (teacher_hidden.size() != T)
        throw ShapeError("memkd_loss: teacher T=" + std::to_string(teacher_hidden.size()) +
                         " vs student T=" + std::to_string(T));
    PairSet shorts = short_pairs(T);
    Var loss = signature_discrepancy(
        tape, batch_signature(tape, student_traj, shorts, cfg.epsilon),
        const_batch_signature(teacher_hidden, shorts, cfg.epsilon), cfg.delta);
    if (T >= 3) {
        PairSet longs = sample_pairs_long(T, cfg.effective_k(T), rng);
        loss = add(loss, signature_discrepancy(
                             tape, batch_signature(tape, student_traj, longs, cfg.epsilon),
                             const_batch_signature(teacher_hidden, longs, cfg.epsilon), cfg.delta));
        if (degraded_to_short) *degraded_to_short = false;
    } else if (degraded_to_short) {
        *degraded_to_short = true;
    }
    return loss;
}

/// Scalar convenience form over two single-sample trajectories.
inline double memkd_loss(const HiddenTrajectory& teacher, const HiddenTrajectory& student,
                         const KdLossConfig& cfg, Rng& rng) {
    std::size_t T = student.seq_len();
    if (teacher.seq_len() != T)
        throw ShapeError("memkd_loss: trajectory length mismatch");
    PairSet shorts = short_pairs(T);
    double loss = smooth_l1(memory_signature(teacher, shorts, cfg.epsilon),
                            memory_signature(student, shorts, cfg.epsilon), cfg.delta);
    if (T >= 3) {
        PairSet longs = sample_pairs_long(T, cfg.effective_k(T), rng);
        loss += smooth_l1(memory_signature(teacher, longs, cfg.epsilon),
                          memory_signature(student, longs, cfg.epsilon), cfg.delta);
    }
    return loss;
}

/// FitNets hint: MSE between the teacher trajectory and a learned linear map
/// of the student trajectory, per timestep, averaged over T x m_t entries.
/// regressor: "reg.w" [m_t x m_s] (+ "reg.b" [m_t]) bound on the tape.
inline Var fitnets_hint_batch(Tape& tape, const BatchTrajectory& student_traj,
                              const std::vector<Tensor>& teacher_hidden,
                              const std::map<std::string, Var>& regressor) {
    std::size_t T = student_traj.seq_len();
    if (teacher_hidden.size() != T)
        throw ShapeError("fitnets_hint: teacher T=" + std::to_string(teacher_hidden.size()) +
                         " vs student T=" + std::to_string(T));
    Var total = tape.constant(Tensor::scalar(0.0));
    for (std::size_t t = 0; t < T; ++t) {
        Var mapped = add_bias(linear(student_traj.hidden[t], regressor.at("reg.w")), regressor.at("reg.b"));
        total = add(total, mse_against(mapped, teacher_hidden[t]));
    }
    return scale(total, 1.0 / static_cast<double>(T));
}

/// L_train = alpha * L_CE + beta * L_KD.
inline Var total_train_loss(Var ce, Var kd, double alpha, double beta) {
    if (alpha < 0.0 || beta < 0.0) throw ValueError("total_train_loss: alpha, beta must be >= 0");
    return add(scale(ce, alpha), scale(kd, beta));
}

}  // namespace memkd
