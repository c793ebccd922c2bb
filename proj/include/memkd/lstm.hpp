#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "memkd/rng.hpp"
#include "memkd/tape.hpp"
#include "memkd/tensor.hpp"

namespace memkd {

struct LstmConfig {
    std::size_t input_dim = 1;
    std::size_t hidden_dim = 8;
    std::size_t num_layers = 1;
    std::size_t num_classes = 2;

    static LstmConfig teacher_preset(std::size_t input_dim, std::size_t num_classes) {
        return {input_dim, 100, 3, num_classes};
    }
    static LstmConfig student_preset(std::size_t input_dim, std::size_t num_classes) {
        return {input_dim, 8, 1, num_classes};
    }

    void validate() const {
        if (input_dim < 1 || hidden_dim < 1 || num_layers < 1 || num_classes < 2)
            throw ValueError("invalid LstmConfig: n>=1, m>=1, L>=1, C>=2 required");
    }

    bool operator==(const LstmConfig&) const = default;
};

inline const std::array<const char*, 4> kGateNames = {"i", "f", "g", "o"};

/// Parameter names, in serialization order. Per layer and gate: input-to-hidden
/// weight (m x n_in), hidden-to-hidden weight (m x m), one bias (m). Then the
/// classifier head (C x m) and head bias (C).
inline std::vector<std::pair<std::string, Shape>> param_layout(const LstmConfig& cfg) {
    cfg.validate();
    std::vector<std::pair<std::string, Shape>> out;
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        std::size_t n_in = (l == 0) ? cfg.input_dim : cfg.hidden_dim;
        for (const char* gate : kGateNames) {
            std::string p = "l" + std::to_string(l) + "." + gate;
            out.emplace_back(p + ".wx", Shape{cfg.hidden_dim, n_in});
            out.emplace_back(p + ".wh", Shape{cfg.hidden_dim, cfg.hidden_dim});
            out.emplace_back(p + ".b", Shape{cfg.hidden_dim});
        }
    }
    out.emplace_back("head.w", Shape{cfg.num_classes, cfg.hidden_dim});
    out.emplace_back("head.b", Shape{cfg.num_classes});
    return out;
}

inline std::size_t param_count(const LstmConfig& cfg) {
    std::size_t total = 0;
    for (const auto& [name, shape] : param_layout(cfg)) total += shape_numel(shape);
    return total;
}

/// All weights and biases i.i.d. uniform on (-1/sqrt(m), 1/sqrt(m)).
inline ParamSet init_params(const LstmConfig& cfg, std::uint64_t seed) {
    double bound = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim));
    Rng rng(seed);
    ParamSet params;
    for (const auto& [name, shape] : param_layout(cfg)) {
        Tensor t(shape);
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
        params[name] = std::move(t);
    }
    return params;
}

/// Batched hidden trajectory: top-layer h and c per timestep, each [b x m].
struct BatchTrajectory {
    std::vector<Var> hidden;  // length T
    std::vector<Var> cell;
    std::size_t seq_len() const { return hidden.size(); }
};

struct LstmForward {
    BatchTrajectory trajectory;
    Var logits;  // [b x C]
};

namespace detail {
struct GateVars {
    Var wx, wh, b;
};

inline GateVars gate_vars(const std::map<std::string, Var>& pv, std::size_t layer, const char* gate) {
    std::string p = "l" + std::to_string(layer) + "." + std::string(gate);
    return {pv.at(p + ".wx"), pv.at(p + ".wh"), pv.at(p + ".b")};
}

/// One LSTM step on a [b x n_in] input block.
inline std::pair<Var, Var> lstm_cell_step(Var x, Var h_prev, Var c_prev,
                                          const std::map<std::string, Var>& pv, std::size_t layer) {
    auto pre = [&](const char* gate) {
        GateVars gv = gate_vars(pv, layer, gate);
        return add(add_bias(linear(x, gv.wx), gv.b), linear(h_prev, gv.wh));
    };
    Var i = sigmoid(pre("i"));
    Var f = sigmoid(pre("f"));
    Var g = tanh_op(pre("g"));
    Var o = sigmoid(pre("o"));
    Var c = add(hadamard(f, c_prev), hadamard(i, g));
    Var h = hadamard(o, tanh_op(c));
    return {h, c};
}
}  // namespace detail

/// Single LSTM cell application (library surface for tests): vectors in, vectors out.
inline std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                                           const ParamSet& params, const LstmConfig& cfg,
                                           std::size_t layer = 0) {
    Tape tape;
    auto pv = bind_params(tape, params, false);
    std::size_t n_in = (layer == 0) ? cfg.input_dim : cfg.hidden_dim;
    if (x.numel() != n_in || h_prev.numel() != cfg.hidden_dim || c_prev.numel() != cfg.hidden_dim)
        throw ShapeError("lstm_cell: input shapes do not match layer config");
    Var xv = tape.constant(Tensor({1, n_in}, x.vec()));
    Var hv = tape.constant(Tensor({1, cfg.hidden_dim}, h_prev.vec()));
    Var cv = tape.constant(Tensor({1, cfg.hidden_dim}, c_prev.vec()));
    auto [h, c] = detail::lstm_cell_step(xv, hv, cv, pv, layer);
    return {Tensor({cfg.hidden_dim}, tape.value(h).vec()), Tensor({cfg.hidden_dim}, tape.value(c).vec())};
}

/// Full forward over a batch. inputs[t] is the [b x n] block at timestep t+1.
/// Lower layers feed upper layers within each timestep; h0 = c0 = 0 everywhere.
inline LstmForward lstm_forward_batch(Tape& tape, const std::vector<Tensor>& inputs,
                                      const std::map<std::string, Var>& pv, const LstmConfig& cfg) {
    std::size_t T = inputs.size();
    if (T < 2) throw ValueError("lstm_forward: sequence length must be >= 2, got " + std::to_string(T));
    std::size_t b = inputs[0].dim(0);
    std::vector<Var> h(cfg.num_layers), c(cfg.num_layers);
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        h[l] = tape.constant(Tensor::zeros({b, cfg.hidden_dim}));
        c[l] = tape.constant(Tensor::zeros({b, cfg.hidden_dim}));
    }
    LstmForward out;
    for (std::size_t t = 0; t < T; ++t) {
        Var x = tape.constant(inputs[t]);
        for (std::size_t l = 0; l < cfg.num_layers; ++l) {
            auto [hn, cn] = detail::lstm_cell_step(x, h[l], c[l], pv, l);
            h[l] = hn;
            c[l] = cn;
            x = hn;
        }
        out.trajectory.hidden.push_back(h[cfg.num_layers - 1]);
        out.trajectory.cell.push_back(c[cfg.num_layers - 1]);
    }
    out.logits = add_bias(linear(out.trajectory.hidden.back(), pv.at("head.w")), pv.at("head.b"));
    return out;
}

/// Per-sample trajectory and logits as plain tensors (no gradient flow).
struct HiddenTrajectory {
    Tensor hidden;  // [T x m]
    Tensor cell;    // [T x m]
    std::size_t seq_len() const { return hidden.dim(0); }
    std::size_t hidden_dim() const { return hidden.dim(1); }
};

struct EvalForward {
    HiddenTrajectory trajectory;
    Tensor logits;  // [C]
};

/// Forward one series X[T x n] through the stack; bit-identical to the tape
/// path (it runs the same primitives on an ephemeral tape).
inline EvalForward lstm_forward(const Tensor& X, const ParamSet& params, const LstmConfig& cfg) {
    cfg.validate();
    if (X.rank() != 2 || X.dim(1) != cfg.input_dim)
        throw ShapeError("lstm_forward: expected [T x n] input, got " + shape_str(X.shape()));
    std::size_t T = X.dim(0);
    if (T < 2) throw ValueError("lstm_forward: sequence length must be >= 2, got " + std::to_string(T));
    std::vector<Tensor> inputs;
    inputs.reserve(T);
    for (std::size_t t = 0; t < T; ++t) {
        Tensor row({1, cfg.input_dim});
        for (std::size_t j = 0; j < cfg.input_dim; ++j) row[j] = X.at(t, j);
        inputs.push_back(std::move(row));
    }
    Tape tape;
    auto pv = bind_params(tape, params, false);
    LstmForward fwd = lstm_forward_batch(tape, inputs, pv, cfg);
    EvalForward out;
    out.trajectory.hidden = Tensor({T, cfg.hidden_dim});
    out.trajectory.cell = Tensor({T, cfg.hidden_dim});
    for (std::size_t t = 0; t < T; ++t) {
        const Tensor& h = tape.value(fwd.trajectory.hidden[t]);
        const Tensor& c = tape.value(fwd.trajectory.cell[t]);
        for (std::size_t j = 0; j < cfg.hidden_dim; ++j) {
            out.trajectory.hidden.at(t, j) = h[j];
            out.trajectory.cell.at(t, j) = c[j];
        }
    }
    out.logits = Tensor({cfg.num_classes}, tape.value(fwd.logits).vec());
    return out;
}

}  // namespace memkd
