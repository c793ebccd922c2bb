#pragma once

#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memkd/training.hpp"

namespace memkd {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Experiment configuration document. JSON with fixed sections; unknown keys
/// are rejected so typos cannot silently fall back to defaults.
struct RunConfig {
    // data
    std::string data_path;  // optional default for tools that accept --data
    std::size_t target_length = 100;
    std::size_t synth_classes = 3;
    std::size_t synth_train = 200;
    std::size_t synth_test = 200;
    double synth_noise = 0.3;
    // architectures
    std::size_t teacher_hidden = 100, teacher_layers = 3;
    std::size_t student_hidden = 8, student_layers = 1;
    // training
    double lr_teacher = 0.01, lr_student = 0.1;
    std::size_t batch = 32, epochs = 500, patience = 50, seeds = 5;
    std::uint64_t base_seed = 0;
    double val_fraction = 0.2;
    // kd
    Method method = Method::memkd;
    KdLossConfig kd;
    std::optional<double> beta_fixed;
    std::vector<double> beta_grid = {0.1, 1.0, 10.0, 100.0};

    std::string digest;  // FNV-1a of the source document

    TrainConfig teacher_train_config() const {
        TrainConfig c;
        c.lr = lr_teacher;
        c.batch_size = batch;
        c.max_epochs = epochs;
        c.patience = patience;
        c.base_seed = base_seed;
        c.num_seeds = seeds;
        return c;
    }

    TrainConfig student_train_config(Method m, double beta) const {
        TrainConfig c;
        c.lr = lr_student;
        c.batch_size = batch;
        c.max_epochs = epochs;
        c.patience = patience;
        c.base_seed = base_seed;
        c.num_seeds = seeds;
        c.method = m;
        c.kd = kd;
        c.kd.beta = beta;
        return c;
    }

    LstmConfig teacher_arch(std::size_t input_dim, std::size_t num_classes) const {
        return {input_dim, teacher_hidden, teacher_layers, num_classes};
    }
    LstmConfig student_arch(std::size_t input_dim, std::size_t num_classes) const {
        return {input_dim, student_hidden, student_layers, num_classes};
    }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& obj, const std::set<std::string>& allowed,
                           const std::string& section) {
    for (const auto& [key, _] : obj.items())
        if (!allowed.count(key))
            throw ConfigError("unknown key '" + key + "' in config section '" + section + "'");
}

template <typename T>
void read_opt(const nlohmann::json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace detail

inline RunConfig parse_run_config(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig cfg;
    cfg.digest = fnv1a_hex(j.dump());
    detail::reject_unknown(j, {"data", "teacher", "student", "train", "kd"}, "<top>");
    try {
        if (j.contains("data")) {
            const auto& d = j.at("data");
            detail::reject_unknown(d, {"path", "target_length", "synthetic"}, "data");
            detail::read_opt(d, "path", cfg.data_path);
            detail::read_opt(d, "target_length", cfg.target_length);
            if (d.contains("synthetic")) {
                const auto& s = d.at("synthetic");
                detail::reject_unknown(s, {"classes", "train", "test", "noise"}, "data.synthetic");
                detail::read_opt(s, "classes", cfg.synth_classes);
                detail::read_opt(s, "train", cfg.synth_train);
                detail::read_opt(s, "test", cfg.synth_test);
                detail::read_opt(s, "noise", cfg.synth_noise);
            }
        }
        if (j.contains("teacher")) {
            const auto& t = j.at("teacher");
            detail::reject_unknown(t, {"hidden", "layers"}, "teacher");
            detail::read_opt(t, "hidden", cfg.teacher_hidden);
            detail::read_opt(t, "layers", cfg.teacher_layers);
        }
        if (j.contains("student")) {
            const auto& s = j.at("student");
            detail::reject_unknown(s, {"hidden", "layers"}, "student");
            detail::read_opt(s, "hidden", cfg.student_hidden);
            detail::read_opt(s, "layers", cfg.student_layers);
        }
        if (j.contains("train")) {
            const auto& t = j.at("train");
            detail::reject_unknown(t,
                                   {"lr_teacher", "lr_student", "batch", "epochs", "patience", "seeds",
                                    "base_seed", "val_fraction"},
                                   "train");
            detail::read_opt(t, "lr_teacher", cfg.lr_teacher);
            detail::read_opt(t, "lr_student", cfg.lr_student);
            detail::read_opt(t, "batch", cfg.batch);
            detail::read_opt(t, "epochs", cfg.epochs);
            detail::read_opt(t, "patience", cfg.patience);
            detail::read_opt(t, "seeds", cfg.seeds);
            detail::read_opt(t, "base_seed", cfg.base_seed);
            detail::read_opt(t, "val_fraction", cfg.val_fraction);
        }
        if (j.contains("kd")) {
            const auto& k = j.at("kd");
            detail::reject_unknown(
                k, {"method", "alpha", "beta", "beta_grid", "tau", "delta", "K", "epsilon"}, "kd");
            if (k.contains("method")) {
                auto m = parse_method(k.at("method").get<std::string>());
                if (!m)
                    throw ConfigError("unknown kd.method '" + k.at("method").get<std::string>() +
                                      "'; supported: none, kd, fitnets, memkd");
                cfg.method = *m;
            }
            detail::read_opt(k, "alpha", cfg.kd.alpha);
            if (k.contains("beta")) cfg.beta_fixed = k.at("beta").get<double>();
            if (k.contains("beta_grid")) cfg.beta_grid = k.at("beta_grid").get<std::vector<double>>();
            detail::read_opt(k, "tau", cfg.kd.tau);
            detail::read_opt(k, "delta", cfg.kd.delta);
            detail::read_opt(k, "K", cfg.kd.long_pair_count);
            detail::read_opt(k, "epsilon", cfg.kd.epsilon);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config value: ") + e.what());
    }
    if (cfg.kd.tau <= 0 || cfg.kd.delta <= 0 || cfg.kd.epsilon <= 0 || cfg.kd.alpha < 0)
        throw ConfigError("kd: tau, delta, epsilon must be > 0 and alpha >= 0");
    if (cfg.beta_fixed && *cfg.beta_fixed < 0) throw ConfigError("kd.beta must be >= 0");
    return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_run_config(text);
}

}  // namespace memkd
