#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "memkd/rng.hpp"
#include "memkd/tensor.hpp"

namespace memkd {

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Sample {
    Tensor series;  // [T x n]
    int label = 0;
};

struct Dataset {
    std::string name;
    std::vector<Sample> samples;
    std::size_t num_classes = 0;
    std::map<double, int> label_map;  // original label -> class index

    std::size_t size() const { return samples.size(); }
    std::size_t series_length() const { return samples.empty() ? 0 : samples[0].series.dim(0); }
    std::size_t channels() const { return samples.empty() ? 0 : samples[0].series.dim(1); }
};

struct SplitSpec {
    double validation_fraction = 0.2;
    std::uint64_t seed = 0;
};

/// UCR-style text: one series per line, first field the class label, the rest
/// the values; comma or tab delimited (auto-detected from the first line).
inline Dataset load_ucr(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("load_ucr: cannot open " + path);
    std::string line;
    Dataset d;
    d.name = path;
    char delim = ',';
    bool first = true;
    std::size_t line_no = 0;
    std::vector<double> raw_labels;
    while (std::getline(f, line)) {
        ++line_no;
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (line.empty()) continue;
        if (first) {
            delim = line.find('\t') != std::string::npos ? '\t' : ',';
            first = false;
        }
        std::vector<double> fields;
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, delim)) {
            if (tok.empty())
                throw DataError("load_ucr: missing value on line " + std::to_string(line_no));
            std::size_t used = 0;
            double v;
            try {
                v = std::stod(tok, &used);
            } catch (const std::exception&) {
                throw DataError("load_ucr: non-numeric field '" + tok + "' on line " +
                                std::to_string(line_no));
            }
            if (used != tok.size())
                throw DataError("load_ucr: non-numeric field '" + tok + "' on line " +
                                std::to_string(line_no));
            fields.push_back(v);
        }
        if (fields.size() < 2)
            throw DataError("load_ucr: line " + std::to_string(line_no) + " has no series values");
        if (!d.samples.empty() && fields.size() - 1 != d.samples[0].series.dim(0))
            throw DataError("load_ucr: ragged line " + std::to_string(line_no) + " (" +
                            std::to_string(fields.size() - 1) + " values, expected " +
                            std::to_string(d.samples[0].series.dim(0)) + ")");
        raw_labels.push_back(fields[0]);
        Tensor series({fields.size() - 1, 1});
        for (std::size_t i = 1; i < fields.size(); ++i) series[i - 1] = fields[i];
        d.samples.push_back({std::move(series), 0});
    }
    if (d.samples.empty()) throw DataError("load_ucr: empty file " + path);

    std::vector<double> distinct = raw_labels;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    for (std::size_t i = 0; i < distinct.size(); ++i) d.label_map[distinct[i]] = static_cast<int>(i);
    d.num_classes = distinct.size();
    for (std::size_t i = 0; i < d.samples.size(); ++i) d.samples[i].label = d.label_map[raw_labels[i]];
    return d;
}

/// Per channel, linear interpolation of the polyline (i/(T-1), x_i) sampled
/// on the target grid j/(target-1); endpoints preserved exactly.
inline Tensor resample_to_length(const Tensor& series, std::size_t target = 100) {
    std::size_t T = series.dim(0), n = series.dim(1);
    if (T < 2) throw DataError("resample_to_length: need T >= 2, got " + std::to_string(T));
    if (T == target) return series;
    Tensor out({target, n});
    for (std::size_t j = 0; j < target; ++j) {
        double u = static_cast<double>(j) / static_cast<double>(target - 1) * static_cast<double>(T - 1);
        std::size_t lo = static_cast<std::size_t>(u);
        if (lo >= T - 1) lo = T - 2;
        double frac = u - static_cast<double>(lo);
        for (std::size_t c = 0; c < n; ++c)
            out.at(j, c) = series.at(lo, c) + frac * (series.at(lo + 1, c) - series.at(lo, c));
    }
    // exact endpoints regardless of rounding in u
    for (std::size_t c = 0; c < n; ++c) {
        out.at(0, c) = series.at(0, c);
        out.at(target - 1, c) = series.at(T - 1, c);
    }
    return out;
}

/// Per channel: subtract the mean, divide by population std + 1e-8.
inline Tensor znormalize(const Tensor& series) {
    std::size_t T = series.dim(0), n = series.dim(1);
    Tensor out({T, n});
    for (std::size_t c = 0; c < n; ++c) {
        double mean = 0.0;
        for (std::size_t t = 0; t < T; ++t) mean += series.at(t, c);
        mean /= static_cast<double>(T);
        double var = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            double d = series.at(t, c) - mean;
            var += d * d;
        }
        double sd = std::sqrt(var / static_cast<double>(T)) + 1e-8;
        for (std::size_t t = 0; t < T; ++t) out.at(t, c) = (series.at(t, c) - mean) / sd;
    }
    return out;
}

/// resample to the target length, then z-normalize, per series.
inline Dataset preprocess(const Dataset& d, std::size_t target_length = 100) {
    Dataset out = d;
    for (auto& s : out.samples) s.series = znormalize(resample_to_length(s.series, target_length));
    return out;
}

/// Stratified split: ceil(frac * count_c) of each class to validation, chosen
/// by seeded shuffle. Single-sample classes go wholly to train with a warning.
inline std::pair<Dataset, Dataset> split_train_val(const Dataset& d, const SplitSpec& spec) {
    if (d.samples.empty()) throw DataError("split_train_val: empty dataset");
    if (spec.validation_fraction <= 0.0 || spec.validation_fraction >= 1.0)
        throw DataError("split_train_val: fraction must be in (0,1)");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < d.samples.size(); ++i) by_class[d.samples[i].label].push_back(i);
    std::vector<bool> to_val(d.samples.size(), false);
    Rng rng(spec.seed);
    for (auto& [cls, idxs] : by_class) {
        if (idxs.size() < 2) {
            std::cerr << "warning: class " << cls << " has " << idxs.size()
                      << " sample(s); keeping all in train\n";
            continue;
        }
        rng.shuffle(idxs);
        std::size_t k = static_cast<std::size_t>(
            std::ceil(spec.validation_fraction * static_cast<double>(idxs.size())));
        for (std::size_t i = 0; i < k; ++i) to_val[idxs[i]] = true;
    }
    Dataset train = d, val = d;
    train.samples.clear();
    val.samples.clear();
    for (std::size_t i = 0; i < d.samples.size(); ++i)
        (to_val[i] ? val : train).samples.push_back(d.samples[i]);
    return {train, val};
}

/// Synthetic classification task: class c = sine of frequency c+1 with random
/// phase, plus a unit-amplitude bump over a 10-step window at a class-specific
/// offset, plus N(0, sigma^2) noise. Balanced classes, deterministic per seed.
inline std::pair<Dataset, Dataset> make_synthetic(std::size_t classes, std::size_t train_count,
                                                  std::size_t test_count, std::size_t T, double sigma,
                                                  std::uint64_t seed) {
    if (classes < 2) throw DataError("make_synthetic: need at least 2 classes");
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    auto gen = [&](std::size_t count, Rng& rng, const std::string& name) {
        Dataset d;
        d.name = name;
        d.num_classes = classes;
        for (std::size_t c = 0; c < classes; ++c) d.label_map[static_cast<double>(c)] = static_cast<int>(c);
        for (std::size_t i = 0; i < count; ++i) {
            int c = static_cast<int>(i % classes);
            double freq = static_cast<double>(c + 1);
            double phase = rng.uniform(0.0, kTwoPi);
            std::size_t bump_at = (static_cast<std::size_t>(c) * T) / classes;
            std::size_t bump_len = std::min<std::size_t>(10, T - bump_at);
            Tensor series({T, 1});
            for (std::size_t t = 0; t < T; ++t) {
                double v = std::sin(kTwoPi * freq * static_cast<double>(t) / static_cast<double>(T) + phase);
                if (t >= bump_at && t < bump_at + bump_len) v += 1.0;
                if (sigma > 0.0) v += sigma * rng.next_gaussian();
                series[t] = v;
            }
            d.samples.push_back({std::move(series), c});
        }
        return d;
    };
    Rng rng_train(seed);
    Rng rng_test = Rng::derive(seed, 0x7e57);
    return {gen(train_count, rng_train, "synthetic-train"), gen(test_count, rng_test, "synthetic-test")};
}

/// Write a dataset in the UCR text format (comma-delimited, original labels).
inline void save_ucr(const Dataset& d, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("save_ucr: cannot open " + path);
    std::map<int, double> inv;
    for (const auto& [orig, idx] : d.label_map) inv[idx] = orig;
    f.precision(17);
    for (const auto& s : d.samples) {
        f << inv.at(s.label);
        for (std::size_t i = 0; i < s.series.numel(); ++i) f << ',' << s.series[i];
        f << '\n';
    }
    if (!f) throw DataError("save_ucr: write failed for " + path);
}

/// Seeded epoch batching: shuffled index batches covering the dataset once;
/// the final partial batch is emitted. shuffle=false keeps original order.
inline std::vector<std::vector<std::size_t>> batch_indices(std::size_t count, std::size_t batch_size,
                                                           bool shuffle, std::uint64_t seed) {
    if (batch_size < 1) throw DataError("batch_indices: batch size must be >= 1");
    std::vector<std::size_t> idx(count);
    for (std::size_t i = 0; i < count; ++i) idx[i] = i;
    if (shuffle) {
        Rng rng(seed);
        rng.shuffle(idx);
    }
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < count; start += batch_size) {
        std::size_t end = std::min(count, start + batch_size);
        batches.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(start),
                             idx.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

}  // namespace memkd
