#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memkd/lstm.hpp"

namespace memkd {

struct ModelIoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Everything needed to run a trained classifier: architecture, parameters,
/// the label map of the training data, and provenance metadata.
struct ModelBundle {
    LstmConfig config;
    ParamSet params;
    std::map<double, int> label_map;  // original label -> class index
    std::uint64_t creation_seed = 0;
    std::string config_digest;

    bool operator==(const ModelBundle& o) const {
        return config == o.config && params == o.params && label_map == o.label_map &&
               creation_seed == o.creation_seed && config_digest == o.config_digest;
    }
};

namespace detail {

inline constexpr char kMagic[4] = {'M', 'K', 'D', '1'};
inline constexpr std::uint8_t kVersion = 1;

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw ModelIoError("model file truncated");
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() {
        std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
};

}  // namespace detail

/// Format: magic "MKD1", version byte, u64 header length, JSON header
/// (config, label map, metadata), then every parameter tensor in layout
/// order as little-endian f64, row-major.
inline void save_model(const ModelBundle& bundle, const std::string& path) {
    nlohmann::json header;
    header["config"] = {{"input_dim", bundle.config.input_dim},
                        {"hidden_dim", bundle.config.hidden_dim},
                        {"num_layers", bundle.config.num_layers},
                        {"num_classes", bundle.config.num_classes}};
    nlohmann::json lm = nlohmann::json::array();
    for (const auto& [orig, idx] : bundle.label_map) lm.push_back({{"label", orig}, {"index", idx}});
    header["label_map"] = lm;
    header["creation_seed"] = bundle.creation_seed;
    header["config_digest"] = bundle.config_digest;

    std::string out;
    out.append(detail::kMagic, 4);
    out.push_back(static_cast<char>(detail::kVersion));
    std::string hdr = header.dump();
    detail::put_u64(out, hdr.size());
    out += hdr;
    for (const auto& [name, shape] : param_layout(bundle.config)) {
        auto it = bundle.params.find(name);
        if (it == bundle.params.end() || it->second.shape() != shape)
            throw ModelIoError("save_model: params do not match config layout at " + name);
        for (std::size_t i = 0; i < it->second.numel(); ++i) detail::put_f64(out, it->second[i]);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ModelIoError("save_model: cannot open " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw ModelIoError("save_model: write failed for " + path);
}

inline ModelBundle load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ModelIoError("load_model: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    if (buf.size() < 5 || std::memcmp(buf.data(), detail::kMagic, 4) != 0)
        throw ModelIoError("load_model: bad magic (not a model file)");
    std::uint8_t version = static_cast<std::uint8_t>(buf[4]);
    if (version != detail::kVersion)
        throw ModelIoError("load_model: unsupported version " + std::to_string(version));

    detail::Reader r{buf, 5};
    std::uint64_t hdr_len = r.u64();
    r.need(hdr_len);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(buf.substr(r.pos, hdr_len));
    } catch (const nlohmann::json::exception& e) {
        throw ModelIoError(std::string("load_model: corrupt header: ") + e.what());
    }
    r.pos += hdr_len;

    ModelBundle bundle;
    try {
        const auto& c = header.at("config");
        bundle.config = {c.at("input_dim").get<std::size_t>(), c.at("hidden_dim").get<std::size_t>(),
                         c.at("num_layers").get<std::size_t>(), c.at("num_classes").get<std::size_t>()};
        for (const auto& e : header.at("label_map"))
            bundle.label_map[e.at("label").get<double>()] = e.at("index").get<int>();
        bundle.creation_seed = header.at("creation_seed").get<std::uint64_t>();
        bundle.config_digest = header.at("config_digest").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ModelIoError(std::string("load_model: corrupt header: ") + e.what());
    }
    bundle.config.validate();

    for (const auto& [name, shape] : param_layout(bundle.config)) {
        Tensor t(shape);
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = r.f64();
        bundle.params[name] = std::move(t);
    }
    if (r.pos != buf.size()) throw ModelIoError("load_model: trailing bytes after payload");
    return bundle;
}

}  // namespace memkd
