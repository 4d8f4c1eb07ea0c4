#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "revid/config_json.hpp"
#include "revid/denoiser.hpp"
#include "revid/optimizer.hpp"
#include "revid/schedule.hpp"
#include "revid/training_config.hpp"

namespace revid {

inline constexpr char kCheckpointMagic[8] = {'R', 'E', 'V', 'I', 'D', 'C', 'K', '1'};
inline constexpr int kCheckpointVersion = 1;

inline std::uint64_t fnv1a64(const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 1469598103934665603ULL;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

template <typename Real>
constexpr const char* scalar_name() {
    if constexpr (std::is_same_v<Real, float>) return "f32";
    else return "f64";
}

// Self-describing training state: weights, EMA shadow, optimizer moments,
// configs, and the schedule parameters (rebuilt bit-exactly on load).
template <typename Real>
struct Checkpoint {
    DenoiserConfig denoiser_config;
    TrainConfig train_config;
    long global_step = 0;
    long adam_steps = 0;
    std::vector<std::pair<std::string, Tensor<Real>>> weights;
    std::vector<std::pair<std::string, Tensor<Real>>> ema;
    std::vector<std::pair<std::string, Tensor<Real>>> adam_m;
    std::vector<std::pair<std::string, Tensor<Real>>> adam_v;

    NoiseSchedule schedule() const {
        return build_schedule(train_config.total_steps, train_config.beta_start,
                              train_config.beta_end);
    }
};

namespace detail {

template <typename Real>
void append_section(nlohmann::json& dir, std::vector<char>& payload, const std::string& prefix,
                    const std::vector<std::pair<std::string, Tensor<Real>>>& tensors) {
    for (const auto& [name, t] : tensors) {
        nlohmann::json e;
        e["name"] = prefix + name;
        e["shape"] = t.shape;
        e["offset"] = payload.size();
        const size_t bytes = static_cast<size_t>(t.numel()) * sizeof(Real);
        payload.resize(payload.size() + bytes);
        std::memcpy(payload.data() + payload.size() - bytes, t.ptr(), bytes);
        dir.push_back(std::move(e));
    }
}

template <typename Real>
std::vector<std::pair<std::string, Tensor<Real>>> read_section(
    const nlohmann::json& dir, const std::vector<char>& payload, const std::string& prefix) {
    std::vector<std::pair<std::string, Tensor<Real>>> out;
    for (const auto& e : dir) {
        const std::string name = e.at("name").get<std::string>();
        if (name.rfind(prefix, 0) != 0) continue;
        Tensor<Real> t(e.at("shape").get<std::vector<long>>());
        const size_t offset = e.at("offset").get<size_t>();
        const size_t bytes = static_cast<size_t>(t.numel()) * sizeof(Real);
        if (offset + bytes > payload.size())
            throw IoError("checkpoint: tensor " + name + " overruns payload");
        std::memcpy(t.ptr(), payload.data() + offset, bytes);
        out.emplace_back(name.substr(prefix.size()), std::move(t));
    }
    return out;
}

} // namespace detail

// Atomic write: temp file in the target directory, then rename.
template <typename Real>
void save_checkpoint(const std::filesystem::path& path, const Checkpoint<Real>& ck) {
    nlohmann::json header;
    header["format_version"] = kCheckpointVersion;
    header["scalar_type"] = scalar_name<Real>();
    header["global_step"] = ck.global_step;
    header["adam_steps"] = ck.adam_steps;
    header["denoiser_config"] = ck.denoiser_config;
    header["train_config"] = ck.train_config;
    header["schedule"] = {{"total_steps", ck.train_config.total_steps},
                          {"beta_start", ck.train_config.beta_start},
                          {"beta_end", ck.train_config.beta_end}};

    nlohmann::json dir = nlohmann::json::array();
    std::vector<char> payload;
    detail::append_section(dir, payload, "w/", ck.weights);
    detail::append_section(dir, payload, "ema/", ck.ema);
    detail::append_section(dir, payload, "adam_m/", ck.adam_m);
    detail::append_section(dir, payload, "adam_v/", ck.adam_v);
    header["tensors"] = std::move(dir);
    header["payload_bytes"] = payload.size();
    char checksum[17];
    std::snprintf(checksum, sizeof(checksum), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(payload.data(), payload.size())));
    header["payload_checksum"] = checksum;

    const std::string header_str = header.dump();
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open checkpoint for writing: " + tmp.string());
        out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
        const std::uint64_t hlen = header_str.size();
        out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
        out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
        out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
        if (!out) throw IoError("checkpoint write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("checkpoint rename failed: " + path.string() + ": " + ec.message());
}

template <typename Real>
Checkpoint<Real> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw IoError("not a checkpoint file: " + path.string());
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string header_str(hlen, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw IoError("truncated checkpoint header: " + path.string());

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_str);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad checkpoint header in " + path.string() + ": " + e.what());
    }
    if (header.at("format_version").get<int>() != kCheckpointVersion)
        throw IoError("unsupported checkpoint version in " + path.string());
    if (header.at("scalar_type").get<std::string>() != scalar_name<Real>())
        throw IoError("checkpoint scalar type " + header.at("scalar_type").get<std::string>() +
                      " does not match requested " + scalar_name<Real>());

    const size_t payload_bytes = header.at("payload_bytes").get<size_t>();
    std::vector<char> payload(payload_bytes);
    in.read(payload.data(), static_cast<std::streamsize>(payload_bytes));
    if (!in) throw IoError("truncated checkpoint payload: " + path.string());

    char checksum[17];
    std::snprintf(checksum, sizeof(checksum), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(payload.data(), payload.size())));
    if (header.at("payload_checksum").get<std::string>() != checksum)
        throw IoError("checkpoint checksum mismatch (corrupt file): " + path.string());

    Checkpoint<Real> ck;
    ck.denoiser_config = header.at("denoiser_config").get<DenoiserConfig>();
    ck.train_config = header.at("train_config").get<TrainConfig>();
    ck.global_step = header.at("global_step").get<long>();
    ck.adam_steps = header.at("adam_steps").get<long>();
    const auto& dir = header.at("tensors");
    ck.weights = detail::read_section<Real>(dir, payload, "w/");
    ck.ema = detail::read_section<Real>(dir, payload, "ema/");
    ck.adam_m = detail::read_section<Real>(dir, payload, "adam_m/");
    ck.adam_v = detail::read_section<Real>(dir, payload, "adam_v/");
    return ck;
}

// Rebuilds a model from a checkpoint, selecting live or EMA weights.
template <typename Real>
ConditionalDenoiser<Real> build_denoiser(const Checkpoint<Real>& ck, bool use_ema) {
    ConditionalDenoiser<Real> model(ck.denoiser_config, ck.train_config.total_steps,
                                    ck.train_config.seed);
    const auto& src = use_ema ? ck.ema : ck.weights;
    auto& entries = model.params().entries;
    if (src.size() != entries.size())
        throw IoError("checkpoint weights do not match model (have " +
                      std::to_string(src.size()) + ", need " + std::to_string(entries.size()) +
                      ")");
    for (size_t i = 0; i < entries.size(); ++i) {
        if (src[i].first != entries[i].first)
            throw IoError("checkpoint weight name mismatch: " + src[i].first + " vs " +
                          entries[i].first);
        if (src[i].second.shape != entries[i].second->value.shape)
            throw IoError("checkpoint weight shape mismatch for " + src[i].first);
        entries[i].second->value = src[i].second;
    }
    return model;
}

} // namespace revid
