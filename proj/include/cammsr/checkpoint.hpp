#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cammsr/config.hpp"
#include "cammsr/data.hpp"
#include "cammsr/model.hpp"
#include "json.hpp"

namespace cammsr {

// Checkpoint file: magic "CMSR", little-endian u32 version, u64 header
// length, JSON header (config, dataset fingerprint, tensor directory with
// byte offsets), then raw little-endian f32 payloads. Frozen feature
// matrices are stored alongside the trainable tensors so a checkpoint
// evaluates stand-alone.
inline constexpr uint32_t kCheckpointVersion = 1;

struct DatasetFingerprint {
    int num_users = 0;
    int num_items = 0;
    int num_categories = 0;
    uint64_t hash = 0;

    static DatasetFingerprint of(const InteractionLog& log) {
        return {log.num_users(), log.num_items(), log.num_categories(), log.content_hash()};
    }
    bool operator==(const DatasetFingerprint&) const = default;

    nlohmann::json to_json() const {
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
        return {{"num_users", num_users}, {"num_items", num_items}, {"num_categories", num_categories},
                {"hash", std::string(buf)}};
    }
    static DatasetFingerprint from_json(const nlohmann::json& j) {
        DatasetFingerprint f;
        f.num_users = j.at("num_users").get<int>();
        f.num_items = j.at("num_items").get<int>();
        f.num_categories = j.at("num_categories").get<int>();
        f.hash = std::stoull(j.at("hash").get<std::string>(), nullptr, 16);
        return f;
    }
};

namespace detail_ckpt {

inline void put_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 4);
}
inline void put_u64(std::ostream& out, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}
inline uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}
inline uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace detail_ckpt

template <class T>
void save_checkpoint(const std::string& path, const Model<T>& model, const TrainConfig& tc,
                     const DatasetFingerprint& fingerprint, double best_valid_ndcg10) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);

    struct Entry {
        std::string name;
        std::vector<int> shape;
        const void* src;
        size_t count;
        bool is_float;  // already f32 storage
        std::vector<float> staged;
    };
    std::vector<Entry> entries;
    for (const auto& [name, t] : model.params.items()) {
        Entry e{name, t->shape, nullptr, t->numel(), false, {}};
        e.staged.resize(t->numel());
        for (size_t i = 0; i < t->numel(); ++i) e.staged[i] = static_cast<float>(t->v[i]);
        entries.push_back(std::move(e));
    }
    for (int m : {kModalityText, kModalityVisual}) {
        if (!model.features[m]) continue;
        Entry e{std::string("frozen.") + kModalityNames[static_cast<size_t>(m)] + ".features",
                model.features[m]->shape, nullptr, model.features[m]->numel(), false, {}};
        e.staged.resize(e.count);
        for (size_t i = 0; i < e.count; ++i) e.staged[i] = static_cast<float>(model.features[m]->v[i]);
        entries.push_back(std::move(e));
    }

    nlohmann::json dir = nlohmann::json::array();
    uint64_t offset = 0;
    for (const auto& e : entries) {
        dir.push_back({{"name", e.name}, {"shape", e.shape}, {"offset", offset},
                       {"bytes", e.count * sizeof(float)}});
        offset += e.count * sizeof(float);
    }
    nlohmann::json header{{"config", train_config_to_json(tc)},
                          {"fingerprint", fingerprint.to_json()},
                          {"best_valid_ndcg10", best_valid_ndcg10},
                          {"tensors", dir}};
    const std::string header_str = header.dump();

    out.write("CMSR", 4);
    detail_ckpt::put_u32(out, kCheckpointVersion);
    detail_ckpt::put_u64(out, header_str.size());
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const auto& e : entries)
        out.write(reinterpret_cast<const char*>(e.staged.data()),
                  static_cast<std::streamsize>(e.staged.size() * sizeof(float)));
    if (!out) throw IoError("short write to checkpoint: " + path);
}

template <class T>
struct LoadedCheckpoint {
    TrainConfig config;
    DatasetFingerprint fingerprint;
    double best_valid_ndcg10 = 0.0;
    std::unique_ptr<Model<T>> model;
};

template <class T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "CMSR", 4) != 0) throw IoError(path + ": not a CMSR checkpoint");
    const uint32_t version = detail_ckpt::get_u32(in);
    if (version != kCheckpointVersion)
        throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));
    const uint64_t header_len = detail_ckpt::get_u64(in);
    std::string header_str(header_len, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw IoError(path + ": truncated header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_str);
    } catch (const std::exception& e) {
        throw IoError(path + ": bad checkpoint header: " + e.what());
    }

    LoadedCheckpoint<T> out;
    out.config = train_config_from_json(header.at("config"));
    out.fingerprint = DatasetFingerprint::from_json(header.at("fingerprint"));
    out.best_valid_ndcg10 = header.at("best_valid_ndcg10").get<double>();

    struct Blob {
        std::vector<int> shape;
        std::vector<float> data;
    };
    std::map<std::string, Blob> blobs;
    for (const auto& t : header.at("tensors")) {
        Blob b;
        b.shape = t.at("shape").get<std::vector<int>>();
        const auto bytes = t.at("bytes").get<uint64_t>();
        b.data.resize(bytes / sizeof(float));
        in.read(reinterpret_cast<char*>(b.data.data()), static_cast<std::streamsize>(bytes));
        if (!in)
            throw IoError(path + ": truncated payload, missing tensor '" + t.at("name").get<std::string>() + "'");
        blobs[t.at("name").get<std::string>()] = std::move(b);
    }

    auto take_features = [&](int m) -> std::unique_ptr<FeatureMatrix> {
        const std::string key = std::string("frozen.") + kModalityNames[static_cast<size_t>(m)] + ".features";
        auto it = blobs.find(key);
        if (it == blobs.end()) return nullptr;
        auto fm = std::make_unique<FeatureMatrix>();
        fm->modality = kModalityNames[static_cast<size_t>(m)];
        fm->num_items = it->second.shape.at(0);
        fm->dim = it->second.shape.at(1);
        fm->rows = it->second.data;
        return fm;
    };
    auto text = take_features(kModalityText);
    auto visual = take_features(kModalityVisual);
    out.model = std::make_unique<Model<T>>(out.config.model, text.get(), visual.get(), out.config.seed);

    for (const auto& [name, tensor] : out.model->params.items()) {
        auto it = blobs.find(name);
        if (it == blobs.end()) throw IoError(path + ": checkpoint is missing tensor '" + name + "'");
        if (it->second.shape != tensor->shape)
            throw IoError(path + ": tensor '" + name + "' has shape " + shape_str(it->second.shape) +
                          ", expected " + shape_str(tensor->shape));
        for (size_t i = 0; i < tensor->numel(); ++i) tensor->v[i] = static_cast<T>(it->second.data[i]);
    }
    return out;
}

}  // namespace cammsr
