#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cammsr/error.hpp"
#include "json.hpp"

namespace cammsr {

enum class NormMode { dyt, layernorm };
enum class Pooling { mean, max, min };
enum class ScorePosition { none, last };

// Modality stream indices, fixed order everywhere: id, text, visual.
inline constexpr int kModalityId = 0;
inline constexpr int kModalityText = 1;
inline constexpr int kModalityVisual = 2;
inline constexpr std::array<const char*, 3> kModalityNames = {"id", "text", "visual"};

// Ablation switches. wo_att / wo_cg / r_moe are mutually exclusive; wo_dyt
// and the modality drops combine freely with one of them.
struct VariantFlags {
    bool wo_att = false;
    bool wo_cg = false;
    bool wo_dyt = false;
    bool r_moe = false;
    bool wo_t = false;
    bool wo_v = false;

    static VariantFlags parse(const std::string& spec) {
        VariantFlags f;
        size_t start = 0;
        while (start <= spec.size()) {
            size_t pos = spec.find('+', start);
            const std::string tok = spec.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
            if (tok == "full" || tok.empty()) {
            } else if (tok == "wo_att") {
                f.wo_att = true;
            } else if (tok == "wo_cg") {
                f.wo_cg = true;
            } else if (tok == "wo_dyt") {
                f.wo_dyt = true;
            } else if (tok == "r_moe") {
                f.r_moe = true;
            } else if (tok == "wo_t") {
                f.wo_t = true;
            } else if (tok == "wo_v") {
                f.wo_v = true;
            } else {
                throw ConfigError("unknown variant: '" + tok + "'");
            }
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        if (static_cast<int>(f.wo_att) + static_cast<int>(f.wo_cg) + static_cast<int>(f.r_moe) > 1)
            throw ConfigError("variants wo_att, wo_cg and r_moe are mutually exclusive");
        if (f.wo_t && f.wo_v) throw ConfigError("cannot drop both text and visual modalities");
        return f;
    }

    std::string name() const {
        std::string s;
        auto app = [&](bool on, const char* n) {
            if (!on) return;
            if (!s.empty()) s += "+";
            s += n;
        };
        app(wo_att, "wo_att");
        app(wo_cg, "wo_cg");
        app(wo_dyt, "wo_dyt");
        app(r_moe, "r_moe");
        app(wo_t, "wo_t");
        app(wo_v, "wo_v");
        return s.empty() ? "full" : s;
    }
};

struct ModelConfig {
    int num_items = 0;
    int num_categories = 0;
    int dim_t = 0;  // 0 disables the modality even without wo_t
    int dim_v = 0;
    int hidden = 64;
    int num_experts = 4;
    int max_len = 50;
    int layers = 2;
    int heads = 2;
    double dropout = 0.2;
    NormMode norm_mode = NormMode::dyt;
    Pooling pooling = Pooling::max;
    VariantFlags variant;
    bool invert_guidance = false;
    ScorePosition score_position = ScorePosition::none;

    NormMode effective_norm() const { return variant.wo_dyt ? NormMode::layernorm : norm_mode; }

    bool modality_active(int m) const {
        if (m == kModalityId) return true;
        if (m == kModalityText) return dim_t > 0 && !variant.wo_t;
        if (m == kModalityVisual) return dim_v > 0 && !variant.wo_v;
        return false;
    }

    std::vector<int> active_modalities() const {
        std::vector<int> act;
        for (int m = 0; m < 3; ++m)
            if (modality_active(m)) act.push_back(m);
        return act;
    }

    void validate() const {
        if (num_items < 1) throw ConfigError("num_items must be positive");
        if (hidden < 1 || num_experts < 1 || max_len < 1 || layers < 1 || heads < 1)
            throw ConfigError("hidden, num_experts, max_len, layers and heads must be positive");
        if (hidden % heads != 0) throw ConfigError("hidden size must be divisible by heads");
        if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0,1)");
    }
};

// Modality pairs for swap contrastive learning.
using ModalityPair = std::pair<int, int>;

inline std::vector<ModalityPair> all_modality_pairs() {
    return {{kModalityId, kModalityText}, {kModalityId, kModalityVisual}, {kModalityText, kModalityVisual}};
}

inline std::vector<ModalityPair> parse_pairs(const std::string& spec) {
    if (spec == "all") return all_modality_pairs();
    if (spec == "none" || spec.empty()) return {};
    std::vector<ModalityPair> out;
    size_t start = 0;
    while (start <= spec.size()) {
        size_t pos = spec.find(',', start);
        const std::string tok = spec.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
        size_t dash = tok.find('-');
        if (dash == std::string::npos) throw ConfigError("bad modality pair: '" + tok + "'");
        auto mod_of = [](const std::string& n) {
            for (int m = 0; m < 3; ++m)
                if (n == kModalityNames[static_cast<size_t>(m)]) return m;
            throw ConfigError("unknown modality: '" + n + "'");
        };
        int a = mod_of(tok.substr(0, dash)), b = mod_of(tok.substr(dash + 1));
        if (a == b) throw ConfigError("modality pair must differ: '" + tok + "'");
        if (a > b) std::swap(a, b);
        out.push_back({a, b});
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::string pairs_to_string(const std::vector<ModalityPair>& pairs) {
    std::string s;
    for (const auto& [a, b] : pairs) {
        if (!s.empty()) s += ",";
        s += std::string(kModalityNames[static_cast<size_t>(a)]) + "-" + kModalityNames[static_cast<size_t>(b)];
    }
    return s.empty() ? "none" : s;
}

struct TrainConfig {
    ModelConfig model;
    double contrastive_weight = 0.25;  // lambda
    double lr = 1e-3;
    int batch_size = 1024;
    double swap_prob = 0.5;  // rho
    std::vector<ModalityPair> pairs = all_modality_pairs();
    double temperature = 1.0;  // InfoNCE similarity divisor
    double aux_category_weight = 0.0;
    uint64_t seed = 42;
    int max_epochs = 200;
    int patience = 10;
    bool restore_best = true;  // keep the best-validation parameters at the end
    bool debug_finite = false;

    void validate() const {
        model.validate();
        if (contrastive_weight < 0.0) throw ConfigError("contrastive_weight must be >= 0");
        if (lr <= 0.0) throw ConfigError("lr must be positive");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (swap_prob < 0.0 || swap_prob > 1.0) throw ConfigError("swap_prob must be in [0,1]");
        if (temperature <= 0.0) throw ConfigError("temperature must be positive");
        if (max_epochs < 0) throw ConfigError("max_epochs must be >= 0");
        if (patience < 1) throw ConfigError("patience must be >= 1");
    }
};

inline const char* norm_mode_name(NormMode m) { return m == NormMode::dyt ? "dyt" : "layernorm"; }
inline NormMode parse_norm_mode(const std::string& s) {
    if (s == "dyt") return NormMode::dyt;
    if (s == "layernorm") return NormMode::layernorm;
    throw ConfigError("unknown norm_mode: '" + s + "'");
}
inline const char* pooling_name(Pooling p) {
    return p == Pooling::mean ? "mean" : (p == Pooling::max ? "max" : "min");
}
inline Pooling parse_pooling(const std::string& s) {
    if (s == "mean") return Pooling::mean;
    if (s == "max") return Pooling::max;
    if (s == "min") return Pooling::min;
    throw ConfigError("unknown pooling: '" + s + "'");
}
inline const char* score_position_name(ScorePosition p) { return p == ScorePosition::none ? "none" : "last"; }
inline ScorePosition parse_score_position(const std::string& s) {
    if (s == "none") return ScorePosition::none;
    if (s == "last") return ScorePosition::last;
    throw ConfigError("unknown score_position: '" + s + "'");
}

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
    return nlohmann::json{{"num_items", c.num_items},
                          {"num_categories", c.num_categories},
                          {"dim_t", c.dim_t},
                          {"dim_v", c.dim_v},
                          {"hidden", c.hidden},
                          {"num_experts", c.num_experts},
                          {"max_len", c.max_len},
                          {"layers", c.layers},
                          {"heads", c.heads},
                          {"dropout", c.dropout},
                          {"norm_mode", norm_mode_name(c.norm_mode)},
                          {"pooling", pooling_name(c.pooling)},
                          {"variant", c.variant.name()},
                          {"invert_guidance", c.invert_guidance},
                          {"score_position", score_position_name(c.score_position)}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.num_items = j.at("num_items").get<int>();
    c.num_categories = j.at("num_categories").get<int>();
    c.dim_t = j.at("dim_t").get<int>();
    c.dim_v = j.at("dim_v").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.num_experts = j.at("num_experts").get<int>();
    c.max_len = j.at("max_len").get<int>();
    c.layers = j.at("layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.norm_mode = parse_norm_mode(j.at("norm_mode").get<std::string>());
    c.pooling = parse_pooling(j.at("pooling").get<std::string>());
    c.variant = VariantFlags::parse(j.at("variant").get<std::string>());
    c.invert_guidance = j.at("invert_guidance").get<bool>();
    c.score_position = parse_score_position(j.at("score_position").get<std::string>());
    return c;
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
    auto j = model_config_to_json(c.model);
    j["contrastive_weight"] = c.contrastive_weight;
    j["lr"] = c.lr;
    j["batch_size"] = c.batch_size;
    j["swap_prob"] = c.swap_prob;
    j["pairs"] = pairs_to_string(c.pairs);
    j["temperature"] = c.temperature;
    j["aux_category_weight"] = c.aux_category_weight;
    j["seed"] = c.seed;
    j["max_epochs"] = c.max_epochs;
    j["patience"] = c.patience;
    return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.model = model_config_from_json(j);
    c.contrastive_weight = j.at("contrastive_weight").get<double>();
    c.lr = j.at("lr").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.swap_prob = j.at("swap_prob").get<double>();
    c.pairs = parse_pairs(j.at("pairs").get<std::string>());
    c.temperature = j.value("temperature", 1.0);
    c.aux_category_weight = j.at("aux_category_weight").get<double>();
    c.seed = j.at("seed").get<uint64_t>();
    c.max_epochs = j.at("max_epochs").get<int>();
    c.patience = j.at("patience").get<int>();
    return c;
}

}  // namespace cammsr
