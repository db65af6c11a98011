// cammsr: data preparation, training, evaluation and verification pipeline.
//
// Subcommands: synth, prepare, train, evaluate, gradcheck, ablate.
// Exit codes: 0 success, 2 input/config error, 3 numerical divergence.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>

#include "CLI11.hpp"
#include "cammsr/checkpoint.hpp"
#include "cammsr/data.hpp"
#include "cammsr/eval.hpp"
#include "cammsr/gradcheck_suite.hpp"
#include "cammsr/training.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cammsr;

namespace {

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    try {
        return json::parse(in);
    } catch (const std::exception& e) {
        throw ConfigError(path + ": invalid JSON: " + std::string(e.what()));
    }
}

void reject_unknown_keys(const json& cfg, const std::set<std::string>& allowed, const std::string& context) {
    if (!cfg.is_object()) throw ConfigError(context + ": config must be a JSON object");
    for (const auto& [key, value] : cfg.items())
        if (allowed.find(key) == allowed.end()) throw ConfigError(context + ": unknown config key '" + key + "'");
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << content;
}

std::string fingerprint_hex(const InteractionLog& log) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(log.content_hash()));
    return buf;
}

int eval_threads_from_env() {
    const char* env = std::getenv("CAMMSR_THREADS");
    if (!env) return 1;
    const int n = std::atoi(env);
    return n >= 1 ? n : 1;
}

json report_to_json(const MetricsReport& r) {
    return json{{"ndcg@5", r.ndcg5}, {"ndcg@10", r.ndcg10}, {"mrr@5", r.mrr5},
                {"mrr@10", r.mrr10}, {"user_count", r.user_count}, {"fingerprint", r.fingerprint}};
}

json stats_to_json(const DatasetStats& s) {
    return json{{"num_users", s.num_users},
                {"num_items", s.num_items},
                {"num_categories", s.num_categories},
                {"num_interactions", s.num_interactions},
                {"sparsity", s.sparsity},
                {"avg_sequence_length", s.avg_sequence_length}};
}

// ---------------------------------------------------------------------------
// Dataset assembly shared by prepare / train / evaluate / ablate.

struct LoadedDataset {
    InteractionLog log;
    std::optional<FeatureMatrix> text;
    std::optional<FeatureMatrix> visual;
};

const std::set<std::string> kDataKeys{"interactions",    "categories", "text_features", "visual_features",
                                      "prepared_dir",    "k_core",     "noise_mode",    "noise_rate",
                                      "noise_seed",      "allow_missing_categories"};

void apply_corruption_file(InteractionLog& log, const std::string& path) {
    if (!fs::exists(path)) return;
    auto meta = load_json_file(path);
    for (const auto& name : meta.at("removed_items")) {
        auto it = log.item_index.find(name.get<std::string>());
        if (it != log.item_index.end()) log.category_removed[static_cast<size_t>(it->second)] = 1;
    }
}

LoadedDataset load_dataset(const json& cfg) {
    LoadedDataset out;
    if (cfg.contains("prepared_dir")) {
        const std::string dir = cfg.at("prepared_dir").get<std::string>();
        out.log = load_interactions(dir + "/interactions.tsv", dir + "/categories.tsv",
                                    cfg.value("allow_missing_categories", false));
        apply_corruption_file(out.log, dir + "/corruption.json");
        if (fs::exists(dir + "/features_text.bin"))
            out.text = load_features(dir + "/features_text.bin", out.log.num_items());
        if (fs::exists(dir + "/features_visual.bin"))
            out.visual = load_features(dir + "/features_visual.bin", out.log.num_items());
        return out;
    }
    if (!cfg.contains("interactions") || !cfg.contains("categories"))
        throw ConfigError("config needs either 'prepared_dir' or 'interactions' + 'categories' paths");
    auto raw = load_interactions(cfg.at("interactions").get<std::string>(), cfg.at("categories").get<std::string>(),
                                 cfg.value("allow_missing_categories", false));
    const int k = cfg.value("k_core", 5);
    out.log = k_core_filter(raw, k);

    auto remap = [&](const FeatureMatrix& fm) {
        std::vector<int> old_ids;
        for (int i = 1; i <= out.log.num_items(); ++i)
            old_ids.push_back(raw.item_index.at(out.log.item_names[static_cast<size_t>(i)]));
        return remap_features(fm, old_ids);
    };
    if (cfg.contains("text_features"))
        out.text = remap(load_features(cfg.at("text_features").get<std::string>(), raw.num_items()));
    if (cfg.contains("visual_features"))
        out.visual = remap(load_features(cfg.at("visual_features").get<std::string>(), raw.num_items()));

    if (cfg.contains("noise_mode")) {
        const std::string mode = cfg.at("noise_mode").get<std::string>();
        const double rate = cfg.value("noise_rate", 0.0);
        Rng rng(cfg.value("noise_seed", 12345ULL));
        if (mode == "removal")
            out.log = corrupt_categories(out.log, NoiseMode::removal, rate, rng);
        else if (mode == "misleading")
            out.log = corrupt_categories(out.log, NoiseMode::misleading, rate, rng);
        else
            throw ConfigError("noise_mode must be 'removal' or 'misleading', got '" + mode + "'");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Train config: JSON keys mirror TrainConfig; flags override.

const std::set<std::string> kTrainKeys = [] {
    std::set<std::string> keys = kDataKeys;
    for (const char* k : {"hidden", "num_experts", "max_len", "layers", "heads", "dropout", "norm_mode", "pooling",
                          "variant", "invert_guidance", "score_position", "contrastive_weight", "lr", "batch_size",
                          "swap_prob", "pairs", "temperature", "aux_category_weight", "seed", "max_epochs", "patience",
                          "restore_best", "debug_finite", "output_dir", "mask_history"})
        keys.insert(k);
    return keys;
}();

TrainConfig train_config_from_file(const json& cfg) {
    TrainConfig tc;
    tc.model.hidden = cfg.value("hidden", tc.model.hidden);
    tc.model.num_experts = cfg.value("num_experts", tc.model.num_experts);
    tc.model.max_len = cfg.value("max_len", tc.model.max_len);
    tc.model.layers = cfg.value("layers", tc.model.layers);
    tc.model.heads = cfg.value("heads", tc.model.heads);
    tc.model.dropout = cfg.value("dropout", tc.model.dropout);
    if (cfg.contains("norm_mode")) tc.model.norm_mode = parse_norm_mode(cfg.at("norm_mode").get<std::string>());
    if (cfg.contains("pooling")) tc.model.pooling = parse_pooling(cfg.at("pooling").get<std::string>());
    if (cfg.contains("variant")) tc.model.variant = VariantFlags::parse(cfg.at("variant").get<std::string>());
    tc.model.invert_guidance = cfg.value("invert_guidance", tc.model.invert_guidance);
    if (cfg.contains("score_position"))
        tc.model.score_position = parse_score_position(cfg.at("score_position").get<std::string>());
    tc.contrastive_weight = cfg.value("contrastive_weight", tc.contrastive_weight);
    tc.lr = cfg.value("lr", tc.lr);
    tc.batch_size = cfg.value("batch_size", tc.batch_size);
    tc.swap_prob = cfg.value("swap_prob", tc.swap_prob);
    if (cfg.contains("pairs")) tc.pairs = parse_pairs(cfg.at("pairs").get<std::string>());
    tc.temperature = cfg.value("temperature", tc.temperature);
    tc.aux_category_weight = cfg.value("aux_category_weight", tc.aux_category_weight);
    tc.seed = cfg.value("seed", tc.seed);
    tc.max_epochs = cfg.value("max_epochs", tc.max_epochs);
    tc.patience = cfg.value("patience", tc.patience);
    tc.restore_best = cfg.value("restore_best", tc.restore_best);
    tc.debug_finite = cfg.value("debug_finite", tc.debug_finite);
    return tc;
}

struct TrainOutcome {
    TrainResult result;
    MetricsReport valid;
    MetricsReport test;
};

TrainOutcome run_training(const json& cfg, TrainConfig tc, const std::string& output_dir, bool write_artifacts) {
    auto data = load_dataset(cfg);
    tc.model.num_items = data.log.num_items();
    tc.model.num_categories = data.log.num_categories();
    tc.model.dim_t = data.text ? data.text->dim : 0;
    tc.model.dim_v = data.visual ? data.visual->dim : 0;
    tc.validate();

    auto splits = build_splits(data.log, tc.model.max_len);
    if (splits.skipped_users > 0)
        std::cerr << "warning: skipped " << splits.skipped_users << " users with < 3 interactions\n";

    Model<float> model(tc.model, data.text ? &*data.text : nullptr, data.visual ? &*data.visual : nullptr, tc.seed);
    EvalOptions eval_opts;
    eval_opts.threads = eval_threads_from_env();
    eval_opts.mask_history = cfg.value("mask_history", false);

    TrainOutcome out;
    out.result = train(model, data.log, splits, tc, eval_opts);
    const std::string fp = fingerprint_hex(data.log);
    out.valid = evaluate(model, splits.valid, data.log, fp, eval_opts);
    out.test = evaluate(model, splits.test, data.log, fp, eval_opts);

    if (write_artifacts) {
        fs::create_directories(output_dir);
        save_checkpoint(output_dir + "/checkpoint.cmsr", model, tc, DatasetFingerprint::of(data.log),
                        out.result.best_valid_ndcg10);
        json epochs = json::array();
        for (const auto& es : out.result.history)
            epochs.push_back({{"epoch", es.epoch},
                              {"train_loss", es.train_loss},
                              {"sr_loss", es.sr_loss},
                              {"mscl_loss", es.mscl_loss},
                              {"valid_ndcg@10", es.valid_ndcg10},
                              {"valid_mrr@10", es.valid_mrr10}});
        json history{{"variant", tc.model.variant.name()},
                     {"config", train_config_to_json(tc)},
                     {"epochs", epochs},
                     {"best_epoch", out.result.best_epoch},
                     {"best_valid_ndcg10", out.result.best_valid_ndcg10},
                     {"contrastive_calls", out.result.contrastive_calls},
                     {"dataset", stats_to_json(dataset_stats(data.log))}};
        write_text_file(output_dir + "/history.json", history.dump(2) + "\n");
        write_text_file(output_dir + "/metrics_valid.json", report_to_json(out.valid).dump(2) + "\n");
        write_text_file(output_dir + "/metrics_test.json", report_to_json(out.test).dump(2) + "\n");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Subcommand bodies.

int cmd_synth(const std::string& config_path, std::string output_dir, std::optional<uint64_t> seed_flag) {
    auto cfg = load_json_file(config_path);
    reject_unknown_keys(cfg, {"num_users", "num_items", "num_categories", "dim_t", "dim_v",
                              "signal_modality_per_category", "seq_len_min", "seq_len_max", "clusters_per_category",
                              "stay_prob", "feature_noise", "center_scale", "min_item_interactions", "seed",
                              "output_dir"},
                        "synth");
    SynthSpec spec;
    spec.num_users = cfg.value("num_users", spec.num_users);
    spec.num_items = cfg.value("num_items", spec.num_items);
    spec.num_categories = cfg.value("num_categories", spec.num_categories);
    spec.dim_t = cfg.value("dim_t", spec.dim_t);
    spec.dim_v = cfg.value("dim_v", spec.dim_v);
    if (cfg.contains("signal_modality_per_category"))
        spec.signal_modality_per_category = cfg.at("signal_modality_per_category").get<std::vector<std::string>>();
    spec.seq_len_min = cfg.value("seq_len_min", spec.seq_len_min);
    spec.seq_len_max = cfg.value("seq_len_max", spec.seq_len_max);
    spec.clusters_per_category = cfg.value("clusters_per_category", spec.clusters_per_category);
    spec.stay_prob = cfg.value("stay_prob", spec.stay_prob);
    spec.feature_noise = cfg.value("feature_noise", spec.feature_noise);
    spec.center_scale = cfg.value("center_scale", spec.center_scale);
    spec.min_item_interactions = cfg.value("min_item_interactions", spec.min_item_interactions);
    const uint64_t seed = seed_flag.value_or(cfg.value("seed", 42ULL));
    if (output_dir.empty()) output_dir = cfg.value("output_dir", std::string());
    if (output_dir.empty()) throw ConfigError("synth: output_dir required (config key or --output-dir)");

    Rng rng(seed);
    auto data = synth_generate(spec, rng);
    fs::create_directories(output_dir);
    save_interactions(output_dir + "/interactions.tsv", output_dir + "/categories.tsv", data.log);
    save_features(output_dir + "/features_text.bin", data.text);
    save_features(output_dir + "/features_visual.bin", data.visual);
    json meta{{"seed", seed},
              {"stats", stats_to_json(dataset_stats(data.log))},
              {"signal_modality_per_category", spec.signal_modality_per_category},
              {"fingerprint", fingerprint_hex(data.log)}};
    write_text_file(output_dir + "/synth_meta.json", meta.dump(2) + "\n");
    std::cout << meta.dump(2) << "\n";
    return 0;
}

int cmd_prepare(const std::string& config_path) {
    auto cfg = load_json_file(config_path);
    auto keys = kDataKeys;
    keys.insert("output_dir");
    keys.insert("max_len");
    reject_unknown_keys(cfg, keys, "prepare");
    if (cfg.contains("prepared_dir")) throw ConfigError("prepare: input must be raw files, not a prepared_dir");
    const std::string output_dir = cfg.at("output_dir").get<std::string>();
    const int max_len = cfg.value("max_len", 50);

    auto data = load_dataset(cfg);
    auto splits = build_splits(data.log, max_len);

    fs::create_directories(output_dir);
    save_interactions(output_dir + "/interactions.tsv", output_dir + "/categories.tsv", data.log);
    if (data.text) save_features(output_dir + "/features_text.bin", *data.text);
    if (data.visual) save_features(output_dir + "/features_visual.bin", *data.visual);

    auto dump_split = [&](const char* name, const std::vector<SeqExample>& exs) {
        std::ofstream out(output_dir + "/" + name);
        for (const auto& ex : exs) {
            out << data.log.user_names[static_cast<size_t>(ex.user)] << '\t';
            for (size_t i = 0; i < ex.prefix.size(); ++i)
                out << (i ? "," : "") << data.log.item_names[static_cast<size_t>(ex.prefix[i])];
            out << '\t' << data.log.item_names[static_cast<size_t>(ex.target)] << '\n';
        }
    };
    dump_split("train_pairs.tsv", splits.train);
    dump_split("valid_pairs.tsv", splits.valid);
    dump_split("test_pairs.tsv", splits.test);

    json corruption;
    if (cfg.contains("noise_mode")) {
        std::vector<std::string> removed;
        for (int i = 1; i <= data.log.num_items(); ++i)
            if (data.log.category_removed[static_cast<size_t>(i)])
                removed.push_back(data.log.item_names[static_cast<size_t>(i)]);
        corruption = {{"mode", cfg.at("noise_mode").get<std::string>()},
                      {"rate", cfg.value("noise_rate", 0.0)},
                      {"seed", cfg.value("noise_seed", 12345ULL)},
                      {"removed_items", removed}};
        write_text_file(output_dir + "/corruption.json", corruption.dump(2) + "\n");
    }

    json stats = stats_to_json(dataset_stats(data.log));
    stats["k_core"] = cfg.value("k_core", 5);
    stats["max_len"] = max_len;
    stats["skipped_users"] = splits.skipped_users;
    stats["train_pairs"] = splits.train.size();
    stats["fingerprint"] = fingerprint_hex(data.log);
    if (!corruption.is_null()) stats["corruption"] = corruption;
    write_text_file(output_dir + "/stats.json", stats.dump(2) + "\n");
    std::cout << stats.dump(2) << "\n";
    return 0;
}

struct TrainFlags {
    std::optional<uint64_t> seed;
    std::optional<std::string> variant;
    std::optional<int> max_epochs;
    std::optional<double> contrastive_weight;
    std::optional<std::string> output_dir;
};

int cmd_train(const std::string& config_path, const TrainFlags& flags) {
    auto cfg = load_json_file(config_path);
    reject_unknown_keys(cfg, kTrainKeys, "train");
    auto tc = train_config_from_file(cfg);
    if (flags.seed) tc.seed = *flags.seed;
    if (flags.variant) tc.model.variant = VariantFlags::parse(*flags.variant);
    if (flags.max_epochs) tc.max_epochs = *flags.max_epochs;
    if (flags.contrastive_weight) tc.contrastive_weight = *flags.contrastive_weight;
    std::string output_dir = flags.output_dir.value_or(cfg.value("output_dir", std::string("out")));

    auto outcome = run_training(cfg, tc, output_dir, /*write_artifacts=*/true);
    json summary{{"variant", tc.model.variant.name()},
                 {"epochs_run", outcome.result.epochs_run},
                 {"best_epoch", outcome.result.best_epoch},
                 {"valid", report_to_json(outcome.valid)},
                 {"test", report_to_json(outcome.test)},
                 {"output_dir", output_dir}};
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_evaluate(const std::string& checkpoint_path, const std::string& split, const std::string& config_path,
                 const std::string& out_path) {
    if (!fs::exists(checkpoint_path)) throw ConfigError("checkpoint not found: " + checkpoint_path);
    auto cfg = load_json_file(config_path);
    // A full train config is accepted here; only its data keys are read.
    reject_unknown_keys(cfg, kTrainKeys, "evaluate");
    auto loaded = load_checkpoint<float>(checkpoint_path);
    auto data = load_dataset(cfg);

    const auto fp = DatasetFingerprint::of(data.log);
    if (!(fp == loaded.fingerprint))
        std::cerr << "warning: dataset fingerprint differs from the checkpoint (items " << fp.num_items << " vs "
                  << loaded.fingerprint.num_items << ")\n";

    auto splits = build_splits(data.log, loaded.config.model.max_len);
    const auto* examples = &splits.test;
    if (split == "valid")
        examples = &splits.valid;
    else if (split == "train")
        examples = &splits.train;
    else if (split != "test")
        throw ConfigError("evaluate: split must be train, valid or test");

    EvalOptions eval_opts;
    eval_opts.threads = eval_threads_from_env();
    eval_opts.mask_history = cfg.value("mask_history", false);
    auto report = evaluate(*loaded.model, *examples, data.log, fingerprint_hex(data.log), eval_opts);
    const std::string text = report_to_json(report).dump(2) + "\n";
    std::cout << text;
    if (!out_path.empty()) write_text_file(out_path, text);
    return 0;
}

int cmd_gradcheck(const std::string& module, double eps, double tolerance, bool corrupt) {
    GradCheckOptions opts;
    opts.module = module;
    opts.eps = eps;
    opts.tolerance = tolerance;
    opts.corrupt_backward = corrupt;
    if (module != "all" && module != "camoe" && module != "encoder" && module != "contrastive")
        throw ConfigError("gradcheck: module must be all, camoe, encoder or contrastive");
    auto cases = run_gradcheck_suite(opts);
    bool all_ok = true;
    for (const auto& c : cases) {
        std::printf("%-22s max_rel_err %.3e (worst %s)  %s\n", c.name.c_str(), c.report.max_rel_err,
                    c.report.worst_param.c_str(), c.passed ? "ok" : "FAIL");
        all_ok = all_ok && c.passed;
    }
    return all_ok ? 0 : 1;
}

int cmd_ablate(const std::string& config_path, const std::string& variants_csv, int seeds,
               std::optional<std::string> output_dir_flag) {
    auto cfg = load_json_file(config_path);
    reject_unknown_keys(cfg, kTrainKeys, "ablate");
    auto base_tc = train_config_from_file(cfg);
    const std::string output_dir = output_dir_flag.value_or(cfg.value("output_dir", std::string("out")));

    std::vector<std::string> variants;
    size_t start = 0;
    while (start <= variants_csv.size()) {
        size_t pos = variants_csv.find(',', start);
        const std::string tok =
            variants_csv.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
        if (!tok.empty()) {
            VariantFlags::parse(tok);  // validates; throws ConfigError on unknown names
            variants.push_back(tok);
        }
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    if (variants.empty()) throw ConfigError("ablate: no variants given");
    if (seeds < 1) throw ConfigError("ablate: --seeds must be >= 1");

    json table = json::array();
    for (const auto& variant : variants) {
        std::vector<MetricsReport> reports;
        for (int s = 0; s < seeds; ++s) {
            auto tc = base_tc;
            tc.model.variant = VariantFlags::parse(variant);
            tc.seed = base_tc.seed + static_cast<uint64_t>(s);
            std::cerr << "ablate: " << variant << " seed " << tc.seed << "\n";
            reports.push_back(run_training(cfg, tc, "", /*write_artifacts=*/false).test);
        }
        auto agg = [&](auto metric) {
            double mean = 0, sq = 0;
            for (const auto& r : reports) mean += metric(r);
            mean /= reports.size();
            for (const auto& r : reports) sq += (metric(r) - mean) * (metric(r) - mean);
            const double stddev = reports.size() > 1 ? std::sqrt(sq / (reports.size() - 1)) : 0.0;
            return json{{"mean", mean}, {"std", stddev}};
        };
        json per_seed = json::array();
        for (const auto& r : reports) per_seed.push_back(report_to_json(r));
        table.push_back({{"variant", variant},
                         {"seeds", seeds},
                         {"metrics",
                          {{"ndcg@5", agg([](const MetricsReport& r) { return r.ndcg5; })},
                           {"ndcg@10", agg([](const MetricsReport& r) { return r.ndcg10; })},
                           {"mrr@5", agg([](const MetricsReport& r) { return r.mrr5; })},
                           {"mrr@10", agg([](const MetricsReport& r) { return r.mrr10; })}}},
                         {"per_seed", per_seed}});
    }
    json doc{{"variants", table}, {"base_config", train_config_to_json(base_tc)}};
    fs::create_directories(output_dir);
    write_text_file(output_dir + "/ablation.json", doc.dump(2) + "\n");
    std::cout << doc.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CAMMSR: category-guided attentive mixture-of-experts sequential recommender"};
    app.require_subcommand(1);

    std::string config_path, output_dir, variants_csv = "full", split = "test", checkpoint_path, out_path;
    std::string module = "all";
    double eps = 1e-5, tolerance = 1e-4;
    bool corrupt = false;
    int seeds = 1;
    TrainFlags train_flags;
    uint64_t seed_flag = 0;
    std::string variant_flag;
    int max_epochs_flag = -1;
    double lambda_flag = -1.0;

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--config", config_path, "synth spec JSON")->required();
    synth->add_option("--output-dir", output_dir, "destination directory");
    auto* synth_seed = synth->add_option("--seed", seed_flag, "override config seed");

    auto* prepare = app.add_subcommand("prepare", "5-core filter, splits and stats");
    prepare->add_option("--config", config_path, "prepare config JSON")->required();

    auto* train_cmd = app.add_subcommand("train", "train a model and write checkpoint + metrics");
    train_cmd->add_option("--config", config_path, "train config JSON")->required();
    auto* t_seed = train_cmd->add_option("--seed", seed_flag, "override seed");
    auto* t_variant = train_cmd->add_option("--variant", variant_flag, "override variant");
    auto* t_epochs = train_cmd->add_option("--max-epochs", max_epochs_flag, "override max epochs");
    auto* t_lambda = train_cmd->add_option("--lambda", lambda_flag, "override contrastive weight");
    auto* t_out = train_cmd->add_option("--output-dir", output_dir, "override output directory");

    auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint on a split");
    eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    eval_cmd->add_option("--split", split, "train | valid | test");
    eval_cmd->add_option("--config", config_path, "dataset config JSON")->required();
    eval_cmd->add_option("--out", out_path, "also write the report JSON here");

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference verification of the joint loss");
    gradcheck->add_option("--module", module, "all | camoe | encoder | contrastive");
    gradcheck->add_option("--eps", eps, "central-difference step");
    gradcheck->add_option("--tolerance", tolerance, "max relative error allowed");
    gradcheck->add_flag("--self-test-corrupt", corrupt, "negative control: corrupt one gradient");

    auto* ablate = app.add_subcommand("ablate", "train variant x seed grid and tabulate metrics");
    ablate->add_option("--config", config_path, "train config JSON")->required();
    ablate->add_option("--variants", variants_csv, "comma-separated variant names");
    ablate->add_option("--seeds", seeds, "seeds per variant");
    auto* a_out = ablate->add_option("--output-dir", output_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) ? 2 : 0;
    }

    try {
        if (synth->parsed())
            return cmd_synth(config_path, output_dir,
                             synth_seed->count() ? std::optional<uint64_t>(seed_flag) : std::nullopt);
        if (prepare->parsed()) return cmd_prepare(config_path);
        if (train_cmd->parsed()) {
            if (t_seed->count()) train_flags.seed = seed_flag;
            if (t_variant->count()) train_flags.variant = variant_flag;
            if (t_epochs->count()) train_flags.max_epochs = max_epochs_flag;
            if (t_lambda->count()) train_flags.contrastive_weight = lambda_flag;
            if (t_out->count()) train_flags.output_dir = output_dir;
            return cmd_train(config_path, train_flags);
        }
        if (eval_cmd->parsed()) return cmd_evaluate(checkpoint_path, split, config_path, out_path);
        if (gradcheck->parsed()) return cmd_gradcheck(module, eps, tolerance, corrupt);
        if (ablate->parsed())
            return cmd_ablate(config_path, variants_csv, seeds,
                              a_out->count() ? std::optional<std::string>(output_dir) : std::nullopt);
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
