#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "cammsr/data.hpp"
#include "cammsr/error.hpp"
#include "doctest.h"

using namespace cammsr;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("cammsr_test_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

InteractionLog toy_log() {
    std::vector<RawRecord> raw{
        {"alice", "hat", 30}, {"alice", "cap", 10}, {"alice", "tie", 20},
        {"bob", "cap", 5},    {"bob", "tie", 15},   {"bob", "cap", 25},
    };
    std::unordered_map<std::string, std::vector<std::string>> labels{
        {"hat", {"headwear"}}, {"cap", {"headwear"}}, {"tie", {"neckwear", "formal"}}};
    return build_log(std::move(raw), labels, false);
}

}  // namespace

TEST_CASE("load_interactions dedupes, sorts and remaps") {
    TempDir dir;
    write_file(dir.file("inter.tsv"),
               "u1\ti1\t100\n"
               "u1\ti2\t50\n"
               "u1\ti1\t100\n"  // exact duplicate
               "u2\ti3\t10\n"
               "u2\ti1\t5\n"
               "u2\ti2\t20\n");
    write_file(dir.file("cats.tsv"), "i1\ta\ni2\tb|a\ni3\tc\n");
    auto log = load_interactions(dir.file("inter.tsv"), dir.file("cats.tsv"));
    CHECK(log.records.size() == 5);  // 3-line duplicate removed
    CHECK(log.num_users() == 2);
    CHECK(log.num_items() == 3);

    // Per-user ascending timestamps.
    auto seqs = log.user_sequences();
    int u1 = log.user_index.at("u1");
    const auto& r = log.records;
    for (size_t i = 1; i < r.size(); ++i)
        if (r[i].user == r[i - 1].user) CHECK(r[i].ts >= r[i - 1].ts);
    CHECK(seqs[static_cast<size_t>(u1)].size() == 2);

    // ids 1..3 with 0 reserved.
    std::set<int> ids;
    for (const auto& rec : log.records) ids.insert(rec.item);
    CHECK(ids == std::set<int>{1, 2, 3});
    CHECK(log.num_categories() == 3);
}

TEST_CASE("load_interactions errors carry line numbers and item names") {
    TempDir dir;
    write_file(dir.file("bad.tsv"), "u1\ti1\t10\nu2\tbroken-line\n");
    write_file(dir.file("cats.tsv"), "i1\ta\n");
    try {
        load_interactions(dir.file("bad.tsv"), dir.file("cats.tsv"));
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }

    write_file(dir.file("ok.tsv"), "u1\ti1\t10\nu1\ti9\t20\n");
    try {
        load_interactions(dir.file("ok.tsv"), dir.file("cats.tsv"));
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("i9") != std::string::npos);
    }
    // allow-missing mode tolerates it
    auto log = load_interactions(dir.file("ok.tsv"), dir.file("cats.tsv"), true);
    CHECK(log.item_categories[static_cast<size_t>(log.item_index.at("i9"))].empty());
}

TEST_CASE("k_core_filter fixpoint") {
    // k=1 leaves any log unchanged modulo compaction.
    auto log = toy_log();
    auto k1 = k_core_filter(log, 1);
    CHECK(k1.records.size() == log.records.size());

    // Chain dataset: removing the weakest item cascades.
    std::vector<RawRecord> raw;
    for (int u = 0; u < 4; ++u)
        for (int i = 0; i < 4; ++i) raw.push_back({"u" + std::to_string(u), "common" + std::to_string(i), u * 10 + i});
    raw.push_back({"u0", "rare", 99});
    raw.push_back({"weak_user", "rare", 1});
    raw.push_back({"weak_user", "common0", 2});
    std::unordered_map<std::string, std::vector<std::string>> labels;
    for (const auto& r : raw) labels[r.item] = {"c"};
    auto big = build_log(std::move(raw), labels, false);
    auto filtered = k_core_filter(big, 3);
    // "rare" (2 interactions) and "weak_user" (2) must fall out; the 4x4 core stays.
    CHECK(filtered.num_users() == 4);
    CHECK(filtered.num_items() == 4);
    for (const auto& name : filtered.item_names)
        CHECK(name.find("rare") == std::string::npos);

    // Idempotence.
    auto again = k_core_filter(filtered, 3);
    CHECK(again.records.size() == filtered.records.size());
    CHECK(again.content_hash() == filtered.content_hash());

    CHECK_THROWS_AS(k_core_filter(big, 100), ContractError);
}

TEST_CASE("k_core_filter matches a naive oracle on random logs") {
    // Independent fixpoint oracle over (user, item) multisets.
    auto oracle = [](std::vector<RawRecord> recs, int k) {
        bool changed = true;
        while (changed) {
            changed = false;
            std::unordered_map<std::string, int> uc, ic;
            for (const auto& r : recs) {
                ++uc[r.user];
                ++ic[r.item];
            }
            std::vector<RawRecord> keep;
            for (const auto& r : recs)
                if (uc[r.user] >= k && ic[r.item] >= k) keep.push_back(r);
            if (keep.size() != recs.size()) changed = true;
            recs = keep;
        }
        return recs.size();
    };
    Rng rng(2024);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<RawRecord> raw;
        const int users = 5 + static_cast<int>(rng.uniform_int(10));
        const int items = 5 + static_cast<int>(rng.uniform_int(10));
        const int n = 30 + static_cast<int>(rng.uniform_int(60));
        std::set<std::tuple<std::string, std::string, int64_t>> seen;
        for (int i = 0; i < n; ++i) {
            RawRecord r{"u" + std::to_string(rng.uniform_int(static_cast<uint64_t>(users))),
                        "i" + std::to_string(rng.uniform_int(static_cast<uint64_t>(items))),
                        static_cast<int64_t>(rng.uniform_int(1000))};
            if (seen.insert({r.user, r.item, r.ts}).second) raw.push_back(r);
        }
        std::unordered_map<std::string, std::vector<std::string>> labels;
        for (const auto& r : raw) labels[r.item] = {"c"};
        auto log = build_log(std::vector<RawRecord>(raw), labels, false);
        const int k = 2 + static_cast<int>(rng.uniform_int(3));
        const size_t want = oracle(raw, k);
        if (want == 0) {
            CHECK_THROWS_AS(k_core_filter(log, k), ContractError);
        } else {
            auto got = k_core_filter(log, k);
            CHECK(got.records.size() == want);
            auto rerun = k_core_filter(got, k);
            CHECK(rerun.content_hash() == got.content_hash());
        }
    }
}

TEST_CASE("build_splits leave-one-out layout") {
    std::vector<RawRecord> raw{{"u", "a", 1}, {"u", "b", 2}, {"u", "c", 3}, {"u", "d", 4}};
    std::unordered_map<std::string, std::vector<std::string>> labels{
        {"a", {"x"}}, {"b", {"x"}}, {"c", {"x"}}, {"d", {"x"}}};
    auto log = build_log(std::move(raw), labels, false);
    auto splits = build_splits(log, 50);
    const int a = log.item_index.at("a"), b = log.item_index.at("b"), c = log.item_index.at("c"),
              d = log.item_index.at("d");
    REQUIRE(splits.test.size() == 1);
    CHECK(splits.test[0].prefix == std::vector<int>{a, b, c});
    CHECK(splits.test[0].target == d);
    REQUIRE(splits.valid.size() == 1);
    CHECK(splits.valid[0].prefix == std::vector<int>{a, b});
    CHECK(splits.valid[0].target == c);
    REQUIRE(splits.train.size() == 2);
    CHECK(splits.train[0].prefix == std::vector<int>{a});
    CHECK(splits.train[0].target == b);
    CHECK(splits.train[1].prefix == std::vector<int>{a, b});
    CHECK(splits.train[1].target == c);
}

TEST_CASE("build_splits truncates to the most recent max_len") {
    std::vector<RawRecord> raw;
    std::unordered_map<std::string, std::vector<std::string>> labels;
    for (int i = 0; i < 60; ++i) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), "i%03d", i);
        raw.push_back({"u", buf, i});
        labels[buf] = {"x"};
    }
    auto log = build_log(std::move(raw), labels, false);
    auto splits = build_splits(log, 50);
    REQUIRE(splits.test.size() == 1);
    CHECK(splits.test[0].prefix.size() == 50);
    // Test prefix covers 1-based positions 10..59 of the 59-item prefix.
    CHECK(splits.test[0].prefix.front() == log.item_index.at("i009"));
    CHECK(splits.test[0].prefix.back() == log.item_index.at("i058"));
    CHECK(splits.test[0].target == log.item_index.at("i059"));
}

TEST_CASE("build_splits train-pair count identity and ordering invariant") {
    Rng rng(7);
    SynthSpec spec;
    spec.num_users = 40;
    spec.num_items = 20;
    spec.seq_len_min = 4;
    spec.seq_len_max = 9;
    spec.min_item_interactions = 1;
    auto data = synth_generate(spec, rng);
    auto seqs = data.log.user_sequences();
    size_t expect = 0;
    for (int u = 1; u <= data.log.num_users(); ++u) expect += seqs[static_cast<size_t>(u)].size() - 2;
    auto splits = build_splits(data.log, 50);
    CHECK(splits.train.size() == expect);
    CHECK(splits.skipped_users == 0);

    // Timestamp ordering: test target never precedes valid target.
    std::vector<std::vector<int64_t>> times(static_cast<size_t>(data.log.num_users()) + 1);
    for (const auto& r : data.log.records) times[static_cast<size_t>(r.user)].push_back(r.ts);
    for (size_t i = 0; i < splits.test.size(); ++i) {
        const auto& t = times[static_cast<size_t>(splits.test[i].user)];
        CHECK(t[t.size() - 1] >= t[t.size() - 2]);
    }

    // Users with fewer than 3 interactions are skipped with a count.
    std::vector<RawRecord> raw{{"tiny", "a", 1}, {"tiny", "b", 2}, {"u", "a", 1}, {"u", "b", 2}, {"u", "a", 3}};
    std::unordered_map<std::string, std::vector<std::string>> labels{{"a", {"x"}}, {"b", {"x"}}};
    auto small = build_log(std::move(raw), labels, false);
    auto s2 = build_splits(small, 50);
    CHECK(s2.skipped_users == 1);
    CHECK(s2.test.size() == 1);
}

TEST_CASE("make_batches padding and determinism") {
    auto log = toy_log();
    std::vector<SeqExample> exs;
    for (int i = 0; i < 10; ++i) exs.push_back({1, {1}, 2});
    auto batches = make_batches(exs, 4, 4, log, nullptr);
    REQUIRE(batches.size() == 3);
    CHECK(batches[0].batch_size == 4);
    CHECK(batches[1].batch_size == 4);
    CHECK(batches[2].batch_size == 2);

    // Left padding: [0,0,0,a] with mask [F,F,F,T].
    CHECK(std::vector<int>(batches[0].item_ids.begin(), batches[0].item_ids.begin() + 4) ==
          std::vector<int>{0, 0, 0, 1});
    CHECK(std::vector<uint8_t>(batches[0].mask.begin(), batches[0].mask.begin() + 4) ==
          std::vector<uint8_t>{0, 0, 0, 1});

    // Same seed, same epoch -> identical order.
    std::vector<SeqExample> shuffled;
    for (int i = 0; i < 20; ++i) shuffled.push_back({1, {1, 2}, (i % 3) + 1});
    Rng r1(9), r2(9);
    auto b1 = make_batches(shuffled, 6, 4, log, &r1);
    auto b2 = make_batches(shuffled, 6, 4, log, &r2);
    REQUIRE(b1.size() == b2.size());
    for (size_t i = 0; i < b1.size(); ++i) {
        CHECK(b1[i].item_ids == b2[i].item_ids);
        CHECK(b1[i].targets == b2[i].targets);
    }

    // Multi-hot accessor reflects category sets.
    auto mh = batches[0].multi_hot(0, 3);
    int count = 0;
    for (auto v : mh) count += v;
    CHECK(count == static_cast<int>(log.item_categories[1].size()));
}

TEST_CASE("feature file round trip and validation") {
    TempDir dir;
    FeatureMatrix fm;
    fm.modality = "text";
    fm.num_items = 3;
    fm.dim = 2;
    fm.rows = {1.5f, -2.25f, 0.0f, 4.0f, 1e-7f, 99.0f};
    save_features(dir.file("f.bin"), fm);
    auto loaded = load_features(dir.file("f.bin"), 3);
    CHECK(loaded.rows == fm.rows);  // bit exact
    CHECK(loaded.dim == 2);
    CHECK(loaded.modality == "text");

    // Item-count mismatch reports both counts.
    try {
        load_features(dir.file("f.bin"), 5);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("3") != std::string::npos);
        CHECK(msg.find("5") != std::string::npos);
    }

    // Truncated payload.
    {
        std::ifstream in(dir.file("f.bin"), std::ios::binary);
        std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        write_file(dir.file("trunc.bin"), all.substr(0, all.size() - 4));
    }
    CHECK_THROWS_AS(load_features(dir.file("trunc.bin"), 3), IoError);

    // NaN payload names the row.
    FeatureMatrix bad = fm;
    bad.rows[2] = std::numeric_limits<float>::quiet_NaN();
    save_features(dir.file("nan.bin"), bad);
    try {
        load_features(dir.file("nan.bin"), 3);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("row 1") != std::string::npos);
    }
}

TEST_CASE("save/load interactions round trip preserves ids") {
    TempDir dir;
    Rng rng(77);
    SynthSpec spec;
    spec.num_users = 30;
    spec.num_items = 15;
    spec.seq_len_min = 5;
    spec.seq_len_max = 8;
    spec.min_item_interactions = 1;
    auto data = synth_generate(spec, rng);
    save_interactions(dir.file("i.tsv"), dir.file("c.tsv"), data.log);
    auto reloaded = load_interactions(dir.file("i.tsv"), dir.file("c.tsv"));
    CHECK(reloaded.content_hash() == data.log.content_hash());
    CHECK(reloaded.item_names == data.log.item_names);
    CHECK(reloaded.user_names == data.log.user_names);
}

TEST_CASE("corrupt_categories") {
    Rng rng(5);
    SynthSpec spec;
    spec.num_users = 50;
    spec.num_items = 40;
    spec.num_categories = 4;
    spec.min_item_interactions = 1;
    auto data = synth_generate(spec, rng);

    Rng c0(1);
    auto same = corrupt_categories(data.log, NoiseMode::misleading, 0.0, c0);
    CHECK(same.content_hash() == data.log.content_hash());

    Rng c1(1);
    auto removed = corrupt_categories(data.log, NoiseMode::removal, 1.0, c1);
    for (int i = 1; i <= removed.num_items(); ++i) {
        CHECK(removed.category_removed[static_cast<size_t>(i)] == 1);
        CHECK(removed.item_categories[static_cast<size_t>(i)].empty());
    }

    // Fixed-count selection: exactly round(rate * n) items corrupted.
    Rng c2(2);
    auto mis = corrupt_categories(data.log, NoiseMode::misleading, 0.3, c2);
    int changed = 0;
    for (int i = 1; i <= mis.num_items(); ++i)
        if (mis.item_categories[static_cast<size_t>(i)] != data.log.item_categories[static_cast<size_t>(i)]) ++changed;
    CHECK(changed == 12);  // round(0.3 * 40)
    // Misleading keeps labels valid and different.
    for (int i = 1; i <= mis.num_items(); ++i)
        for (int c : mis.item_categories[static_cast<size_t>(i)]) {
            CHECK(c >= 0);
            CHECK(c < mis.num_categories());
        }
}

TEST_CASE("synth_generate determinism and 5-core by construction") {
    SynthSpec spec;
    Rng a(9), b(9);
    auto d1 = synth_generate(spec, a);
    auto d2 = synth_generate(spec, b);
    CHECK(d1.log.content_hash() == d2.log.content_hash());
    CHECK(d1.text.rows == d2.text.rows);
    CHECK(d1.visual.rows == d2.visual.rows);

    // Already satisfies 5-core: filtering is a no-op.
    auto filtered = k_core_filter(d1.log, 5);
    CHECK(filtered.records.size() == d1.log.records.size());
    CHECK(filtered.content_hash() == d1.log.content_hash());

    CHECK(d1.log.num_users() == spec.num_users);
    CHECK(d1.log.num_items() == spec.num_items);
    CHECK(d1.log.num_categories() == spec.num_categories);
    CHECK(d1.text.num_items == spec.num_items);

    auto stats = dataset_stats(d1.log);
    CHECK(stats.num_users == spec.num_users);
    CHECK(stats.sparsity > 0.0);
    CHECK(stats.sparsity < 1.0);
}

TEST_CASE("feature remap follows k-core id compaction") {
    // Items: "keep0".."keep3" interact heavily, "drop" only once. Feature row
    // of item with raw internal id r holds the constant r, so alignment
    // after compaction is directly visible.
    std::vector<RawRecord> raw;
    std::unordered_map<std::string, std::vector<std::string>> labels;
    for (int u = 0; u < 3; ++u)
        for (int i = 0; i < 4; ++i) {
            raw.push_back({"u" + std::to_string(u), "keep" + std::to_string(i), u * 10 + i});
            labels["keep" + std::to_string(i)] = {"c"};
        }
    raw.push_back({"u0", "drop", 99});
    labels["drop"] = {"c"};
    auto full = build_log(std::move(raw), labels, false);

    FeatureMatrix fm;
    fm.modality = "text";
    fm.num_items = full.num_items();
    fm.dim = 2;
    for (int r = 1; r <= fm.num_items; ++r) {
        fm.rows.push_back(static_cast<float>(r));
        fm.rows.push_back(static_cast<float>(r));
    }

    auto filtered = k_core_filter(full, 3);
    CHECK(filtered.num_items() == 4);
    std::vector<int> old_ids;
    for (int i = 1; i <= filtered.num_items(); ++i)
        old_ids.push_back(full.item_index.at(filtered.item_names[static_cast<size_t>(i)]));
    auto remapped = remap_features(fm, old_ids);
    CHECK(remapped.num_items == 4);
    for (int i = 1; i <= 4; ++i) {
        const int raw_id = full.item_index.at(filtered.item_names[static_cast<size_t>(i)]);
        CHECK(remapped.row(i)[0] == static_cast<float>(raw_id));
    }
    CHECK_THROWS_AS(remap_features(fm, std::vector<int>{0}), ContractError);
    CHECK_THROWS_AS(remap_features(fm, std::vector<int>{99}), ContractError);
}
