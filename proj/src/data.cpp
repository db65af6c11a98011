#include "cammsr/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "cammsr/error.hpp"
#include "json.hpp"

namespace cammsr {

namespace {

uint64_t fnv1a(uint64_t h, const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        size_t pos = line.find('\t', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

int64_t parse_i64(const std::string& s, const std::string& context) {
    try {
        size_t used = 0;
        int64_t v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw IoError(context + ": not an integer: '" + s + "'");
    }
}

}  // namespace

std::vector<std::vector<int>> InteractionLog::user_sequences() const {
    std::vector<std::vector<int>> seqs(user_names.size());
    for (const auto& r : records) seqs[static_cast<size_t>(r.user)].push_back(r.item);
    return seqs;
}

uint64_t InteractionLog::content_hash() const {
    uint64_t h = 0xCBF29CE484222325ULL;
    for (const auto& r : records) {
        h = fnv1a(h, &r.user, sizeof(r.user));
        h = fnv1a(h, &r.item, sizeof(r.item));
        h = fnv1a(h, &r.ts, sizeof(r.ts));
    }
    for (size_t i = 1; i < item_categories.size(); ++i) {
        for (int c : item_categories[i]) h = fnv1a(h, &c, sizeof(c));
        h = fnv1a(h, &category_removed[i], 1);
        h = fnv1a(h, "|", 1);
    }
    for (const auto& name : category_names) h = fnv1a(h, name.data(), name.size());
    return h;
}

InteractionLog build_log(std::vector<RawRecord> raw,
                         const std::unordered_map<std::string, std::vector<std::string>>& item_labels,
                         bool allow_missing_categories) {
    std::sort(raw.begin(), raw.end(), [](const RawRecord& a, const RawRecord& b) {
        if (a.user != b.user) return a.user < b.user;
        if (a.ts != b.ts) return a.ts < b.ts;
        return a.item < b.item;
    });
    raw.erase(std::unique(raw.begin(), raw.end(),
                          [](const RawRecord& a, const RawRecord& b) {
                              return a.user == b.user && a.item == b.item && a.ts == b.ts;
                          }),
              raw.end());

    InteractionLog log;
    log.user_names.push_back("");  // reserve internal id 0
    log.item_names.push_back("");
    for (const auto& r : raw) {
        if (log.user_index.find(r.user) == log.user_index.end()) {
            log.user_index[r.user] = static_cast<int>(log.user_names.size());
            log.user_names.push_back(r.user);
        }
        if (log.item_index.find(r.item) == log.item_index.end()) {
            log.item_index[r.item] = static_cast<int>(log.item_names.size());
            log.item_names.push_back(r.item);
        }
        log.records.push_back({log.user_index[r.user], log.item_index[r.item], r.ts});
    }

    // Category vocabulary: sorted union of labels over items actually present.
    std::set<std::string> vocab;
    for (size_t i = 1; i < log.item_names.size(); ++i) {
        auto it = item_labels.find(log.item_names[i]);
        if (it == item_labels.end()) {
            if (!allow_missing_categories)
                throw IoError("item '" + log.item_names[i] + "' has no entry in the categories file");
            continue;
        }
        for (const auto& l : it->second) vocab.insert(l);
    }
    log.category_names.assign(vocab.begin(), vocab.end());
    std::unordered_map<std::string, int> label_index;
    for (size_t c = 0; c < log.category_names.size(); ++c) label_index[log.category_names[c]] = static_cast<int>(c);

    log.item_categories.assign(log.item_names.size(), {});
    log.category_removed.assign(log.item_names.size(), 0);
    for (size_t i = 1; i < log.item_names.size(); ++i) {
        auto it = item_labels.find(log.item_names[i]);
        if (it == item_labels.end()) continue;
        std::set<int> ids;
        for (const auto& l : it->second) ids.insert(label_index.at(l));
        log.item_categories[i].assign(ids.begin(), ids.end());
    }
    return log;
}

InteractionLog load_interactions(const std::string& interactions_path, const std::string& categories_path,
                                 bool allow_missing_categories) {
    std::ifstream in(interactions_path);
    if (!in) throw IoError("cannot open interactions file: " + interactions_path);
    std::vector<RawRecord> raw;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto fields = split_tabs(line);
        if (fields.size() != 3 || fields[0].empty() || fields[1].empty())
            throw IoError(interactions_path + ":" + std::to_string(lineno) +
                          ": expected user<TAB>item<TAB>timestamp");
        raw.push_back({fields[0], fields[1],
                       parse_i64(fields[2], interactions_path + ":" + std::to_string(lineno))});
    }

    std::ifstream cin_(categories_path);
    if (!cin_) throw IoError("cannot open categories file: " + categories_path);
    std::unordered_map<std::string, std::vector<std::string>> item_labels;
    lineno = 0;
    while (std::getline(cin_, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto fields = split_tabs(line);
        if (fields.size() != 2 || fields[0].empty())
            throw IoError(categories_path + ":" + std::to_string(lineno) + ": expected item<TAB>label1|label2|...");
        std::vector<std::string> labels;
        std::stringstream ss(fields[1]);
        std::string label;
        while (std::getline(ss, label, '|'))
            if (!label.empty()) labels.push_back(label);
        item_labels[fields[0]] = labels;
    }
    return build_log(std::move(raw), item_labels, allow_missing_categories);
}

void save_interactions(const std::string& interactions_path, const std::string& categories_path,
                       const InteractionLog& log) {
    std::ofstream out(interactions_path);
    if (!out) throw IoError("cannot write interactions file: " + interactions_path);
    for (const auto& r : log.records)
        out << log.user_names[static_cast<size_t>(r.user)] << '\t' << log.item_names[static_cast<size_t>(r.item)]
            << '\t' << r.ts << '\n';
    std::ofstream cat(categories_path);
    if (!cat) throw IoError("cannot write categories file: " + categories_path);
    for (int i = 1; i <= log.num_items(); ++i) {
        cat << log.item_names[static_cast<size_t>(i)] << '\t';
        const auto& ls = log.item_categories[static_cast<size_t>(i)];
        for (size_t j = 0; j < ls.size(); ++j)
            cat << (j ? "|" : "") << log.category_names[static_cast<size_t>(ls[j])];
        cat << '\n';
    }
}

InteractionLog k_core_filter(const InteractionLog& log, int k) {
    if (k < 1) throw ContractError("k_core_filter: k must be >= 1");
    std::vector<Interaction> records = log.records;
    while (true) {
        std::vector<int> ucount(log.user_names.size(), 0), icount(log.item_names.size(), 0);
        for (const auto& r : records) {
            ++ucount[static_cast<size_t>(r.user)];
            ++icount[static_cast<size_t>(r.item)];
        }
        std::vector<Interaction> kept;
        kept.reserve(records.size());
        for (const auto& r : records)
            if (ucount[static_cast<size_t>(r.user)] >= k && icount[static_cast<size_t>(r.item)] >= k)
                kept.push_back(r);
        const bool stable = kept.size() == records.size();
        records.swap(kept);
        if (stable) break;
    }
    if (records.empty()) throw ContractError("dataset emptied by filtering (k=" + std::to_string(k) + ")");

    // Rebuild through the canonical path so ids are re-compacted.
    std::vector<RawRecord> raw;
    raw.reserve(records.size());
    for (const auto& r : records)
        raw.push_back({log.user_names[static_cast<size_t>(r.user)], log.item_names[static_cast<size_t>(r.item)], r.ts});
    std::unordered_map<std::string, std::vector<std::string>> item_labels;
    std::unordered_map<std::string, uint8_t> removed;
    for (int i = 1; i <= log.num_items(); ++i) {
        std::vector<std::string> ls;
        for (int c : log.item_categories[static_cast<size_t>(i)])
            ls.push_back(log.category_names[static_cast<size_t>(c)]);
        item_labels[log.item_names[static_cast<size_t>(i)]] = ls;
        removed[log.item_names[static_cast<size_t>(i)]] = log.category_removed[static_cast<size_t>(i)];
    }
    InteractionLog out = build_log(std::move(raw), item_labels, /*allow_missing_categories=*/true);
    for (int i = 1; i <= out.num_items(); ++i)
        out.category_removed[static_cast<size_t>(i)] = removed.at(out.item_names[static_cast<size_t>(i)]);
    return out;
}

Splits build_splits(const InteractionLog& log, int max_len) {
    if (max_len < 1) throw ContractError("build_splits: max_len must be >= 1");
    Splits out;
    auto seqs = log.user_sequences();
    for (int u = 1; u <= log.num_users(); ++u) {
        const auto& seq = seqs[static_cast<size_t>(u)];
        const int n = static_cast<int>(seq.size());
        if (n < 3) {
            ++out.skipped_users;
            continue;
        }
        auto prefix_of = [&](int end) {  // items [start, end) truncated to max_len
            const int start = std::max(0, end - max_len);
            return std::vector<int>(seq.begin() + start, seq.begin() + end);
        };
        for (int j = 1; j <= n - 2; ++j) out.train.push_back({u, prefix_of(j), seq[static_cast<size_t>(j)]});
        out.valid.push_back({u, prefix_of(n - 2), seq[static_cast<size_t>(n - 2)]});
        out.test.push_back({u, prefix_of(n - 1), seq[static_cast<size_t>(n - 1)]});
    }
    return out;
}

std::vector<uint8_t> SequenceBatch::multi_hot(int row, int pos) const {
    std::vector<uint8_t> out(static_cast<size_t>(num_categories), 0);
    const int p = row * max_len + pos;
    for (int i = label_offsets[static_cast<size_t>(p)]; i < label_offsets[static_cast<size_t>(p) + 1]; ++i)
        out[static_cast<size_t>(labels[static_cast<size_t>(i)])] = 1;
    return out;
}

std::vector<SequenceBatch> make_batches(const std::vector<SeqExample>& examples, int batch_size, int max_len,
                                        const InteractionLog& log, Rng* shuffle_rng) {
    if (batch_size < 1) throw ContractError("make_batches: batch_size must be >= 1");
    std::vector<size_t> order(examples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (shuffle_rng) shuffle_rng->shuffle(order);

    std::vector<SequenceBatch> out;
    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(order.size(), begin + static_cast<size_t>(batch_size));
        SequenceBatch b;
        b.batch_size = static_cast<int>(end - begin);
        b.max_len = max_len;
        b.num_categories = log.num_categories();
        b.item_ids.assign(static_cast<size_t>(b.batch_size) * max_len, 0);
        b.mask.assign(static_cast<size_t>(b.batch_size) * max_len, 0);
        b.removed.assign(static_cast<size_t>(b.batch_size) * max_len, 0);
        b.label_offsets.assign(static_cast<size_t>(b.batch_size) * max_len + 1, 0);
        for (size_t r = begin; r < end; ++r) {
            const auto& ex = examples[order[r]];
            if (static_cast<int>(ex.prefix.size()) > max_len)
                throw ContractError("make_batches: prefix longer than max_len");
            if (ex.target < 1) throw ContractError("make_batches: target id must be >= 1");
            const int row = static_cast<int>(r - begin);
            const int pad = max_len - static_cast<int>(ex.prefix.size());
            b.targets.push_back(ex.target);
            b.users.push_back(ex.user);
            for (size_t j = 0; j < ex.prefix.size(); ++j) {
                const size_t p = static_cast<size_t>(row) * max_len + pad + j;
                b.item_ids[p] = ex.prefix[j];
                b.mask[p] = 1;
                b.removed[p] = log.category_removed[static_cast<size_t>(ex.prefix[j])];
            }
        }
        // CSR label table over all positions.
        for (int p = 0; p < b.batch_size * max_len; ++p) {
            const int id = b.item_ids[static_cast<size_t>(p)];
            if (id > 0 && !b.removed[static_cast<size_t>(p)])
                for (int c : log.item_categories[static_cast<size_t>(id)]) b.labels.push_back(c);
            b.label_offsets[static_cast<size_t>(p) + 1] = static_cast<int>(b.labels.size());
        }
        out.push_back(std::move(b));
    }
    return out;
}

FeatureMatrix load_features(const std::string& path, int expected_items) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open feature file: " + path);
    std::string header;
    if (!std::getline(in, header)) throw IoError(path + ": missing header line");
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(header);
    } catch (const std::exception& e) {
        throw IoError(path + ": bad JSON header: " + e.what());
    }
    FeatureMatrix fm;
    try {
        fm.modality = h.at("modality").get<std::string>();
        fm.num_items = h.at("num_items").get<int>();
        fm.dim = h.at("dim").get<int>();
        if (h.at("dtype").get<std::string>() != "f32") throw IoError(path + ": unsupported dtype");
        if (h.at("order").get<std::string>() != "row-major") throw IoError(path + ": unsupported order");
        if (h.at("endian").get<std::string>() != "little") throw IoError(path + ": unsupported endianness");
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path + ": incomplete header: " + e.what());
    }
    if (fm.num_items < 0 || fm.dim <= 0) throw IoError(path + ": invalid num_items/dim");
    if (expected_items >= 0 && fm.num_items != expected_items)
        throw IoError(path + ": feature file declares " + std::to_string(fm.num_items) + " items but dataset has " +
                      std::to_string(expected_items));
    const size_t want = static_cast<size_t>(fm.num_items) * static_cast<size_t>(fm.dim);
    fm.rows.resize(want);
    in.read(reinterpret_cast<char*>(fm.rows.data()), static_cast<std::streamsize>(want * sizeof(float)));
    const auto got = static_cast<size_t>(in.gcount());
    if (got != want * sizeof(float))
        throw IoError(path + ": truncated payload, expected " + std::to_string(want * sizeof(float)) +
                      " bytes, got " + std::to_string(got));
    char extra;
    if (in.read(&extra, 1))
        throw IoError(path + ": trailing bytes after payload");
    for (size_t i = 0; i < fm.rows.size(); ++i)
        if (!std::isfinite(fm.rows[i]))
            throw IoError(path + ": non-finite value at row " + std::to_string(i / static_cast<size_t>(fm.dim)));
    return fm;
}

void save_features(const std::string& path, const FeatureMatrix& fm) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write feature file: " + path);
    nlohmann::json h{{"modality", fm.modality}, {"num_items", fm.num_items}, {"dim", fm.dim},
                     {"dtype", "f32"},          {"order", "row-major"},      {"endian", "little"}};
    out << h.dump() << '\n';
    out.write(reinterpret_cast<const char*>(fm.rows.data()),
              static_cast<std::streamsize>(fm.rows.size() * sizeof(float)));
}

FeatureMatrix remap_features(const FeatureMatrix& fm, const std::vector<int>& old_ids) {
    FeatureMatrix out;
    out.modality = fm.modality;
    out.num_items = static_cast<int>(old_ids.size());
    out.dim = fm.dim;
    out.rows.resize(old_ids.size() * static_cast<size_t>(fm.dim));
    for (size_t r = 0; r < old_ids.size(); ++r) {
        if (old_ids[r] < 1 || old_ids[r] > fm.num_items)
            throw ContractError("remap_features: old id out of range");
        std::copy_n(fm.row(old_ids[r]), fm.dim, out.rows.data() + r * static_cast<size_t>(fm.dim));
    }
    return out;
}

InteractionLog corrupt_categories(const InteractionLog& log, NoiseMode mode, double rate, Rng& rng) {
    if (rate < 0.0 || rate > 1.0) throw ContractError("corrupt_categories: rate must be in [0,1]");
    InteractionLog out = log;
    const int n = log.num_items();
    const auto n_sel = static_cast<int>(std::llround(rate * n));
    std::vector<int> ids(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) ids[static_cast<size_t>(i)] = i + 1;
    rng.shuffle(ids);
    ids.resize(static_cast<size_t>(n_sel));
    const int num_cats = log.num_categories();
    if (mode == NoiseMode::misleading && num_cats < 2 && n_sel > 0)
        throw ContractError("corrupt_categories: misleading mode needs at least 2 categories");
    for (int id : ids) {
        auto& cats = out.item_categories[static_cast<size_t>(id)];
        if (mode == NoiseMode::removal) {
            cats.clear();
            out.category_removed[static_cast<size_t>(id)] = 1;
        } else {
            std::set<int> replaced;
            for (int c : cats) {
                int alt = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(num_cats - 1)));
                if (alt >= c) ++alt;
                replaced.insert(alt);
            }
            cats.assign(replaced.begin(), replaced.end());
        }
    }
    return out;
}

SynthData synth_generate(const SynthSpec& spec, Rng& rng) {
    if (spec.num_users < 1 || spec.num_items < 1 || spec.num_categories < 1 || spec.dim_t < 1 || spec.dim_v < 1)
        throw ContractError("synth_generate: spec fields must be positive");
    if (spec.seq_len_min < 3 || spec.seq_len_max < spec.seq_len_min)
        throw ContractError("synth_generate: bad seq_len_range");
    if (spec.num_items < spec.num_categories * spec.clusters_per_category)
        throw ContractError("synth_generate: need at least clusters_per_category items per category");
    if (spec.signal_modality_per_category.empty())
        throw ContractError("synth_generate: signal_modality_per_category must not be empty");

    const int I = spec.num_items, C = spec.num_categories, G = spec.clusters_per_category;
    auto cat_of = [&](int i) { return i * C / I; };  // contiguous blocks, 0-based item handle
    std::vector<std::vector<std::vector<int>>> members(static_cast<size_t>(C));  // [cat][cluster] -> items
    for (auto& m : members) m.resize(static_cast<size_t>(G));
    std::vector<int> cluster_of(static_cast<size_t>(I));
    {
        std::vector<int> within(static_cast<size_t>(C), 0);
        std::vector<int> cat_size(static_cast<size_t>(C), 0);
        for (int i = 0; i < I; ++i) ++cat_size[static_cast<size_t>(cat_of(i))];
        for (int i = 0; i < I; ++i) {
            const int c = cat_of(i);
            const int g = within[static_cast<size_t>(c)] * G / cat_size[static_cast<size_t>(c)];
            cluster_of[static_cast<size_t>(i)] = g;
            members[static_cast<size_t>(c)][static_cast<size_t>(g)].push_back(i);
            ++within[static_cast<size_t>(c)];
        }
    }

    auto pick_member = [&](const std::vector<int>& pool) {
        if (spec.popularity_skew <= 0.0) return pool[rng.uniform_int(pool.size())];
        double total = 0.0;
        for (size_t j = 0; j < pool.size(); ++j) total += std::pow(1.0 + static_cast<double>(j), -spec.popularity_skew);
        double roll = rng.uniform() * total;
        for (size_t j = 0; j < pool.size(); ++j) {
            roll -= std::pow(1.0 + static_cast<double>(j), -spec.popularity_skew);
            if (roll <= 0.0) return pool[j];
        }
        return pool.back();
    };
    auto step_from = [&](int i) {
        if (rng.uniform() < spec.stay_prob) {
            const int c = cat_of(i);
            const auto& next = members[static_cast<size_t>(c)][static_cast<size_t>((cluster_of[static_cast<size_t>(i)] + 1) % G)];
            return pick_member(next);
        }
        return static_cast<int>(rng.uniform_int(static_cast<uint64_t>(I)));
    };

    std::vector<std::vector<int>> walks(static_cast<size_t>(spec.num_users));
    std::vector<int> item_count(static_cast<size_t>(I), 0);
    for (int u = 0; u < spec.num_users; ++u) {
        const int len = spec.seq_len_min +
                        static_cast<int>(rng.uniform_int(static_cast<uint64_t>(spec.seq_len_max - spec.seq_len_min + 1)));
        int cur = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(I)));
        for (int t = 0; t < len; ++t) {
            walks[static_cast<size_t>(u)].push_back(cur);
            ++item_count[static_cast<size_t>(cur)];
            cur = step_from(cur);
        }
    }
    // Patch pass: append short chain segments until every item meets the
    // 5-core minimum by construction.
    int patch_user = 0;
    while (true) {
        int deficient = -1;
        for (int i = 0; i < I; ++i)
            if (item_count[static_cast<size_t>(i)] < spec.min_item_interactions) {
                deficient = i;
                break;
            }
        if (deficient < 0) break;
        auto& w = walks[static_cast<size_t>(patch_user)];
        w.push_back(deficient);
        ++item_count[static_cast<size_t>(deficient)];
        const int follow = step_from(deficient);
        w.push_back(follow);
        ++item_count[static_cast<size_t>(follow)];
        patch_user = (patch_user + 1) % spec.num_users;
    }

    auto name_of = [](const char* prefix, int n) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%s%05d", prefix, n);
        return std::string(buf);
    };
    std::vector<RawRecord> raw;
    for (int u = 0; u < spec.num_users; ++u)
        for (size_t t = 0; t < walks[static_cast<size_t>(u)].size(); ++t)
            raw.push_back({name_of("u", u), name_of("i", walks[static_cast<size_t>(u)][t]),
                           static_cast<int64_t>(u) * 100000 + static_cast<int64_t>(t)});
    std::unordered_map<std::string, std::vector<std::string>> item_labels;
    for (int i = 0; i < I; ++i)
        item_labels[name_of("i", i)] = {name_of("c", cat_of(i))};

    SynthData out;
    out.log = build_log(std::move(raw), item_labels, false);

    // Cluster centers per (modality, category, cluster); random sign patterns
    // keep centers well separated at any dimension.
    auto make_centers = [&](int dim) {
        std::vector<std::vector<float>> centers(static_cast<size_t>(C) * G);
        for (auto& c : centers) {
            c.resize(static_cast<size_t>(dim));
            for (auto& x : c)
                x = static_cast<float>((rng.bernoulli(0.5) ? 1.0 : -1.0) * spec.center_scale / std::sqrt(static_cast<double>(dim)));
        }
        return centers;
    };
    auto centers_t = make_centers(spec.dim_t);
    auto centers_v = make_centers(spec.dim_v);

    auto signal_of = [&](int cat) {
        const auto& s = spec.signal_modality_per_category[static_cast<size_t>(cat) % spec.signal_modality_per_category.size()];
        if (s != "text" && s != "visual") throw ContractError("synth_generate: signal modality must be text or visual");
        return s;
    };

    out.text.modality = "text";
    out.text.num_items = out.log.num_items();
    out.text.dim = spec.dim_t;
    out.text.rows.assign(static_cast<size_t>(out.text.num_items) * spec.dim_t, 0.0f);
    out.visual.modality = "visual";
    out.visual.num_items = out.log.num_items();
    out.visual.dim = spec.dim_v;
    out.visual.rows.assign(static_cast<size_t>(out.visual.num_items) * spec.dim_v, 0.0f);

    // Decoy pool per modality: clusters of categories whose signal lives in
    // that modality. A decoy row is then indistinguishable from a true row
    // of some opposite-signal category, so modality trust for an item cannot
    // be read off the features alone; the category label resolves it. When a
    // modality has no signal categories at all, decoys in it degrade to pure
    // noise (that modality carries no structure anywhere).
    std::vector<int> text_pool, visual_pool;
    for (int c = 0; c < C; ++c)
        for (int g = 0; g < G; ++g)
            (signal_of(c) == "text" ? text_pool : visual_pool).push_back(c * G + g);

    for (int internal = 1; internal <= out.log.num_items(); ++internal) {
        const int i = std::stoi(out.log.item_names[static_cast<size_t>(internal)].substr(1));
        const int c = cat_of(i), g = cluster_of[static_cast<size_t>(i)];
        const bool text_signal = signal_of(c) == "text";
        const auto& pool = text_signal ? visual_pool : text_pool;
        const int decoy = pool.empty() ? -1 : pool[rng.uniform_int(pool.size())];
        auto fill = [&](FeatureMatrix& fm, const std::vector<std::vector<float>>& centers, bool is_signal) {
            float* row = fm.rows.data() + static_cast<size_t>(internal - 1) * fm.dim;
            if (!is_signal && decoy < 0) {
                for (int j = 0; j < fm.dim; ++j) row[j] = static_cast<float>(rng.normal());
                return;
            }
            const auto& center = centers[static_cast<size_t>(is_signal ? c * G + g : decoy)];
            for (int j = 0; j < fm.dim; ++j)
                row[j] = center[static_cast<size_t>(j)] + static_cast<float>(spec.feature_noise * rng.normal());
        };
        fill(out.text, centers_t, text_signal);
        fill(out.visual, centers_v, !text_signal);
    }
    return out;
}

DatasetStats dataset_stats(const InteractionLog& log) {
    DatasetStats s;
    s.num_users = log.num_users();
    s.num_items = log.num_items();
    s.num_categories = log.num_categories();
    s.num_interactions = static_cast<int64_t>(log.records.size());
    const double cells = static_cast<double>(s.num_users) * static_cast<double>(s.num_items);
    s.sparsity = cells > 0 ? 1.0 - static_cast<double>(s.num_interactions) / cells : 0.0;
    s.avg_sequence_length = s.num_users > 0 ? static_cast<double>(s.num_interactions) / s.num_users : 0.0;
    return s;
}

}  // namespace cammsr
