#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "cammsr/rng.hpp"

namespace cammsr {

// One deduplicated interaction with internal ids. Internal user ids run
// 1..num_users, item ids 1..num_items; id 0 is reserved for padding.
struct Interaction {
    int user = 0;
    int item = 0;
    int64_t ts = 0;
};

struct InteractionLog {
    // Sorted by (user, ts, item external id); per-user slices are the
    // chronological behavior sequences.
    std::vector<Interaction> records;
    std::vector<std::string> user_names;  // index 1..num_users
    std::vector<std::string> item_names;  // index 1..num_items
    std::unordered_map<std::string, int> user_index;
    std::unordered_map<std::string, int> item_index;
    std::vector<std::string> category_names;        // sorted vocabulary
    std::vector<std::vector<int>> item_categories;  // per internal item id, sorted label ids
    std::vector<uint8_t> category_removed;          // per internal item id

    int num_users() const { return static_cast<int>(user_names.size()) - 1; }
    int num_items() const { return static_cast<int>(item_names.size()) - 1; }
    int num_categories() const { return static_cast<int>(category_names.size()); }

    // Per-user item sequences in chronological order, index 1..num_users.
    std::vector<std::vector<int>> user_sequences() const;
    uint64_t content_hash() const;
};

struct RawRecord {
    std::string user;
    std::string item;
    int64_t ts = 0;
};

// Canonical log construction: dedupe exact triples, sort by
// (user, ts, item), assign internal ids by first appearance in that order.
// Re-ingesting a log written back with internal ids as names reproduces the
// identical id assignment.
InteractionLog build_log(std::vector<RawRecord> raw,
                         const std::unordered_map<std::string, std::vector<std::string>>& item_labels,
                         bool allow_missing_categories);

InteractionLog load_interactions(const std::string& interactions_path, const std::string& categories_path,
                                 bool allow_missing_categories = false);

void save_interactions(const std::string& interactions_path, const std::string& categories_path,
                       const InteractionLog& log);

// Iterates removal of users/items with fewer than k interactions until every
// survivor has at least k, then re-compacts ids.
InteractionLog k_core_filter(const InteractionLog& log, int k = 5);

struct SeqExample {
    int user = 0;
    std::vector<int> prefix;  // at most max_len most recent items
    int target = 0;
};

struct Splits {
    std::vector<SeqExample> train;
    std::vector<SeqExample> valid;
    std::vector<SeqExample> test;
    int skipped_users = 0;
};

// Leave-one-out: per user sequence i1..in, test = (i1..i(n-1) -> in),
// valid = (i1..i(n-2) -> i(n-1)), train = every (i1..i(j-1) -> ij) for
// j = 2..n-1. Users with fewer than 3 interactions are skipped and counted.
Splits build_splits(const InteractionLog& log, int max_len = 50);

// Left-padded fixed-width batch. Labels are stored CSR per position; the
// multi_hot accessor materializes the boolean view.
struct SequenceBatch {
    int batch_size = 0;
    int max_len = 0;
    int num_categories = 0;
    std::vector<int> item_ids;  // batch*max_len, 0 = padding
    std::vector<uint8_t> mask;  // batch*max_len, 1 = real item
    std::vector<int> targets;   // batch
    std::vector<int> users;     // batch
    std::vector<int> label_offsets;  // batch*max_len + 1
    std::vector<int> labels;
    std::vector<uint8_t> removed;  // batch*max_len, category-removed flag

    std::vector<uint8_t> multi_hot(int row, int pos) const;
};

// Materializes batches of batch_size. When shuffle_rng is non-null the
// example order is shuffled first (training); otherwise order is preserved.
std::vector<SequenceBatch> make_batches(const std::vector<SeqExample>& examples, int batch_size, int max_len,
                                        const InteractionLog& log, Rng* shuffle_rng);

struct FeatureMatrix {
    std::string modality;  // "text" or "visual"
    int num_items = 0;
    int dim = 0;
    std::vector<float> rows;  // num_items * dim, row r = item id r+1

    const float* row(int item_id) const { return rows.data() + static_cast<size_t>(item_id - 1) * dim; }
};

FeatureMatrix load_features(const std::string& path, int expected_items);
void save_features(const std::string& path, const FeatureMatrix& fm);

// Re-indexes feature rows after an id remap: keep[r] is the old internal id
// feeding new internal id r+1.
FeatureMatrix remap_features(const FeatureMatrix& fm, const std::vector<int>& old_ids);

enum class NoiseMode { removal, misleading };

// Corrupts a fixed count round(rate * num_items) of items chosen uniformly
// under rng. Removal empties the label set and flags the item; misleading
// replaces each label with a uniformly random different label.
InteractionLog corrupt_categories(const InteractionLog& log, NoiseMode mode, double rate, Rng& rng);

struct SynthSpec {
    int num_users = 200;
    int num_items = 60;
    int num_categories = 3;
    int dim_t = 16;
    int dim_v = 16;
    // Which modality carries predictive cluster structure per category;
    // cycled when shorter than num_categories. Entries: "text" or "visual".
    std::vector<std::string> signal_modality_per_category = {"text", "visual"};
    int seq_len_min = 6;
    int seq_len_max = 10;
    int clusters_per_category = 3;
    double stay_prob = 0.85;
    double feature_noise = 0.25;
    double center_scale = 1.0;
    // Within-cluster successor popularity ~ (1+rank)^-skew; 0 = uniform.
    // Skewed tails make per-item memorization insufficient, so prediction
    // quality depends on the shared feature pathway.
    double popularity_skew = 0.0;
    int min_item_interactions = 5;
};

struct SynthData {
    InteractionLog log;
    FeatureMatrix text;
    FeatureMatrix visual;
};

// Items are partitioned into categories, each category into feature clusters
// chained cyclically; walks follow the chain with probability stay_prob and
// jump uniformly otherwise. The signal modality's feature encodes the item's
// true (category, cluster); the other modality encodes a decoy cluster, so
// per-category modality choice matters. Deterministic under rng.
SynthData synth_generate(const SynthSpec& spec, Rng& rng);

struct DatasetStats {
    int num_users = 0;
    int num_items = 0;
    int num_categories = 0;
    int64_t num_interactions = 0;
    double sparsity = 0.0;
    double avg_sequence_length = 0.0;
};

DatasetStats dataset_stats(const InteractionLog& log);

}  // namespace cammsr
