#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cammsr {

// Full-catalog rank of the target with a deterministic tie-break: items with
// strictly greater score rank ahead, as do equal-score items with a smaller
// internal id. scores[j] is the score of internal item id j+1.
int rank_full(const std::vector<double>& scores, int target_id);

struct MetricPair {
    double ndcg = 0.0;
    double mrr = 0.0;
};

// Single-target leave-one-out metrics: ndcg = 1/log2(rank+1) and
// mrr = 1/rank when rank <= k, else 0.
MetricPair metrics_at_k(int rank, int k);

struct MetricsReport {
    double ndcg5 = 0.0;
    double ndcg10 = 0.0;
    double mrr5 = 0.0;
    double mrr10 = 0.0;
    int user_count = 0;
    std::vector<int> ranks;  // per evaluated prefix, in split order
    std::string fingerprint;

    static MetricsReport from_ranks(const std::vector<int>& ranks, const std::string& fingerprint);
};

}  // namespace cammsr
