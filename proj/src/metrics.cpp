#include "cammsr/metrics.hpp"

#include <cmath>

#include "cammsr/error.hpp"

namespace cammsr {

int rank_full(const std::vector<double>& scores, int target_id) {
    if (target_id < 1 || target_id > static_cast<int>(scores.size()))
        throw ContractError("rank_full: target id out of range");
    const double target_score = scores[static_cast<size_t>(target_id - 1)];
    int rank = 1;
    for (int j = 0; j < static_cast<int>(scores.size()); ++j) {
        const int id = j + 1;
        if (id == target_id) continue;
        const double s = scores[static_cast<size_t>(j)];
        if (s > target_score || (s == target_score && id < target_id)) ++rank;
    }
    return rank;
}

MetricPair metrics_at_k(int rank, int k) {
    if (rank < 1 || k < 1) throw ContractError("metrics_at_k: rank and k must be >= 1");
    MetricPair m;
    if (rank <= k) {
        m.ndcg = 1.0 / std::log2(static_cast<double>(rank) + 1.0);
        m.mrr = 1.0 / static_cast<double>(rank);
    }
    return m;
}

MetricsReport MetricsReport::from_ranks(const std::vector<int>& ranks, const std::string& fingerprint) {
    if (ranks.empty()) throw ContractError("metrics: empty split");
    MetricsReport r;
    r.ranks = ranks;
    r.fingerprint = fingerprint;
    r.user_count = static_cast<int>(ranks.size());
    for (int rank : ranks) {
        const auto m5 = metrics_at_k(rank, 5);
        const auto m10 = metrics_at_k(rank, 10);
        r.ndcg5 += m5.ndcg;
        r.mrr5 += m5.mrr;
        r.ndcg10 += m10.ndcg;
        r.mrr10 += m10.mrr;
    }
    r.ndcg5 /= r.user_count;
    r.mrr5 /= r.user_count;
    r.ndcg10 /= r.user_count;
    r.mrr10 /= r.user_count;
    return r;
}

}  // namespace cammsr
