#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "cfmem/sampler.hpp"
#include "cfmem/scoring.hpp"

namespace cfmem::estimator {

// Shared group-mean kernel: s = IN-masked sum of a score column, p = IN count,
// sigma = full column sum, m = model count. Memorization and influence both
// reduce to this, which is what makes mem(x) = infl(x=>x) an identity rather
// than a coincidence. With accuracy-valued cells every float32 score is an
// integer multiple of 2^-32, so the double sums below are exact in any order
// and the identity holds bit for bit.
struct GroupDiff {
    double in_mean;
    double out_mean;
    double diff;
};

inline GroupDiff group_diff(double s, double p, double sigma, double m) {
    GroupDiff g;
    g.in_mean = s / p;
    g.out_mean = (sigma - s) / (m - p);
    g.diff = g.in_mean - g.out_mean;
    return g;
}

struct MemorizationRow {
    double mem{0};
    double in_mean{0};
    double out_mean{0};
    double simplicity{0};  // in_mean + out_mean
    double all_mean{0};    // column mean over every model, exported alongside
    int64_t in_count{0};
    int64_t out_count{0};
    bool valid{false};  // false when the doc was never IN or never OUT
};

struct MemorizationTable {
    std::vector<MemorizationRow> rows;
    int checkpoint{0};

    size_t size() const noexcept { return rows.size(); }
    // Mean mem over valid rows; throws when none are valid.
    double mean_mem() const;
};

MemorizationTable memorization(const scoring::ScoreMatrix& scores,
                               const sampler::MembershipMatrix& membership);

struct InfluenceEntry {
    int64_t train{0};
    int64_t query{0};
    double infl{0};
};

struct InfluenceResult {
    int64_t n_train{0};
    int64_t n_query{0};
    int topk{0};                   // 0 = full grid retained
    Eigen::MatrixXd grid;          // train x query, only in full mode
    std::vector<std::vector<InfluenceEntry>> per_query;  // top-k per query, by |infl|
    std::vector<double> max_infl;  // per train doc, signed max over queries
    std::vector<uint8_t> train_valid;
};

// infl(x => x') = s/p - (sigma - s)/(m - p), the IN/OUT group-mean gap with
// the masked sums s taken from a blocked membership^T x scores product. topk > 0
// keeps only the k largest-|infl| trainers per query (never the full grid);
// ties at rank k go to the lower train index. max_infl is computed in every
// mode. Train docs with p in {0, m} are flagged invalid and excluded.
InfluenceResult influence(const sampler::MembershipMatrix& membership,
                          const scoring::ScoreMatrix& query_scores, int topk);

// Per-cell a -> log(a'/(1-a')) with a' = clamp(a, epsilon, 1-epsilon), applied
// before any aggregation; provenance and alignment carry over unchanged.
scoring::ScoreMatrix logit_scores(const scoring::ScoreMatrix& scores, double epsilon = 1e-3);

struct Trajectory {
    std::vector<int> checkpoints;  // ascending epoch labels
    std::vector<MemorizationTable> tables;
    std::vector<double> thresholds;
    // fractions(c, t): share of valid docs whose mem exceeds thresholds[t] at
    // checkpoint c and at every later checkpoint, i.e. it crossed the
    // threshold here and stayed above for the rest of training.
    Eigen::MatrixXd fractions;
};

Trajectory trajectory(const std::vector<scoring::ScoreMatrix>& checkpoint_scores,
                      const sampler::MembershipMatrix& membership,
                      const std::vector<double>& thresholds);

}  // namespace cfmem::estimator
