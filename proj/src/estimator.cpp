#include "cfmem/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cfmem::estimator {

namespace {

void check_alignment(const scoring::ScoreMatrix& scores,
                     const sampler::MembershipMatrix& membership) {
    if (scores.m() != membership.m()) {
        throw CfmemError("score matrix and membership disagree on model count");
    }
    if (scores.membership_hash != sampler::membership_hash(membership)) {
        throw CfmemError("provenance mismatch: scores were built against a different "
                         "membership matrix");
    }
}

}  // namespace

double MemorizationTable::mean_mem() const {
    double sum = 0;
    int64_t n = 0;
    for (const auto& row : rows) {
        if (row.valid) {
            sum += row.mem;
            ++n;
        }
    }
    if (n == 0) {
        throw CfmemError("memorization table has no valid rows");
    }
    return sum / static_cast<double>(n);
}

MemorizationTable memorization(const scoring::ScoreMatrix& scores,
                               const sampler::MembershipMatrix& membership) {
    check_alignment(scores, membership);
    if (scores.split != corpus::Split::train || scores.n_docs() != membership.n()) {
        throw CfmemError("memorization needs train-split scores aligned with membership");
    }
    const auto m = static_cast<double>(scores.m());
    MemorizationTable table;
    table.checkpoint = scores.checkpoint;
    table.rows.resize(static_cast<size_t>(scores.n_docs()));
    const Eigen::MatrixXd q = scores.values.cast<double>();
    const Eigen::MatrixXd b = membership.bits.cast<double>();
    for (Eigen::Index j = 0; j < scores.n_docs(); ++j) {
        auto& row = table.rows[static_cast<size_t>(j)];
        const double p = b.col(j).sum();
        const double sigma = q.col(j).sum();
        row.in_count = static_cast<int64_t>(p);
        row.out_count = static_cast<int64_t>(m - p);
        row.all_mean = sigma / m;
        if (row.in_count == 0 || row.out_count == 0) {
            row.valid = false;
            continue;
        }
        const double s = b.col(j).dot(q.col(j));
        const GroupDiff g = group_diff(s, p, sigma, m);
        row.in_mean = g.in_mean;
        row.out_mean = g.out_mean;
        row.mem = g.diff;
        row.simplicity = g.in_mean + g.out_mean;
        row.valid = true;
    }
    return table;
}

InfluenceResult influence(const sampler::MembershipMatrix& membership,
                          const scoring::ScoreMatrix& query_scores, int topk) {
    if (query_scores.m() != membership.m()) {
        throw CfmemError("query scores and membership disagree on model count");
    }
    if (query_scores.membership_hash != sampler::membership_hash(membership)) {
        throw CfmemError("provenance mismatch: query scores were built against a different "
                         "membership matrix");
    }
    if (topk < 0) {
        throw CfmemError("topk must be >= 1, or 0 for the full grid");
    }
    const Eigen::Index n_train = membership.n();
    const Eigen::Index n_query = query_scores.n_docs();
    const auto m = static_cast<double>(membership.m());

    InfluenceResult result;
    result.n_train = n_train;
    result.n_query = n_query;
    result.topk = topk;
    result.train_valid.assign(static_cast<size_t>(n_train), 1);
    result.max_infl.assign(static_cast<size_t>(n_train),
                           -std::numeric_limits<double>::infinity());
    if (topk == 0) {
        result.grid.resize(n_train, n_query);
    } else {
        result.per_query.resize(static_cast<size_t>(n_query));
    }

    const Eigen::MatrixXd q = query_scores.values.cast<double>();
    const Eigen::MatrixXd b = membership.bits.cast<double>();
    const Eigen::VectorXd p = b.colwise().sum();
    const Eigen::VectorXd sigma = q.colwise().sum();

    // "a outranks b": larger |infl| first, ties to the lower train index.
    // Used as the heap's "less", which parks the weakest kept entry at the
    // root where the next candidate can challenge it.
    auto better = [](const InfluenceEntry& a, const InfluenceEntry& b2) {
        const double fa = std::fabs(a.infl);
        const double fb = std::fabs(b2.infl);
        if (fa != fb) {
            return fa > fb;
        }
        return a.train < b2.train;
    };

    const Eigen::Index block = 256;
    Eigen::MatrixXd s_block;
    for (Eigen::Index t0 = 0; t0 < n_train; t0 += block) {
        const Eigen::Index count = std::min(block, n_train - t0);
        s_block.noalias() = b.middleCols(t0, count).transpose() * q;
        for (Eigen::Index dt = 0; dt < count; ++dt) {
            const Eigen::Index t = t0 + dt;
            const double pt = p(t);
            if (pt == 0 || pt == m) {
                result.train_valid[static_cast<size_t>(t)] = 0;
                if (topk == 0) {
                    result.grid.row(t).setConstant(
                        std::numeric_limits<double>::quiet_NaN());
                }
                continue;
            }
            for (Eigen::Index qi = 0; qi < n_query; ++qi) {
                const double infl = group_diff(s_block(dt, qi), pt, sigma(qi), m).diff;
                if (infl > result.max_infl[static_cast<size_t>(t)]) {
                    result.max_infl[static_cast<size_t>(t)] = infl;
                }
                if (topk == 0) {
                    result.grid(t, qi) = infl;
                    continue;
                }
                auto& heap = result.per_query[static_cast<size_t>(qi)];
                InfluenceEntry entry{t, qi, infl};
                if (static_cast<int>(heap.size()) < topk) {
                    heap.push_back(entry);
                    std::push_heap(heap.begin(), heap.end(), better);
                } else if (better(entry, heap.front())) {
                    std::pop_heap(heap.begin(), heap.end(), better);
                    heap.back() = entry;
                    std::push_heap(heap.begin(), heap.end(), better);
                }
            }
        }
    }
    for (auto& heap : result.per_query) {
        std::sort_heap(heap.begin(), heap.end(), better);
    }
    for (Eigen::Index t = 0; t < n_train; ++t) {
        if (!result.train_valid[static_cast<size_t>(t)]) {
            result.max_infl[static_cast<size_t>(t)] =
                std::numeric_limits<double>::quiet_NaN();
        }
    }
    return result;
}

scoring::ScoreMatrix logit_scores(const scoring::ScoreMatrix& scores, double epsilon) {
    if (!(epsilon > 0) || !(epsilon < 0.5)) {
        throw CfmemError("logit epsilon must lie in (0, 0.5)");
    }
    scoring::ScoreMatrix out = scores;
    const float lo = static_cast<float>(epsilon);
    const float hi = static_cast<float>(1.0 - epsilon);
    for (Eigen::Index i = 0; i < out.values.rows(); ++i) {
        for (Eigen::Index j = 0; j < out.values.cols(); ++j) {
            const float a = std::min(hi, std::max(lo, out.values(i, j)));
            out.values(i, j) = std::log(a / (1.0f - a));
        }
    }
    return out;
}

Trajectory trajectory(const std::vector<scoring::ScoreMatrix>& checkpoint_scores,
                      const sampler::MembershipMatrix& membership,
                      const std::vector<double>& thresholds) {
    if (checkpoint_scores.empty()) {
        throw CfmemError("trajectory needs at least one checkpoint matrix");
    }
    Trajectory traj;
    traj.thresholds = thresholds;
    const auto& first = checkpoint_scores.front();
    for (const auto& scores : checkpoint_scores) {
        if (scores.n_docs() != first.n_docs() || scores.m() != first.m() ||
            scores.corpus_hash != first.corpus_hash ||
            scores.membership_hash != first.membership_hash ||
            scores.spec_hash != first.spec_hash || scores.split != first.split) {
            throw CfmemError("trajectory checkpoint matrices are misaligned");
        }
        if (!traj.checkpoints.empty() && scores.checkpoint <= traj.checkpoints.back()) {
            throw CfmemError("trajectory checkpoint indices must strictly increase");
        }
        traj.checkpoints.push_back(scores.checkpoint);
        traj.tables.push_back(memorization(scores, membership));
    }

    const auto n_ckpt = static_cast<Eigen::Index>(traj.tables.size());
    const size_t n_docs = traj.tables.front().size();
    int64_t n_valid = 0;
    for (const auto& row : traj.tables.front().rows) {
        n_valid += row.valid ? 1 : 0;
    }
    traj.fractions.resize(n_ckpt, static_cast<Eigen::Index>(thresholds.size()));
    for (size_t tI = 0; tI < thresholds.size(); ++tI) {
        const double tau = thresholds[tI];
        // Scan checkpoints from the end: a doc counts here only if it is above
        // the threshold now and stays above for the rest of training.
        std::vector<uint8_t> above(n_docs, 1);
        for (Eigen::Index c = n_ckpt - 1; c >= 0; --c) {
            int64_t count = 0;
            for (size_t dI = 0; dI < n_docs; ++dI) {
                const auto& row = traj.tables[static_cast<size_t>(c)].rows[dI];
                above[dI] = above[dI] && row.valid && row.mem > tau;
                count += above[dI];
            }
            traj.fractions(c, static_cast<Eigen::Index>(tI)) =
                n_valid == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(n_valid);
        }
    }
    return traj;
}

}  // namespace cfmem::estimator
