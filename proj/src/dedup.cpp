#include "cfmem/dedup.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "cfmem/analysis.hpp"
#include "cfmem/io.hpp"
#include "cfmem/sampler.hpp"

namespace cfmem::dedup {

namespace {

void check_params(const DedupParams& params) {
    if (params.shingle < 1) {
        throw CfmemError("shingle width must be positive");
    }
    if (params.hashes < 1) {
        throw CfmemError("MinHash needs at least 1 slot");
    }
    if (!(params.threshold > 0) || !(params.threshold < 1)) {
        throw CfmemError("dedup threshold must lie in (0, 1)");
    }
}

// Levenshtein distance capped at limit + 1, over the |i - j| <= limit band.
// Cells outside the band are pinned at the cap so they never win a minimum.
size_t bounded_distance(std::span<const int32_t> a, std::span<const int32_t> b,
                        size_t limit) {
    if (a.size() > b.size()) {
        std::swap(a, b);
    }
    const size_t la = a.size();
    const size_t lb = b.size();
    if (lb - la > limit) {
        return limit + 1;
    }
    const size_t cap = limit + 1;
    std::vector<size_t> prev(lb + 1, cap), cur(lb + 1, cap);
    for (size_t j = 0; j <= std::min(lb, limit); ++j) {
        prev[j] = j;
    }
    for (size_t i = 1; i <= la; ++i) {
        const size_t jlo = i > limit ? i - limit : 0;
        const size_t jhi = std::min(lb, i + limit);
        size_t row_best = cap;
        if (jlo == 0) {
            cur[0] = i;
            row_best = i;
        } else {
            cur[jlo - 1] = cap;
        }
        for (size_t j = std::max<size_t>(jlo, 1); j <= jhi; ++j) {
            size_t best = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            best = std::min(best, prev[j] + 1);
            best = std::min(best, cur[j - 1] + 1);
            cur[j] = std::min(best, cap);
            row_best = std::min(row_best, cur[j]);
        }
        if (row_best > limit) {
            return cap;
        }
        if (jhi < lb) {
            cur[jhi + 1] = cap;  // sentinel for the next row's prev[] reads
        }
        std::swap(prev, cur);
    }
    return prev[lb];
}

}  // namespace

MinHashSignature signature(std::span<const int32_t> tokens, const DedupParams& params) {
    check_params(params);
    std::vector<uint64_t> shingles;
    corpus::collect_shingles(tokens, params.shingle, shingles);
    MinHashSignature sig;
    sig.values.resize(static_cast<size_t>(params.hashes));
    for (size_t s = 0; s < sig.values.size(); ++s) {
        const uint64_t salt = sampler::hash_uint64(params.seed + s);
        uint64_t lo = std::numeric_limits<uint64_t>::max();
        for (uint64_t sh : shingles) {
            lo = std::min(lo, sampler::hash_uint64(sh ^ salt));
        }
        sig.values[s] = lo;
    }
    return sig;
}

std::vector<MinHashSignature> signatures(const std::vector<corpus::Document>& docs,
                                         const DedupParams& params) {
    check_params(params);
    std::vector<MinHashSignature> sigs(docs.size());
    parallel_for(docs.size(), params.jobs, [&](size_t i) {
        sigs[i] = signature(docs[i].tokens, params);
    });
    return sigs;
}

double jaccard_estimate(const MinHashSignature& a, const MinHashSignature& b) {
    if (a.values.size() != b.values.size() || a.values.empty()) {
        throw CfmemError("signatures disagree on slot count");
    }
    size_t agree = 0;
    for (size_t s = 0; s < a.values.size(); ++s) {
        agree += a.values[s] == b.values[s];
    }
    return static_cast<double>(agree) / static_cast<double>(a.values.size());
}

std::vector<std::pair<int64_t, int64_t>> lsh_candidates(
    const std::vector<MinHashSignature>& sigs, int bands) {
    std::vector<std::pair<int64_t, int64_t>> pairs;
    if (sigs.empty()) {
        return pairs;
    }
    const size_t slots = sigs[0].values.size();
    for (const auto& sig : sigs) {
        if (sig.values.size() != slots) {
            throw CfmemError("signatures disagree on slot count");
        }
    }
    if (bands < 1 || slots % static_cast<size_t>(bands) != 0) {
        throw CfmemError("bands must divide the MinHash slot count");
    }
    const size_t rows = slots / static_cast<size_t>(bands);

    std::unordered_map<uint64_t, std::vector<int64_t>> buckets;
    for (int band = 0; band < bands; ++band) {
        buckets.clear();
        const size_t off = static_cast<size_t>(band) * rows;
        for (size_t i = 0; i < sigs.size(); ++i) {
            Fnv1a64 h;
            h.update(sigs[i].values.data() + off, rows * sizeof(uint64_t));
            buckets[h.digest()].push_back(static_cast<int64_t>(i));
        }
        for (const auto& [key, members] : buckets) {
            for (size_t a = 0; a < members.size(); ++a) {
                for (size_t b = a + 1; b < members.size(); ++b) {
                    pairs.emplace_back(members[a], members[b]);
                }
            }
        }
    }
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    return pairs;
}

double edit_similarity(std::span<const int32_t> a, std::span<const int32_t> b) {
    const size_t max_len = std::max(a.size(), b.size());
    if (max_len == 0) {
        return 1.0;
    }
    const size_t d = bounded_distance(a, b, max_len);
    return 1.0 - static_cast<double>(d) / static_cast<double>(max_len);
}

bool is_near_duplicate(std::span<const int32_t> a, std::span<const int32_t> b,
                       double threshold) {
    if (!(threshold > 0) || !(threshold < 1)) {
        throw CfmemError("dedup threshold must lie in (0, 1)");
    }
    const size_t max_len = std::max(a.size(), b.size());
    if (max_len == 0) {
        return true;
    }
    const size_t limit =
        static_cast<size_t>((1.0 - threshold) * static_cast<double>(max_len)) + 1;
    const size_t d = bounded_distance(a, b, limit);
    if (d > limit) {
        return false;
    }
    return 1.0 - static_cast<double>(d) / static_cast<double>(max_len) >= threshold;
}

DupClusterSet cluster(const std::vector<std::pair<int64_t, int64_t>>& candidates,
                      const std::vector<corpus::Document>& docs,
                      const DedupParams& params) {
    check_params(params);
    const int64_t n = static_cast<int64_t>(docs.size());
    for (const auto& [i, j] : candidates) {
        if (i < 0 || j < 0 || i >= n || j >= n || i == j) {
            throw CfmemError("candidate pair out of range");
        }
    }

    std::vector<uint8_t> verified(candidates.size(), 0);
    parallel_for(candidates.size(), params.jobs, [&](size_t k) {
        const auto& [i, j] = candidates[k];
        verified[k] = is_near_duplicate(docs[static_cast<size_t>(i)].tokens,
                                        docs[static_cast<size_t>(j)].tokens,
                                        params.threshold);
    });

    std::vector<int64_t> parent(docs.size());
    std::iota(parent.begin(), parent.end(), int64_t{0});
    const auto find = [&](int64_t x) {
        while (parent[static_cast<size_t>(x)] != x) {
            parent[static_cast<size_t>(x)] =
                parent[static_cast<size_t>(parent[static_cast<size_t>(x)])];
            x = parent[static_cast<size_t>(x)];
        }
        return x;
    };
    for (size_t k = 0; k < candidates.size(); ++k) {
        if (!verified[k]) {
            continue;
        }
        const int64_t a = find(candidates[k].first);
        const int64_t b = find(candidates[k].second);
        if (a != b) {
            parent[static_cast<size_t>(std::max(a, b))] = std::min(a, b);
        }
    }

    std::vector<int64_t> size(docs.size(), 0);
    for (int64_t i = 0; i < n; ++i) {
        ++size[static_cast<size_t>(find(i))];
    }
    DupClusterSet out;
    out.cluster_id.assign(docs.size(), -1);
    out.near_dup_count.assign(docs.size(), 0);
    std::vector<int64_t> label(docs.size(), -1);
    for (int64_t i = 0; i < n; ++i) {
        const int64_t root = find(i);
        if (size[static_cast<size_t>(root)] < 2) {
            continue;
        }
        if (label[static_cast<size_t>(root)] < 0) {
            label[static_cast<size_t>(root)] = out.n_clusters++;
        }
        out.cluster_id[static_cast<size_t>(i)] = label[static_cast<size_t>(root)];
        out.near_dup_count[static_cast<size_t>(i)] = size[static_cast<size_t>(root)] - 1;
        ++out.n_clustered_docs;
    }
    return out;
}

DupCorrelation dup_mem_correlation(const DupClusterSet& clusters,
                                   const estimator::MemorizationTable& mem) {
    if (clusters.cluster_id.size() != mem.size()) {
        throw CfmemError("dup clusters do not match the memorization table");
    }
    std::vector<double> counts, mems;
    for (size_t i = 0; i < mem.size(); ++i) {
        if (clusters.near_dup_count[i] >= 1 && mem.rows[i].valid) {
            counts.push_back(static_cast<double>(clusters.near_dup_count[i]));
            mems.push_back(mem.rows[i].mem);
        }
    }
    if (counts.size() < 3) {
        throw CfmemError("correlation needs at least 3 clustered documents");
    }
    DupCorrelation out;
    out.n = static_cast<int64_t>(counts.size());
    out.pearson = analysis::pearson(counts, mems);
    out.defined = std::isfinite(out.pearson);
    return out;
}

}  // namespace cfmem::dedup
