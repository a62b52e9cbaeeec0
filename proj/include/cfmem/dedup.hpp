#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cfmem/corpus.hpp"
#include "cfmem/estimator.hpp"

namespace cfmem::dedup {

struct DedupParams {
    int shingle = 5;    // token shingle width
    int hashes = 128;   // MinHash slots
    int bands = 32;     // LSH bands; rows per band = hashes / bands
    double threshold = 0.7;
    uint64_t seed = 0x9e3779b97f4a7c15ULL;  // salts the permutation hashes
    int jobs = 0;       // 0 = hardware concurrency
};

// One 64-bit minimum per slot; slot s hashes every shingle fingerprint with
// hash_uint64 under a per-slot salt derived from the dedup seed.
struct MinHashSignature {
    std::vector<uint64_t> values;
};

MinHashSignature signature(std::span<const int32_t> tokens, const DedupParams& params);

std::vector<MinHashSignature> signatures(const std::vector<corpus::Document>& docs,
                                         const DedupParams& params);

// Fraction of agreeing slots, the usual MinHash estimate of shingle Jaccard.
double jaccard_estimate(const MinHashSignature& a, const MinHashSignature& b);

// Candidate pairs (i < j, ascending): docs whose signatures agree on every
// slot of at least one band. Throws unless bands divides the slot count.
std::vector<std::pair<int64_t, int64_t>> lsh_candidates(
    const std::vector<MinHashSignature>& sigs, int bands);

// Token-level Levenshtein similarity 1 - dist/max(|a|,|b|); empty vs empty
// is 1.0, anything vs empty is 0.0.
double edit_similarity(std::span<const int32_t> a, std::span<const int32_t> b);

// Threshold decision via banded dynamic programming: gives up as soon as the
// distance provably exceeds (1 - threshold) * max length.
bool is_near_duplicate(std::span<const int32_t> a, std::span<const int32_t> b,
                       double threshold);

// Connected components of the verified-edge graph. Docs without a verified
// edge stay unclustered: cluster_id -1, near_dup_count 0. Cluster ids are
// assigned in order of each cluster's smallest doc position, so the result
// is independent of candidate order.
struct DupClusterSet {
    std::vector<int64_t> cluster_id;
    std::vector<int64_t> near_dup_count;  // cluster size - 1
    int64_t n_clusters = 0;
    int64_t n_clustered_docs = 0;
};

DupClusterSet cluster(const std::vector<std::pair<int64_t, int64_t>>& candidates,
                      const std::vector<corpus::Document>& docs,
                      const DedupParams& params);

// Pearson between near_dup_count and mem over clustered docs only. Throws
// with fewer than 3 clustered docs; zero variance leaves `defined` false.
struct DupCorrelation {
    double pearson = 0.0;
    bool defined = false;
    int64_t n = 0;  // clustered docs with a defined memorization estimate
};

DupCorrelation dup_mem_correlation(const DupClusterSet& clusters,
                                   const estimator::MemorizationTable& mem);

}  // namespace cfmem::dedup
