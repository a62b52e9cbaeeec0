#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "cfmem/io.hpp"

namespace cfmem::sampler {

using BitMatrix = Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Three-round 64-bit mixing hash (splitmix64 finalizer). Bijective on uint64.
inline uint64_t hash_uint64(uint64_t x) noexcept {
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    x = x ^ (x >> 31);
    return x;
}

// Membership predicate over document indices: index i is IN iff
// hash(i*mul + offset) mod modulus == remainder, all arithmetic wrapping.
// The (mul, offset, remainder) triple is derived from the seed alone.
struct Predicate {
    uint64_t mul{0};
    uint64_t offset{0};
    uint64_t remainder{0};
    uint64_t modulus{2};

    bool operator()(uint64_t index) const noexcept {
        return hash_uint64(index * mul + offset) % modulus == remainder;
    }
};

Predicate make_predicate(uint64_t seed, uint64_t modulus);

// m x N bit matrix of which train documents each model saw.
// Rows are reproducible from (base_seed + row, modulus) alone.
struct MembershipMatrix {
    BitMatrix bits;  // m x N, values 0/1
    uint64_t base_seed{0};
    uint64_t modulus{2};

    Eigen::Index m() const noexcept { return bits.rows(); }
    Eigen::Index n() const noexcept { return bits.cols(); }
    double effective_ratio() const noexcept { return 1.0 / static_cast<double>(modulus); }
};

// r is the target subset ratio; modulus = N / floor(r*N) in integer arithmetic.
MembershipMatrix sample_matrix(Eigen::Index n_docs, Eigen::Index n_models, double r,
                               uint64_t base_seed);

struct SamplerReport {
    Eigen::Index m{0};
    Eigen::Index n{0};
    uint64_t modulus{2};
    double expected_inclusion{0};
    double mean_subset_size{0};
    double stddev_subset_size{0};
    double mean_inclusion{0};
    std::vector<double> inclusion_histogram;  // 20 bins over [0,1]
    double pairwise_agreement{0};
    double expected_agreement{0};
    bool degenerate_frequencies{false};  // every per-index frequency is exactly 0 or 1
    bool ok{false};

    std::string to_json() const;
};

// Checks mean inclusion against 1/modulus (+-0.02) and pairwise IN/IN-or-OUT/OUT
// agreement against r^2 + (1-r)^2 (+-0.01) over `pair_samples` random index pairs.
SamplerReport validate_sampler(const MembershipMatrix& mm, size_t pair_samples = 100000,
                               uint64_t rng_seed = 0x5eedull);

void save_membership(const MembershipMatrix& mm, const std::filesystem::path& path);
MembershipMatrix load_membership(const std::filesystem::path& path);

uint64_t membership_hash(const MembershipMatrix& mm);
uint64_t membership_row_hash(const MembershipMatrix& mm, Eigen::Index row);

}  // namespace cfmem::sampler
