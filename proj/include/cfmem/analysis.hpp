#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cfmem/corpus.hpp"
#include "cfmem/estimator.hpp"
#include "cfmem/sampler.hpp"
#include "cfmem/scoring.hpp"

namespace cfmem::analysis {

// Pearson correlation coefficient. Returns NaN when either input has zero
// variance. Throws on length mismatch or fewer than 2 points.
double pearson(std::span<const double> x, std::span<const double> y);

// Ranks with average-rank tie handling, 1-based (ties share the mean of the
// positions they occupy).
std::vector<double> average_ranks(std::span<const double> v);

// Spearman rank correlation: Pearson over average ranks. Returns NaN when
// either input is constant. Throws on length mismatch or fewer than 3 points.
double spearman_r(std::span<const double> a, std::span<const double> b);

// Nearest-rank percentile with the ceiling rule: the pct-th percentile of n
// sorted values is the one at 1-based rank ceil(pct/100 * n). Well defined
// for a single value. `sorted` must be ascending and non-empty.
double percentile_nearest_rank(std::span<const double> sorted, int pct);

// Stability of the memorization ranking as a function of the number of models
// used to estimate it. The pool of trained models is cut into disjoint
// contiguous blocks of m rows (at most max_partitions of them), memorization
// is recomputed per block, and the blockwise rankings are compared.
struct StabilityRow {
    int m = 0;
    int partitions = 0;
    // Mean and sample stddev of Spearman's R over all partition pairs, and
    // the mean R of each partition against the full-pool ranking. Each R is
    // computed over the docs valid on both sides.
    double mean_r = 0.0;
    double std_r = 0.0;
    double mean_r_vs_full = 0.0;
    // Per-doc sample stddev of the partition memorization estimates, NaN for
    // docs valid in fewer than 2 partitions.
    std::vector<double> doc_stddev;
    double median_doc_stddev = 0.0;
};

struct StabilityReport {
    std::vector<StabilityRow> rows;
    // m values that did not admit at least 2 partitions.
    std::vector<int> skipped;
};

StabilityReport stability(const scoring::ScoreMatrix& scores,
                          const sampler::MembershipMatrix& membership,
                          std::span<const int> m_list, int max_partitions = 10);

// Memorization percentiles reported per document domain.
inline constexpr std::array<int, 5> kProfilePercentiles{5, 25, 50, 75, 95};

struct DomainProfile {
    std::string domain;
    int64_t count = 0;  // train docs in the domain
    int64_t valid = 0;  // docs with a defined memorization estimate
    // Aligned with kProfilePercentiles; NaN when the domain has no valid doc.
    std::array<double, kProfilePercentiles.size()> percentiles{};
};

// One profile per domain with at least min_docs train docs, sorted by domain
// name. With min_docs = 1 the counts sum to the train split size.
std::vector<DomainProfile> domain_profiles(const estimator::MemorizationTable& mem,
                                           const corpus::Corpus& corpus,
                                           int64_t min_docs = 1);

// 2-D histogram over a rectangular range. Bins are half-open on the right
// except the last one along each axis, which closes the range, so a point on
// an interior edge lands in the higher bin. Points outside the range (or with
// a non-finite coordinate) are dropped; `total` counts the points binned.
struct Histogram2d {
    Eigen::Index x_bins = 0;
    Eigen::Index y_bins = 0;
    double x_lo = 0.0, x_hi = 0.0;
    double y_lo = 0.0, y_hi = 0.0;
    Eigen::Matrix<int64_t, Eigen::Dynamic, Eigen::Dynamic> counts;
    int64_t total = 0;
};

Histogram2d histogram2d(std::span<const double> x, std::span<const double> y,
                        Eigen::Index x_bins, Eigen::Index y_bins,
                        double x_lo, double x_hi, double y_lo, double y_hi);

// Range-fitting overload: spans the finite data, widened a little when an
// axis is degenerate so a lone value still falls inside.
Histogram2d histogram2d(std::span<const double> x, std::span<const double> y,
                        Eigen::Index x_bins, Eigen::Index y_bins);

}  // namespace cfmem::analysis
