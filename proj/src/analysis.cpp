#include "cfmem/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "cfmem/io.hpp"

namespace cfmem::analysis {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double mean_of(std::span<const double> v) {
    if (v.empty()) {
        return kNan;
    }
    double sum = 0;
    for (double x : v) {
        sum += x;
    }
    return sum / static_cast<double>(v.size());
}

double sample_stddev(std::span<const double> v) {
    if (v.size() < 2) {
        return kNan;
    }
    const double mu = mean_of(v);
    double ss = 0;
    for (double x : v) {
        ss += (x - mu) * (x - mu);
    }
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double median_of(std::vector<double> v) {
    if (v.empty()) {
        return kNan;
    }
    std::sort(v.begin(), v.end());
    const size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

// Spearman without the length precondition, for pairwise-complete subsets
// that may come up short.
double spearman_or_nan(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 3) {
        return kNan;
    }
    return spearman_r(a, b);
}

}  // namespace

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw CfmemError("pearson inputs differ in length");
    }
    if (x.size() < 2) {
        throw CfmemError("pearson needs at least 2 points");
    }
    const double mx = mean_of(x);
    const double my = mean_of(y);
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0 || syy == 0) {
        return kNan;
    }
    return sxy / std::sqrt(sxx * syy);
}

std::vector<double> average_ranks(std::span<const double> v) {
    const size_t n = v.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i + 1;
        while (j < n && v[order[j]] == v[order[i]]) {
            ++j;
        }
        // Positions i+1 .. j (1-based) hold equal values; share their mean.
        const double r = 0.5 * static_cast<double>(i + 1 + j);
        for (size_t k = i; k < j; ++k) {
            ranks[order[k]] = r;
        }
        i = j;
    }
    return ranks;
}

double spearman_r(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw CfmemError("spearman inputs differ in length");
    }
    if (a.size() < 3) {
        throw CfmemError("spearman needs at least 3 points");
    }
    const std::vector<double> ra = average_ranks(a);
    const std::vector<double> rb = average_ranks(b);
    return pearson(ra, rb);
}

double percentile_nearest_rank(std::span<const double> sorted, int pct) {
    if (sorted.empty()) {
        throw CfmemError("percentile of an empty list");
    }
    if (pct < 0 || pct > 100) {
        throw CfmemError("percentile must lie in [0, 100]");
    }
    const size_t n = sorted.size();
    size_t rank = (static_cast<size_t>(pct) * n + 99) / 100;
    if (rank < 1) {
        rank = 1;
    }
    return sorted[rank - 1];
}

StabilityReport stability(const scoring::ScoreMatrix& scores,
                          const sampler::MembershipMatrix& membership,
                          std::span<const int> m_list, int max_partitions) {
    if (max_partitions < 2) {
        throw CfmemError("stability needs at least 2 partitions");
    }
    const Eigen::Index pool = membership.m();
    const Eigen::Index n_docs = scores.n_docs();
    const estimator::MemorizationTable full = estimator::memorization(scores, membership);

    StabilityReport report;
    for (int m : m_list) {
        if (m < 1) {
            throw CfmemError("stability m values must be positive");
        }
        const int parts = std::min<int>(static_cast<int>(pool / m), max_partitions);
        if (parts < 2) {
            report.skipped.push_back(m);
            continue;
        }

        std::vector<estimator::MemorizationTable> tables;
        tables.reserve(static_cast<size_t>(parts));
        for (int p = 0; p < parts; ++p) {
            sampler::MembershipMatrix sub;
            sub.bits = membership.bits.middleRows(static_cast<Eigen::Index>(p) * m, m);
            sub.base_seed = membership.base_seed;
            sub.modulus = membership.modulus;

            scoring::ScoreMatrix sub_scores;
            sub_scores.values = scores.values.middleRows(static_cast<Eigen::Index>(p) * m, m);
            sub_scores.split = scores.split;
            sub_scores.checkpoint = scores.checkpoint;
            sub_scores.corpus_hash = scores.corpus_hash;
            sub_scores.membership_hash = sampler::membership_hash(sub);
            sub_scores.spec_hash = scores.spec_hash;
            sub_scores.doc_indices = scores.doc_indices;
            tables.push_back(estimator::memorization(sub_scores, sub));
        }

        StabilityRow row;
        row.m = m;
        row.partitions = parts;

        // Every comparison is pairwise-complete: only docs with a defined
        // estimate on both sides enter the rank correlation.
        std::vector<double> pair_r;
        std::vector<double> va, vb;
        for (int p = 0; p < parts; ++p) {
            for (int q = p + 1; q < parts; ++q) {
                va.clear();
                vb.clear();
                for (Eigen::Index d = 0; d < n_docs; ++d) {
                    const auto& ra = tables[p].rows[static_cast<size_t>(d)];
                    const auto& rb = tables[q].rows[static_cast<size_t>(d)];
                    if (ra.valid && rb.valid) {
                        va.push_back(ra.mem);
                        vb.push_back(rb.mem);
                    }
                }
                const double r = spearman_or_nan(va, vb);
                if (std::isfinite(r)) {
                    pair_r.push_back(r);
                }
            }
        }
        row.mean_r = mean_of(pair_r);
        row.std_r = pair_r.size() == 1 ? 0.0 : sample_stddev(pair_r);

        std::vector<double> full_r;
        for (int p = 0; p < parts; ++p) {
            va.clear();
            vb.clear();
            for (Eigen::Index d = 0; d < n_docs; ++d) {
                const auto& ra = tables[p].rows[static_cast<size_t>(d)];
                const auto& rb = full.rows[static_cast<size_t>(d)];
                if (ra.valid && rb.valid) {
                    va.push_back(ra.mem);
                    vb.push_back(rb.mem);
                }
            }
            const double r = spearman_or_nan(va, vb);
            if (std::isfinite(r)) {
                full_r.push_back(r);
            }
        }
        row.mean_r_vs_full = mean_of(full_r);

        row.doc_stddev.resize(static_cast<size_t>(n_docs), kNan);
        std::vector<double> finite_stddev;
        std::vector<double> vals;
        for (Eigen::Index d = 0; d < n_docs; ++d) {
            vals.clear();
            for (const auto& table : tables) {
                const auto& r = table.rows[static_cast<size_t>(d)];
                if (r.valid) {
                    vals.push_back(r.mem);
                }
            }
            const double sd = sample_stddev(vals);
            row.doc_stddev[static_cast<size_t>(d)] = sd;
            if (std::isfinite(sd)) {
                finite_stddev.push_back(sd);
            }
        }
        row.median_doc_stddev = median_of(std::move(finite_stddev));
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::vector<DomainProfile> domain_profiles(const estimator::MemorizationTable& mem,
                                           const corpus::Corpus& corpus,
                                           int64_t min_docs) {
    const auto& docs = corpus.train;
    if (mem.size() != docs.size()) {
        throw CfmemError("memorization table does not match the corpus train split");
    }
    std::map<std::string, std::vector<double>> by_domain;
    std::map<std::string, int64_t> counts;
    for (size_t i = 0; i < docs.size(); ++i) {
        ++counts[docs[i].domain];
        if (mem.rows[i].valid) {
            by_domain[docs[i].domain].push_back(mem.rows[i].mem);
        }
    }
    std::vector<DomainProfile> profiles;
    for (const auto& [domain, count] : counts) {
        if (count < min_docs) {
            continue;
        }
        DomainProfile prof;
        prof.domain = domain;
        prof.count = count;
        auto it = by_domain.find(domain);
        std::vector<double> vals = it == by_domain.end() ? std::vector<double>{}
                                                         : std::move(it->second);
        prof.valid = static_cast<int64_t>(vals.size());
        std::sort(vals.begin(), vals.end());
        for (size_t k = 0; k < kProfilePercentiles.size(); ++k) {
            prof.percentiles[k] =
                vals.empty() ? kNan : percentile_nearest_rank(vals, kProfilePercentiles[k]);
        }
        profiles.push_back(std::move(prof));
    }
    return profiles;
}

Histogram2d histogram2d(std::span<const double> x, std::span<const double> y,
                        Eigen::Index x_bins, Eigen::Index y_bins,
                        double x_lo, double x_hi, double y_lo, double y_hi) {
    if (x.size() != y.size()) {
        throw CfmemError("histogram inputs differ in length");
    }
    if (x_bins < 1 || y_bins < 1) {
        throw CfmemError("histogram needs at least 1 bin per axis");
    }
    if (!(x_lo < x_hi) || !(y_lo < y_hi)) {
        throw CfmemError("histogram range is empty");
    }
    Histogram2d h;
    h.x_bins = x_bins;
    h.y_bins = y_bins;
    h.x_lo = x_lo;
    h.x_hi = x_hi;
    h.y_lo = y_lo;
    h.y_hi = y_hi;
    h.counts.setZero(x_bins, y_bins);
    const auto bin_of = [](double v, double lo, double hi, Eigen::Index bins) {
        auto b = static_cast<Eigen::Index>((v - lo) / (hi - lo) * static_cast<double>(bins));
        return std::min(b, bins - 1);  // the last bin closes the range
    };
    for (size_t i = 0; i < x.size(); ++i) {
        const double xv = x[i];
        const double yv = y[i];
        if (!std::isfinite(xv) || !std::isfinite(yv)) {
            continue;
        }
        if (xv < x_lo || xv > x_hi || yv < y_lo || yv > y_hi) {
            continue;
        }
        ++h.counts(bin_of(xv, x_lo, x_hi, x_bins), bin_of(yv, y_lo, y_hi, y_bins));
        ++h.total;
    }
    return h;
}

Histogram2d histogram2d(std::span<const double> x, std::span<const double> y,
                        Eigen::Index x_bins, Eigen::Index y_bins) {
    if (x.size() != y.size()) {
        throw CfmemError("histogram inputs differ in length");
    }
    double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
    double y_lo = x_lo, y_hi = -x_lo;
    bool any = false;
    for (size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
            continue;
        }
        any = true;
        x_lo = std::min(x_lo, x[i]);
        x_hi = std::max(x_hi, x[i]);
        y_lo = std::min(y_lo, y[i]);
        y_hi = std::max(y_hi, y[i]);
    }
    if (!any) {
        throw CfmemError("histogram has no finite points");
    }
    if (x_lo == x_hi) {
        x_lo -= 0.5;
        x_hi += 0.5;
    }
    if (y_lo == y_hi) {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    return histogram2d(x, y, x_bins, y_bins, x_lo, x_hi, y_lo, y_hi);
}

}  // namespace cfmem::analysis
