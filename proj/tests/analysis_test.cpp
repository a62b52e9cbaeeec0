#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"

#include "cfmem/analysis.hpp"
#include "cfmem/estimator.hpp"
#include "cfmem/sampler.hpp"
#include "cfmem/scoring.hpp"

using namespace cfmem;
using namespace cfmem::analysis;

namespace {

scoring::ScoreMatrix scores_for(const sampler::MembershipMatrix& mm, uint64_t seed) {
    std::mt19937_64 rng(seed);
    scoring::ScoreMatrix s;
    s.values.resize(mm.m(), mm.n());
    for (Eigen::Index j = 0; j < mm.n(); ++j) {
        // Give every doc its own base accuracy so rankings are meaningful.
        const float base = static_cast<float>(rng() % 9) / 16.0f;
        for (Eigen::Index i = 0; i < mm.m(); ++i) {
            float v = base + static_cast<float>(rng() % 8) / 16.0f;
            if (mm.bits(i, j)) {
                v += 1.0f / 16.0f;
            }
            s.values(i, j) = std::min(v, 1.0f);
        }
    }
    s.split = corpus::Split::train;
    s.membership_hash = sampler::membership_hash(mm);
    for (Eigen::Index j = 0; j < mm.n(); ++j) {
        s.doc_indices.push_back(j);
    }
    return s;
}

}  // namespace

TEST_CASE("pearson endpoints") {
    const std::vector<double> x{1, 2, 3, 4};
    const std::vector<double> up{2, 4, 6, 8};
    const std::vector<double> down{5, 4, 3, 2};
    CHECK(pearson(x, up) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pearson(x, down) == doctest::Approx(-1.0).epsilon(1e-12));
    const std::vector<double> flat{7, 7, 7, 7};
    CHECK(std::isnan(pearson(x, flat)));
    CHECK_THROWS_AS(pearson(x, std::vector<double>{1, 2}), CfmemError);
    CHECK_THROWS_AS(pearson(std::vector<double>{1}, std::vector<double>{2}), CfmemError);
}

TEST_CASE("average ranks share tied positions") {
    const std::vector<double> v{10, 20, 20, 30};
    const auto r = average_ranks(v);
    REQUIRE(r.size() == 4);
    CHECK(r[0] == 1.0);
    CHECK(r[1] == 2.5);
    CHECK(r[2] == 2.5);
    CHECK(r[3] == 4.0);

    const std::vector<double> all_tied{5, 5, 5};
    for (double rank : average_ranks(all_tied)) {
        CHECK(rank == 2.0);
    }
}

TEST_CASE("spearman reference value") {
    const std::vector<double> a{1, 2, 3, 4, 5};
    const std::vector<double> b{1, 3, 2, 5, 4};
    CHECK(spearman_r(a, b) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(spearman_r(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    const std::vector<double> rev{5, 4, 3, 2, 1};
    CHECK(spearman_r(a, rev) == doctest::Approx(-1.0).epsilon(1e-12));
    const std::vector<double> flat{2, 2, 2, 2, 2};
    CHECK(std::isnan(spearman_r(a, flat)));
    CHECK_THROWS_AS(spearman_r(a, std::vector<double>{1, 2}), CfmemError);
    CHECK_THROWS_AS(spearman_r(std::vector<double>{1, 2}, std::vector<double>{2, 1}),
                    CfmemError);

    // Rank correlation only sees order, so monotone transforms are invisible.
    std::vector<double> squashed;
    for (double v : b) {
        squashed.push_back(std::tanh(v) * 3 - 1);
    }
    CHECK(spearman_r(a, squashed) == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("nearest-rank percentile uses the ceiling rule") {
    const std::vector<double> ten{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    CHECK(percentile_nearest_rank(ten, 50) == 5.0);
    CHECK(percentile_nearest_rank(ten, 95) == 10.0);
    CHECK(percentile_nearest_rank(ten, 5) == 1.0);
    CHECK(percentile_nearest_rank(ten, 100) == 10.0);
    CHECK(percentile_nearest_rank(ten, 25) == 3.0);

    const std::vector<double> one{42};
    for (int pct : kProfilePercentiles) {
        CHECK(percentile_nearest_rank(one, pct) == 42.0);
    }
}

TEST_CASE("stability cuts the pool into contiguous blocks") {
    const auto mm = sampler::sample_matrix(60, 24, 0.5, 61);
    const auto scores = scores_for(mm, 62);
    const std::vector<int> m_list{12, 6};
    const auto report = stability(scores, mm, m_list, 10);
    REQUIRE(report.rows.size() == 2);
    CHECK(report.skipped.empty());

    // Rows come back in input order; 24/12 = 2 partitions, 24/6 = 4.
    CHECK(report.rows[0].m == 12);
    CHECK(report.rows[0].partitions == 2);
    CHECK(report.rows[1].m == 6);
    CHECK(report.rows[1].partitions == 4);

    // With exactly 2 partitions there is a single pairwise value.
    CHECK(report.rows[0].std_r == 0.0);
    CHECK(report.rows[0].mean_r >= -1.0);
    CHECK(report.rows[0].mean_r <= 1.0);
    CHECK(std::isfinite(report.rows[0].mean_r_vs_full));
    CHECK(report.rows[1].doc_stddev.size() == 60);

    // More models per estimate means a steadier ranking on average.
    const auto again = stability(scores, mm, m_list, 10);
    CHECK(again.rows[0].mean_r == report.rows[0].mean_r);
    CHECK(again.rows[1].median_doc_stddev == report.rows[1].median_doc_stddev);
}

TEST_CASE("stability respects the partition cap") {
    const auto mm = sampler::sample_matrix(40, 30, 0.5, 63);
    const auto scores = scores_for(mm, 64);
    const std::vector<int> m_list{3};
    const auto capped = stability(scores, mm, m_list, 4);
    REQUIRE(capped.rows.size() == 1);
    CHECK(capped.rows[0].partitions == 4);
}

TEST_CASE("stability skips m values that do not fit twice") {
    const auto mm = sampler::sample_matrix(30, 12, 0.5, 65);
    const auto scores = scores_for(mm, 66);
    const std::vector<int> m_list{6, 7, 12};
    const auto report = stability(scores, mm, m_list, 10);
    REQUIRE(report.rows.size() == 1);
    CHECK(report.rows[0].m == 6);
    CHECK(report.skipped == std::vector<int>{7, 12});

    CHECK_THROWS_WITH_AS(stability(scores, mm, std::vector<int>{0}, 10),
                         "stability m values must be positive", CfmemError);
}

TEST_CASE("stability partitions agree with directly sliced estimates") {
    const auto mm = sampler::sample_matrix(25, 8, 0.5, 67);
    const auto scores = scores_for(mm, 68);
    const std::vector<int> m_list{4};
    const auto report = stability(scores, mm, m_list, 10);
    REQUIRE(report.rows.size() == 1);
    const auto& row = report.rows[0];
    REQUIRE(row.partitions == 2);

    // Recompute both halves by hand and check the per-doc stddev entries.
    auto slice = [&](Eigen::Index start) {
        sampler::MembershipMatrix sub;
        sub.bits = mm.bits.middleRows(start, 4);
        sub.base_seed = mm.base_seed;
        sub.modulus = mm.modulus;
        scoring::ScoreMatrix ss;
        ss.values = scores.values.middleRows(start, 4);
        ss.split = scores.split;
        ss.membership_hash = sampler::membership_hash(sub);
        ss.doc_indices = scores.doc_indices;
        return estimator::memorization(ss, sub);
    };
    const auto first = slice(0);
    const auto second = slice(4);
    for (size_t j = 0; j < 25; ++j) {
        if (first.rows[j].valid && second.rows[j].valid) {
            const double a = first.rows[j].mem;
            const double b = second.rows[j].mem;
            const double mean = (a + b) / 2;
            const double var = (a - mean) * (a - mean) + (b - mean) * (b - mean);
            CHECK(row.doc_stddev[j] == doctest::Approx(std::sqrt(var)).epsilon(1e-9));
        } else {
            CHECK(std::isnan(row.doc_stddev[j]));
        }
    }
}

TEST_CASE("domain profiles cover every train doc at min_docs 1") {
    corpus::SynthConfig cfg;
    cfg.clusters = 2;
    cfg.dup_min = 3;
    cfg.dup_max = 3;
    cfg.n_unique = 5;
    cfg.len_min = 12;
    cfg.len_max = 16;
    cfg.vocab_size = 80;
    cfg.seed = 69;
    const auto corpus = corpus::synthesize(cfg);
    const auto n = static_cast<Eigen::Index>(corpus.train.size());
    const auto mm = sampler::sample_matrix(n, 10, 0.5, 70);
    const auto mem = estimator::memorization(scores_for(mm, 71), mm);

    const auto profiles = domain_profiles(mem, corpus, 1);
    REQUIRE(profiles.size() == 2);
    CHECK(profiles[0].domain == cfg.cluster_domain);
    CHECK(profiles[1].domain == cfg.unique_domain);
    CHECK(profiles[0].count == 6);
    CHECK(profiles[1].count == 5);
    CHECK(profiles[0].count + profiles[1].count == n);
    for (const auto& p : profiles) {
        for (size_t k = 1; k < p.percentiles.size(); ++k) {
            CHECK(p.percentiles[k] >= p.percentiles[k - 1]);
        }
    }

    const auto filtered = domain_profiles(mem, corpus, 6);
    REQUIRE(filtered.size() == 1);
    CHECK(filtered[0].domain == cfg.cluster_domain);
}

TEST_CASE("a singleton domain reports its own mem at every percentile") {
    corpus::Corpus corpus;
    corpus.train.resize(3);
    corpus.train[0].domain = "a.example";
    corpus.train[1].domain = "a.example";
    corpus.train[2].domain = "lone.example";

    estimator::MemorizationTable mem;
    mem.rows.resize(3);
    mem.rows[0] = {.mem = 0.2, .valid = true};
    mem.rows[1] = {.mem = 0.4, .valid = true};
    mem.rows[2] = {.mem = 0.9, .valid = true};
    const auto profiles = domain_profiles(mem, corpus, 1);
    REQUIRE(profiles.size() == 2);
    CHECK(profiles[1].domain == "lone.example");
    for (double p : profiles[1].percentiles) {
        CHECK(p == 0.9);
    }
    CHECK(profiles[0].valid == 2);

    estimator::MemorizationTable wrong;
    wrong.rows.resize(2);
    CHECK_THROWS_AS(domain_profiles(wrong, corpus, 1), CfmemError);
}

TEST_CASE("histogram bins are half-open with a closed top edge") {
    const std::vector<double> x{0.25, 1.0, 0.0, 0.999, std::nan(""), 2.0};
    const std::vector<double> y{0.25, 1.0, 0.0, 0.0, 0.5, 0.5};
    const auto h = histogram2d(x, y, 4, 4, 0.0, 1.0, 0.0, 1.0);
    CHECK(h.total == 4);  // the NaN and the out-of-range 2.0 are dropped
    CHECK(h.counts(1, 1) == 1);  // 0.25 on an interior edge goes up
    CHECK(h.counts(3, 3) == 1);  // the range maximum stays in the last bin
    CHECK(h.counts(0, 0) == 1);
    CHECK(h.counts(3, 0) == 1);  // 0.999 in the last bin
    CHECK(h.counts.sum() == h.total);
}

TEST_CASE("auto-ranged histograms span the data") {
    const std::vector<double> x{1.0, 2.0, 3.0};
    const std::vector<double> y{-1.0, 0.0, 1.0};
    const auto h = histogram2d(x, y, 3, 3);
    CHECK(h.x_lo == 1.0);
    CHECK(h.x_hi == 3.0);
    CHECK(h.y_lo == -1.0);
    CHECK(h.y_hi == 1.0);
    CHECK(h.total == 3);
    CHECK(h.counts(0, 0) == 1);
    CHECK(h.counts(2, 2) == 1);

    // A lone point still lands inside thanks to the widened degenerate range.
    const std::vector<double> single{0.5};
    const auto s = histogram2d(single, single, 5, 5);
    CHECK(s.total == 1);
    CHECK(s.counts.sum() == 1);
    CHECK(s.x_lo < 0.5);
    CHECK(s.x_hi > 0.5);

    const std::vector<double> empty;
    CHECK_THROWS_WITH_AS(histogram2d(empty, empty, 3, 3), "histogram has no finite points",
                         CfmemError);
}
