#include "cfmem/sampler.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace cfmem::sampler {

namespace {

constexpr uint32_t kMembershipMagic = 0x424d4643;  // "CFMB"
constexpr uint32_t kMembershipVersion = 1;
constexpr uint64_t kSeedSalt = 1234;  // fixed constant from the reference sampler

// Packs one row LSB-first into ceil(n/8) bytes.
std::vector<uint8_t> pack_row(const MembershipMatrix& mm, Eigen::Index row) {
    const Eigen::Index n = mm.n();
    std::vector<uint8_t> bytes((static_cast<size_t>(n) + 7) / 8, 0);
    for (Eigen::Index j = 0; j < n; ++j) {
        if (mm.bits(row, j)) {
            bytes[static_cast<size_t>(j) / 8] |= static_cast<uint8_t>(1u << (j % 8));
        }
    }
    return bytes;
}

void serialize_membership(const MembershipMatrix& mm, ByteSink& sink) {
    put_u32(sink, kMembershipMagic);
    put_u32(sink, kMembershipVersion);
    put_u64(sink, static_cast<uint64_t>(mm.m()));
    put_u64(sink, static_cast<uint64_t>(mm.n()));
    put_u64(sink, mm.base_seed);
    put_u64(sink, mm.modulus);
    for (Eigen::Index i = 0; i < mm.m(); ++i) {
        auto bytes = pack_row(mm, i);
        put_bytes(sink, bytes);
    }
}

}  // namespace

Predicate make_predicate(uint64_t seed, uint64_t modulus) {
    if (modulus < 2) {
        throw CfmemError("make_predicate: modulus must be >= 2, got " + std::to_string(modulus));
    }
    Predicate p;
    p.mul = hash_uint64(seed + kSeedSalt + 0);
    p.offset = hash_uint64(seed + kSeedSalt + 1);
    p.remainder = hash_uint64(seed + kSeedSalt + 2) % modulus;
    p.modulus = modulus;
    return p;
}

MembershipMatrix sample_matrix(Eigen::Index n_docs, Eigen::Index n_models, double r,
                               uint64_t base_seed) {
    if (n_docs <= 0 || n_models <= 0) {
        throw CfmemError("sample_matrix: need n_docs > 0 and n_models > 0");
    }
    if (!(r > 0.0 && r < 1.0)) {
        throw CfmemError("sample_matrix: subset ratio must be in (0,1)");
    }
    const uint64_t subset = static_cast<uint64_t>(std::floor(r * static_cast<double>(n_docs)));
    if (subset == 0) {
        throw CfmemError("sample_matrix: floor(r*N) is zero; r too small for N");
    }
    const uint64_t modulus = static_cast<uint64_t>(n_docs) / subset;
    if (modulus < 2) {
        throw CfmemError("sample_matrix: derived modulus < 2 (r >= 0.5 collapses sampling)");
    }

    MembershipMatrix mm;
    mm.base_seed = base_seed;
    mm.modulus = modulus;
    mm.bits.resize(n_models, n_docs);
    for (Eigen::Index i = 0; i < n_models; ++i) {
        Predicate pred = make_predicate(base_seed + static_cast<uint64_t>(i), modulus);
        Eigen::Index popcount = 0;
        for (Eigen::Index j = 0; j < n_docs; ++j) {
            const uint8_t bit = pred(static_cast<uint64_t>(j)) ? 1 : 0;
            mm.bits(i, j) = bit;
            popcount += bit;
        }
        if (popcount == 0 || popcount == n_docs) {
            throw CfmemError("sample_matrix: degenerate model " + std::to_string(i) +
                             " (subset popcount " + std::to_string(popcount) + ")");
        }
    }
    return mm;
}

SamplerReport validate_sampler(const MembershipMatrix& mm, size_t pair_samples,
                               uint64_t rng_seed) {
    if (mm.m() < 30) {
        throw CfmemError("validate_sampler: need at least 30 models, got " +
                         std::to_string(mm.m()));
    }
    SamplerReport rep;
    rep.m = mm.m();
    rep.n = mm.n();
    rep.modulus = mm.modulus;
    const double r = mm.effective_ratio();
    rep.expected_inclusion = r;
    rep.expected_agreement = r * r + (1.0 - r) * (1.0 - r);

    const Eigen::Index m = mm.m();
    const Eigen::Index n = mm.n();

    double sum_size = 0, sum_size2 = 0;
    for (Eigen::Index i = 0; i < m; ++i) {
        const double size = mm.bits.row(i).cast<double>().sum();
        sum_size += size;
        sum_size2 += size * size;
    }
    rep.mean_subset_size = sum_size / static_cast<double>(m);
    const double var =
        sum_size2 / static_cast<double>(m) - rep.mean_subset_size * rep.mean_subset_size;
    rep.stddev_subset_size = var > 0 ? std::sqrt(var) : 0.0;

    Eigen::VectorXd freq = mm.bits.cast<double>().colwise().mean();
    rep.mean_inclusion = freq.mean();
    rep.inclusion_histogram.assign(20, 0.0);
    bool degenerate = true;
    for (Eigen::Index j = 0; j < n; ++j) {
        int bin = std::min(19, static_cast<int>(freq[j] * 20.0));
        rep.inclusion_histogram[static_cast<size_t>(bin)] += 1.0;
        if (freq[j] != 0.0 && freq[j] != 1.0) {
            degenerate = false;
        }
    }
    for (auto& b : rep.inclusion_histogram) {
        b /= static_cast<double>(n);
    }
    rep.degenerate_frequencies = degenerate;

    // Pairwise IN/IN-or-OUT/OUT agreement over sampled index pairs.
    std::mt19937_64 rng(rng_seed);
    double agree_sum = 0;
    size_t used = 0;
    for (size_t s = 0; s < pair_samples; ++s) {
        auto a = static_cast<Eigen::Index>(rand_below(rng, static_cast<uint64_t>(n)));
        auto b = static_cast<Eigen::Index>(rand_below(rng, static_cast<uint64_t>(n)));
        if (a == b) {
            continue;
        }
        Eigen::Index agree = 0;
        for (Eigen::Index i = 0; i < m; ++i) {
            agree += (mm.bits(i, a) == mm.bits(i, b)) ? 1 : 0;
        }
        agree_sum += static_cast<double>(agree) / static_cast<double>(m);
        ++used;
    }
    rep.pairwise_agreement = used ? agree_sum / static_cast<double>(used) : 0.0;

    rep.ok = !rep.degenerate_frequencies &&
             std::abs(rep.mean_inclusion - rep.expected_inclusion) <= 0.02 &&
             std::abs(rep.pairwise_agreement - rep.expected_agreement) <= 0.01;
    return rep;
}

std::string SamplerReport::to_json() const {
    std::ostringstream os;
    os.precision(12);
    os << "{\n"
       << "  \"m\": " << m << ",\n"
       << "  \"n\": " << n << ",\n"
       << "  \"modulus\": " << modulus << ",\n"
       << "  \"expected_inclusion\": " << expected_inclusion << ",\n"
       << "  \"mean_subset_size\": " << mean_subset_size << ",\n"
       << "  \"stddev_subset_size\": " << stddev_subset_size << ",\n"
       << "  \"mean_inclusion\": " << mean_inclusion << ",\n"
       << "  \"inclusion_histogram\": [";
    for (size_t i = 0; i < inclusion_histogram.size(); ++i) {
        os << (i ? ", " : "") << inclusion_histogram[i];
    }
    os << "],\n"
       << "  \"pairwise_agreement\": " << pairwise_agreement << ",\n"
       << "  \"expected_agreement\": " << expected_agreement << ",\n"
       << "  \"degenerate_frequencies\": " << (degenerate_frequencies ? "true" : "false") << ",\n"
       << "  \"ok\": " << (ok ? "true" : "false") << "\n"
       << "}\n";
    return os.str();
}

void save_membership(const MembershipMatrix& mm, const std::filesystem::path& path) {
    FileSink sink(path);
    serialize_membership(mm, sink);
    sink.close();
}

MembershipMatrix load_membership(const std::filesystem::path& path) {
    ByteReader r(read_file_bytes(path));
    if (r.get_u32() != kMembershipMagic) {
        throw CfmemError("not a membership file: " + path.string());
    }
    if (r.get_u32() != kMembershipVersion) {
        throw CfmemError("unsupported membership version: " + path.string());
    }
    MembershipMatrix mm;
    const uint64_t m = r.get_u64();
    const uint64_t n = r.get_u64();
    mm.base_seed = r.get_u64();
    mm.modulus = r.get_u64();
    mm.bits.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    const size_t row_bytes = (static_cast<size_t>(n) + 7) / 8;
    std::vector<uint8_t> buf(row_bytes);
    for (uint64_t i = 0; i < m; ++i) {
        r.get_bytes(buf.data(), row_bytes);
        for (uint64_t j = 0; j < n; ++j) {
            mm.bits(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                (buf[j / 8] >> (j % 8)) & 1;
        }
    }
    if (!r.at_end()) {
        throw CfmemError("trailing bytes in membership file: " + path.string());
    }
    return mm;
}

uint64_t membership_hash(const MembershipMatrix& mm) {
    HashSink sink;
    serialize_membership(mm, sink);
    return sink.digest();
}

uint64_t membership_row_hash(const MembershipMatrix& mm, Eigen::Index row) {
    HashSink sink;
    auto bytes = pack_row(mm, row);
    put_u64(sink, static_cast<uint64_t>(mm.n()));
    put_bytes(sink, bytes);
    return sink.digest();
}

}  // namespace cfmem::sampler
