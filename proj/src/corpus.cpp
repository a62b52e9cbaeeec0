#include "cfmem/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

#include "cfmem/sampler.hpp"

namespace cfmem::corpus {

namespace {

constexpr uint32_t kDocsMagic = 0x43444643;  // "CFDC"
constexpr uint32_t kDocsVersion = 1;
constexpr int kShingleWidth = 5;

std::string escape_tsv(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '\\': out += "\\\\"; break;
            case '\t': out += "\\t"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            default: out += c;
        }
    }
    return out;
}

std::string unescape_tsv(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '\\' || i + 1 == s.size()) {
            out += s[i];
            continue;
        }
        ++i;
        switch (s[i]) {
            case '\\': out += '\\'; break;
            case 't': out += '\t'; break;
            case 'n': out += '\n'; break;
            case 'r': out += '\r'; break;
            default: throw CfmemError("vocab.tsv: bad escape sequence");
        }
    }
    return out;
}

void serialize_document(ByteSink& sink, const Document& doc) {
    put_u64(sink, static_cast<uint64_t>(doc.index));
    put_string(sink, doc.domain);
    put_string(sink, doc.text);
    put_u32(sink, static_cast<uint32_t>(doc.tokens.size()));
    for (int32_t t : doc.tokens) {
        put_u32(sink, static_cast<uint32_t>(t));
    }
}

void serialize_docs(ByteSink& sink, const Corpus& corpus) {
    put_u32(sink, kDocsMagic);
    put_u32(sink, kDocsVersion);
    put_u8(sink, static_cast<uint8_t>(corpus.tokenizer));
    put_u32(sink, static_cast<uint32_t>(corpus.max_len));
    for (Split s : {Split::train, Split::validation, Split::query}) {
        const auto& docs = corpus.split(s);
        put_u64(sink, docs.size());
        for (const auto& doc : docs) {
            serialize_document(sink, doc);
        }
    }
}

void serialize_vocab(ByteSink& sink, const Vocabulary& vocab) {
    for (int32_t id = 0; id < vocab.size(); ++id) {
        std::string line = std::to_string(id);
        line += '\t';
        line += escape_tsv(vocab.token(id));
        line += '\t';
        line += std::to_string(vocab.count(id));
        line += '\n';
        sink.write(line.data(), line.size());
    }
}

struct ParsedRecord {
    std::string text;
    std::string domain;
};

// One JSONL record; throws CfmemError describing the defect.
ParsedRecord parse_record(const std::string& line, size_t line_no) {
    nlohmann::json rec;
    try {
        rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw CfmemError("line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
    }
    if (!rec.is_object() || !rec.contains("text") || !rec["text"].is_string()) {
        throw CfmemError("line " + std::to_string(line_no) + ": missing string field \"text\"");
    }
    ParsedRecord out;
    out.text = rec["text"].get<std::string>();
    if (rec.contains("url") && rec["url"].is_string()) {
        out.domain = domain_from_url(rec["url"].get<std::string>());
    } else {
        out.domain = "unknown";
    }
    return out;
}

struct RawDoc {
    ParsedRecord rec;
    std::vector<std::string> raw_tokens;
};

std::vector<RawDoc> read_jsonl(const std::filesystem::path& path, TokenizerKind tok,
                               int max_len, bool skip_malformed, size_t* skipped) {
    std::ifstream in(path);
    if (!in) {
        throw CfmemError("cannot open input: " + path.string());
    }
    std::vector<RawDoc> docs;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        try {
            RawDoc d;
            d.rec = parse_record(line, line_no);
            d.raw_tokens = tokenize(d.rec.text, tok);
            if (d.raw_tokens.empty()) {
                throw CfmemError("line " + std::to_string(line_no) + ": document has no tokens");
            }
            if (static_cast<int>(d.raw_tokens.size()) > max_len) {
                d.raw_tokens.resize(static_cast<size_t>(max_len));
            }
            docs.push_back(std::move(d));
        } catch (const CfmemError&) {
            if (!skip_malformed) {
                throw;
            }
            ++*skipped;
        }
    }
    if (line_no == 0) {
        throw CfmemError("empty input file: " + path.string());
    }
    if (docs.empty()) {
        throw CfmemError("no usable records in " + path.string());
    }
    return docs;
}

}  // namespace

uint64_t shingle_hash(std::span<const int32_t> tokens) {
    Fnv1a64 h;
    for (int32_t t : tokens) {
        uint32_t v = static_cast<uint32_t>(t);
        uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                        static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
        h.update(b, 4);
    }
    return h.digest();
}

void collect_shingles(std::span<const int32_t> tokens, int width,
                      std::vector<uint64_t>& out) {
    const size_t w = static_cast<size_t>(width);
    const size_t n = tokens.size();
    if (n < w) {
        out.push_back(shingle_hash(tokens));
        return;
    }
    for (size_t i = 0; i + w <= n; ++i) {
        out.push_back(shingle_hash(tokens.subspan(i, w)));
    }
}

const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::query: return "query";
    }
    throw CfmemError("unknown split tag");
}

std::optional<Split> split_from_name(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "validation") return Split::validation;
    if (name == "query") return Split::query;
    return std::nullopt;
}

Vocabulary::Vocabulary() {
    id_to_token_.push_back(kUnkToken);
    counts_.push_back(0);
    token_to_id_[kUnkToken] = kUnkId;
}

void Vocabulary::add_entry(const std::string& token, int64_t count) {
    if (finalized_) {
        throw CfmemError("vocabulary is frozen");
    }
    if (token == kUnkToken || token == kBosToken) {
        throw CfmemError("reserved token name: " + token);
    }
    auto [it, inserted] = token_to_id_.emplace(token, size());
    if (!inserted) {
        throw CfmemError("duplicate vocabulary token: " + token);
    }
    (void)it;
    id_to_token_.push_back(token);
    counts_.push_back(count);
}

void Vocabulary::set_unk_count(int64_t count) {
    counts_[0] = count;
}

void Vocabulary::finalize() {
    if (finalized_) {
        throw CfmemError("vocabulary already finalized");
    }
    // BOS is deliberately absent from the lookup map: raw text can never
    // produce it, so it stays a pure context symbol.
    id_to_token_.push_back(kBosToken);
    counts_.push_back(0);
    finalized_ = true;
}

int32_t Vocabulary::lookup(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnkId : it->second;
}

const std::vector<Document>& Corpus::split(Split s) const {
    switch (s) {
        case Split::train: return train;
        case Split::validation: return validation;
        case Split::query: return query;
    }
    throw CfmemError("unknown split tag");
}

std::vector<Document>& Corpus::split(Split s) {
    return const_cast<std::vector<Document>&>(static_cast<const Corpus*>(this)->split(s));
}

std::vector<std::string> tokenize(std::string_view text, TokenizerKind kind) {
    std::vector<std::string> out;
    if (kind == TokenizerKind::byte) {
        out.reserve(text.size());
        for (char c : text) {
            out.emplace_back(1, c);
        }
        return out;
    }
    size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) {
            ++i;
        }
        size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) {
            ++i;
        }
        if (i > start) {
            out.emplace_back(text.substr(start, i - start));
        }
    }
    return out;
}

std::string domain_from_url(std::string_view url) {
    if (url.empty()) {
        return "unknown";
    }
    size_t start = 0;
    if (auto p = url.find("://"); p != std::string_view::npos) {
        start = p + 3;
    }
    size_t end = url.find_first_of("/?#:", start);
    if (end == std::string_view::npos) {
        end = url.size();
    }
    std::string_view host = url.substr(start, end - start);
    if (host.substr(0, 4) == "www.") {
        host.remove_prefix(4);
    }
    if (host.empty() || host.find_first_of(" \t") != std::string_view::npos) {
        return "unknown";
    }
    return std::string(host);
}

Corpus ingest(const std::filesystem::path& path, const IngestConfig& config) {
    if (config.max_len < 1) {
        throw CfmemError("max_len must be >= 1");
    }
    size_t skipped = 0;
    auto raw = read_jsonl(path, config.tokenizer, config.max_len, config.skip_malformed,
                          &skipped);

    // Frequency-ranked vocabulary from the train split, ties by first occurrence.
    struct Tally {
        int64_t count{0};
        size_t first{0};
    };
    std::unordered_map<std::string, Tally> tally;
    size_t occurrence = 0;
    for (const auto& d : raw) {
        for (const auto& tok : d.raw_tokens) {
            auto [it, inserted] = tally.emplace(tok, Tally{0, occurrence});
            it->second.count += 1;
            ++occurrence;
            (void)inserted;
        }
    }
    std::vector<std::pair<std::string, Tally>> ranked;
    ranked.reserve(tally.size());
    int64_t unk_count = 0;
    for (auto& [tok, t] : tally) {
        if (tok == Vocabulary::kUnkToken || tok == Vocabulary::kBosToken ||
            t.count < config.min_count) {
            unk_count += t.count;
        } else {
            ranked.emplace_back(tok, t);
        }
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second.count != b.second.count) {
            return a.second.count > b.second.count;
        }
        return a.second.first < b.second.first;
    });
    if (static_cast<int>(ranked.size()) > config.max_vocab) {
        for (size_t i = static_cast<size_t>(config.max_vocab); i < ranked.size(); ++i) {
            unk_count += ranked[i].second.count;
        }
        ranked.resize(static_cast<size_t>(config.max_vocab));
    }

    Corpus corpus;
    corpus.tokenizer = config.tokenizer;
    corpus.max_len = config.max_len;
    for (const auto& [tok, t] : ranked) {
        corpus.vocab.add_entry(tok, t.count);
    }
    corpus.vocab.set_unk_count(unk_count);
    corpus.vocab.finalize();

    corpus.train.reserve(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) {
        Document doc;
        doc.index = static_cast<int64_t>(i);
        doc.domain = raw[i].rec.domain;
        doc.text = std::move(raw[i].rec.text);
        doc.split = Split::train;
        doc.tokens.reserve(raw[i].raw_tokens.size());
        for (const auto& tok : raw[i].raw_tokens) {
            doc.tokens.push_back(corpus.vocab.lookup(tok));
        }
        corpus.train.push_back(std::move(doc));
    }

    nlohmann::json meta;
    meta["source"] = path.filename().string();
    meta["ingest"] = {{"tokenizer", config.tokenizer == TokenizerKind::byte ? "byte"
                                                                            : "whitespace"},
                      {"max_len", config.max_len},
                      {"max_vocab", config.max_vocab},
                      {"min_count", config.min_count},
                      {"skipped_lines", skipped}};
    corpus.metadata_json = meta.dump();
    return corpus;
}

void ingest_split(Corpus& corpus, const std::filesystem::path& path, Split split,
                  bool skip_malformed) {
    if (split == Split::train) {
        throw CfmemError("train split is built by ingest(), not ingest_split()");
    }
    if (!corpus.vocab.finalized()) {
        throw CfmemError("corpus vocabulary is not frozen");
    }
    size_t skipped = 0;
    auto raw = read_jsonl(path, corpus.tokenizer, corpus.max_len, skip_malformed, &skipped);
    auto& docs = corpus.split(split);
    for (auto& d : raw) {
        Document doc;
        doc.index = static_cast<int64_t>(docs.size());
        doc.domain = d.rec.domain;
        doc.text = std::move(d.rec.text);
        doc.split = split;
        doc.tokens.reserve(d.raw_tokens.size());
        for (const auto& tok : d.raw_tokens) {
            doc.tokens.push_back(corpus.vocab.lookup(tok));
        }
        docs.push_back(std::move(doc));
    }
    auto meta = nlohmann::json::parse(corpus.metadata_json);
    meta[std::string(split_name(split)) + "_source"] = path.filename().string();
    corpus.metadata_json = meta.dump();
}

SynthConfig SynthConfig::from_json_file(const std::filesystem::path& path) {
    auto bytes = read_file_bytes(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
        throw CfmemError("bad synth config " + path.string() + ": " + e.what());
    }
    SynthConfig c;
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) {
            j.at(key).get_to(field);
        }
    };
    get("clusters", c.clusters);
    get("dup_min", c.dup_min);
    get("dup_max", c.dup_max);
    get("dup_step", c.dup_step);
    get("n_unique", c.n_unique);
    get("len_min", c.len_min);
    get("len_max", c.len_max);
    get("vocab_size", c.vocab_size);
    get("mutation_rate", c.mutation_rate);
    get("min_intra_sim", c.min_intra_sim);
    get("seed", c.seed);
    get("n_validation", c.n_validation);
    get("n_planted", c.n_planted);
    get("planted_mutation_rate", c.planted_mutation_rate);
    get("unique_domain", c.unique_domain);
    get("cluster_domain", c.cluster_domain);
    return c;
}

std::string SynthConfig::to_json() const {
    nlohmann::json j{{"clusters", clusters},
                     {"dup_min", dup_min},
                     {"dup_max", dup_max},
                     {"dup_step", dup_step},
                     {"n_unique", n_unique},
                     {"len_min", len_min},
                     {"len_max", len_max},
                     {"vocab_size", vocab_size},
                     {"mutation_rate", mutation_rate},
                     {"min_intra_sim", min_intra_sim},
                     {"seed", seed},
                     {"n_validation", n_validation},
                     {"n_planted", n_planted},
                     {"planted_mutation_rate", planted_mutation_rate},
                     {"unique_domain", unique_domain},
                     {"cluster_domain", cluster_domain}};
    return j.dump(2);
}

Corpus synthesize(const SynthConfig& cfg) {
    if (cfg.clusters < 0 || cfg.n_unique < 0 || cfg.n_validation < 0 || cfg.n_planted < 0) {
        throw CfmemError("synthesize: negative count in config");
    }
    if (cfg.clusters > 0 && (cfg.dup_min < 2 || cfg.dup_max < cfg.dup_min || cfg.dup_step < 1)) {
        throw CfmemError("synthesize: cluster sizes need 2 <= dup_min <= dup_max, dup_step >= 1");
    }
    if (cfg.clusters == 0 && cfg.n_unique == 0) {
        throw CfmemError("synthesize: empty corpus requested");
    }
    if (cfg.len_min < 1 || cfg.len_max < cfg.len_min) {
        throw CfmemError("synthesize: need 1 <= len_min <= len_max");
    }
    if (cfg.vocab_size < 2) {
        throw CfmemError("synthesize: vocab_size must be >= 2");
    }
    if (cfg.mutation_rate < 0 || cfg.mutation_rate >= 1 || cfg.planted_mutation_rate < 0 ||
        cfg.planted_mutation_rate >= 1) {
        throw CfmemError("synthesize: mutation rates must lie in [0,1)");
    }
    if (cfg.min_intra_sim <= 0 || cfg.min_intra_sim > 1) {
        throw CfmemError("synthesize: min_intra_sim must lie in (0,1]");
    }
    if (cfg.n_planted > cfg.n_validation) {
        throw CfmemError("synthesize: n_planted exceeds n_validation");
    }
    if (cfg.n_planted > 0 && cfg.n_unique < cfg.n_planted) {
        throw CfmemError("synthesize: n_planted exceeds n_unique source pool");
    }

    // Rough birthday bound: the token space must dwarf the square of the
    // shingle population or uniqueness retries cannot succeed.
    {
        const int steps = cfg.dup_step >= 1 ? (cfg.dup_max - cfg.dup_min) / cfg.dup_step + 1 : 1;
        double total_docs = cfg.n_unique + cfg.n_validation;
        for (int k = 0; k < cfg.clusters; ++k) {
            total_docs += cfg.dup_min + cfg.dup_step * (k % steps);
        }
        const double shingles = total_docs * cfg.len_max;
        const double space =
            std::pow(static_cast<double>(cfg.vocab_size),
                     std::min(kShingleWidth, cfg.len_min));
        if (shingles * shingles > 0.01 * space) {
            throw CfmemError(
                "synthesize: vocabulary too small to guarantee 5-token shingle uniqueness");
        }
    }

    std::mt19937_64 rng(cfg.seed);
    const auto v = static_cast<uint64_t>(cfg.vocab_size);

    auto gen_doc = [&](int len) {
        std::vector<int32_t> tokens(static_cast<size_t>(len));
        for (auto& t : tokens) {
            t = static_cast<int32_t>(1 + rand_below(rng, v));
        }
        return tokens;
    };
    auto pick_len = [&]() {
        return cfg.len_min +
               static_cast<int>(rand_below(rng, static_cast<uint64_t>(cfg.len_max - cfg.len_min + 1)));
    };
    // Substitution-only mutation; the cap keeps every mutant within
    // (1 - max_frac) edit similarity of its source, so pairwise cluster
    // similarity stays >= min_intra_sim by the triangle inequality.
    auto mutate = [&](const std::vector<int32_t>& src, double rate, double max_frac) {
        auto out = src;
        const auto cap = static_cast<size_t>(std::floor(max_frac * static_cast<double>(src.size())));
        size_t used = 0;
        for (auto& t : out) {
            if (used >= cap) {
                break;
            }
            if (rand_unit(rng) < rate) {
                auto repl = static_cast<int32_t>(1 + rand_below(rng, v - 1));
                if (repl >= t) {
                    ++repl;
                }
                t = repl;
                ++used;
            }
        }
        return out;
    };

    std::unordered_set<uint64_t> registry;
    std::vector<uint64_t> shingles;
    auto is_fresh = [&](const std::vector<int32_t>& tokens) {
        shingles.clear();
        collect_shingles(tokens, kShingleWidth, shingles);
        for (uint64_t h : shingles) {
            if (registry.count(h)) {
                return false;
            }
        }
        return true;
    };
    auto register_doc = [&](const std::vector<int32_t>& tokens) {
        shingles.clear();
        collect_shingles(tokens, kShingleWidth, shingles);
        registry.insert(shingles.begin(), shingles.end());
    };
    auto gen_fresh = [&]() {
        for (int attempt = 0; attempt < 64; ++attempt) {
            auto tokens = gen_doc(pick_len());
            if (is_fresh(tokens)) {
                register_doc(tokens);
                return tokens;
            }
        }
        throw CfmemError(
            "synthesize: vocabulary too small to guarantee 5-token shingle uniqueness");
    };

    std::vector<std::vector<int32_t>> train_tokens;
    std::vector<int> train_cluster;
    const int steps = cfg.clusters > 0 ? (cfg.dup_max - cfg.dup_min) / cfg.dup_step + 1 : 1;
    const double member_frac = (1.0 - cfg.min_intra_sim) / 2.0;
    for (int k = 0; k < cfg.clusters; ++k) {
        const int size = cfg.dup_min + cfg.dup_step * (k % steps);
        auto tmpl = gen_doc(pick_len());
        for (int i = 0; i < size; ++i) {
            auto member = mutate(tmpl, cfg.mutation_rate, member_frac);
            register_doc(member);
            train_tokens.push_back(std::move(member));
            train_cluster.push_back(k);
        }
    }
    const auto unique_start = train_tokens.size();
    for (int u = 0; u < cfg.n_unique; ++u) {
        train_tokens.push_back(gen_fresh());
        train_cluster.push_back(-1);
    }

    // Validation: planted near-copies of evenly spaced unique train docs,
    // then fresh novel docs. The planted cap keeps EditSim >= 1 - 2*rate.
    std::vector<std::vector<int32_t>> val_tokens;
    std::vector<std::pair<int64_t, int64_t>> planted_pairs;
    for (int p = 0; p < cfg.n_planted; ++p) {
        const auto src =
            unique_start + static_cast<size_t>(p) * static_cast<size_t>(cfg.n_unique) /
                               static_cast<size_t>(cfg.n_planted);
        val_tokens.push_back(
            mutate(train_tokens[src], cfg.planted_mutation_rate, 2.0 * cfg.planted_mutation_rate));
        planted_pairs.emplace_back(static_cast<int64_t>(val_tokens.size() - 1),
                                   static_cast<int64_t>(src));
    }
    for (int i = cfg.n_planted; i < cfg.n_validation; ++i) {
        val_tokens.push_back(gen_fresh());
    }

    Corpus corpus;
    corpus.tokenizer = TokenizerKind::whitespace;
    corpus.max_len = std::max(cfg.len_max, 512);
    std::vector<int64_t> counts(static_cast<size_t>(cfg.vocab_size) + 1, 0);
    auto tally = [&](const std::vector<std::vector<int32_t>>& docs) {
        for (const auto& d : docs) {
            for (int32_t t : d) {
                counts[static_cast<size_t>(t)] += 1;
            }
        }
    };
    tally(train_tokens);
    tally(val_tokens);
    for (int32_t id = 1; id <= cfg.vocab_size; ++id) {
        corpus.vocab.add_entry("w" + std::to_string(id), counts[static_cast<size_t>(id)]);
    }
    corpus.vocab.finalize();

    auto make_doc = [&](std::vector<int32_t>&& tokens, int64_t index, Split split,
                        const std::string& domain) {
        Document doc;
        doc.index = index;
        doc.split = split;
        doc.domain = domain;
        std::string text;
        for (size_t i = 0; i < tokens.size(); ++i) {
            if (i) {
                text += ' ';
            }
            text += corpus.vocab.token(tokens[i]);
        }
        doc.text = std::move(text);
        doc.tokens = std::move(tokens);
        return doc;
    };
    for (size_t i = 0; i < train_tokens.size(); ++i) {
        corpus.train.push_back(make_doc(std::move(train_tokens[i]), static_cast<int64_t>(i),
                                        Split::train,
                                        train_cluster[i] >= 0 ? cfg.cluster_domain
                                                              : cfg.unique_domain));
    }
    for (size_t i = 0; i < val_tokens.size(); ++i) {
        corpus.validation.push_back(make_doc(std::move(val_tokens[i]), static_cast<int64_t>(i),
                                             Split::validation, "validation.test"));
    }

    nlohmann::json meta;
    meta["source"] = "synthetic";
    meta["synth"] = nlohmann::json::parse(cfg.to_json());
    nlohmann::json gt;
    gt["train_cluster"] = train_cluster;
    gt["cluster_count"] = cfg.clusters;
    auto pairs = nlohmann::json::array();
    for (auto [val, train] : planted_pairs) {
        pairs.push_back({{"validation", val}, {"train", train}});
    }
    gt["planted_pairs"] = pairs;
    meta["ground_truth"] = gt;
    corpus.metadata_json = meta.dump();
    return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        FileSink sink(dir / "docs.bin");
        serialize_docs(sink, corpus);
    }
    {
        FileSink sink(dir / "vocab.tsv");
        serialize_vocab(sink, corpus.vocab);
    }
    nlohmann::json meta;
    meta["tokenizer"] = corpus.tokenizer == TokenizerKind::byte ? "byte" : "whitespace";
    meta["max_len"] = corpus.max_len;
    char hex[20];
    std::snprintf(hex, sizeof(hex), "0x%016llx",
                  static_cast<unsigned long long>(corpus_hash(corpus)));
    meta["corpus_hash"] = hex;
    meta["metadata"] = nlohmann::json::parse(corpus.metadata_json);
    std::ofstream out(dir / "meta.json");
    if (!out) {
        throw CfmemError("cannot write " + (dir / "meta.json").string());
    }
    out << meta.dump(2) << '\n';
}

Corpus load_corpus(const std::filesystem::path& dir) {
    Corpus corpus;
    ByteReader reader(read_file_bytes(dir / "docs.bin"));
    if (reader.get_u32() != kDocsMagic) {
        throw CfmemError("not a corpus store: " + (dir / "docs.bin").string());
    }
    if (reader.get_u32() != kDocsVersion) {
        throw CfmemError("unsupported corpus store version");
    }
    corpus.tokenizer = static_cast<TokenizerKind>(reader.get_u8());
    corpus.max_len = static_cast<int>(reader.get_u32());
    for (Split s : {Split::train, Split::validation, Split::query}) {
        const uint64_t count = reader.get_u64();
        if (count > reader.remaining()) {
            throw CfmemError("corpus store: document count exceeds file size");
        }
        auto& docs = corpus.split(s);
        docs.reserve(count);
        for (uint64_t i = 0; i < count; ++i) {
            Document doc;
            doc.index = static_cast<int64_t>(reader.get_u64());
            if (doc.index != static_cast<int64_t>(i)) {
                throw CfmemError("corpus store: non-dense document indices");
            }
            doc.domain = reader.get_string();
            doc.text = reader.get_string();
            const uint32_t ntok = reader.get_u32();
            if (ntok == 0) {
                throw CfmemError("corpus store: empty document");
            }
            if (static_cast<uint64_t>(ntok) * 4 > reader.remaining()) {
                throw CfmemError("corpus store: token count exceeds file size");
            }
            doc.tokens.reserve(ntok);
            for (uint32_t t = 0; t < ntok; ++t) {
                doc.tokens.push_back(static_cast<int32_t>(reader.get_u32()));
            }
            doc.split = s;
            docs.push_back(std::move(doc));
        }
    }
    if (!reader.at_end()) {
        throw CfmemError("corpus store: trailing bytes in docs.bin");
    }

    const auto vocab_bytes = read_file_bytes(dir / "vocab.tsv");
    std::string content(vocab_bytes.begin(), vocab_bytes.end());
    std::istringstream lines(content);
    std::string line;
    int32_t id = 0;
    while (std::getline(lines, line)) {
        const auto t1 = line.find('\t');
        const auto t2 = line.find('\t', t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos) {
            throw CfmemError("vocab.tsv: expected id<TAB>token<TAB>count");
        }
        if (std::stoll(line.substr(0, t1)) != id) {
            throw CfmemError("vocab.tsv: ids out of order");
        }
        const std::string token = unescape_tsv(line.substr(t1 + 1, t2 - t1 - 1));
        const int64_t count = std::stoll(line.substr(t2 + 1));
        if (id == 0) {
            if (token != Vocabulary::kUnkToken) {
                throw CfmemError("vocab.tsv: id 0 must be " +
                                 std::string(Vocabulary::kUnkToken));
            }
            corpus.vocab.set_unk_count(count);
        } else if (token == Vocabulary::kBosToken) {
            corpus.vocab.finalize();
        } else {
            corpus.vocab.add_entry(token, count);
        }
        ++id;
    }
    if (!corpus.vocab.finalized()) {
        throw CfmemError("vocab.tsv: missing trailing " + std::string(Vocabulary::kBosToken));
    }
    if (corpus.vocab.size() != id) {
        throw CfmemError("vocab.tsv: entries after " + std::string(Vocabulary::kBosToken));
    }
    for (Split s : {Split::train, Split::validation, Split::query}) {
        for (const auto& doc : corpus.split(s)) {
            for (int32_t t : doc.tokens) {
                if (t < 0 || t >= corpus.vocab.bos_id()) {
                    throw CfmemError("corpus store: token id outside vocabulary");
                }
            }
        }
    }

    auto meta_bytes = read_file_bytes(dir / "meta.json");
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(meta_bytes.begin(), meta_bytes.end());
    } catch (const nlohmann::json::exception& e) {
        throw CfmemError("bad meta.json: " + std::string(e.what()));
    }
    if (meta.contains("metadata")) {
        corpus.metadata_json = meta["metadata"].dump();
    }
    if (meta.contains("corpus_hash")) {
        char hex[20];
        std::snprintf(hex, sizeof(hex), "0x%016llx",
                      static_cast<unsigned long long>(corpus_hash(corpus)));
        if (meta["corpus_hash"].get<std::string>() != hex) {
            throw CfmemError("corpus store hash mismatch: " + dir.string());
        }
    }
    return corpus;
}

uint64_t corpus_hash(const Corpus& corpus) {
    HashSink sink;
    serialize_docs(sink, corpus);
    serialize_vocab(sink, corpus.vocab);
    return sink.digest();
}

}  // namespace cfmem::corpus
