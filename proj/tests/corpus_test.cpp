#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"

#include "cfmem/corpus.hpp"
#include "cfmem/dedup.hpp"
#include "temp_dir.hpp"

using namespace cfmem;
using namespace cfmem::corpus;

namespace {

void write_text(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

SynthConfig small_config() {
    SynthConfig cfg;
    cfg.clusters = 2;
    cfg.dup_min = 4;
    cfg.dup_max = 4;
    cfg.n_unique = 6;
    cfg.len_min = 30;
    cfg.len_max = 50;
    cfg.vocab_size = 500;
    cfg.mutation_rate = 0.1;
    cfg.min_intra_sim = 0.7;
    cfg.seed = 11;
    cfg.n_validation = 4;
    cfg.n_planted = 2;
    return cfg;
}

}  // namespace

TEST_CASE("whitespace tokenizer splits on any blank run") {
    const auto tokens = tokenize("  alpha\tbeta \n gamma ", TokenizerKind::whitespace);
    REQUIRE(tokens.size() == 3);
    CHECK(tokens[0] == "alpha");
    CHECK(tokens[1] == "beta");
    CHECK(tokens[2] == "gamma");
    CHECK(tokenize("NoSplit", TokenizerKind::whitespace).size() == 1);
}

TEST_CASE("byte tokenizer emits one token per byte") {
    const auto tokens = tokenize("ab c", TokenizerKind::byte);
    REQUIRE(tokens.size() == 4);
    CHECK(tokens[0] == "a");
    CHECK(tokens[2] == " ");
}

TEST_CASE("domain extraction strips scheme and www") {
    CHECK(domain_from_url("https://www.metro.us/news/local-news/x") == "metro.us");
    CHECK(domain_from_url("http://metro.us/article") == "metro.us");
    CHECK(domain_from_url("https://Example.COM:8080/a") == "Example.COM");
    CHECK(domain_from_url("https://hotair.com") == "hotair.com");
    CHECK(domain_from_url("") == "unknown");
    CHECK(domain_from_url("not a url") == "unknown");
}

TEST_CASE("three-line ingest keeps file order") {
    TempDir dir("corpus");
    const auto input = dir / "train.jsonl";
    write_text(input,
               "{\"text\": \"the cat sat\", \"url\": \"https://www.metro.us/a\"}\n"
               "{\"text\": \"the dog ran\"}\n"
               "{\"text\": \"the cat ran\", \"id\": \"doc-3\"}\n");
    const auto corpus = ingest(input, IngestConfig{});
    REQUIRE(corpus.train.size() == 3);
    CHECK(corpus.train[0].index == 0);
    CHECK(corpus.train[1].index == 1);
    CHECK(corpus.train[2].index == 2);
    CHECK(corpus.train[0].domain == "metro.us");
    CHECK(corpus.train[1].domain == "unknown");
    CHECK(corpus.train[0].text == "the cat sat");

    // "the" outranks the rest by count; ties go to first occurrence.
    CHECK(corpus.vocab.lookup("the") == 1);
    CHECK(corpus.vocab.lookup("cat") == 2);
    CHECK(corpus.train[0].tokens[0] == 1);
}

TEST_CASE("vocabulary reserves UNK and BOS") {
    TempDir dir("corpus");
    const auto input = dir / "train.jsonl";
    write_text(input, "{\"text\": \"a b a\"}\n");
    const auto corpus = ingest(input, IngestConfig{});
    CHECK(corpus.vocab.lookup(Vocabulary::kUnkToken) == Vocabulary::kUnkId);
    // BOS is addressable by id but can never be produced by tokenization.
    CHECK(corpus.vocab.lookup(Vocabulary::kBosToken) == Vocabulary::kUnkId);
    CHECK(corpus.vocab.token(corpus.vocab.bos_id()) == Vocabulary::kBosToken);
    CHECK(corpus.vocab.prediction_limit() == corpus.vocab.bos_id());
    for (int32_t t : corpus.train[0].tokens) {
        CHECK(t < corpus.vocab.bos_id());
    }
}

TEST_CASE("validation tokens missing from the train vocabulary map to UNK") {
    TempDir dir("corpus");
    write_text(dir / "train.jsonl", "{\"text\": \"alpha beta alpha\"}\n");
    write_text(dir / "val.jsonl", "{\"text\": \"alpha gamma\"}\n");
    auto corpus = ingest(dir / "train.jsonl", IngestConfig{});
    ingest_split(corpus, dir / "val.jsonl", Split::validation, false);
    REQUIRE(corpus.validation.size() == 1);
    CHECK(corpus.validation[0].tokens[0] == corpus.vocab.lookup("alpha"));
    CHECK(corpus.validation[0].tokens[1] == Vocabulary::kUnkId);
}

TEST_CASE("malformed records abort with the line number unless skipped") {
    TempDir dir("corpus");
    const auto input = dir / "bad.jsonl";
    write_text(input,
               "{\"text\": \"fine here\"}\n"
               "{\"text\": 12}\n"
               "{\"text\": \"also fine\"}\n");
    CHECK_THROWS_WITH_AS(ingest(input, IngestConfig{}),
                         doctest::Contains("line 2"), CfmemError);
    IngestConfig config;
    config.skip_malformed = true;
    const auto corpus = ingest(input, config);
    CHECK(corpus.train.size() == 2);
}

TEST_CASE("empty input file is an error") {
    TempDir dir("corpus");
    write_text(dir / "empty.jsonl", "");
    CHECK_THROWS_AS(ingest(dir / "empty.jsonl", IngestConfig{}), CfmemError);
}

TEST_CASE("documents truncate to max_len tokens") {
    TempDir dir("corpus");
    write_text(dir / "train.jsonl", "{\"text\": \"a b c d e f g h\"}\n");
    IngestConfig config;
    config.max_len = 3;
    const auto corpus = ingest(dir / "train.jsonl", config);
    CHECK(corpus.train[0].tokens.size() == 3);
}

TEST_CASE("re-ingesting the same file is byte-identical on disk") {
    TempDir dir("corpus");
    const auto input = dir / "train.jsonl";
    write_text(input,
               "{\"text\": \"one two three two\", \"url\": \"https://a.org/x\"}\n"
               "{\"text\": \"four five one\"}\n");
    const auto a = ingest(input, IngestConfig{});
    const auto b = ingest(input, IngestConfig{});
    save_corpus(a, dir / "store_a");
    save_corpus(b, dir / "store_b");
    for (const char* name : {"docs.bin", "vocab.tsv", "meta.json"}) {
        CHECK(read_file_bytes(dir / "store_a" / name) ==
              read_file_bytes(dir / "store_b" / name));
    }
}

TEST_CASE("corpus store round trips") {
    TempDir dir("corpus");
    write_text(dir / "train.jsonl",
               "{\"text\": \"pack my box with five dozen jugs\", \"url\": \"http://a.io/1\"}\n"
               "{\"text\": \"pack my box again\"}\n");
    write_text(dir / "q.jsonl", "{\"text\": \"box jugs box\"}\n");
    auto corpus = ingest(dir / "train.jsonl", IngestConfig{});
    ingest_split(corpus, dir / "q.jsonl", Split::query, false);
    save_corpus(corpus, dir / "store");
    const auto back = load_corpus(dir / "store");
    CHECK(back.train.size() == corpus.train.size());
    CHECK(back.query.size() == 1);
    CHECK(back.vocab.size() == corpus.vocab.size());
    CHECK(back.train[1].text == corpus.train[1].text);
    CHECK(back.train[1].tokens == corpus.train[1].tokens);
    CHECK(back.query[0].tokens == corpus.query[0].tokens);
    CHECK(corpus_hash(back) == corpus_hash(corpus));
}

TEST_CASE("tampered corpus store fails the hash check") {
    TempDir dir("corpus");
    write_text(dir / "train.jsonl", "{\"text\": \"aa bb cc dd\"}\n");
    const auto corpus = ingest(dir / "train.jsonl", IngestConfig{});
    save_corpus(corpus, dir / "store");
    auto bytes = read_file_bytes(dir / "store" / "docs.bin");
    bytes[bytes.size() - 1] ^= 1;  // flip a bit inside the last token
    {
        FileSink sink(dir / "store" / "docs.bin");
        sink.write(bytes.data(), bytes.size());
    }
    CHECK_THROWS_AS(load_corpus(dir / "store"), CfmemError);
}

TEST_CASE("shingles cover every window and short docs collapse to one") {
    const std::vector<int32_t> tokens{1, 2, 3, 4, 5, 6, 7};
    std::vector<uint64_t> out;
    collect_shingles(tokens, 5, out);
    CHECK(out.size() == 3);
    out.clear();
    collect_shingles(std::span<const int32_t>(tokens.data(), 3), 5, out);
    CHECK(out.size() == 1);
    CHECK(out[0] == shingle_hash(std::span<const int32_t>(tokens.data(), 3)));
}

TEST_CASE("synthesize K=0 yields only unique docs") {
    SynthConfig cfg = small_config();
    cfg.clusters = 0;
    cfg.n_unique = 10;
    cfg.n_validation = 0;
    cfg.n_planted = 0;
    const auto corpus = synthesize(cfg);
    REQUIRE(corpus.train.size() == 10);
    for (const auto& doc : corpus.train) {
        CHECK(doc.domain == cfg.unique_domain);
    }
}

TEST_CASE("synthesize zero mutation clones the template") {
    SynthConfig cfg = small_config();
    cfg.clusters = 1;
    cfg.dup_min = 5;
    cfg.dup_max = 5;
    cfg.n_unique = 0;
    cfg.n_validation = 0;
    cfg.n_planted = 0;
    cfg.mutation_rate = 0.0;
    const auto corpus = synthesize(cfg);
    REQUIRE(corpus.train.size() == 5);
    for (const auto& doc : corpus.train) {
        CHECK(doc.text == corpus.train[0].text);
        CHECK(doc.domain == cfg.cluster_domain);
    }
}

TEST_CASE("synthesize cluster similarity stays inside the configured band") {
    const SynthConfig cfg = small_config();
    const auto corpus = synthesize(cfg);
    REQUIRE(corpus.train.size() == 2 * 4 + 6);
    const auto& meta = corpus.metadata_json;
    CHECK(meta.find("ground_truth") != std::string::npos);
    for (size_t i = 0; i < corpus.train.size(); ++i) {
        for (size_t j = i + 1; j < corpus.train.size(); ++j) {
            const double sim =
                dedup::edit_similarity(corpus.train[i].tokens, corpus.train[j].tokens);
            const bool same_cluster =
                i / 4 == j / 4 && corpus.train[i].domain == cfg.cluster_domain &&
                corpus.train[j].domain == cfg.cluster_domain;
            if (same_cluster) {
                CHECK(sim >= cfg.min_intra_sim);
            } else {
                CHECK(sim < 0.5);
            }
        }
    }
}

TEST_CASE("synthesize is deterministic in the seed") {
    const SynthConfig cfg = small_config();
    const auto a = synthesize(cfg);
    const auto b = synthesize(cfg);
    CHECK(corpus_hash(a) == corpus_hash(b));
    SynthConfig other = cfg;
    other.seed ^= 1;
    CHECK(corpus_hash(synthesize(other)) != corpus_hash(a));
}

TEST_CASE("synthesize planted pairs reference unique train docs") {
    const SynthConfig cfg = small_config();
    const auto corpus = synthesize(cfg);
    REQUIRE(corpus.validation.size() == 4);
    // Planted copies come first in the validation split and stay close to
    // their listed source.
    const auto meta = corpus.metadata_json;
    CHECK(meta.find("planted_pairs") != std::string::npos);
    for (int p = 0; p < cfg.n_planted; ++p) {
        double best = -1;
        for (const auto& t : corpus.train) {
            best = std::max(best, dedup::edit_similarity(corpus.validation[p].tokens,
                                                         t.tokens));
        }
        CHECK(best >= 0.9);
    }
}

TEST_CASE("synthesize rejects a vocabulary too small for unique shingles") {
    SynthConfig cfg = small_config();
    // 2^5 = 32 possible width-5 shingles cannot cover 40 unique docs.
    cfg.clusters = 0;
    cfg.n_validation = 0;
    cfg.n_planted = 0;
    cfg.vocab_size = 2;
    cfg.len_min = 5;
    cfg.len_max = 5;
    cfg.n_unique = 40;
    CHECK_THROWS_WITH_AS(synthesize(cfg), doctest::Contains("vocabulary too small"),
                         CfmemError);
}

TEST_CASE("synth config round trips through json") {
    const SynthConfig cfg = small_config();
    TempDir dir("corpus");
    write_text(dir / "cfg.json", cfg.to_json());
    const auto back = SynthConfig::from_json_file(dir / "cfg.json");
    CHECK(back.clusters == cfg.clusters);
    CHECK(back.dup_min == cfg.dup_min);
    CHECK(back.n_unique == cfg.n_unique);
    CHECK(back.seed == cfg.seed);
    CHECK(back.mutation_rate == cfg.mutation_rate);
    CHECK(back.unique_domain == cfg.unique_domain);
}
