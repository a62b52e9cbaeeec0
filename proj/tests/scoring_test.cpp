#include <optional>
#include <vector>

#include "doctest.h"

#include "cfmem/corpus.hpp"
#include "cfmem/io.hpp"
#include "cfmem/models.hpp"
#include "cfmem/sampler.hpp"
#include "cfmem/scoring.hpp"
#include "temp_dir.hpp"

using namespace cfmem;
using namespace cfmem::scoring;

namespace {

struct Fixture {
    TempDir dir{"scoring"};
    corpus::Corpus corpus;
    sampler::MembershipMatrix membership;

    explicit Fixture(uint64_t seed) {
        corpus::SynthConfig cfg;
        cfg.clusters = 1;
        cfg.dup_min = 3;
        cfg.dup_max = 3;
        cfg.n_unique = 9;
        cfg.len_min = 12;
        cfg.len_max = 18;
        cfg.vocab_size = 60;
        cfg.seed = seed;
        cfg.n_validation = 4;
        corpus = corpus::synthesize(cfg);
        membership = sampler::sample_matrix(
            static_cast<Eigen::Index>(corpus.train.size()), 6, 0.5, 19);
    }

    std::filesystem::path train_ngram() {
        models::TrainerSpec spec;
        spec.ngram.order = 2;
        models::train_store(corpus, membership, spec, dir / "ngram", 1);
        return dir / "ngram";
    }

    std::filesystem::path train_neural(int epochs) {
        models::TrainerSpec spec;
        spec.kind = models::ModelKind::neural;
        spec.neural.epochs = epochs;
        spec.neural.dim = 4;
        spec.neural.context = 2;
        models::train_store(corpus, membership, spec, dir / "neural", 1);
        return dir / "neural";
    }
};

}  // namespace

TEST_CASE("score matrix rows reproduce individual model scores") {
    Fixture fx(31);
    const auto store = fx.train_ngram();
    const auto scores = build_scores(store, fx.corpus, corpus::Split::train, std::nullopt, 1);
    REQUIRE(scores.m() == 6);
    REQUIRE(scores.n_docs() == static_cast<Eigen::Index>(fx.corpus.train.size()));
    CHECK(scores.corpus_hash == corpus::corpus_hash(fx.corpus));
    CHECK(scores.membership_hash == sampler::membership_hash(fx.membership));
    CHECK(scores.checkpoint == 0);
    for (Eigen::Index i = 0; i < scores.n_docs(); ++i) {
        CHECK(scores.doc_indices[static_cast<size_t>(i)] == i);
    }

    const auto model = models::load_model(store / "model_2.bin");
    REQUIRE(model.ngram.has_value());
    for (size_t j = 0; j < fx.corpus.train.size(); ++j) {
        const float direct = models::per_token_accuracy(
            *model.ngram, fx.corpus.train[j].tokens, fx.corpus.vocab.bos_id());
        CHECK(scores.values(2, static_cast<Eigen::Index>(j)) == direct);
    }
}

TEST_CASE("scores cover the requested split") {
    Fixture fx(32);
    const auto store = fx.train_ngram();
    const auto val = build_scores(store, fx.corpus, corpus::Split::validation, std::nullopt, 1);
    CHECK(val.n_docs() == 4);
    CHECK(val.split == corpus::Split::validation);
    CHECK_THROWS_WITH_AS(
        build_scores(store, fx.corpus, corpus::Split::query, std::nullopt, 1),
        "eval split is empty: query", CfmemError);
}

TEST_CASE("ngram stores reject checkpoint selection") {
    Fixture fx(33);
    const auto store = fx.train_ngram();
    CHECK_THROWS_WITH_AS(build_scores(store, fx.corpus, corpus::Split::train, 1, 1),
                         "n-gram stores have no checkpoints", CfmemError);
    CHECK_THROWS_WITH_AS(build_scores_all_checkpoints(store, fx.corpus,
                                                      corpus::Split::train, 1),
                         "checkpoint sweep requires a neural model store", CfmemError);
}

TEST_CASE("scoring a different corpus fails the provenance check") {
    Fixture fx(34);
    const auto store = fx.train_ngram();
    Fixture other(35);
    CHECK_THROWS_WITH_AS(
        build_scores(store, other.corpus, corpus::Split::train, std::nullopt, 1),
        "model store was trained on a different corpus", CfmemError);
}

TEST_CASE("neural checkpoint selection matches the stored series") {
    Fixture fx(36);
    const auto store = fx.train_neural(3);
    const auto last = build_scores(store, fx.corpus, corpus::Split::train, std::nullopt, 1);
    CHECK(last.checkpoint == 3);
    const auto second = build_scores(store, fx.corpus, corpus::Split::train, 2, 1);
    CHECK(second.checkpoint == 2);
    CHECK_THROWS_AS(build_scores(store, fx.corpus, corpus::Split::train, 9, 1), CfmemError);

    // Epoch labels are 1-based, so checkpoint 2 is the second stored snapshot.
    const auto m0 = models::load_model(store / "model_0.bin");
    REQUIRE(m0.neural.has_value());
    const float direct = models::per_token_accuracy(
        m0.neural->models[1], fx.corpus.train[5].tokens, fx.corpus.vocab.bos_id());
    CHECK(second.values(0, 5) == direct);

    const auto sweep = build_scores_all_checkpoints(store, fx.corpus, corpus::Split::train, 1);
    REQUIRE(sweep.size() == 3);
    for (const auto& mat : sweep) {
        const auto direct = build_scores(store, fx.corpus, corpus::Split::train,
                                         mat.checkpoint, 1);
        CHECK((mat.values.array() == direct.values.array()).all());
        CHECK(mat.membership_hash == direct.membership_hash);
    }
}

TEST_CASE("score matrices round trip bit-exactly") {
    Fixture fx(37);
    const auto store = fx.train_ngram();
    auto scores = build_scores(store, fx.corpus, corpus::Split::train, std::nullopt, 1);
    // Pin the exact endpoint values the format must preserve.
    scores.values(0, 0) = 0.0f;
    scores.values(1, 0) = 1.0f;
    const auto path = fx.dir / "scores.bin";
    save_scores(path, scores);
    const auto back = load_scores(path);
    CHECK(back.split == scores.split);
    CHECK(back.checkpoint == scores.checkpoint);
    CHECK(back.corpus_hash == scores.corpus_hash);
    CHECK(back.membership_hash == scores.membership_hash);
    CHECK(back.spec_hash == scores.spec_hash);
    CHECK(back.doc_indices == scores.doc_indices);
    REQUIRE(back.values.rows() == scores.values.rows());
    REQUIRE(back.values.cols() == scores.values.cols());
    CHECK((back.values.array() == scores.values.array()).all());

    save_scores(fx.dir / "again.bin", back);
    CHECK(read_file_bytes(fx.dir / "again.bin") == read_file_bytes(path));
}

TEST_CASE("truncated score files are rejected") {
    Fixture fx(38);
    const auto store = fx.train_ngram();
    const auto scores = build_scores(store, fx.corpus, corpus::Split::train, std::nullopt, 1);
    const auto path = fx.dir / "scores.bin";
    save_scores(path, scores);
    auto bytes = read_file_bytes(path);
    bytes.resize(bytes.size() - 7);
    {
        FileSink sink(fx.dir / "short.bin");
        sink.write(bytes.data(), bytes.size());
    }
    CHECK_THROWS_AS(load_scores(fx.dir / "short.bin"), CfmemError);
    {
        FileSink sink(fx.dir / "junk.bin");
        const uint32_t magic = 0x12345678;
        sink.write(&magic, sizeof magic);
    }
    CHECK_THROWS_WITH_AS(load_scores(fx.dir / "junk.bin"),
                         doctest::Contains("not a score matrix"), CfmemError);
}

TEST_CASE("parallel scoring matches the single-threaded pass") {
    Fixture fx(39);
    const auto store = fx.train_ngram();
    const auto one = build_scores(store, fx.corpus, corpus::Split::train, std::nullopt, 1);
    const auto four = build_scores(store, fx.corpus, corpus::Split::train, std::nullopt, 4);
    CHECK((one.values.array() == four.values.array()).all());
}
