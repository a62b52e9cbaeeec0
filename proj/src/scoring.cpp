#include "cfmem/scoring.hpp"

#include <algorithm>
#include <atomic>

#include "cfmem/models.hpp"
#include "cfmem/sampler.hpp"

namespace cfmem::scoring {

namespace {

constexpr uint32_t kScoresMagic = 0x43534643;  // "CFSC"
constexpr uint32_t kScoresVersion = 1;

std::vector<const corpus::Document*> split_docs(const corpus::Corpus& corpus,
                                                corpus::Split split) {
    const auto& docs = corpus.split(split);
    if (docs.empty()) {
        throw CfmemError(std::string("eval split is empty: ") + corpus::split_name(split));
    }
    std::vector<const corpus::Document*> out;
    out.reserve(docs.size());
    for (const auto& doc : docs) {
        out.push_back(&doc);
    }
    return out;
}

models::StoredModel load_indexed_model(const std::filesystem::path& store_dir, size_t i,
                                       const models::StoreManifest& manifest,
                                       uint64_t corpus_hash) {
    models::StoredModel model;
    try {
        model = models::load_model(store_dir / ("model_" + std::to_string(i) + ".bin"));
    } catch (const CfmemError& e) {
        throw CfmemError("model " + std::to_string(i) + ": " + e.what());
    }
    if (model.index != i) {
        throw CfmemError("model " + std::to_string(i) + ": file carries index " +
                         std::to_string(model.index));
    }
    if (model.corpus_hash != corpus_hash) {
        throw CfmemError("model " + std::to_string(i) +
                         ": corpus provenance mismatch (trained on a different corpus)");
    }
    if (model.spec_hash != manifest.spec_hash) {
        throw CfmemError("model " + std::to_string(i) +
                         ": trainer spec does not match the store manifest");
    }
    return model;
}

// Scores one model over the doc list into a row of the matrix. For neural
// models `which` picks the checkpoint; the batched path equals the
// per-position per_token_accuracy evaluation cell for cell.
void score_row(const models::StoredModel& model, size_t which_checkpoint,
               const std::vector<const corpus::Document*>& docs, int32_t bos_id,
               Eigen::MatrixXf& values, Eigen::Index row) {
    if (model.ngram) {
        for (size_t j = 0; j < docs.size(); ++j) {
            values(row, static_cast<Eigen::Index>(j)) =
                models::per_token_accuracy(*model.ngram, docs[j]->tokens, bos_id);
        }
        return;
    }
    const auto& lm = model.neural->models.at(which_checkpoint);
    const auto acc = lm.score_documents(docs);
    for (size_t j = 0; j < docs.size(); ++j) {
        values(row, static_cast<Eigen::Index>(j)) = acc[j];
    }
}

}  // namespace

ScoreMatrix build_scores(const std::filesystem::path& store_dir, const corpus::Corpus& corpus,
                         corpus::Split split, std::optional<int> checkpoint, int jobs) {
    const auto manifest = models::StoreManifest::from_file(store_dir);
    const auto docs = split_docs(corpus, split);
    const uint64_t c_hash = corpus::corpus_hash(corpus);
    if (manifest.corpus_hash != c_hash) {
        throw CfmemError("model store was trained on a different corpus");
    }
    if (manifest.spec.kind == models::ModelKind::ngram && checkpoint.has_value()) {
        throw CfmemError("n-gram stores have no checkpoints");
    }

    ScoreMatrix scores;
    scores.split = split;
    scores.corpus_hash = c_hash;
    scores.membership_hash = manifest.membership_hash;
    scores.spec_hash = manifest.spec_hash;
    scores.values.resize(manifest.m, static_cast<Eigen::Index>(docs.size()));
    scores.doc_indices.resize(docs.size());
    for (size_t j = 0; j < docs.size(); ++j) {
        scores.doc_indices[j] = docs[j]->index;
    }

    std::atomic<int> label{0};
    parallel_for(static_cast<size_t>(manifest.m), jobs, [&](size_t i) {
        const auto model = load_indexed_model(store_dir, i, manifest, c_hash);
        size_t which = 0;
        if (model.neural) {
            const auto& epochs = model.neural->epochs;
            if (!checkpoint.has_value()) {
                which = epochs.size() - 1;
            } else {
                auto it = std::find(epochs.begin(), epochs.end(), *checkpoint);
                if (it == epochs.end()) {
                    throw CfmemError("model " + std::to_string(i) + ": no checkpoint " +
                                     std::to_string(*checkpoint));
                }
                which = static_cast<size_t>(it - epochs.begin());
            }
            label.store(model.neural->epochs[which]);
        }
        score_row(model, which, docs, corpus.vocab.bos_id(), scores.values,
                  static_cast<Eigen::Index>(i));
    });
    scores.checkpoint = label.load();
    return scores;
}

std::vector<ScoreMatrix> build_scores_all_checkpoints(const std::filesystem::path& store_dir,
                                                      const corpus::Corpus& corpus,
                                                      corpus::Split split, int jobs) {
    const auto manifest = models::StoreManifest::from_file(store_dir);
    if (manifest.spec.kind != models::ModelKind::neural) {
        throw CfmemError("checkpoint sweep requires a neural model store");
    }
    const auto docs = split_docs(corpus, split);
    const uint64_t c_hash = corpus::corpus_hash(corpus);
    if (manifest.corpus_hash != c_hash) {
        throw CfmemError("model store was trained on a different corpus");
    }

    const int epochs = manifest.spec.neural.epochs;
    std::vector<ScoreMatrix> out(static_cast<size_t>(epochs));
    for (int e = 0; e < epochs; ++e) {
        auto& scores = out[static_cast<size_t>(e)];
        scores.split = split;
        scores.checkpoint = e + 1;
        scores.corpus_hash = c_hash;
        scores.membership_hash = manifest.membership_hash;
        scores.spec_hash = manifest.spec_hash;
        scores.values.resize(manifest.m, static_cast<Eigen::Index>(docs.size()));
        scores.doc_indices.resize(docs.size());
        for (size_t j = 0; j < docs.size(); ++j) {
            scores.doc_indices[j] = docs[j]->index;
        }
    }

    parallel_for(static_cast<size_t>(manifest.m), jobs, [&](size_t i) {
        const auto model = load_indexed_model(store_dir, i, manifest, c_hash);
        if (!model.neural || static_cast<int>(model.neural->models.size()) != epochs) {
            throw CfmemError("model " + std::to_string(i) +
                             ": checkpoint count differs from the trainer spec");
        }
        for (int e = 0; e < epochs; ++e) {
            score_row(model, static_cast<size_t>(e), docs, corpus.vocab.bos_id(),
                      out[static_cast<size_t>(e)].values, static_cast<Eigen::Index>(i));
        }
    });
    return out;
}

void save_scores(const std::filesystem::path& path, const ScoreMatrix& scores) {
    FileSink sink(path);
    put_u32(sink, kScoresMagic);
    put_u32(sink, kScoresVersion);
    put_u64(sink, static_cast<uint64_t>(scores.m()));
    put_u64(sink, static_cast<uint64_t>(scores.n_docs()));
    put_u8(sink, static_cast<uint8_t>(scores.split));
    put_u32(sink, static_cast<uint32_t>(scores.checkpoint));
    put_u64(sink, scores.corpus_hash);
    put_u64(sink, scores.membership_hash);
    put_u64(sink, scores.spec_hash);
    for (int64_t idx : scores.doc_indices) {
        put_u64(sink, static_cast<uint64_t>(idx));
    }
    for (Eigen::Index i = 0; i < scores.m(); ++i) {
        for (Eigen::Index j = 0; j < scores.n_docs(); ++j) {
            put_f32(sink, scores.values(i, j));
        }
    }
}

ScoreMatrix load_scores(const std::filesystem::path& path) {
    ByteReader reader(read_file_bytes(path));
    if (reader.get_u32() != kScoresMagic) {
        throw CfmemError("not a score matrix file: " + path.string());
    }
    if (reader.get_u32() != kScoresVersion) {
        throw CfmemError("unsupported score matrix version: " + path.string());
    }
    ScoreMatrix scores;
    const auto m = static_cast<Eigen::Index>(reader.get_u64());
    const auto n = static_cast<Eigen::Index>(reader.get_u64());
    scores.split = static_cast<corpus::Split>(reader.get_u8());
    scores.checkpoint = static_cast<int>(reader.get_u32());
    scores.corpus_hash = reader.get_u64();
    scores.membership_hash = reader.get_u64();
    scores.spec_hash = reader.get_u64();
    scores.doc_indices.resize(static_cast<size_t>(n));
    for (auto& idx : scores.doc_indices) {
        idx = static_cast<int64_t>(reader.get_u64());
    }
    scores.values.resize(m, n);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            scores.values(i, j) = reader.get_f32();
        }
    }
    if (!reader.at_end()) {
        throw CfmemError("trailing bytes in score matrix file: " + path.string());
    }
    return scores;
}

}  // namespace cfmem::scoring
