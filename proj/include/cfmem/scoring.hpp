#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "cfmem/corpus.hpp"

namespace cfmem::scoring {

// Per-token accuracy of every model on every document of one split, plus the
// provenance hashes that chain it back to the corpus, membership matrix and
// trainer spec it was built from.
struct ScoreMatrix {
    Eigen::MatrixXf values;  // m x |docs|, rows aligned with membership rows
    corpus::Split split{corpus::Split::train};
    int checkpoint{0};  // epoch label for neural series, 0 for single models
    uint64_t corpus_hash{0};
    uint64_t membership_hash{0};
    uint64_t spec_hash{0};
    std::vector<int64_t> doc_indices;

    Eigen::Index m() const noexcept { return values.rows(); }
    Eigen::Index n_docs() const noexcept { return values.cols(); }
};

// Evaluates every model of a store over one split. checkpoint selects a
// neural epoch label (nullopt = final); n-gram stores accept only nullopt.
ScoreMatrix build_scores(const std::filesystem::path& store_dir,
                         const corpus::Corpus& corpus, corpus::Split split,
                         std::optional<int> checkpoint, int jobs);

// Same pass over a neural store but emitting one matrix per checkpoint, so
// each model file is read once instead of once per epoch.
std::vector<ScoreMatrix> build_scores_all_checkpoints(const std::filesystem::path& store_dir,
                                                      const corpus::Corpus& corpus,
                                                      corpus::Split split, int jobs);

void save_scores(const std::filesystem::path& path, const ScoreMatrix& scores);
ScoreMatrix load_scores(const std::filesystem::path& path);

}  // namespace cfmem::scoring
