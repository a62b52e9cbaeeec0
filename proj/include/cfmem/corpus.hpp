#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cfmem/io.hpp"

namespace cfmem::corpus {

enum class Split : uint8_t { train = 0, validation = 1, query = 2 };

const char* split_name(Split s);
std::optional<Split> split_from_name(std::string_view name);

enum class TokenizerKind : uint8_t { whitespace = 0, byte = 1 };

// Token ids: UNK is always id 0 and absorbs out-of-vocabulary tokens, real
// tokens occupy [1, bos_id), BOS is the last id and is used only as context
// padding -- it never appears inside a document and is never a prediction target.
class Vocabulary {
public:
    static constexpr int32_t kUnkId = 0;
    static constexpr const char* kUnkToken = "<unk>";
    static constexpr const char* kBosToken = "<bos>";

    Vocabulary();

    // Entries must arrive in final id order (frequency rank); reserves UNK/BOS itself.
    void add_entry(const std::string& token, int64_t count);
    void set_unk_count(int64_t count);
    void finalize();

    int32_t lookup(const std::string& token) const;  // UNK for unknown tokens
    int32_t size() const noexcept { return static_cast<int32_t>(id_to_token_.size()); }
    int32_t bos_id() const noexcept { return size() - 1; }
    // Argmax prediction domain is [0, prediction_limit()): everything but BOS.
    int32_t prediction_limit() const noexcept { return bos_id(); }
    const std::string& token(int32_t id) const { return id_to_token_.at(static_cast<size_t>(id)); }
    int64_t count(int32_t id) const { return counts_.at(static_cast<size_t>(id)); }
    bool finalized() const noexcept { return finalized_; }

private:
    std::vector<std::string> id_to_token_;
    std::vector<int64_t> counts_;
    std::unordered_map<std::string, int32_t> token_to_id_;
    bool finalized_{false};
};

struct Document {
    int64_t index{0};  // dense 0-based within its split
    std::string domain{"unknown"};
    std::string text;
    std::vector<int32_t> tokens;
    Split split{Split::train};
};

struct IngestConfig {
    TokenizerKind tokenizer{TokenizerKind::whitespace};
    int max_len{512};       // documents truncated to this many tokens
    int max_vocab{65536};   // cap on non-reserved vocabulary entries
    int64_t min_count{1};   // frequency cutoff
    bool skip_malformed{false};
};

struct Corpus {
    Vocabulary vocab;
    std::vector<Document> train;
    std::vector<Document> validation;
    std::vector<Document> query;
    TokenizerKind tokenizer{TokenizerKind::whitespace};
    int max_len{512};
    std::string metadata_json{"{}"};  // source name, creation parameters, synth ground truth

    const std::vector<Document>& split(Split s) const;
    std::vector<Document>& split(Split s);
};

std::vector<std::string> tokenize(std::string_view text, TokenizerKind kind);

// "https://www.metro.us/news/..." -> "metro.us"; empty/absent url -> "unknown".
std::string domain_from_url(std::string_view url);

// 64-bit FNV fingerprint of a token window. Both the synthesizer's
// uniqueness bookkeeping and the dedup shingler key on this.
uint64_t shingle_hash(std::span<const int32_t> tokens);

// Appends fingerprints of every width-w window to `out`; a document shorter
// than the width contributes one whole-document shingle.
void collect_shingles(std::span<const int32_t> tokens, int width,
                      std::vector<uint64_t>& out);

// Reads line-delimited JSON records ({"text": ..., "url"?: ..., "id"?: ...})
// into a fresh train-split corpus; builds and freezes the vocabulary.
Corpus ingest(const std::filesystem::path& path, const IngestConfig& config);

// Tokenizes another file against the corpus's frozen vocabulary into `split`.
void ingest_split(Corpus& corpus, const std::filesystem::path& path, Split split,
                  bool skip_malformed);

struct SynthConfig {
    int clusters{0};           // K template clusters
    int dup_min{0};            // cluster k has dup_min + dup_step*(k mod steps) members,
    int dup_max{0};            // cycling through [dup_min, dup_max]
    int dup_step{1};
    int n_unique{0};           // unique rare train documents
    int len_min{40};
    int len_max{80};
    int vocab_size{2000};
    double mutation_rate{0.05};        // per-token substitution prob for cluster members
    double min_intra_sim{0.7};         // enforced pairwise EditSim floor within a cluster
    uint64_t seed{0};
    int n_validation{0};               // total validation docs
    int n_planted{0};                  // of which near-copies of distinct unique train docs
    double planted_mutation_rate{0.05};
    std::string unique_domain{"unique.test"};
    std::string cluster_domain{"dup.test"};

    static SynthConfig from_json_file(const std::filesystem::path& path);
    std::string to_json() const;
};

// Deterministic synthetic corpus with ground-truth labels in the metadata:
//   metadata.ground_truth.train_cluster[i]  = cluster id of train doc i, -1 if unique
//   metadata.ground_truth.planted_pairs     = [{"validation": v, "train": t}, ...]
// Unique train documents and fresh validation documents share no 5-token shingle
// with any other document; planted validation near-copies are exempt by design.
Corpus synthesize(const SynthConfig& config);

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

uint64_t corpus_hash(const Corpus& corpus);

}  // namespace cfmem::corpus
