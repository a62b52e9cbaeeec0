#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cfmem/corpus.hpp"
#include "cfmem/io.hpp"

namespace cfmem::models {

enum class ModelKind : uint8_t { ngram = 0, neural = 1 };

struct NGramSpec {
    int order{3};       // k; contexts are k-1 tokens
    double alpha{0.1};  // add-alpha smoothing at the matched order
};

struct NeuralSpec {
    int context{2};  // context window c
    int dim{16};     // embedding dimension d
    double lr{0.1};
    int epochs{10};
    int batch{32};
    uint64_t seed{0};  // base init seed; model i trains with seed + i
};

struct TrainerSpec {
    ModelKind kind{ModelKind::ngram};
    NGramSpec ngram;
    NeuralSpec neural;

    static TrainerSpec from_json(const std::string& text);
    static TrainerSpec from_json_file(const std::filesystem::path& path);
    std::string to_json() const;
    void validate() const;
};

void serialize_spec(ByteSink& sink, const TrainerSpec& spec);
TrainerSpec deserialize_spec(ByteReader& reader);
uint64_t spec_hash(const TrainerSpec& spec);

// Backoff n-gram counter. Probability mass only matters through argmax, which
// add-alpha smoothing cannot change: any stored count beats every unseen token,
// so prediction is the max-count entry of the longest context with counts.
class NGramModel {
public:
    struct Context {
        int64_t total{0};
        std::vector<std::pair<int32_t, int64_t>> entries;  // sorted by token id
        int32_t argmax{0};  // max count, ties to the lowest token id
    };

    NGramModel(int order, double alpha);

    static NGramModel train(const corpus::Corpus& corpus, std::span<const uint8_t> row,
                            const NGramSpec& spec);

    int order() const noexcept { return order_; }
    double alpha() const noexcept { return alpha_; }
    int context_len() const noexcept { return order_ - 1; }

    // context holds at least order-1 ids, most recent last.
    int32_t predict_argmax(std::span<const int32_t> context) const;

    // Smoothed backoff probability of `token` given `context`; vocab_predict is
    // the size of the prediction domain the alpha mass spreads over.
    double prob(std::span<const int32_t> context, int32_t token, int32_t vocab_predict) const;

    // Exact-order lookup, nullptr when the context was never observed.
    const Context* find(int order_j, std::span<const int32_t> context) const;

    void serialize(ByteSink& sink) const;
    static NGramModel deserialize(ByteReader& reader);

private:
    static std::string key_of(std::span<const int32_t> tokens);

    int order_;
    double alpha_;
    std::vector<std::unordered_map<std::string, Context>> tables_;  // [j-1] holds order j
};

// Position-gathered training examples for the neural model: row i of ctx is
// the BOS-padded window (oldest token first) whose next token is targets[i].
struct ExampleSet {
    Eigen::Matrix<int32_t, Eigen::Dynamic, Eigen::Dynamic> ctx;
    std::vector<int32_t> targets;
    Eigen::Index size() const noexcept { return ctx.rows(); }
};

ExampleSet make_examples(const std::vector<const corpus::Document*>& docs, int context,
                         int32_t bos_id);

// Log-linear next-token model: per-position embedding tables feed a single
// softmax layer. Scalar is float in production; tests instantiate double for
// finite-difference checks.
template <typename Scalar>
class NeuralLM {
public:
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    NeuralLM() = default;
    NeuralLM(int32_t vocab_size, int32_t bos_id, int context, int dim)
        : vocab_(vocab_size), bos_(bos_id), c_(context), d_(dim) {
        embed_.assign(static_cast<size_t>(c_), Mat::Zero(vocab_, d_));
        w_ = Mat::Zero(static_cast<Eigen::Index>(c_) * d_, bos_);
        b_ = Vec::Zero(bos_);
    }

    int32_t vocab_size() const noexcept { return vocab_; }
    int32_t bos_id() const noexcept { return bos_; }
    int context_len() const noexcept { return c_; }
    int dim() const noexcept { return d_; }

    std::vector<Mat>& embed() noexcept { return embed_; }
    const std::vector<Mat>& embed() const noexcept { return embed_; }
    Mat& w() noexcept { return w_; }
    const Mat& w() const noexcept { return w_; }
    Vec& b() noexcept { return b_; }
    const Vec& b() const noexcept { return b_; }

    void init_uniform(uint64_t seed, double scale = 0.1) {
        std::mt19937_64 rng(seed);
        auto fill = [&](Mat& m) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                for (Eigen::Index i = 0; i < m.rows(); ++i) {
                    m(i, j) = static_cast<Scalar>((rand_unit(rng) * 2.0 - 1.0) * scale);
                }
            }
        };
        for (auto& e : embed_) {
            fill(e);
        }
        fill(w_);
        b_.setZero();
    }

    Mat features(const ExampleSet& ex, Eigen::Index start, Eigen::Index count) const {
        Mat phi(count, static_cast<Eigen::Index>(c_) * d_);
        for (Eigen::Index i = 0; i < count; ++i) {
            for (int p = 0; p < c_; ++p) {
                phi.block(i, static_cast<Eigen::Index>(p) * d_, 1, d_) =
                    embed_[static_cast<size_t>(p)].row(ex.ctx(start + i, p));
            }
        }
        return phi;
    }

    // Row-stable softmax of logits for the batch [start, start+count).
    Mat probabilities(const ExampleSet& ex, Eigen::Index start, Eigen::Index count) const {
        Mat logits = (features(ex, start, count) * w_).rowwise() + b_.transpose();
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            auto row = logits.row(i);
            row = (row.array() - row.maxCoeff()).exp();
            row /= row.sum();
        }
        return logits;
    }

    double loss(const ExampleSet& ex) const {
        double total = 0;
        const Eigen::Index chunk = 4096;
        for (Eigen::Index start = 0; start < ex.size(); start += chunk) {
            const Eigen::Index count = std::min(chunk, ex.size() - start);
            Mat p = probabilities(ex, start, count);
            for (Eigen::Index i = 0; i < count; ++i) {
                total -= std::log(static_cast<double>(
                    p(i, ex.targets[static_cast<size_t>(start + i)])));
            }
        }
        return total / static_cast<double>(ex.size());
    }

    struct Gradients {
        std::vector<Mat> embed;
        Mat w;
        Vec b;
    };

    // Mean analytic gradients over the whole example set (for checking).
    Gradients gradients(const ExampleSet& ex) const {
        Gradients g;
        g.embed.assign(static_cast<size_t>(c_), Mat::Zero(vocab_, d_));
        g.w = Mat::Zero(w_.rows(), w_.cols());
        g.b = Vec::Zero(b_.size());
        Mat phi = features(ex, 0, ex.size());
        Mat err = probabilities(ex, 0, ex.size());
        for (Eigen::Index i = 0; i < ex.size(); ++i) {
            err(i, ex.targets[static_cast<size_t>(i)]) -= Scalar(1);
        }
        const Scalar inv = Scalar(1) / static_cast<Scalar>(ex.size());
        g.w.noalias() = phi.transpose() * err * inv;
        g.b = err.colwise().sum().transpose() * inv;
        Mat dphi = err * w_.transpose();
        for (Eigen::Index i = 0; i < ex.size(); ++i) {
            for (int p = 0; p < c_; ++p) {
                g.embed[static_cast<size_t>(p)].row(ex.ctx(i, p)) +=
                    dphi.block(i, static_cast<Eigen::Index>(p) * d_, 1, d_) * inv;
            }
        }
        return g;
    }

    // One SGD minibatch update; accumulation order is fixed by construction.
    void step(const ExampleSet& ex, Eigen::Index start, Eigen::Index count, Scalar lr) {
        Mat phi = features(ex, start, count);
        Mat err = (phi * w_).rowwise() + b_.transpose();
        for (Eigen::Index i = 0; i < count; ++i) {
            auto row = err.row(i);
            row = (row.array() - row.maxCoeff()).exp();
            row /= row.sum();
            err(i, ex.targets[static_cast<size_t>(start + i)]) -= Scalar(1);
        }
        const Scalar scale = lr / static_cast<Scalar>(count);
        Mat dphi = err * w_.transpose();  // uses the pre-update weights
        w_.noalias() -= scale * (phi.transpose() * err);
        b_ -= scale * err.colwise().sum().transpose();
        for (Eigen::Index i = 0; i < count; ++i) {
            for (int p = 0; p < c_; ++p) {
                embed_[static_cast<size_t>(p)].row(ex.ctx(start + i, p)) -=
                    scale * dphi.block(i, static_cast<Eigen::Index>(p) * d_, 1, d_);
            }
        }
    }

    int32_t predict_argmax(std::span<const int32_t> context) const {
        Vec phi(static_cast<Eigen::Index>(c_) * d_);
        for (int p = 0; p < c_; ++p) {
            phi.segment(static_cast<Eigen::Index>(p) * d_, d_) =
                embed_[static_cast<size_t>(p)].row(context[context.size() - c_ + p]).transpose();
        }
        Vec logits = w_.transpose() * phi + b_;
        Eigen::Index arg = 0;
        logits.maxCoeff(&arg);
        return static_cast<int32_t>(arg);
    }

    // Batched accuracy over whole documents; equals per-position predict_argmax.
    std::vector<float> score_documents(const std::vector<const corpus::Document*>& docs) const {
        ExampleSet ex = make_examples(docs, c_, bos_);
        std::vector<int64_t> matches(docs.size(), 0);
        std::vector<size_t> owner(static_cast<size_t>(ex.size()));
        size_t at = 0;
        for (size_t dI = 0; dI < docs.size(); ++dI) {
            for (size_t t = 0; t < docs[dI]->tokens.size(); ++t) {
                owner[at++] = dI;
            }
        }
        const Eigen::Index chunk = 8192;
        for (Eigen::Index start = 0; start < ex.size(); start += chunk) {
            const Eigen::Index count = std::min(chunk, ex.size() - start);
            Mat logits = (features(ex, start, count) * w_).rowwise() + b_.transpose();
            for (Eigen::Index i = 0; i < count; ++i) {
                Eigen::Index arg = 0;
                logits.row(i).maxCoeff(&arg);
                if (static_cast<int32_t>(arg) == ex.targets[static_cast<size_t>(start + i)]) {
                    matches[owner[static_cast<size_t>(start + i)]] += 1;
                }
            }
        }
        std::vector<float> acc(docs.size());
        for (size_t dI = 0; dI < docs.size(); ++dI) {
            acc[dI] = static_cast<float>(matches[dI]) /
                      static_cast<float>(docs[dI]->tokens.size());
        }
        return acc;
    }

private:
    int32_t vocab_{0};
    int32_t bos_{0};
    int c_{0};
    int d_{0};
    std::vector<Mat> embed_;
    Mat w_;
    Vec b_;
};

template <typename Scalar>
struct CheckpointSeries {
    std::vector<int> epochs;      // 1-based checkpoint labels
    std::vector<double> losses;   // mean training cross-entropy after each epoch
    std::vector<NeuralLM<Scalar>> models;
};

// Trains on the membership-selected subset, snapshotting after every epoch.
// Throws when the subset is empty or the loss stops being finite.
template <typename Scalar>
CheckpointSeries<Scalar> train_neural(const corpus::Corpus& corpus,
                                      std::span<const uint8_t> row, const NeuralSpec& spec,
                                      uint64_t init_seed);

extern template CheckpointSeries<float> train_neural<float>(const corpus::Corpus&,
                                                            std::span<const uint8_t>,
                                                            const NeuralSpec&, uint64_t);
extern template CheckpointSeries<double> train_neural<double>(const corpus::Corpus&,
                                                              std::span<const uint8_t>,
                                                              const NeuralSpec&, uint64_t);

// Accuracy of argmax next-token prediction from BOS-padded ground-truth
// context; every token is a target, the first sees an all-BOS window.
template <typename Model>
float per_token_accuracy(const Model& model, const std::vector<int32_t>& tokens,
                         int32_t bos_id) {
    if (tokens.empty()) {
        throw CfmemError("per_token_accuracy: empty document");
    }
    const int ctx_len = model.context_len();
    std::vector<int32_t> window(static_cast<size_t>(ctx_len), bos_id);
    int64_t matches = 0;
    for (int32_t target : tokens) {
        if (model.predict_argmax(window) == target) {
            ++matches;
        }
        if (ctx_len > 0) {
            window.erase(window.begin());
            window.push_back(target);
        }
    }
    return static_cast<float>(matches) / static_cast<float>(tokens.size());
}

// One trained model as persisted in a model store.
struct StoredModel {
    uint32_t index{0};
    uint64_t corpus_hash{0};
    uint64_t spec_hash{0};
    uint64_t row_hash{0};
    TrainerSpec spec;
    int32_t vocab_size{0};
    int32_t bos_id{0};
    std::optional<NGramModel> ngram;
    std::optional<CheckpointSeries<float>> neural;
};

void save_model(const std::filesystem::path& path, const StoredModel& model);
StoredModel load_model(const std::filesystem::path& path);

struct StoreManifest {
    int64_t m{0};
    uint64_t corpus_hash{0};
    uint64_t spec_hash{0};
    uint64_t membership_hash{0};
    TrainerSpec spec;

    static StoreManifest from_file(const std::filesystem::path& dir);
};

}  // namespace cfmem::models

namespace cfmem::sampler {
struct MembershipMatrix;  // forward declaration for train_store below
}

namespace cfmem::models {

// Trains one model per membership row into dir/model_<i>.bin plus a
// manifest.json carrying the provenance hashes the scoring stage checks.
void train_store(const corpus::Corpus& corpus, const sampler::MembershipMatrix& membership,
                 const TrainerSpec& spec, const std::filesystem::path& dir, int jobs);

}  // namespace cfmem::models
