#include "cfmem/models.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>

#include "json.hpp"

#include "cfmem/sampler.hpp"

namespace cfmem::models {

namespace {

constexpr uint32_t kModelMagic = 0x4d4d4643;  // "CFMM"
constexpr uint32_t kModelVersion = 1;

std::vector<const corpus::Document*> selected_docs(const corpus::Corpus& corpus,
                                                   std::span<const uint8_t> row) {
    if (row.size() != corpus.train.size()) {
        throw CfmemError("membership row length does not match train split size");
    }
    std::vector<const corpus::Document*> docs;
    for (size_t i = 0; i < row.size(); ++i) {
        if (row[i]) {
            docs.push_back(&corpus.train[i]);
        }
    }
    if (docs.empty()) {
        throw CfmemError("training subset is empty");
    }
    return docs;
}

void put_hex(nlohmann::json& j, const char* key, uint64_t v) {
    char hex[20];
    std::snprintf(hex, sizeof(hex), "0x%016llx", static_cast<unsigned long long>(v));
    j[key] = hex;
}

uint64_t get_hex(const nlohmann::json& j, const char* key) {
    return std::stoull(j.at(key).get<std::string>(), nullptr, 16);
}

}  // namespace

TrainerSpec TrainerSpec::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw CfmemError(std::string("bad trainer spec: ") + e.what());
    }
    TrainerSpec spec;
    const std::string kind = j.value("kind", "ngram");
    if (kind == "ngram") {
        spec.kind = ModelKind::ngram;
    } else if (kind == "neural") {
        spec.kind = ModelKind::neural;
    } else {
        throw CfmemError("trainer spec kind must be \"ngram\" or \"neural\"");
    }
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) {
            j.at(key).get_to(field);
        }
    };
    get("order", spec.ngram.order);
    get("alpha", spec.ngram.alpha);
    get("context", spec.neural.context);
    get("dim", spec.neural.dim);
    get("lr", spec.neural.lr);
    get("epochs", spec.neural.epochs);
    get("batch", spec.neural.batch);
    get("seed", spec.neural.seed);
    spec.validate();
    return spec;
}

TrainerSpec TrainerSpec::from_json_file(const std::filesystem::path& path) {
    auto bytes = read_file_bytes(path);
    return from_json(std::string(bytes.begin(), bytes.end()));
}

std::string TrainerSpec::to_json() const {
    nlohmann::json j;
    if (kind == ModelKind::ngram) {
        j = {{"kind", "ngram"}, {"order", ngram.order}, {"alpha", ngram.alpha}};
    } else {
        j = {{"kind", "neural"},   {"context", neural.context}, {"dim", neural.dim},
             {"lr", neural.lr},    {"epochs", neural.epochs},   {"batch", neural.batch},
             {"seed", neural.seed}};
    }
    return j.dump();
}

void TrainerSpec::validate() const {
    if (kind == ModelKind::ngram) {
        if (ngram.order < 2) {
            throw CfmemError("ngram order must be >= 2");
        }
        if (!(ngram.alpha > 0)) {
            throw CfmemError("ngram alpha must be > 0");
        }
    } else {
        if (neural.context < 1) {
            throw CfmemError("neural context must be >= 1");
        }
        if (neural.dim < 2) {
            throw CfmemError("neural dim must be >= 2");
        }
        if (neural.epochs < 1) {
            throw CfmemError("neural epochs must be >= 1");
        }
        if (neural.batch < 1) {
            throw CfmemError("neural batch must be >= 1");
        }
        if (!(neural.lr > 0) || !std::isfinite(neural.lr)) {
            throw CfmemError("neural lr must be positive and finite");
        }
    }
}

void serialize_spec(ByteSink& sink, const TrainerSpec& spec) {
    put_u8(sink, static_cast<uint8_t>(spec.kind));
    if (spec.kind == ModelKind::ngram) {
        put_u32(sink, static_cast<uint32_t>(spec.ngram.order));
        put_f64(sink, spec.ngram.alpha);
    } else {
        put_u32(sink, static_cast<uint32_t>(spec.neural.context));
        put_u32(sink, static_cast<uint32_t>(spec.neural.dim));
        put_f64(sink, spec.neural.lr);
        put_u32(sink, static_cast<uint32_t>(spec.neural.epochs));
        put_u32(sink, static_cast<uint32_t>(spec.neural.batch));
        put_u64(sink, spec.neural.seed);
    }
}

TrainerSpec deserialize_spec(ByteReader& reader) {
    TrainerSpec spec;
    spec.kind = static_cast<ModelKind>(reader.get_u8());
    if (spec.kind == ModelKind::ngram) {
        spec.ngram.order = static_cast<int>(reader.get_u32());
        spec.ngram.alpha = reader.get_f64();
    } else if (spec.kind == ModelKind::neural) {
        spec.neural.context = static_cast<int>(reader.get_u32());
        spec.neural.dim = static_cast<int>(reader.get_u32());
        spec.neural.lr = reader.get_f64();
        spec.neural.epochs = static_cast<int>(reader.get_u32());
        spec.neural.batch = static_cast<int>(reader.get_u32());
        spec.neural.seed = reader.get_u64();
    } else {
        throw CfmemError("unknown model kind in stored spec");
    }
    spec.validate();
    return spec;
}

uint64_t spec_hash(const TrainerSpec& spec) {
    HashSink sink;
    serialize_spec(sink, spec);
    return sink.digest();
}

NGramModel::NGramModel(int order, double alpha) : order_(order), alpha_(alpha) {
    if (order_ < 2) {
        throw CfmemError("ngram order must be >= 2");
    }
    if (!(alpha_ > 0)) {
        throw CfmemError("ngram alpha must be > 0");
    }
    tables_.resize(static_cast<size_t>(order_));
}

std::string NGramModel::key_of(std::span<const int32_t> tokens) {
    std::string key(tokens.size() * 4, '\0');
    for (size_t i = 0; i < tokens.size(); ++i) {
        const auto v = static_cast<uint32_t>(tokens[i]);
        key[i * 4 + 0] = static_cast<char>(v);
        key[i * 4 + 1] = static_cast<char>(v >> 8);
        key[i * 4 + 2] = static_cast<char>(v >> 16);
        key[i * 4 + 3] = static_cast<char>(v >> 24);
    }
    return key;
}

NGramModel NGramModel::train(const corpus::Corpus& corpus, std::span<const uint8_t> row,
                             const NGramSpec& spec) {
    NGramModel model(spec.order, spec.alpha);
    const int k = spec.order;
    const int32_t bos = corpus.vocab.bos_id();
    std::vector<std::unordered_map<std::string, std::unordered_map<int32_t, int64_t>>>
        counters(static_cast<size_t>(k));
    std::vector<int32_t> padded;
    for (const auto* doc : selected_docs(corpus, row)) {
        padded.assign(static_cast<size_t>(k - 1), bos);
        padded.insert(padded.end(), doc->tokens.begin(), doc->tokens.end());
        for (size_t t = 0; t < doc->tokens.size(); ++t) {
            const int32_t target = doc->tokens[t];
            for (int j = 1; j <= k; ++j) {
                std::span<const int32_t> ctx(padded.data() + t + k - j,
                                             static_cast<size_t>(j - 1));
                counters[static_cast<size_t>(j - 1)][key_of(ctx)][target] += 1;
            }
        }
    }
    for (int j = 1; j <= k; ++j) {
        auto& table = model.tables_[static_cast<size_t>(j - 1)];
        for (auto& [key, counts] : counters[static_cast<size_t>(j - 1)]) {
            Context ctx;
            ctx.entries.assign(counts.begin(), counts.end());
            std::sort(ctx.entries.begin(), ctx.entries.end());
            int64_t best = 0;
            for (const auto& [token, count] : ctx.entries) {
                ctx.total += count;
                if (count > best) {
                    best = count;
                    ctx.argmax = token;
                }
            }
            table.emplace(key, std::move(ctx));
        }
    }
    return model;
}

const NGramModel::Context* NGramModel::find(int order_j,
                                            std::span<const int32_t> context) const {
    if (order_j < 1 || order_j > order_) {
        return nullptr;
    }
    if (context.size() < static_cast<size_t>(order_j - 1)) {
        throw CfmemError("ngram context shorter than requested order");
    }
    const auto& table = tables_[static_cast<size_t>(order_j - 1)];
    auto it = table.find(key_of(context.subspan(context.size() - (order_j - 1))));
    return it == table.end() ? nullptr : &it->second;
}

int32_t NGramModel::predict_argmax(std::span<const int32_t> context) const {
    if (context.size() < static_cast<size_t>(order_ - 1)) {
        throw CfmemError("ngram context shorter than order - 1");
    }
    for (int j = order_; j >= 1; --j) {
        if (const Context* ctx = find(j, context)) {
            return ctx->argmax;
        }
    }
    throw CfmemError("ngram model has no counts (untrained model)");
}

double NGramModel::prob(std::span<const int32_t> context, int32_t token,
                        int32_t vocab_predict) const {
    for (int j = order_; j >= 1; --j) {
        const Context* ctx = find(j, context);
        if (!ctx) {
            continue;
        }
        int64_t count = 0;
        auto it = std::lower_bound(ctx->entries.begin(), ctx->entries.end(),
                                   std::make_pair(token, int64_t{0}));
        if (it != ctx->entries.end() && it->first == token) {
            count = it->second;
        }
        return (static_cast<double>(count) + alpha_) /
               (static_cast<double>(ctx->total) + alpha_ * vocab_predict);
    }
    throw CfmemError("ngram model has no counts (untrained model)");
}

void NGramModel::serialize(ByteSink& sink) const {
    put_u32(sink, static_cast<uint32_t>(order_));
    put_f64(sink, alpha_);
    for (const auto& table : tables_) {
        put_u64(sink, table.size());
        std::vector<const std::string*> keys;
        keys.reserve(table.size());
        for (const auto& [key, ctx] : table) {
            keys.push_back(&key);
        }
        std::sort(keys.begin(), keys.end(),
                  [](const std::string* a, const std::string* b) { return *a < *b; });
        for (const std::string* key : keys) {
            const Context& ctx = table.at(*key);
            put_u32(sink, static_cast<uint32_t>(key->size() / 4));
            sink.write(key->data(), key->size());
            put_u32(sink, static_cast<uint32_t>(ctx.entries.size()));
            for (const auto& [token, count] : ctx.entries) {
                put_u32(sink, static_cast<uint32_t>(token));
                put_u64(sink, static_cast<uint64_t>(count));
            }
        }
    }
}

NGramModel NGramModel::deserialize(ByteReader& reader) {
    const int order = static_cast<int>(reader.get_u32());
    const double alpha = reader.get_f64();
    NGramModel model(order, alpha);
    for (int j = 1; j <= order; ++j) {
        const uint64_t n_contexts = reader.get_u64();
        auto& table = model.tables_[static_cast<size_t>(j - 1)];
        table.reserve(n_contexts);
        for (uint64_t cI = 0; cI < n_contexts; ++cI) {
            const uint32_t key_tokens = reader.get_u32();
            if (key_tokens != static_cast<uint32_t>(j - 1)) {
                throw CfmemError("ngram store: context length does not match order");
            }
            std::string key(static_cast<size_t>(key_tokens) * 4, '\0');
            reader.get_bytes(key.data(), key.size());
            Context ctx;
            const uint32_t n_entries = reader.get_u32();
            ctx.entries.reserve(n_entries);
            int64_t best = 0;
            for (uint32_t e = 0; e < n_entries; ++e) {
                const auto token = static_cast<int32_t>(reader.get_u32());
                const auto count = static_cast<int64_t>(reader.get_u64());
                if (count < 1) {
                    throw CfmemError("ngram store: count below 1");
                }
                if (!ctx.entries.empty() && token <= ctx.entries.back().first) {
                    throw CfmemError("ngram store: entries out of order");
                }
                ctx.entries.emplace_back(token, count);
                ctx.total += count;
                if (count > best) {
                    best = count;
                    ctx.argmax = token;
                }
            }
            table.emplace(std::move(key), std::move(ctx));
        }
    }
    return model;
}

ExampleSet make_examples(const std::vector<const corpus::Document*>& docs, int context,
                         int32_t bos_id) {
    Eigen::Index total = 0;
    for (const auto* doc : docs) {
        total += static_cast<Eigen::Index>(doc->tokens.size());
    }
    ExampleSet ex;
    ex.ctx.resize(total, context);
    ex.targets.reserve(static_cast<size_t>(total));
    Eigen::Index at = 0;
    for (const auto* doc : docs) {
        const auto& tokens = doc->tokens;
        for (size_t t = 0; t < tokens.size(); ++t) {
            for (int p = 0; p < context; ++p) {
                const auto back = static_cast<int64_t>(t) - context + p;
                ex.ctx(at, p) = back < 0 ? bos_id : tokens[static_cast<size_t>(back)];
            }
            ex.targets.push_back(tokens[t]);
            ++at;
        }
    }
    return ex;
}

template <typename Scalar>
CheckpointSeries<Scalar> train_neural(const corpus::Corpus& corpus,
                                      std::span<const uint8_t> row, const NeuralSpec& spec,
                                      uint64_t init_seed) {
    auto docs = selected_docs(corpus, row);
    const ExampleSet ex = make_examples(docs, spec.context, corpus.vocab.bos_id());
    NeuralLM<Scalar> model(corpus.vocab.size(), corpus.vocab.bos_id(), spec.context,
                           spec.dim);
    model.init_uniform(init_seed);
    CheckpointSeries<Scalar> series;
    for (int epoch = 1; epoch <= spec.epochs; ++epoch) {
        for (Eigen::Index start = 0; start < ex.size(); start += spec.batch) {
            const Eigen::Index count = std::min<Eigen::Index>(spec.batch, ex.size() - start);
            model.step(ex, start, count, static_cast<Scalar>(spec.lr));
        }
        const double loss = model.loss(ex);
        if (!std::isfinite(loss)) {
            throw CfmemError("neural training diverged at epoch " + std::to_string(epoch));
        }
        series.epochs.push_back(epoch);
        series.losses.push_back(loss);
        series.models.push_back(model);
    }
    return series;
}

template CheckpointSeries<float> train_neural<float>(const corpus::Corpus&,
                                                     std::span<const uint8_t>,
                                                     const NeuralSpec&, uint64_t);
template CheckpointSeries<double> train_neural<double>(const corpus::Corpus&,
                                                       std::span<const uint8_t>,
                                                       const NeuralSpec&, uint64_t);

namespace {

void serialize_matrix_f32(ByteSink& sink, const Eigen::MatrixXf& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            put_f32(sink, m(i, j));
        }
    }
}

void read_matrix_f32(ByteReader& reader, Eigen::MatrixXf& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            m(i, j) = reader.get_f32();
        }
    }
}

}  // namespace

void save_model(const std::filesystem::path& path, const StoredModel& model) {
    FileSink sink(path);
    put_u32(sink, kModelMagic);
    put_u32(sink, kModelVersion);
    put_u32(sink, model.index);
    put_u64(sink, model.corpus_hash);
    put_u64(sink, model.spec_hash);
    put_u64(sink, model.row_hash);
    serialize_spec(sink, model.spec);
    put_u32(sink, static_cast<uint32_t>(model.vocab_size));
    put_u32(sink, static_cast<uint32_t>(model.bos_id));
    if (model.spec.kind == ModelKind::ngram) {
        if (!model.ngram) {
            throw CfmemError("stored model missing ngram payload");
        }
        model.ngram->serialize(sink);
    } else {
        if (!model.neural) {
            throw CfmemError("stored model missing neural payload");
        }
        const auto& series = *model.neural;
        put_u32(sink, static_cast<uint32_t>(series.models.size()));
        for (size_t cI = 0; cI < series.models.size(); ++cI) {
            put_u32(sink, static_cast<uint32_t>(series.epochs[cI]));
            put_f64(sink, series.losses[cI]);
            const auto& lm = series.models[cI];
            for (const auto& table : lm.embed()) {
                serialize_matrix_f32(sink, table);
            }
            serialize_matrix_f32(sink, lm.w());
            serialize_matrix_f32(sink, lm.b());
        }
    }
}

StoredModel load_model(const std::filesystem::path& path) {
    ByteReader reader(read_file_bytes(path));
    if (reader.get_u32() != kModelMagic) {
        throw CfmemError("not a model file: " + path.string());
    }
    if (reader.get_u32() != kModelVersion) {
        throw CfmemError("unsupported model file version: " + path.string());
    }
    StoredModel model;
    model.index = reader.get_u32();
    model.corpus_hash = reader.get_u64();
    model.spec_hash = reader.get_u64();
    model.row_hash = reader.get_u64();
    model.spec = deserialize_spec(reader);
    model.vocab_size = static_cast<int32_t>(reader.get_u32());
    model.bos_id = static_cast<int32_t>(reader.get_u32());
    if (model.spec.kind == ModelKind::ngram) {
        model.ngram = NGramModel::deserialize(reader);
    } else {
        CheckpointSeries<float> series;
        const uint32_t n = reader.get_u32();
        for (uint32_t cI = 0; cI < n; ++cI) {
            series.epochs.push_back(static_cast<int>(reader.get_u32()));
            series.losses.push_back(reader.get_f64());
            NeuralLM<float> lm(model.vocab_size, model.bos_id, model.spec.neural.context,
                               model.spec.neural.dim);
            for (auto& table : lm.embed()) {
                read_matrix_f32(reader, table);
            }
            read_matrix_f32(reader, lm.w());
            Eigen::MatrixXf b(model.bos_id, 1);
            read_matrix_f32(reader, b);
            lm.b() = b.col(0);
            series.models.push_back(std::move(lm));
        }
        model.neural = std::move(series);
    }
    if (!reader.at_end()) {
        throw CfmemError("trailing bytes in model file: " + path.string());
    }
    return model;
}

StoreManifest StoreManifest::from_file(const std::filesystem::path& dir) {
    auto bytes = read_file_bytes(dir / "manifest.json");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
        throw CfmemError("bad model store manifest: " + std::string(e.what()));
    }
    StoreManifest manifest;
    manifest.m = j.at("m").get<int64_t>();
    manifest.corpus_hash = get_hex(j, "corpus_hash");
    manifest.spec_hash = get_hex(j, "spec_hash");
    manifest.membership_hash = get_hex(j, "membership_hash");
    manifest.spec = TrainerSpec::from_json(j.at("spec").dump());
    return manifest;
}

void train_store(const corpus::Corpus& corpus, const sampler::MembershipMatrix& membership,
                 const TrainerSpec& spec, const std::filesystem::path& dir, int jobs) {
    spec.validate();
    if (static_cast<size_t>(membership.n()) != corpus.train.size()) {
        throw CfmemError("membership width does not match train split size");
    }
    std::filesystem::create_directories(dir);
    const uint64_t c_hash = corpus::corpus_hash(corpus);
    const uint64_t s_hash = spec_hash(spec);
    const auto m = static_cast<size_t>(membership.m());
    parallel_for(m, jobs, [&](size_t i) {
        StoredModel model;
        model.index = static_cast<uint32_t>(i);
        model.corpus_hash = c_hash;
        model.spec_hash = s_hash;
        model.row_hash =
            sampler::membership_row_hash(membership, static_cast<Eigen::Index>(i));
        model.spec = spec;
        model.vocab_size = corpus.vocab.size();
        model.bos_id = corpus.vocab.bos_id();
        std::span<const uint8_t> row(membership.bits.row(static_cast<Eigen::Index>(i)).data(),
                                     static_cast<size_t>(membership.n()));
        if (spec.kind == ModelKind::ngram) {
            model.ngram = NGramModel::train(corpus, row, spec.ngram);
        } else {
            model.neural =
                train_neural<float>(corpus, row, spec.neural, spec.neural.seed + i);
        }
        save_model(dir / ("model_" + std::to_string(i) + ".bin"), model);
    });

    nlohmann::json j;
    j["m"] = membership.m();
    put_hex(j, "corpus_hash", c_hash);
    put_hex(j, "spec_hash", s_hash);
    put_hex(j, "membership_hash", sampler::membership_hash(membership));
    j["spec"] = nlohmann::json::parse(spec.to_json());
    auto rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < membership.m(); ++i) {
        char hex[20];
        std::snprintf(hex, sizeof(hex), "0x%016llx",
                      static_cast<unsigned long long>(sampler::membership_row_hash(membership, i)));
        rows.push_back(hex);
    }
    j["row_hashes"] = rows;
    std::ofstream out(dir / "manifest.json");
    if (!out) {
        throw CfmemError("cannot write " + (dir / "manifest.json").string());
    }
    out << j.dump(2) << '\n';
}

}  // namespace cfmem::models
