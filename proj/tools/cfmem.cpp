// Command-line front end: each subcommand wires corpus stores, membership
// matrices, model stores and score matrices into the exports described in
// the README.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cfmem/analysis.hpp"
#include "cfmem/corpus.hpp"
#include "cfmem/dedup.hpp"
#include "cfmem/estimator.hpp"
#include "cfmem/io.hpp"
#include "cfmem/models.hpp"
#include "cfmem/sampler.hpp"
#include "cfmem/scoring.hpp"

namespace {

using cfmem::CfmemError;
using cfmem::CsvWriter;
using cfmem::fmt_double;

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    size_t pos = 0;
    while (pos <= text.size()) {
        const size_t comma = std::min(text.find(',', pos), text.size());
        const std::string item = text.substr(pos, comma - pos);
        if (!item.empty()) {
            out.push_back(std::stod(item));
        }
        pos = comma + 1;
    }
    if (out.empty()) {
        throw CfmemError("empty list: '" + text + "'");
    }
    return out;
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    for (double v : parse_double_list(text)) {
        out.push_back(static_cast<int>(v));
    }
    return out;
}

cfmem::corpus::Split parse_split(const std::string& name) {
    const auto split = cfmem::corpus::split_from_name(name);
    if (!split) {
        throw CfmemError("unknown split '" + name + "'");
    }
    return *split;
}

cfmem::corpus::TokenizerKind parse_tokenizer(const std::string& name) {
    if (name == "whitespace") {
        return cfmem::corpus::TokenizerKind::whitespace;
    }
    if (name == "byte") {
        return cfmem::corpus::TokenizerKind::byte;
    }
    throw CfmemError("unknown tokenizer '" + name + "'");
}

void check_corpus_hash(const cfmem::scoring::ScoreMatrix& scores,
                       const cfmem::corpus::Corpus& corpus) {
    if (scores.corpus_hash != cfmem::corpus::corpus_hash(corpus)) {
        throw CfmemError("provenance mismatch: scores were built from a different corpus");
    }
}

void write_mem_csv(const std::filesystem::path& path,
                   const cfmem::estimator::MemorizationTable& table,
                   const cfmem::scoring::ScoreMatrix& scores,
                   const cfmem::corpus::Corpus& corpus) {
    CsvWriter csv(path);
    csv.row({"index", "domain", "mem", "in_mean", "out_mean", "simplicity", "valid",
             "all_mean"});
    for (size_t i = 0; i < table.rows.size(); ++i) {
        const auto& r = table.rows[i];
        csv.row({std::to_string(scores.doc_indices[i]), corpus.train[i].domain,
                 fmt_double(r.mem), fmt_double(r.in_mean), fmt_double(r.out_mean),
                 fmt_double(r.simplicity), r.valid ? "1" : "0", fmt_double(r.all_mean)});
    }
}

void write_influence_csv(const std::filesystem::path& path,
                         const cfmem::estimator::InfluenceResult& result,
                         const cfmem::scoring::ScoreMatrix& query_scores) {
    CsvWriter csv(path);
    csv.row({"query", "rank", "train", "infl"});
    for (size_t qi = 0; qi < result.per_query.size(); ++qi) {
        const auto& entries = result.per_query[qi];
        for (size_t rank = 0; rank < entries.size(); ++rank) {
            csv.row({std::to_string(query_scores.doc_indices[qi]),
                     std::to_string(rank + 1), std::to_string(entries[rank].train),
                     fmt_double(entries[rank].infl)});
        }
    }
}

void write_max_infl_csv(const std::filesystem::path& path,
                        const cfmem::estimator::InfluenceResult& result) {
    CsvWriter csv(path);
    csv.row({"index", "max_infl", "valid"});
    for (int64_t t = 0; t < result.n_train; ++t) {
        const auto i = static_cast<size_t>(t);
        csv.row({std::to_string(t), fmt_double(result.max_infl[i]),
                 result.train_valid[i] ? "1" : "0"});
    }
}

void write_stability_csv(const std::filesystem::path& path,
                         const cfmem::analysis::StabilityReport& report) {
    CsvWriter csv(path);
    csv.row({"m", "partitions", "mean_r", "std_r", "mean_r_vs_full"});
    for (const auto& row : report.rows) {
        csv.row({std::to_string(row.m), std::to_string(row.partitions),
                 fmt_double(row.mean_r), fmt_double(row.std_r),
                 fmt_double(row.mean_r_vs_full)});
    }
    for (int m : report.skipped) {
        std::fprintf(stderr, "warning: m=%d admits fewer than 2 partitions, skipped\n", m);
    }
}

void write_doc_stddev_csvs(const std::filesystem::path& dir,
                           const cfmem::analysis::StabilityReport& report) {
    for (const auto& row : report.rows) {
        CsvWriter csv(dir / ("doc_stddev_" + std::to_string(row.m) + ".csv"));
        csv.row({"index", "stddev"});
        for (size_t d = 0; d < row.doc_stddev.size(); ++d) {
            csv.row({std::to_string(d), fmt_double(row.doc_stddev[d])});
        }
    }
}

void write_domains_csv(const std::filesystem::path& path,
                       const std::vector<cfmem::analysis::DomainProfile>& profiles) {
    CsvWriter csv(path);
    std::vector<std::string> header{"domain", "count", "valid"};
    for (int pct : cfmem::analysis::kProfilePercentiles) {
        header.push_back("p" + std::to_string(pct));
    }
    csv.row(header);
    for (const auto& prof : profiles) {
        std::vector<std::string> row{prof.domain, std::to_string(prof.count),
                                     std::to_string(prof.valid)};
        for (double v : prof.percentiles) {
            row.push_back(fmt_double(v));
        }
        csv.row(row);
    }
}

void write_hist_csv(const std::filesystem::path& path, const cfmem::analysis::Histogram2d& h) {
    CsvWriter csv(path);
    csv.row({"x_lo", "x_hi", "y_lo", "y_hi", "count", "log_count"});
    const double xw = (h.x_hi - h.x_lo) / static_cast<double>(h.x_bins);
    const double yw = (h.y_hi - h.y_lo) / static_cast<double>(h.y_bins);
    for (Eigen::Index i = 0; i < h.x_bins; ++i) {
        for (Eigen::Index j = 0; j < h.y_bins; ++j) {
            const auto count = h.counts(i, j);
            csv.row({fmt_double(h.x_lo + xw * static_cast<double>(i)),
                     fmt_double(i + 1 == h.x_bins ? h.x_hi : h.x_lo + xw * static_cast<double>(i + 1)),
                     fmt_double(h.y_lo + yw * static_cast<double>(j)),
                     fmt_double(j + 1 == h.y_bins ? h.y_hi : h.y_lo + yw * static_cast<double>(j + 1)),
                     std::to_string(count),
                     fmt_double(std::log10(static_cast<double>(count) + 1.0))});
        }
    }
}

void write_dups_csv(const std::filesystem::path& path, const cfmem::dedup::DupClusterSet& set) {
    CsvWriter csv(path);
    csv.row({"index", "cluster", "near_dup_count"});
    for (size_t i = 0; i < set.cluster_id.size(); ++i) {
        csv.row({std::to_string(i), std::to_string(set.cluster_id[i]),
                 std::to_string(set.near_dup_count[i])});
    }
}

void write_dup_scatter_csv(const std::filesystem::path& path,
                           const cfmem::dedup::DupClusterSet& set,
                           const cfmem::estimator::MemorizationTable& mem) {
    CsvWriter csv(path);
    csv.row({"near_dup_count", "mem"});
    for (size_t i = 0; i < set.cluster_id.size(); ++i) {
        if (set.near_dup_count[i] >= 1 && mem.rows[i].valid) {
            csv.row({std::to_string(set.near_dup_count[i]), fmt_double(mem.rows[i].mem)});
        }
    }
}

void write_trajectory_csvs(const std::filesystem::path& path,
                           const std::filesystem::path& fractions_path,
                           const cfmem::estimator::Trajectory& traj,
                           const cfmem::scoring::ScoreMatrix& first_scores) {
    {
        CsvWriter csv(path);
        csv.row({"checkpoint", "index", "mem"});
        for (size_t c = 0; c < traj.checkpoints.size(); ++c) {
            const auto& table = traj.tables[c];
            for (size_t d = 0; d < table.rows.size(); ++d) {
                csv.row({std::to_string(traj.checkpoints[c]),
                         std::to_string(first_scores.doc_indices[d]),
                         fmt_double(table.rows[d].mem)});
            }
        }
    }
    CsvWriter csv(fractions_path);
    csv.row({"checkpoint", "tau", "fraction"});
    for (size_t c = 0; c < traj.checkpoints.size(); ++c) {
        for (size_t t = 0; t < traj.thresholds.size(); ++t) {
            csv.row({std::to_string(traj.checkpoints[c]), fmt_double(traj.thresholds[t]),
                     fmt_double(traj.fractions(static_cast<Eigen::Index>(c),
                                               static_cast<Eigen::Index>(t)))});
        }
    }
}

// Column extraction for `analyze hist`: minimal reader for the CSVs this tool
// writes (no quoting, no embedded commas in numeric columns).
std::vector<double> read_csv_column(const std::filesystem::path& path,
                                    const std::string& column) {
    const std::vector<uint8_t> bytes = cfmem::read_file_bytes(path);
    std::vector<std::string> lines;
    std::string cur;
    for (uint8_t b : bytes) {
        if (b == '\n') {
            if (!cur.empty() && cur.back() == '\r') {
                cur.pop_back();
            }
            lines.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(static_cast<char>(b));
        }
    }
    if (!cur.empty()) {
        lines.push_back(cur);
    }
    if (lines.empty()) {
        throw CfmemError("empty csv: " + path.string());
    }
    const auto split_fields = [](const std::string& line) {
        std::vector<std::string> fields;
        size_t pos = 0;
        while (pos <= line.size()) {
            const size_t comma = std::min(line.find(',', pos), line.size());
            fields.push_back(line.substr(pos, comma - pos));
            pos = comma + 1;
        }
        return fields;
    };
    const auto header = split_fields(lines[0]);
    size_t col = header.size();
    for (size_t i = 0; i < header.size(); ++i) {
        if (header[i] == column) {
            col = i;
        }
    }
    if (col == header.size()) {
        throw CfmemError("csv has no column '" + column + "'");
    }
    std::vector<double> out;
    for (size_t i = 1; i < lines.size(); ++i) {
        const auto fields = split_fields(lines[i]);
        if (col >= fields.size()) {
            throw CfmemError("csv row " + std::to_string(i + 1) + " is too short");
        }
        try {
            out.push_back(std::stod(fields[col]));
        } catch (const std::exception&) {
            out.push_back(std::numeric_limits<double>::quiet_NaN());
        }
    }
    return out;
}

int run(int argc, char** argv) {
    CLI::App app{"counterfactual memorization toolkit"};
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "tokenize a jsonl file into a corpus store");
    std::string in_input, in_split = "train", in_out, in_tok = "whitespace";
    int in_max_len = 512, in_max_vocab = 65536;
    int64_t in_min_count = 1;
    bool in_skip = false;
    ingest->add_option("--input", in_input)->required();
    ingest->add_option("--split", in_split);
    ingest->add_option("--out", in_out)->required();
    ingest->add_option("--tokenizer", in_tok);
    ingest->add_option("--max-len", in_max_len);
    ingest->add_option("--max-vocab", in_max_vocab);
    ingest->add_option("--min-count", in_min_count);
    ingest->add_flag("--skip-malformed", in_skip);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a labeled synthetic corpus");
    std::string sy_config, sy_out;
    synth->add_option("--config", sy_config)->required();
    synth->add_option("--out", sy_out)->required();

    // sample
    auto* sample = app.add_subcommand("sample", "draw or validate a membership matrix");
    std::string sa_corpus, sa_out, sa_validate;
    int64_t sa_m = 400;
    double sa_r = 0.25;
    uint64_t sa_seed = 17;
    sample->add_option("--corpus", sa_corpus);
    sample->add_option("--m", sa_m);
    sample->add_option("--r", sa_r);
    sample->add_option("--seed", sa_seed);
    sample->add_option("--out", sa_out);
    sample->add_option("--validate", sa_validate);

    // train
    auto* train = app.add_subcommand("train", "train one model per membership row");
    std::string tr_corpus, tr_membership, tr_spec, tr_out;
    int tr_jobs = 0;
    train->add_option("--corpus", tr_corpus)->required();
    train->add_option("--membership", tr_membership)->required();
    train->add_option("--spec", tr_spec)->required();
    train->add_option("--out", tr_out)->required();
    train->add_option("--jobs", tr_jobs);

    // score
    auto* score = app.add_subcommand("score", "per-token accuracy of every model on a split");
    std::string sc_models, sc_corpus, sc_split = "train", sc_out;
    int sc_jobs = 0;
    std::optional<int> sc_checkpoint;
    score->add_option("--models", sc_models)->required();
    score->add_option("--corpus", sc_corpus)->required();
    score->add_option("--split", sc_split);
    score->add_option("--out", sc_out)->required();
    score->add_option("--checkpoint", sc_checkpoint);
    score->add_option("--jobs", sc_jobs);

    // estimate mem|infl|trajectory
    auto* estimate = app.add_subcommand("estimate", "memorization and influence estimates");
    estimate->require_subcommand(1);

    auto* est_mem = estimate->add_subcommand("mem", "per-doc counterfactual memorization");
    std::string em_scores, em_membership, em_corpus, em_out;
    bool em_logit = false;
    double em_epsilon = 1e-3;
    est_mem->add_option("--scores", em_scores)->required();
    est_mem->add_option("--membership", em_membership)->required();
    est_mem->add_option("--corpus", em_corpus)->required();
    est_mem->add_option("--out", em_out)->required();
    est_mem->add_flag("--logit", em_logit);
    est_mem->add_option("--epsilon", em_epsilon);

    auto* est_infl = estimate->add_subcommand("infl", "counterfactual influence, top-k");
    std::string ei_scores, ei_membership, ei_out, ei_max_out;
    int ei_topk = 10;
    bool ei_logit = false;
    double ei_epsilon = 1e-3;
    est_infl->add_option("--scores", ei_scores)->required();
    est_infl->add_option("--membership", ei_membership)->required();
    est_infl->add_option("--out", ei_out)->required();
    est_infl->add_option("--max-out", ei_max_out);
    est_infl->add_option("--topk", ei_topk);
    est_infl->add_flag("--logit", ei_logit);
    est_infl->add_option("--epsilon", ei_epsilon);

    auto* est_traj = estimate->add_subcommand("trajectory", "memorization across checkpoints");
    std::string et_models, et_corpus, et_membership, et_out, et_fractions_out;
    std::string et_thresholds = "0.05,0.1,0.2";
    int et_jobs = 0;
    est_traj->add_option("--models", et_models)->required();
    est_traj->add_option("--corpus", et_corpus)->required();
    est_traj->add_option("--membership", et_membership)->required();
    est_traj->add_option("--out", et_out)->required();
    est_traj->add_option("--fractions-out", et_fractions_out);
    est_traj->add_option("--thresholds", et_thresholds);
    est_traj->add_option("--jobs", et_jobs);

    // dedup
    auto* dedup_cmd = app.add_subcommand("dedup", "near-duplicate clusters over the train split");
    std::string dd_corpus, dd_out, dd_scores, dd_membership, dd_scatter_out;
    cfmem::dedup::DedupParams dd_params;
    dedup_cmd->add_option("--corpus", dd_corpus)->required();
    dedup_cmd->add_option("--threshold", dd_params.threshold);
    dedup_cmd->add_option("--shingle", dd_params.shingle);
    dedup_cmd->add_option("--hashes", dd_params.hashes);
    dedup_cmd->add_option("--bands", dd_params.bands);
    dedup_cmd->add_option("--seed", dd_params.seed);
    dedup_cmd->add_option("--jobs", dd_params.jobs);
    dedup_cmd->add_option("--out", dd_out)->required();
    dedup_cmd->add_option("--scores", dd_scores);
    dedup_cmd->add_option("--membership", dd_membership);
    dedup_cmd->add_option("--scatter-out", dd_scatter_out);

    // analyze stability|domains|hist
    auto* analyze = app.add_subcommand("analyze", "stability, domain and histogram exports");
    analyze->require_subcommand(1);

    auto* an_stab = analyze->add_subcommand("stability", "ranking stability vs model count");
    std::string as_scores, as_membership, as_out, as_m_list = "6,12,24,48";
    int as_max_partitions = 10;
    bool as_doc_stddev = false;
    an_stab->add_option("--scores", as_scores)->required();
    an_stab->add_option("--membership", as_membership)->required();
    an_stab->add_option("--m-list", as_m_list);
    an_stab->add_option("--max-partitions", as_max_partitions);
    an_stab->add_option("--out", as_out)->required();
    an_stab->add_flag("--doc-stddev", as_doc_stddev);

    auto* an_dom = analyze->add_subcommand("domains", "per-domain memorization percentiles");
    std::string ad_scores, ad_membership, ad_corpus, ad_out;
    int64_t ad_min_docs = 1;
    an_dom->add_option("--scores", ad_scores)->required();
    an_dom->add_option("--membership", ad_membership)->required();
    an_dom->add_option("--corpus", ad_corpus)->required();
    an_dom->add_option("--min-docs", ad_min_docs);
    an_dom->add_option("--out", ad_out)->required();

    auto* an_hist = analyze->add_subcommand("hist", "2-D histogram of two csv columns");
    std::string ah_input, ah_x, ah_y, ah_out;
    int ah_x_bins = 30, ah_y_bins = 30;
    an_hist->add_option("--input", ah_input)->required();
    an_hist->add_option("--x", ah_x)->required();
    an_hist->add_option("--y", ah_y)->required();
    an_hist->add_option("--x-bins", ah_x_bins);
    an_hist->add_option("--y-bins", ah_y_bins);
    an_hist->add_option("--out", ah_out)->required();

    // report
    auto* report = app.add_subcommand("report", "full figure-data export suite");
    std::string rp_corpus, rp_membership, rp_scores, rp_query_scores, rp_models, rp_out;
    std::string rp_m_list = "6,12,24,48", rp_thresholds = "0.05,0.1,0.2";
    int rp_bins = 30, rp_jobs = 0;
    int64_t rp_min_docs = 1;
    report->add_option("--corpus", rp_corpus)->required();
    report->add_option("--membership", rp_membership)->required();
    report->add_option("--scores", rp_scores)->required();
    report->add_option("--query-scores", rp_query_scores);
    report->add_option("--models", rp_models);
    report->add_option("--out", rp_out)->required();
    report->add_option("--m-list", rp_m_list);
    report->add_option("--thresholds", rp_thresholds);
    report->add_option("--bins", rp_bins);
    report->add_option("--min-docs", rp_min_docs);
    report->add_option("--jobs", rp_jobs);

    CLI11_PARSE(app, argc, argv);

    if (*ingest) {
        const auto split = parse_split(in_split);
        if (split == cfmem::corpus::Split::train) {
            cfmem::corpus::IngestConfig config;
            config.tokenizer = parse_tokenizer(in_tok);
            config.max_len = in_max_len;
            config.max_vocab = in_max_vocab;
            config.min_count = in_min_count;
            config.skip_malformed = in_skip;
            const auto corpus = cfmem::corpus::ingest(in_input, config);
            cfmem::corpus::save_corpus(corpus, in_out);
            std::printf("ingested %zu train docs, vocab %d -> %s\n", corpus.train.size(),
                        static_cast<int>(corpus.vocab.size()), in_out.c_str());
        } else {
            auto corpus = cfmem::corpus::load_corpus(in_out);
            cfmem::corpus::ingest_split(corpus, in_input, split, in_skip);
            cfmem::corpus::save_corpus(corpus, in_out);
            std::printf("ingested %zu %s docs into %s\n", corpus.split(split).size(),
                        in_split.c_str(), in_out.c_str());
        }
        return 0;
    }
    if (*synth) {
        const auto config = cfmem::corpus::SynthConfig::from_json_file(sy_config);
        const auto corpus = cfmem::corpus::synthesize(config);
        cfmem::corpus::save_corpus(corpus, sy_out);
        std::printf("synthesized %zu train + %zu validation docs -> %s\n",
                    corpus.train.size(), corpus.validation.size(), sy_out.c_str());
        return 0;
    }
    if (*sample) {
        if (!sa_validate.empty()) {
            const auto mm = cfmem::sampler::load_membership(sa_validate);
            const auto rep = cfmem::sampler::validate_sampler(mm);
            std::printf("%s\n", rep.to_json().c_str());
            return rep.ok ? 0 : 1;
        }
        if (sa_corpus.empty() || sa_out.empty()) {
            throw CfmemError("sample needs either --validate or --corpus and --out");
        }
        const auto corpus = cfmem::corpus::load_corpus(sa_corpus);
        const auto mm = cfmem::sampler::sample_matrix(
            static_cast<Eigen::Index>(corpus.train.size()), sa_m, sa_r, sa_seed);
        cfmem::sampler::save_membership(mm, sa_out);
        std::printf("sampled %lld x %lld membership (modulus %llu) -> %s\n",
                    static_cast<long long>(mm.m()), static_cast<long long>(mm.n()),
                    static_cast<unsigned long long>(mm.modulus), sa_out.c_str());
        return 0;
    }
    if (*train) {
        const auto corpus = cfmem::corpus::load_corpus(tr_corpus);
        const auto mm = cfmem::sampler::load_membership(tr_membership);
        const auto spec = cfmem::models::TrainerSpec::from_json_file(tr_spec);
        cfmem::models::train_store(corpus, mm, spec, tr_out, tr_jobs);
        std::printf("trained %lld models -> %s\n", static_cast<long long>(mm.m()),
                    tr_out.c_str());
        return 0;
    }
    if (*score) {
        const auto corpus = cfmem::corpus::load_corpus(sc_corpus);
        const auto scores = cfmem::scoring::build_scores(sc_models, corpus,
                                                         parse_split(sc_split),
                                                         sc_checkpoint, sc_jobs);
        cfmem::scoring::save_scores(sc_out, scores);
        std::printf("scored %lld models x %lld docs (checkpoint %d) -> %s\n",
                    static_cast<long long>(scores.m()),
                    static_cast<long long>(scores.n_docs()), scores.checkpoint,
                    sc_out.c_str());
        return 0;
    }
    if (*est_mem) {
        const auto corpus = cfmem::corpus::load_corpus(em_corpus);
        auto scores = cfmem::scoring::load_scores(em_scores);
        check_corpus_hash(scores, corpus);
        const auto mm = cfmem::sampler::load_membership(em_membership);
        if (em_logit) {
            scores = cfmem::estimator::logit_scores(scores, em_epsilon);
        }
        const auto table = cfmem::estimator::memorization(scores, mm);
        write_mem_csv(em_out, table, scores, corpus);
        std::printf("mem over %zu docs (mean %s) -> %s\n", table.size(),
                    fmt_double(table.mean_mem()).c_str(), em_out.c_str());
        return 0;
    }
    if (*est_infl) {
        auto scores = cfmem::scoring::load_scores(ei_scores);
        const auto mm = cfmem::sampler::load_membership(ei_membership);
        if (ei_logit) {
            scores = cfmem::estimator::logit_scores(scores, ei_epsilon);
        }
        const auto result = cfmem::estimator::influence(mm, scores, ei_topk);
        write_influence_csv(ei_out, result, scores);
        const std::filesystem::path max_out =
            ei_max_out.empty() ? std::filesystem::path(ei_out).parent_path() / "max_infl.csv"
                               : std::filesystem::path(ei_max_out);
        write_max_infl_csv(max_out, result);
        std::printf("influence of %lld trainers on %lld queries -> %s, %s\n",
                    static_cast<long long>(result.n_train),
                    static_cast<long long>(result.n_query), ei_out.c_str(),
                    max_out.string().c_str());
        return 0;
    }
    if (*est_traj) {
        const auto corpus = cfmem::corpus::load_corpus(et_corpus);
        const auto mm = cfmem::sampler::load_membership(et_membership);
        const auto per_ckpt = cfmem::scoring::build_scores_all_checkpoints(
            et_models, corpus, cfmem::corpus::Split::train, et_jobs);
        const auto traj =
            cfmem::estimator::trajectory(per_ckpt, mm, parse_double_list(et_thresholds));
        const std::filesystem::path fractions_out =
            et_fractions_out.empty()
                ? std::filesystem::path(et_out).parent_path() / "trajectory_fractions.csv"
                : std::filesystem::path(et_fractions_out);
        write_trajectory_csvs(et_out, fractions_out, traj, per_ckpt.front());
        std::printf("trajectory over %zu checkpoints -> %s, %s\n", traj.checkpoints.size(),
                    et_out.c_str(), fractions_out.string().c_str());
        return 0;
    }
    if (*dedup_cmd) {
        const auto corpus = cfmem::corpus::load_corpus(dd_corpus);
        const auto sigs = cfmem::dedup::signatures(corpus.train, dd_params);
        const auto candidates = cfmem::dedup::lsh_candidates(sigs, dd_params.bands);
        const auto clusters = cfmem::dedup::cluster(candidates, corpus.train, dd_params);
        write_dups_csv(dd_out, clusters);
        std::printf("%lld clusters over %lld docs (%zu candidates) -> %s\n",
                    static_cast<long long>(clusters.n_clusters),
                    static_cast<long long>(clusters.n_clustered_docs), candidates.size(),
                    dd_out.c_str());
        if (!dd_scores.empty()) {
            if (dd_membership.empty()) {
                throw CfmemError("--scores needs --membership for the scatter export");
            }
            const auto scores = cfmem::scoring::load_scores(dd_scores);
            check_corpus_hash(scores, corpus);
            const auto mm = cfmem::sampler::load_membership(dd_membership);
            const auto table = cfmem::estimator::memorization(scores, mm);
            const std::filesystem::path scatter_out =
                dd_scatter_out.empty()
                    ? std::filesystem::path(dd_out).parent_path() / "dup_scatter.csv"
                    : std::filesystem::path(dd_scatter_out);
            write_dup_scatter_csv(scatter_out, clusters, table);
            const auto corr = cfmem::dedup::dup_mem_correlation(clusters, table);
            std::printf("dup-mem pearson %s over %lld clustered docs -> %s\n",
                        corr.defined ? fmt_double(corr.pearson).c_str() : "undefined",
                        static_cast<long long>(corr.n), scatter_out.string().c_str());
        }
        return 0;
    }
    if (*an_stab) {
        const auto scores = cfmem::scoring::load_scores(as_scores);
        const auto mm = cfmem::sampler::load_membership(as_membership);
        const auto report_data = cfmem::analysis::stability(scores, mm,
                                                            parse_int_list(as_m_list),
                                                            as_max_partitions);
        write_stability_csv(as_out, report_data);
        if (as_doc_stddev) {
            write_doc_stddev_csvs(std::filesystem::path(as_out).parent_path(), report_data);
        }
        std::printf("stability over %zu model counts -> %s\n", report_data.rows.size(),
                    as_out.c_str());
        return 0;
    }
    if (*an_dom) {
        const auto corpus = cfmem::corpus::load_corpus(ad_corpus);
        const auto scores = cfmem::scoring::load_scores(ad_scores);
        check_corpus_hash(scores, corpus);
        const auto mm = cfmem::sampler::load_membership(ad_membership);
        const auto table = cfmem::estimator::memorization(scores, mm);
        const auto profiles = cfmem::analysis::domain_profiles(table, corpus, ad_min_docs);
        write_domains_csv(ad_out, profiles);
        std::printf("%zu domain profiles -> %s\n", profiles.size(), ad_out.c_str());
        return 0;
    }
    if (*an_hist) {
        const auto x = read_csv_column(ah_input, ah_x);
        const auto y = read_csv_column(ah_input, ah_y);
        const auto h = cfmem::analysis::histogram2d(x, y, ah_x_bins, ah_y_bins);
        write_hist_csv(ah_out, h);
        std::printf("binned %lld points -> %s\n", static_cast<long long>(h.total),
                    ah_out.c_str());
        return 0;
    }
    if (*report) {
        const auto corpus = cfmem::corpus::load_corpus(rp_corpus);
        const auto scores = cfmem::scoring::load_scores(rp_scores);
        check_corpus_hash(scores, corpus);
        const auto mm = cfmem::sampler::load_membership(rp_membership);
        const std::filesystem::path out_dir(rp_out);
        std::filesystem::create_directories(out_dir);

        const auto table = cfmem::estimator::memorization(scores, mm);
        write_mem_csv(out_dir / "mem.csv", table, scores, corpus);

        const auto stab = cfmem::analysis::stability(scores, mm, parse_int_list(rp_m_list));
        write_stability_csv(out_dir / "stability.csv", stab);
        write_doc_stddev_csvs(out_dir, stab);

        const auto profiles = cfmem::analysis::domain_profiles(table, corpus, rp_min_docs);
        write_domains_csv(out_dir / "domains.csv", profiles);

        std::vector<double> mem_vals, simp_vals;
        for (const auto& r : table.rows) {
            if (r.valid) {
                mem_vals.push_back(r.mem);
                simp_vals.push_back(r.simplicity);
            }
        }
        write_hist_csv(out_dir / "hist2d_mem_simplicity.csv",
                       cfmem::analysis::histogram2d(mem_vals, simp_vals, rp_bins, rp_bins));

        cfmem::dedup::DedupParams dd;
        dd.jobs = rp_jobs;
        const auto sigs = cfmem::dedup::signatures(corpus.train, dd);
        const auto clusters =
            cfmem::dedup::cluster(cfmem::dedup::lsh_candidates(sigs, dd.bands),
                                  corpus.train, dd);
        write_dups_csv(out_dir / "dups.csv", clusters);
        write_dup_scatter_csv(out_dir / "dup_scatter.csv", clusters, table);
        if (clusters.n_clustered_docs >= 3) {
            const auto corr = cfmem::dedup::dup_mem_correlation(clusters, table);
            std::printf("dup-mem pearson: %s (n=%lld)\n",
                        corr.defined ? fmt_double(corr.pearson).c_str() : "undefined",
                        static_cast<long long>(corr.n));
        }

        if (!rp_query_scores.empty()) {
            const auto query_scores = cfmem::scoring::load_scores(rp_query_scores);
            check_corpus_hash(query_scores, corpus);
            const auto infl = cfmem::estimator::influence(mm, query_scores, 10);
            write_influence_csv(out_dir / "influence_topk.csv", infl, query_scores);
            write_max_infl_csv(out_dir / "max_infl.csv", infl);
            std::vector<double> mem_v, max_v;
            for (size_t i = 0; i < table.rows.size(); ++i) {
                if (table.rows[i].valid && infl.train_valid[i]) {
                    mem_v.push_back(table.rows[i].mem);
                    max_v.push_back(infl.max_infl[i]);
                }
            }
            write_hist_csv(out_dir / "hist2d_mem_max_infl.csv",
                           cfmem::analysis::histogram2d(mem_v, max_v, rp_bins, rp_bins));
        }

        if (!rp_models.empty()) {
            const auto manifest = cfmem::models::StoreManifest::from_file(rp_models);
            if (manifest.spec.kind == cfmem::models::ModelKind::neural) {
                const auto per_ckpt = cfmem::scoring::build_scores_all_checkpoints(
                    rp_models, corpus, cfmem::corpus::Split::train, rp_jobs);
                const auto traj = cfmem::estimator::trajectory(
                    per_ckpt, mm, parse_double_list(rp_thresholds));
                write_trajectory_csvs(out_dir / "trajectory.csv",
                                      out_dir / "trajectory_fractions.csv", traj,
                                      per_ckpt.front());
            } else {
                std::fprintf(stderr, "note: n-gram store has no checkpoints, "
                                     "trajectory export skipped\n");
            }
        }
        std::printf("report -> %s\n", out_dir.string().c_str());
        return 0;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
