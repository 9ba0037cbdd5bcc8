#include "openset/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "openset/error.hpp"

namespace openset {

namespace fs = std::filesystem;

namespace {

// Offsets that give each stochastic stage its own stream off the run seed.
constexpr std::uint64_t kInitSeedOffset = 1;
constexpr std::uint64_t kTrainSeedOffset = 2;
constexpr std::uint64_t kDevEnrollSeedOffset = 3;
constexpr std::uint64_t kTestEnrollSeedOffset = 4;

std::vector<Record> known_only(const std::vector<Record>& records) {
    std::vector<Record> out;
    for (const auto& r : records) {
        if (!r.novel.value_or(false)) out.push_back(r);
    }
    return out;
}

std::vector<Record> without_enrolled(const std::vector<Record>& records, const Gallery& gallery) {
    std::unordered_set<std::string> enrolled;
    for (const auto& e : gallery.entries()) enrolled.insert(e.id);
    std::vector<Record> out;
    for (const auto& r : records) {
        if (!enrolled.count(r.id)) out.push_back(r);
    }
    return out;
}

EndToEndReport report_for(const std::vector<Record>& queries,
                          const std::vector<RecognitionResult>& results) {
    std::vector<Truth> truth;
    std::vector<Prediction> predictions;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        if (!queries[i].novel) {
            throw Error(ErrorCode::invalid_data,
                        "query '" + queries[i].id + "' has no novelty flag to evaluate against");
        }
        truth.push_back({queries[i].label, *queries[i].novel});
        predictions.push_back({results[i].novel, results[i].label.value_or("")});
    }
    return end_to_end_report(truth, predictions);
}

void warn_if_clamped(const Gallery& gallery, std::size_t k) {
    if (k > gallery.size()) {
        std::fprintf(stderr, "warning: k=%zu exceeds gallery size %zu; using %zu neighbors\n", k,
                     gallery.size(), gallery.size());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
    out << text;
}

void copy_into(const fs::path& from, const fs::path& to) {
    if (!fs::exists(from)) throw Error(ErrorCode::io, "missing file " + from.string());
    fs::copy_file(from, to, fs::copy_options::overwrite_existing);
}

} // namespace

void RunConfig::propagate() {
    synth.seed = seed;
    train.seed = seed + kTrainSeedOffset;
    train.p_norm = p_norm;
}

void write_loss_csv(const std::vector<double>& trace, const fs::path& path) {
    std::string text = "epoch,mean_loss\n";
    char buf[64];
    for (std::size_t e = 0; e < trace.size(); ++e) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", e + 1, trace[e]);
        text += buf;
    }
    write_text(path, text);
}

namespace stage {

void synth(const SynthConfig& cfg, const fs::path& out_dir) {
    const auto ds = generate_synthetic(cfg);
    fs::create_directories(out_dir);
    write_embeddings(ds.train, out_dir / "train.jsonl");
    write_embeddings(ds.train_val, out_dir / "train_val.jsonl");
    write_embeddings(ds.dev, out_dir / "dev.jsonl");
    write_embeddings(ds.test, out_dir / "test.jsonl");
    save_manifest(ds.manifest, out_dir / "manifest.json");
}

TrainResult train(const fs::path& data, const fs::path& model_out, const fs::path& loss_csv,
                  const std::vector<std::size_t>& hidden, std::size_t embed_dim,
                  std::uint64_t init_seed, const TrainConfig& cfg) {
    const auto records = read_embeddings(data);
    if (records.empty()) throw Error(ErrorCode::invalid_data, "no training records in " + data.string());
    auto model = EmbedderModel::initialize(records.front().values.size(), hidden, embed_dim, init_seed);
    auto result = openset::train(std::move(model), records, cfg);
    save_checkpoint(result.model, model_out);
    write_loss_csv(result.loss_trace, loss_csv);
    return result;
}

void embed(const fs::path& model, const fs::path& in, const fs::path& out) {
    const auto m = load_checkpoint(model);
    write_embeddings(embed_records(m, read_embeddings(in)), out);
}

Gallery enroll(const fs::path& embeddings, const fs::path& gallery_dir, std::size_t n_shots,
               std::uint64_t seed, double p_norm) {
    const auto known = known_only(read_embeddings(embeddings));
    auto gallery = openset::enroll(known, n_shots, seed);
    save_gallery(gallery_dir, gallery, GalleryManifest{n_shots, seed, p_norm, gallery.dim()});
    return gallery;
}

CalibrationResult calibrate(const fs::path& gallery_dir, const fs::path& dev,
                            const fs::path& out_dir, std::size_t k, std::size_t bins,
                            bool keep_enrolled) {
    const auto loaded = load_gallery(gallery_dir);
    auto records = read_embeddings(dev);
    if (!keep_enrolled) records = without_enrolled(records, loaded.gallery);
    warn_if_clamped(loaded.gallery, k);
    const auto scores = score_dev_set(loaded.gallery, records, k, loaded.manifest.p_norm);
    auto result = openset::calibrate(scores, bins);
    fs::create_directories(out_dir);
    save_calibration(result, out_dir / "calibration.json");
    write_roc_csv(result.roc, out_dir / "roc.csv");
    write_histogram_csv(result, out_dir / "histogram.csv");
    return result;
}

std::vector<RecognitionResult> recognize(const fs::path& gallery_dir, const fs::path& calibration,
                                         const fs::path& queries, const fs::path& out,
                                         const RecognizeOptions& opts) {
    const auto loaded = load_gallery(gallery_dir);
    const double threshold = opts.threshold_override
                                 ? *opts.threshold_override
                                 : load_calibration(calibration).threshold;
    auto records = read_embeddings(queries);
    if (!opts.keep_enrolled) records = without_enrolled(records, loaded.gallery);
    std::vector<Vector> vectors;
    std::vector<std::string> ids;
    for (auto& r : records) {
        vectors.push_back(std::move(r.values));
        ids.push_back(r.id);
    }
    warn_if_clamped(loaded.gallery, std::max(opts.k, opts.vote_k));
    const RecognizerConfig rc{opts.k, opts.vote_k, loaded.manifest.p_norm};
    auto results = recognize_batch(loaded.gallery, threshold, vectors, rc);
    write_results(ids, results, out);
    return results;
}

EndToEndReport evaluate(const fs::path& queries, const fs::path& results, const fs::path& out_dir) {
    const auto records = read_embeddings(queries);
    std::unordered_map<std::string, const Record*> by_id;
    for (const auto& r : records) by_id[r.id] = &r;

    std::vector<Truth> truth;
    std::vector<Prediction> predictions;
    for (const auto& res : read_results(results)) {
        const auto it = by_id.find(res.id);
        if (it == by_id.end()) {
            throw Error(ErrorCode::invalid_data, "result id '" + res.id + "' not found in queries");
        }
        const Record& q = *it->second;
        if (!q.novel) {
            throw Error(ErrorCode::invalid_data, "query '" + q.id + "' has no novelty flag");
        }
        truth.push_back({q.label, *q.novel});
        predictions.push_back({res.novel, res.label.value_or("")});
    }
    auto report = end_to_end_report(truth, predictions);
    fs::create_directories(out_dir);
    write_text(out_dir / "report.json", report_to_string(report));
    write_f1_csv(report.bipartition, out_dir / "bipartition.csv");
    write_f1_csv(report.overall, out_dir / "classification.csv");
    write_f1_csv(report.known_types, out_dir / "known_types.csv");
    write_confusion_csv(report.bipartition.matrix, out_dir / "confusion_bipartition.csv");
    write_confusion_csv(report.overall.matrix, out_dir / "confusion_overall.csv");
    return report;
}

void report(const std::optional<fs::path>& calibration, const std::optional<fs::path>& loss_trace,
            const std::optional<fs::path>& evaluation_dir, const fs::path& out_dir) {
    if (!calibration && !loss_trace && !evaluation_dir) {
        throw Error(ErrorCode::invalid_argument,
                    "report needs at least one of --calibration, --loss-trace, --evaluation-dir");
    }
    fs::create_directories(out_dir);
    if (calibration) {
        const auto cal = load_calibration(*calibration);
        write_roc_csv(cal.roc, out_dir / "roc.csv");
        write_histogram_csv(cal, out_dir / "histogram.csv");
        char buf[256];
        std::snprintf(buf, sizeof buf,
                      "threshold,youden_j,tpr,fpr,auc\n%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      cal.threshold, cal.youden_j, cal.tpr_at, cal.fpr_at, cal.roc.auc);
        write_text(out_dir / "operating_point.csv", buf);
    }
    if (loss_trace) copy_into(*loss_trace, out_dir / "loss.csv");
    if (evaluation_dir) {
        for (const char* name : {"bipartition.csv", "classification.csv", "known_types.csv",
                                 "confusion_bipartition.csv", "confusion_overall.csv"}) {
            copy_into(*evaluation_dir / name, out_dir / name);
        }
    }
}

} // namespace stage

PipelineSummary run_pipeline(RunConfig cfg, const fs::path& work_dir) {
    cfg.propagate();
    const fs::path data = work_dir / "data";
    const fs::path emb = work_dir / "embeddings";
    fs::create_directories(emb);

    stage::synth(cfg.synth, data);
    PipelineSummary summary;
    summary.loss_trace = stage::train(data / "train.jsonl", work_dir / "model.json",
                                      work_dir / "loss.csv", cfg.hidden, cfg.embed_dim,
                                      cfg.seed + kInitSeedOffset, cfg.train)
                             .loss_trace;
    for (const char* split : {"train_val", "dev", "test"}) {
        stage::embed(work_dir / "model.json", data / (std::string(split) + ".jsonl"),
                     emb / (std::string(split) + ".jsonl"));
    }
    stage::enroll(emb / "dev.jsonl", work_dir / "dev_gallery", cfg.n_shots,
                  cfg.seed + kDevEnrollSeedOffset, cfg.p_norm);
    summary.calibration = stage::calibrate(work_dir / "dev_gallery", emb / "dev.jsonl",
                                           work_dir / "calibration", cfg.k, cfg.bins);
    stage::enroll(emb / "test.jsonl", work_dir / "test_gallery", cfg.n_shots,
                  cfg.seed + kTestEnrollSeedOffset, cfg.p_norm);
    stage::RecognizeOptions opts;
    opts.k = cfg.k;
    opts.vote_k = cfg.vote_k;
    summary.results = stage::recognize(work_dir / "test_gallery",
                                       work_dir / "calibration" / "calibration.json",
                                       emb / "test.jsonl", work_dir / "results.jsonl", opts);
    for (const auto& r : read_results(work_dir / "results.jsonl")) summary.query_ids.push_back(r.id);
    summary.test_report =
        stage::evaluate(emb / "test.jsonl", work_dir / "results.jsonl", work_dir / "evaluation");
    stage::report(work_dir / "calibration" / "calibration.json", work_dir / "loss.csv",
                  work_dir / "evaluation", work_dir / "report");
    return summary;
}

PipelineSummary run_in_memory(RunConfig cfg) {
    cfg.propagate();
    const auto ds = generate_synthetic(cfg.synth);
    auto model = EmbedderModel::initialize(cfg.synth.feature_dim, cfg.hidden, cfg.embed_dim,
                                           cfg.seed + kInitSeedOffset);
    auto trained = train(std::move(model), ds.train, cfg.train);

    PipelineSummary summary;
    summary.loss_trace = trained.loss_trace;
    const auto dev = embed_records(trained.model, ds.dev);
    const auto test = embed_records(trained.model, ds.test);

    const auto dev_gallery = enroll(known_only(dev), cfg.n_shots, cfg.seed + kDevEnrollSeedOffset);
    const auto scores = score_dev_set(dev_gallery, without_enrolled(dev, dev_gallery), cfg.k, cfg.p_norm);
    summary.calibration = calibrate(scores, cfg.bins);

    const auto test_gallery = enroll(known_only(test), cfg.n_shots, cfg.seed + kTestEnrollSeedOffset);
    const auto queries = without_enrolled(test, test_gallery);
    std::vector<Vector> vectors;
    for (const auto& q : queries) {
        vectors.push_back(q.values);
        summary.query_ids.push_back(q.id);
    }
    summary.results = recognize_batch(test_gallery, summary.calibration.threshold, vectors,
                                      RecognizerConfig{cfg.k, cfg.vote_k, cfg.p_norm});
    summary.test_report = report_for(queries, summary.results);
    return summary;
}

} // namespace openset
