// Command-line driver for the open-set recognition pipeline.
//
//   openset synth      -> dataset JSONL files + split manifest
//   openset train      -> embedder checkpoint + loss trace CSV
//   openset embed      -> embedding JSONL
//   openset enroll     -> gallery directory
//   openset calibrate  -> calibration.json, roc.csv, histogram.csv
//   openset recognize  -> results JSONL
//   openset evaluate   -> F1 reports and confusion matrices
//   openset report     -> plot-ready CSV bundle
//   openset pipeline   -> all of the above under one work directory

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "openset/error.hpp"
#include "openset/pipeline.hpp"

namespace fs = std::filesystem;
using namespace openset;

namespace {

constexpr int kUsageExit = static_cast<int>(ErrorCode::invalid_argument);

void add_synth_flags(CLI::App* cmd, SynthConfig& s) {
    cmd->add_option("--train-classes", s.train_classes, "Classes used to train the embedder");
    cmd->add_option("--dev-known", s.dev_known, "Known classes in the development split");
    cmd->add_option("--dev-novel", s.dev_novel, "Novel classes in the development split");
    cmd->add_option("--test-known", s.test_known, "Known classes in the test split");
    cmd->add_option("--test-novel", s.test_novel, "Novel classes in the test split");
    cmd->add_option("--samples-per-class", s.samples_per_class, "Samples drawn per class")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--feature-dim", s.feature_dim, "Raw feature dimension")->check(CLI::PositiveNumber);
    cmd->add_option("--spread", s.cluster_spread, "Per-axis std-dev of each cluster");
    cmd->add_option("--separation", s.cluster_separation, "Minimum distance between cluster centers");
    cmd->add_option("--center-gap-factor", s.center_gap_factor, "Expected center gap in units of --separation");
    cmd->add_option("--train-fraction", s.train_fraction, "Class-wise train/validation split");
}

void add_train_flags(CLI::App* cmd, TrainConfig& t, std::string& mining,
                     std::vector<std::size_t>& hidden, std::size_t& embed_dim) {
    cmd->add_option("--epochs", t.epochs, "Training epochs");
    cmd->add_option("--learning-rate,--lr", t.learning_rate, "Adam learning rate");
    cmd->add_option("--margin", t.margin, "Triplet margin");
    cmd->add_option("--batch-size", t.batch_size, "Samples per batch")->check(CLI::PositiveNumber);
    cmd->add_option("--mining", mining, "Triplet mining: random | batch_hard")
        ->check(CLI::IsMember({"random", "batch_hard"}));
    cmd->add_option("--adam-beta1", t.adam_beta1, "Adam first-moment decay");
    cmd->add_option("--adam-beta2", t.adam_beta2, "Adam second-moment decay");
    cmd->add_option("--adam-epsilon", t.adam_epsilon, "Adam epsilon");
    cmd->add_option("--hidden", hidden, "Hidden layer widths (relu)")->expected(0, -1);
    cmd->add_option("--embed-dim", embed_dim, "Embedding dimension")->check(CLI::PositiveNumber);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Open-set recognition: metric-learning embedder, few-shot gallery, "
                 "Known/Novel calibration and KNN classification"};
    app.option_defaults()->always_capture_default();
    app.set_config("--config", "", "Read flags from an INI/TOML key=value file");
    app.require_subcommand(1);

    RunConfig run;
    std::string mining = "random";
    std::uint64_t seed = run.seed;

    // synth
    fs::path synth_out;
    auto* synth = app.add_subcommand("synth", "Generate a seeded Gaussian-cluster dataset");
    synth->add_option("--out-dir", synth_out, "Output directory")->required();
    synth->add_option("--seed", seed, "RNG seed");
    add_synth_flags(synth, run.synth);

    // train
    fs::path train_data, model_out, loss_out;
    auto* train = app.add_subcommand("train", "Train the embedder with triplet margin loss");
    train->add_option("--data", train_data, "Training records (JSONL)")->required();
    train->add_option("--model", model_out, "Checkpoint output path")->required();
    train->add_option("--loss-trace", loss_out, "Per-epoch loss CSV output")->required();
    train->add_option("--seed", seed, "RNG seed");
    train->add_option("--p-norm", run.p_norm, "Distance norm p (>= 1)");
    add_train_flags(train, run.train, mining, run.hidden, run.embed_dim);

    // embed
    fs::path embed_model, embed_in, embed_out;
    auto* embed = app.add_subcommand("embed", "Map feature records through a checkpoint");
    embed->add_option("--model", embed_model, "Checkpoint")->required();
    embed->add_option("--in", embed_in, "Feature records (JSONL)")->required();
    embed->add_option("--out", embed_out, "Embedding records output (JSONL)")->required();

    // enroll
    fs::path enroll_in, gallery_dir;
    auto* enroll = app.add_subcommand("enroll", "Enroll N shots per Known class into a gallery");
    enroll->add_option("--embeddings", enroll_in, "Embedding records (JSONL)")->required();
    enroll->add_option("--gallery", gallery_dir, "Gallery output directory")->required();
    enroll->add_option("--n-shots", run.n_shots, "Shots per class")->check(CLI::PositiveNumber);
    enroll->add_option("--seed", seed, "RNG seed");
    enroll->add_option("--p-norm", run.p_norm, "Distance norm p recorded in the gallery");

    // calibrate
    fs::path cal_gallery, cal_dev, cal_out;
    bool keep_enrolled = false;
    auto* calibrate = app.add_subcommand("calibrate", "Pick the Known/Novel threshold by Youden index");
    calibrate->add_option("--gallery", cal_gallery, "Gallery directory")->required();
    calibrate->add_option("--dev", cal_dev, "Development embeddings with novelty flags")->required();
    calibrate->add_option("--out-dir", cal_out, "Output directory")->required();
    calibrate->add_option("--k", run.k, "Neighbors averaged into the distance score")->check(CLI::PositiveNumber);
    calibrate->add_option("--bins", run.bins, "Histogram bins")->check(CLI::PositiveNumber);
    calibrate->add_flag("--keep-enrolled", keep_enrolled, "Also score records that are in the gallery");

    // recognize
    fs::path rec_gallery, rec_cal, rec_queries, rec_out;
    std::optional<double> threshold_override;
    auto* recognize = app.add_subcommand("recognize", "Classify queries as Novel or a Known class");
    recognize->add_option("--gallery", rec_gallery, "Gallery directory")->required();
    recognize->add_option("--calibration", rec_cal, "calibration.json");
    recognize->add_option("--queries", rec_queries, "Query embeddings (JSONL)")->required();
    recognize->add_option("--out", rec_out, "Results output (JSONL)")->required();
    recognize->add_option("--k", run.k, "Neighbors averaged for the Novel test")->check(CLI::PositiveNumber);
    recognize->add_option("--vote-k", run.vote_k, "Neighbors voting on Known queries (0 = same as --k)");
    recognize->add_option("--threshold-override", threshold_override, "Use this threshold instead of the calibrated one");
    recognize->add_flag("--keep-enrolled", keep_enrolled, "Also classify records that are in the gallery");

    // evaluate
    fs::path eval_queries, eval_results, eval_out;
    auto* evaluate = app.add_subcommand("evaluate", "Weighted-F1 reports for a results file");
    evaluate->add_option("--queries", eval_queries, "Query records with labels and novelty flags")->required();
    evaluate->add_option("--results", eval_results, "Results JSONL")->required();
    evaluate->add_option("--out-dir", eval_out, "Output directory")->required();

    // report
    std::optional<fs::path> rep_cal, rep_loss, rep_eval;
    fs::path rep_out;
    auto* report = app.add_subcommand("report", "Bundle plot-ready CSVs");
    report->add_option("--calibration", rep_cal, "calibration.json");
    report->add_option("--loss-trace", rep_loss, "Loss trace CSV");
    report->add_option("--evaluation-dir", rep_eval, "Directory written by evaluate");
    report->add_option("--out-dir", rep_out, "Output directory")->required();

    // pipeline
    fs::path work_dir;
    auto* pipeline = app.add_subcommand("pipeline", "Run every stage end to end");
    pipeline->add_option("--work-dir", work_dir, "Directory for all artifacts")->required();
    pipeline->add_option("--seed", seed, "RNG seed");
    pipeline->add_option("--p-norm", run.p_norm, "Distance norm p (>= 1)");
    pipeline->add_option("--n-shots", run.n_shots, "Shots per class")->check(CLI::PositiveNumber);
    pipeline->add_option("--k", run.k, "Neighbors averaged for the Novel test")->check(CLI::PositiveNumber);
    pipeline->add_option("--vote-k", run.vote_k, "Neighbors voting on Known queries (0 = same as --k)");
    pipeline->add_option("--bins", run.bins, "Histogram bins")->check(CLI::PositiveNumber);
    add_synth_flags(pipeline, run.synth);
    add_train_flags(pipeline, run.train, mining, run.hidden, run.embed_dim);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "openset: " << e.what() << "\n";
        return kUsageExit;
    }

    try {
        run.seed = seed;
        run.train.mining = parse_mining(mining);
        run.propagate();
        if (*synth) {
            stage::synth(run.synth, synth_out);
        } else if (*train) {
            run.train.validate();
            stage::train(train_data, model_out, loss_out, run.hidden, run.embed_dim, run.seed + 1,
                         run.train);
        } else if (*embed) {
            stage::embed(embed_model, embed_in, embed_out);
        } else if (*enroll) {
            stage::enroll(enroll_in, gallery_dir, run.n_shots, run.seed, run.p_norm);
        } else if (*calibrate) {
            stage::calibrate(cal_gallery, cal_dev, cal_out, run.k, run.bins, keep_enrolled);
        } else if (*recognize) {
            if (!threshold_override && rec_cal.empty()) {
                throw Error(ErrorCode::invalid_argument,
                            "recognize needs --calibration or --threshold-override");
            }
            stage::RecognizeOptions opts;
            opts.k = run.k;
            opts.vote_k = run.vote_k;
            opts.threshold_override = threshold_override;
            opts.keep_enrolled = keep_enrolled;
            stage::recognize(rec_gallery, rec_cal, rec_queries, rec_out, opts);
        } else if (*evaluate) {
            const auto r = stage::evaluate(eval_queries, eval_results, eval_out);
            std::printf("bipartition weighted F1 %.4f | known-type weighted F1 %.4f\n",
                        r.bipartition.f1.weighted_f1, r.known_types.f1.weighted_f1);
        } else if (*report) {
            stage::report(rep_cal, rep_loss, rep_eval, rep_out);
        } else if (*pipeline) {
            run.train.validate();
            const auto s = run_pipeline(run, work_dir);
            std::printf("threshold %.6g (J %.4f, AUC %.4f) | bipartition weighted F1 %.4f | "
                        "known-type weighted F1 %.4f\n",
                        s.calibration.threshold, s.calibration.youden_j, s.calibration.roc.auc,
                        s.test_report.bipartition.f1.weighted_f1,
                        s.test_report.known_types.f1.weighted_f1);
        }
    } catch (const Error& e) {
        std::cerr << "openset: " << e.what() << "\n";
        return static_cast<int>(e.code());
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "openset: " << e.what() << "\n";
        return static_cast<int>(ErrorCode::io);
    } catch (const std::exception& e) {
        std::cerr << "openset: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
