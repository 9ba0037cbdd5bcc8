#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "openset/calibration.hpp"
#include "openset/data_io.hpp"
#include "openset/embedder.hpp"
#include "openset/evaluation.hpp"
#include "openset/recognizer.hpp"

namespace openset {

/// Every knob of a pipeline run.
struct RunConfig {
    SynthConfig synth;
    std::vector<std::size_t> hidden{32};
    std::size_t embed_dim = 16;
    TrainConfig train;
    std::size_t n_shots = 5;
    std::size_t k = 5;
    std::size_t vote_k = 0;
    double p_norm = 2.0;
    std::size_t bins = 50;
    std::uint64_t seed = 7;

    /// Copies the shared seed and p-norm into the per-stage configs.
    void propagate();
};

namespace stage {

void synth(const SynthConfig& cfg, const std::filesystem::path& out_dir);

TrainResult train(const std::filesystem::path& data, const std::filesystem::path& model_out,
                  const std::filesystem::path& loss_csv, const std::vector<std::size_t>& hidden,
                  std::size_t embed_dim, std::uint64_t init_seed, const TrainConfig& cfg);

void embed(const std::filesystem::path& model, const std::filesystem::path& in,
           const std::filesystem::path& out);

/// Enrolls the records not flagged Novel.
Gallery enroll(const std::filesystem::path& embeddings, const std::filesystem::path& gallery_dir,
               std::size_t n_shots, std::uint64_t seed, double p_norm);

/// Gallery members are skipped unless keep_enrolled is set.
CalibrationResult calibrate(const std::filesystem::path& gallery_dir,
                            const std::filesystem::path& dev, const std::filesystem::path& out_dir,
                            std::size_t k, std::size_t bins, bool keep_enrolled = false);

struct RecognizeOptions {
    std::size_t k = 5;
    std::size_t vote_k = 0;
    std::optional<double> threshold_override;
    bool keep_enrolled = false;
};

std::vector<RecognitionResult> recognize(const std::filesystem::path& gallery_dir,
                                         const std::filesystem::path& calibration,
                                         const std::filesystem::path& queries,
                                         const std::filesystem::path& out,
                                         const RecognizeOptions& opts);

/// Joins results to queries by id; queries without a result are skipped.
EndToEndReport evaluate(const std::filesystem::path& queries,
                        const std::filesystem::path& results,
                        const std::filesystem::path& out_dir);

/// Collects plot-ready CSVs from whichever inputs are given.
void report(const std::optional<std::filesystem::path>& calibration,
            const std::optional<std::filesystem::path>& loss_trace,
            const std::optional<std::filesystem::path>& evaluation_dir,
            const std::filesystem::path& out_dir);

} // namespace stage

struct PipelineSummary {
    CalibrationResult calibration;
    std::vector<std::string> query_ids;
    std::vector<RecognitionResult> results;
    EndToEndReport test_report;
    std::vector<double> loss_trace;
};

/// synth -> train -> embed -> enroll -> calibrate -> recognize -> evaluate -> report,
/// with every artifact written under work_dir.
PipelineSummary run_pipeline(RunConfig cfg, const std::filesystem::path& work_dir);

/// Same protocol without touching the filesystem.
PipelineSummary run_in_memory(RunConfig cfg);

void write_loss_csv(const std::vector<double>& trace, const std::filesystem::path& path);

} // namespace openset
