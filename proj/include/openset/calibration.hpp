#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "openset/gallery.hpp"
#include "openset/record.hpp"

namespace openset {

/// Mean top-K gallery distance of one development vector. Novel is the positive class.
struct ScoredSample {
    double score = 0.0;
    bool is_novel = false;

    bool operator==(const ScoredSample&) const = default;
};

/// Operating point of the rule "score >= threshold => Novel".
struct RocPoint {
    double threshold = 0.0;
    double tpr = 0.0;
    double fpr = 0.0;
    std::size_t true_positives = 0;
    std::size_t false_positives = 0;
};

struct RocCurve {
    std::vector<RocPoint> points;  // threshold descending, so fpr is non-decreasing
    double auc = 0.0;
    std::size_t positives = 0;
    std::size_t negatives = 0;
};

struct Histogram {
    std::vector<double> edges;  // bins + 1 shared edges
    std::vector<std::size_t> counts;
};

struct YoudenChoice {
    double threshold = 0.0;
    double youden_j = 0.0;
    double tpr = 0.0;
    double fpr = 0.0;
};

struct CalibrationResult {
    double threshold = 0.0;
    double youden_j = 0.0;
    double tpr_at = 0.0;
    double fpr_at = 0.0;
    RocCurve roc;
    Histogram known_hist;
    Histogram novel_hist;
};

/// Scores every dev record (each needs a novelty flag) against the gallery.
std::vector<ScoredSample> score_dev_set(const Gallery& gallery, std::span<const Record> dev,
                                        std::size_t k, double p = 2.0);

/// Candidate thresholds: one below the smallest score, midpoints between
/// consecutive distinct scores, one above the largest. AUC is trapezoidal.
RocCurve roc_curve(std::span<const ScoredSample> samples);

/// Maximizes J = TPR - FPR; ties go to lower FPR, then to lower threshold.
YoudenChoice youden_threshold(const RocCurve& roc);

struct HistogramPair {
    Histogram known;
    Histogram novel;
};

/// Shared bin edges over [min score, max score]; a zero-width range is widened to [min, min + 1].
HistogramPair export_histograms(std::span<const ScoredSample> samples, std::size_t bins = 50);

CalibrationResult calibrate(std::span<const ScoredSample> samples, std::size_t bins = 50);

std::string calibration_to_string(const CalibrationResult& result);
CalibrationResult calibration_from_string(const std::string& text);
void save_calibration(const CalibrationResult& result, const std::filesystem::path& path);
CalibrationResult load_calibration(const std::filesystem::path& path);

/// threshold,tpr,fpr rows in curve order.
void write_roc_csv(const RocCurve& roc, const std::filesystem::path& path);
/// bin_lo,bin_hi,known,novel rows.
void write_histogram_csv(const CalibrationResult& result, const std::filesystem::path& path);

} // namespace openset
