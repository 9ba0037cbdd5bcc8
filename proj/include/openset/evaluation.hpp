#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace openset {

inline constexpr const char* kKnownLabel = "Known";
inline constexpr const char* kNovelLabel = "Novel";

/// Rows are actual classes, columns predicted classes.
struct ConfusionMatrix {
    std::vector<std::string> labels;
    std::vector<std::vector<std::size_t>> counts;

    std::size_t index_of(const std::string& label) const;
    std::size_t total() const;
    std::size_t row_sum(std::size_t r) const;
};

struct ClassScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;  // actual occurrences
};

struct F1Report {
    std::map<std::string, ClassScore> per_class;
    double weighted_precision = 0.0;
    double weighted_recall = 0.0;
    double weighted_f1 = 0.0;  // support-weighted mean of per-class F1
};

struct ClassificationReport {
    ConfusionMatrix matrix;
    F1Report f1;
};

struct BipartitionReport : ClassificationReport {
    double novel_f1 = 0.0;  // binary F1 with Novel as the positive class
};

/// Label set is the sorted union of actual and predicted labels. Precision or
/// recall of 0/0 counts as 0.
ClassificationReport classification_report(std::span<const std::string> actual,
                                           std::span<const std::string> predicted);

BipartitionReport bipartition_report(const std::vector<bool>& actual_novel,
                                     const std::vector<bool>& predicted_novel);

/// What the pipeline said about one query.
struct Prediction {
    bool novel = false;
    std::string label;  // ignored when novel
};

/// Ground truth for one query.
struct Truth {
    std::string label;
    bool novel = false;
};

struct EndToEndReport {
    BipartitionReport bipartition;
    ClassificationReport overall;      // Known classes plus the Novel pseudo-class
    ClassificationReport known_types;  // restricted to actually-Known queries
};

EndToEndReport end_to_end_report(std::span<const Truth> truth,
                                 std::span<const Prediction> predictions);

std::string report_to_string(const EndToEndReport& report);
void write_f1_csv(const ClassificationReport& report, const std::filesystem::path& path);
void write_confusion_csv(const ConfusionMatrix& matrix, const std::filesystem::path& path);

} // namespace openset
