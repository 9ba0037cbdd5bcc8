#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "openset/gallery.hpp"
#include "openset/numeric.hpp"

namespace openset {

struct RecognitionResult {
    bool novel = false;
    std::optional<std::string> label;         // set on the Known path only
    double mean_distance = 0.0;
    std::map<std::string, std::size_t> votes;  // empty on the Novel path
    QueryNeighborhood neighborhood;
};

struct RecognizerConfig {
    std::size_t k = 5;       // neighbors averaged for the Novel test
    std::size_t vote_k = 0;  // neighbors voting on the Known path; 0 means k
    double p_norm = 2.0;
};

/// Novel when the mean top-K distance is >= threshold; otherwise the K nearest
/// labels vote. Vote ties go to the label with the smaller mean neighbor
/// distance, then to the lexicographically smaller label.
RecognitionResult recognize(const Gallery& gallery, double threshold,
                            std::span<const double> v_test, const RecognizerConfig& cfg);

RecognitionResult recognize(const Gallery& gallery, double threshold,
                            std::span<const double> v_test, std::size_t k, double p = 2.0);

/// Element i is recognize(queries[i]); a failure is rethrown naming its index.
std::vector<RecognitionResult> recognize_batch(const Gallery& gallery, double threshold,
                                               std::span<const Vector> queries,
                                               const RecognizerConfig& cfg);

std::string result_to_json_line(const std::string& id, const RecognitionResult& result);

/// Minimal view of a results line, enough for evaluation.
struct StoredResult {
    std::string id;
    bool novel = false;
    std::optional<std::string> label;
    double mean_distance = 0.0;
    std::map<std::string, std::size_t> votes;
};

void write_results(std::span<const std::string> ids, std::span<const RecognitionResult> results,
                   const std::filesystem::path& path);
std::vector<StoredResult> read_results(const std::filesystem::path& path);

} // namespace openset
