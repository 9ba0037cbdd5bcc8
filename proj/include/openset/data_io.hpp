#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "openset/record.hpp"

namespace openset {

// One JSON object per line: {"id", "label", "novelty" (optional), "vector"}.
// Reals are written with 17 significant digits so values round-trip exactly.
std::string record_to_json_line(const Record& record);
std::vector<Record> parse_embeddings(const std::string& text, const std::string& source = "<text>");
std::vector<Record> read_embeddings(const std::filesystem::path& path);
void write_embeddings(std::span<const Record> records, const std::filesystem::path& path);

/// Class-disjoint split of a dataset into embedder-training, development and test roles.
struct SplitManifest {
    std::vector<std::string> train_classes;
    std::vector<std::string> dev_known;
    std::vector<std::string> dev_novel;
    std::vector<std::string> test_known;
    std::vector<std::string> test_novel;

    /// Throws ErrorCode::invalid_data when a disjointness rule is broken.
    void validate() const;

    bool operator==(const SplitManifest&) const = default;
};

void save_manifest(const SplitManifest& manifest, const std::filesystem::path& path);
SplitManifest load_manifest(const std::filesystem::path& path);

struct SynthConfig {
    std::size_t train_classes = 8;
    std::size_t dev_known = 5;
    std::size_t dev_novel = 2;
    std::size_t test_known = 4;
    std::size_t test_novel = 2;
    std::size_t samples_per_class = 100;
    std::size_t feature_dim = 32;
    double cluster_spread = 1.0;
    double cluster_separation = 10.0;
    double center_gap_factor = 3.0;  // expected center gap, in units of separation
    double train_fraction = 0.8;
    std::uint64_t seed = 7;

    void validate() const;
};

struct SynthDataset {
    std::vector<Record> train;      // train classes, first train_fraction of each class
    std::vector<Record> train_val;  // train classes, remainder
    std::vector<Record> dev;
    std::vector<Record> test;
    SplitManifest manifest;
    std::vector<Vector> centers;    // one per class, in class-name order
};

/// Isotropic Gaussian clusters with rejection-sampled centers that sit at least
/// cluster_separation apart.
SynthDataset generate_synthetic(const SynthConfig& cfg);

/// Class-wise split: the first round(fraction * n) samples of each class go to
/// the first output, preserving input order.
std::pair<std::vector<Record>, std::vector<Record>> split_per_class(std::span<const Record> records,
                                                                    double fraction);

} // namespace openset
