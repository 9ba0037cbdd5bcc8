#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "openset/numeric.hpp"
#include "openset/record.hpp"

namespace openset {

/// Enrolled few-shot embeddings of the Known classes. Immutable once built.
class Gallery {
public:
    Gallery() = default;
    Gallery(std::vector<Record> entries, std::size_t shots_per_class);

    const std::vector<Record>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::size_t dim() const { return entries_.empty() ? 0 : entries_.front().values.size(); }
    std::size_t shots_per_class() const { return shots_per_class_; }

    /// Sorted distinct class labels.
    std::vector<std::string> labels() const;
    bool contains_id(const std::string& id) const;

private:
    std::vector<Record> entries_;
    std::size_t shots_per_class_ = 0;
};

/// Picks min(n_shots, available) vectors per class by seeded sampling without
/// replacement. Classes are visited in sorted label order and the chosen vectors
/// keep their input order.
Gallery enroll(std::span<const Record> embedded_shots, std::size_t n_shots, std::uint64_t seed);

struct Neighbor {
    double distance = 0.0;
    std::string label;
    std::size_t index = 0;  // position in the gallery

    bool operator==(const Neighbor&) const = default;
};

struct QueryNeighborhood {
    std::vector<Neighbor> top_k;  // ascending distance, ties by gallery index
    double mean_distance = 0.0;
    bool clamped = false;         // k exceeded the gallery size

    bool operator==(const QueryNeighborhood&) const = default;
};

QueryNeighborhood query(const Gallery& gallery, std::span<const double> v_test, std::size_t k,
                        double p = 2.0);

struct GalleryManifest {
    std::size_t n_shots = 5;
    std::uint64_t seed = 0;
    double p_norm = 2.0;
    std::size_t dim = 0;
};

/// Writes `dir/gallery.jsonl` and `dir/manifest.json`.
void save_gallery(const std::filesystem::path& dir, const Gallery& gallery,
                  const GalleryManifest& manifest);

struct LoadedGallery {
    Gallery gallery;
    GalleryManifest manifest;
};

LoadedGallery load_gallery(const std::filesystem::path& dir);

} // namespace openset
