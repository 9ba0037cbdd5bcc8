#include "openset/gallery.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "openset/data_io.hpp"
#include "openset/error.hpp"

namespace openset {

Gallery::Gallery(std::vector<Record> entries, std::size_t shots_per_class)
    : entries_(std::move(entries)), shots_per_class_(shots_per_class) {
    for (const auto& e : entries_) {
        require_same_dim(e.values.size(), entries_.front().values.size(), "gallery entry");
        if (!all_finite(e.values)) {
            throw Error(ErrorCode::numeric, "gallery entry '" + e.id + "' is not finite");
        }
    }
}

std::vector<std::string> Gallery::labels() const {
    std::set<std::string> s;
    for (const auto& e : entries_) s.insert(e.label);
    return {s.begin(), s.end()};
}

bool Gallery::contains_id(const std::string& id) const {
    return std::any_of(entries_.begin(), entries_.end(),
                       [&](const Record& r) { return r.id == id; });
}

Gallery enroll(std::span<const Record> embedded_shots, std::size_t n_shots, std::uint64_t seed) {
    if (embedded_shots.empty()) {
        throw Error(ErrorCode::invalid_data, "enroll: no vectors supplied");
    }
    if (n_shots == 0) {
        throw Error(ErrorCode::invalid_argument, "enroll: n_shots must be positive");
    }
    std::map<std::string, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < embedded_shots.size(); ++i) {
        by_class[embedded_shots[i].label].push_back(i);
    }

    Rng rng(seed);
    std::vector<Record> entries;
    for (auto& [label, members] : by_class) {
        const std::size_t take = std::min(n_shots, members.size());
        // partial Fisher-Yates: the first `take` slots end up uniformly sampled
        for (std::size_t i = 0; i < take; ++i) {
            const std::size_t j = i + rng.index(members.size() - i);
            std::swap(members[i], members[j]);
        }
        std::vector<std::size_t> chosen(members.begin(), members.begin() + take);
        std::sort(chosen.begin(), chosen.end());
        for (std::size_t i : chosen) entries.push_back(embedded_shots[i]);
    }
    return Gallery(std::move(entries), n_shots);
}

QueryNeighborhood query(const Gallery& gallery, std::span<const double> v_test, std::size_t k,
                        double p) {
    if (k < 1) throw Error(ErrorCode::invalid_argument, "query: k must be >= 1");
    if (gallery.empty()) throw Error(ErrorCode::invalid_data, "query: gallery is empty");
    require_same_dim(v_test.size(), gallery.dim(), "gallery query");

    const auto& entries = gallery.entries();
    std::vector<std::pair<double, std::size_t>> scored(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        scored[i] = {pnorm_distance(v_test, entries[i].values, p), i};
    }
    QueryNeighborhood out;
    out.clamped = k > entries.size();
    const std::size_t keep = std::min(k, entries.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep),
                      scored.end());

    double sum = 0.0;
    for (std::size_t i = 0; i < keep; ++i) {
        const auto [d, idx] = scored[i];
        out.top_k.push_back({d, entries[idx].label, idx});
        sum += d;
    }
    out.mean_distance = sum / static_cast<double>(keep);
    return out;
}

void save_gallery(const std::filesystem::path& dir, const Gallery& gallery,
                  const GalleryManifest& manifest) {
    std::filesystem::create_directories(dir);
    write_embeddings(gallery.entries(), dir / "gallery.jsonl");
    nlohmann::ordered_json doc;
    doc["n_shots"] = manifest.n_shots;
    doc["seed"] = manifest.seed;
    doc["p"] = manifest.p_norm;
    doc["dim"] = manifest.dim;
    doc["entries"] = "gallery.jsonl";
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot write " + (dir / "manifest.json").string());
    out << doc.dump(2) << "\n";
}

LoadedGallery load_gallery(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open gallery manifest " + manifest_path.string());
    LoadedGallery out;
    std::string entries_file;
    try {
        const auto doc = nlohmann::json::parse(in);
        out.manifest.n_shots = doc.at("n_shots").get<std::size_t>();
        out.manifest.seed = doc.at("seed").get<std::uint64_t>();
        out.manifest.p_norm = doc.at("p").get<double>();
        out.manifest.dim = doc.at("dim").get<std::size_t>();
        entries_file = doc.at("entries").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::invalid_data,
                    "malformed gallery manifest " + manifest_path.string() + ": " + e.what());
    }
    out.gallery = Gallery(read_embeddings(dir / entries_file), out.manifest.n_shots);
    if (!out.gallery.empty()) {
        require_same_dim(out.gallery.dim(), out.manifest.dim, "gallery manifest");
    }
    return out;
}

} // namespace openset
