#include "openset/data_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "openset/error.hpp"

namespace openset {

namespace {

void append_real(std::string& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}

std::string class_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "class_%02zu", i);
    return buf;
}

} // namespace

std::string record_to_json_line(const Record& record) {
    std::string line = "{\"id\":";
    line += nlohmann::json(record.id).dump();
    line += ",\"label\":";
    line += nlohmann::json(record.label).dump();
    if (record.novel) {
        line += ",\"novelty\":";
        line += *record.novel ? "true" : "false";
    }
    line += ",\"vector\":[";
    for (std::size_t i = 0; i < record.values.size(); ++i) {
        if (i) line += ',';
        append_real(line, record.values[i]);
    }
    line += "]}";
    return line;
}

std::vector<Record> parse_embeddings(const std::string& text, const std::string& source) {
    std::vector<Record> out;
    std::unordered_set<std::string> ids;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](ErrorCode code, const std::string& msg) {
        throw Error(code, source + ":" + std::to_string(line_no) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        Record r;
        try {
            const auto obj = nlohmann::json::parse(line);
            r.id = obj.at("id").get<std::string>();
            r.label = obj.at("label").get<std::string>();
            if (auto it = obj.find("novelty"); it != obj.end() && !it->is_null()) {
                r.novel = it->get<bool>();
            }
            r.values = obj.at("vector").get<std::vector<double>>();
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::invalid_data, std::string("malformed record: ") + e.what());
        }
        if (r.values.empty()) fail(ErrorCode::invalid_data, "empty vector");
        if (!all_finite(r.values)) fail(ErrorCode::numeric, "non-finite vector entry");
        if (!out.empty() && r.values.size() != out.front().values.size()) {
            fail(ErrorCode::dimension_mismatch,
                 "vector has dim " + std::to_string(r.values.size()) + ", expected " +
                     std::to_string(out.front().values.size()));
        }
        if (!ids.insert(r.id).second) fail(ErrorCode::invalid_data, "duplicate id '" + r.id + "'");
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<Record> read_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_embeddings(buf.str(), path.string());
}

void write_embeddings(std::span<const Record> records, const std::filesystem::path& path) {
    for (const auto& r : records) {
        require_same_dim(r.values.size(), records.front().values.size(), "write_embeddings");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
    for (const auto& r : records) out << record_to_json_line(r) << '\n';
}

void SplitManifest::validate() const {
    auto as_set = [](const std::vector<std::string>& v) {
        return std::set<std::string>(v.begin(), v.end());
    };
    auto require_disjoint = [](const std::set<std::string>& a, const std::set<std::string>& b,
                               const char* what) {
        for (const auto& name : a) {
            if (b.count(name)) {
                throw Error(ErrorCode::invalid_data,
                            std::string("split manifest: ") + what + " share class '" + name + "'");
            }
        }
    };
    const auto train = as_set(train_classes);
    const auto dk = as_set(dev_known);
    const auto dn = as_set(dev_novel);
    const auto tk = as_set(test_known);
    const auto tn = as_set(test_novel);
    require_disjoint(dn, train, "dev_novel and train");
    require_disjoint(dn, dk, "dev_novel and dev_known");
    require_disjoint(tk, train, "test_known and train");
    require_disjoint(tn, train, "test_novel and train");
    require_disjoint(tk, tn, "test_known and test_novel");
}

void save_manifest(const SplitManifest& m, const std::filesystem::path& path) {
    nlohmann::ordered_json doc;
    doc["train_classes"] = m.train_classes;
    doc["dev_known"] = m.dev_known;
    doc["dev_novel"] = m.dev_novel;
    doc["test_known"] = m.test_known;
    doc["test_novel"] = m.test_novel;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
    out << doc.dump(2) << "\n";
}

SplitManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
    SplitManifest m;
    try {
        const auto doc = nlohmann::json::parse(in);
        m.train_classes = doc.at("train_classes").get<std::vector<std::string>>();
        m.dev_known = doc.at("dev_known").get<std::vector<std::string>>();
        m.dev_novel = doc.at("dev_novel").get<std::vector<std::string>>();
        m.test_known = doc.at("test_known").get<std::vector<std::string>>();
        m.test_novel = doc.at("test_novel").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::invalid_data, "malformed manifest " + path.string() + ": " + e.what());
    }
    m.validate();
    return m;
}

void SynthConfig::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::invalid_argument, msg); };
    if (!(cluster_spread > 0.0)) fail("cluster spread must be > 0");
    if (!(cluster_separation > 0.0)) fail("cluster separation must be > 0");
    if (feature_dim == 0) fail("feature dim must be positive");
    if (samples_per_class == 0) fail("samples per class must be positive");
    if (!(center_gap_factor >= 1.0)) fail("center gap factor must be >= 1");
    if (!(train_fraction > 0.0 && train_fraction <= 1.0)) fail("train fraction must be in (0,1]");
    if (train_classes + dev_known + dev_novel + test_known + test_novel == 0) {
        fail("at least one class is required");
    }
}

std::pair<std::vector<Record>, std::vector<Record>> split_per_class(std::span<const Record> records,
                                                                    double fraction) {
    std::map<std::string, std::size_t> totals;
    for (const auto& r : records) ++totals[r.label];
    std::map<std::string, std::size_t> seen;
    std::pair<std::vector<Record>, std::vector<Record>> out;
    for (const auto& r : records) {
        const auto cut = static_cast<std::size_t>(
            std::llround(fraction * static_cast<double>(totals[r.label])));
        (seen[r.label]++ < cut ? out.first : out.second).push_back(r);
    }
    return out;
}

SynthDataset generate_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    constexpr std::size_t kMaxTries = 10000;
    const std::size_t n_classes =
        cfg.train_classes + cfg.dev_known + cfg.dev_novel + cfg.test_known + cfg.test_novel;

    Rng rng(cfg.seed);
    SynthDataset ds;
    // Uniform box whose expected center gap is center_gap_factor * separation;
    // rejection enforces the minimum.
    const double half_width = cfg.center_gap_factor * cfg.cluster_separation *
                              std::sqrt(3.0 / (2.0 * static_cast<double>(cfg.feature_dim)));
    for (std::size_t c = 0; c < n_classes; ++c) {
        bool placed = false;
        for (std::size_t attempt = 0; attempt < kMaxTries && !placed; ++attempt) {
            Vector center(cfg.feature_dim);
            for (double& x : center) x = rng.uniform(-half_width, half_width);
            placed = true;
            for (const auto& other : ds.centers) {
                if (pnorm_distance(center, other) < cfg.cluster_separation) {
                    placed = false;
                    break;
                }
            }
            if (placed) ds.centers.push_back(std::move(center));
        }
        if (!placed) {
            throw Error(ErrorCode::invalid_argument,
                        "could not place " + std::to_string(n_classes) +
                            " cluster centers at separation " +
                            std::to_string(cfg.cluster_separation) +
                            "; try a larger feature_dim");
        }
    }

    std::size_t next = 0;
    auto take = [&](std::size_t count, std::vector<std::string>& names) {
        for (std::size_t i = 0; i < count; ++i) names.push_back(class_name(next++));
    };
    take(cfg.train_classes, ds.manifest.train_classes);
    take(cfg.dev_known, ds.manifest.dev_known);
    take(cfg.dev_novel, ds.manifest.dev_novel);
    take(cfg.test_known, ds.manifest.test_known);
    take(cfg.test_novel, ds.manifest.test_novel);
    ds.manifest.validate();

    auto sample_class = [&](std::size_t c, bool novel) {
        std::vector<Record> out;
        for (std::size_t s = 0; s < cfg.samples_per_class; ++s) {
            Record r;
            r.label = class_name(c);
            char id[48];
            std::snprintf(id, sizeof id, "%s/%04zu", r.label.c_str(), s);
            r.id = id;
            r.novel = novel;
            r.values.resize(cfg.feature_dim);
            for (std::size_t d = 0; d < cfg.feature_dim; ++d) {
                r.values[d] = ds.centers[c][d] + cfg.cluster_spread * rng.normal();
            }
            out.push_back(std::move(r));
        }
        return out;
    };

    std::size_t c = 0;
    std::vector<Record> train_all;
    for (std::size_t i = 0; i < cfg.train_classes; ++i, ++c) {
        auto recs = sample_class(c, false);
        train_all.insert(train_all.end(), recs.begin(), recs.end());
    }
    auto append = [](std::vector<Record>& dst, std::vector<Record> src) {
        dst.insert(dst.end(), std::make_move_iterator(src.begin()),
                   std::make_move_iterator(src.end()));
    };
    for (std::size_t i = 0; i < cfg.dev_known; ++i, ++c) append(ds.dev, sample_class(c, false));
    for (std::size_t i = 0; i < cfg.dev_novel; ++i, ++c) append(ds.dev, sample_class(c, true));
    for (std::size_t i = 0; i < cfg.test_known; ++i, ++c) append(ds.test, sample_class(c, false));
    for (std::size_t i = 0; i < cfg.test_novel; ++i, ++c) append(ds.test, sample_class(c, true));

    std::tie(ds.train, ds.train_val) = split_per_class(train_all, cfg.train_fraction);
    return ds;
}

} // namespace openset
