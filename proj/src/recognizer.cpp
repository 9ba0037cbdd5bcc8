#include "openset/recognizer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "openset/error.hpp"

namespace openset {

namespace {

struct Tally {
    std::size_t count = 0;
    double distance_sum = 0.0;
};

std::string vote(const QueryNeighborhood& hood, std::map<std::string, std::size_t>& votes) {
    std::map<std::string, Tally> tally;
    for (const auto& n : hood.top_k) {
        auto& t = tally[n.label];
        ++t.count;
        t.distance_sum += n.distance;
    }
    const std::string* winner = nullptr;
    double winner_mean = 0.0;
    std::size_t winner_count = 0;
    // std::map iterates labels in lexicographic order, so strict comparisons
    // leave the smaller label in place on a full tie.
    for (const auto& [label, t] : tally) {
        votes[label] = t.count;
        const double mean = t.distance_sum / static_cast<double>(t.count);
        if (!winner || t.count > winner_count || (t.count == winner_count && mean < winner_mean)) {
            winner = &label;
            winner_count = t.count;
            winner_mean = mean;
        }
    }
    return *winner;
}

} // namespace

RecognitionResult recognize(const Gallery& gallery, double threshold,
                            std::span<const double> v_test, const RecognizerConfig& cfg) {
    if (std::isnan(threshold)) throw Error(ErrorCode::invalid_argument, "threshold is NaN");
    RecognitionResult out;
    out.neighborhood = query(gallery, v_test, cfg.k, cfg.p_norm);
    out.mean_distance = out.neighborhood.mean_distance;
    if (out.mean_distance >= threshold) {
        out.novel = true;
        return out;
    }
    const std::size_t vote_k = cfg.vote_k == 0 ? cfg.k : cfg.vote_k;
    if (vote_k == cfg.k) {
        out.label = vote(out.neighborhood, out.votes);
    } else {
        out.label = vote(query(gallery, v_test, vote_k, cfg.p_norm), out.votes);
    }
    return out;
}

RecognitionResult recognize(const Gallery& gallery, double threshold,
                            std::span<const double> v_test, std::size_t k, double p) {
    return recognize(gallery, threshold, v_test, RecognizerConfig{k, 0, p});
}

std::vector<RecognitionResult> recognize_batch(const Gallery& gallery, double threshold,
                                               std::span<const Vector> queries,
                                               const RecognizerConfig& cfg) {
    std::vector<RecognitionResult> out;
    out.reserve(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        try {
            out.push_back(recognize(gallery, threshold, queries[i], cfg));
        } catch (const Error& e) {
            throw Error(e.code(), "query " + std::to_string(i) + ": " + e.what());
        }
    }
    return out;
}

std::string result_to_json_line(const std::string& id, const RecognitionResult& result) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", result.mean_distance);
    std::string line = "{\"id\":" + nlohmann::json(id).dump();
    line += ",\"verdict\":";
    line += result.novel ? "\"novel\"" : "\"known\"";
    if (result.label) line += ",\"label\":" + nlohmann::json(*result.label).dump();
    line += ",\"mean_distance\":";
    line += buf;
    if (!result.novel) line += ",\"votes\":" + nlohmann::json(result.votes).dump();
    line += "}";
    return line;
}

void write_results(std::span<const std::string> ids, std::span<const RecognitionResult> results,
                   const std::filesystem::path& path) {
    require_same_dim(ids.size(), results.size(), "write_results");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
    for (std::size_t i = 0; i < ids.size(); ++i) out << result_to_json_line(ids[i], results[i]) << '\n';
}

std::vector<StoredResult> read_results(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
    std::vector<StoredResult> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto obj = nlohmann::json::parse(line);
            StoredResult r;
            r.id = obj.at("id").get<std::string>();
            const auto verdict = obj.at("verdict").get<std::string>();
            if (verdict != "novel" && verdict != "known") {
                throw Error(ErrorCode::invalid_data, "unknown verdict '" + verdict + "'");
            }
            r.novel = verdict == "novel";
            if (auto it = obj.find("label"); it != obj.end()) r.label = it->get<std::string>();
            r.mean_distance = obj.at("mean_distance").get<double>();
            if (auto it = obj.find("votes"); it != obj.end()) {
                r.votes = it->get<std::map<std::string, std::size_t>>();
            }
            if (!r.novel && !r.label) throw Error(ErrorCode::invalid_data, "known verdict without label");
            out.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::invalid_data,
                        path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const Error& e) {
            throw Error(e.code(), path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

} // namespace openset
