#include "openset/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "openset/error.hpp"

namespace openset {

namespace {

void require_both_classes(std::size_t positives, std::size_t negatives, const char* what) {
    if (positives == 0 || negatives == 0) {
        throw Error(ErrorCode::invalid_data,
                    std::string(what) +
                        ": need both Known and Novel samples (ROC is undefined otherwise)");
    }
}

std::string fmt_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

std::vector<ScoredSample> score_dev_set(const Gallery& gallery, std::span<const Record> dev,
                                        std::size_t k, double p) {
    if (dev.empty()) throw Error(ErrorCode::invalid_data, "score_dev_set: empty development set");
    std::size_t novel = 0, known = 0;
    for (const auto& r : dev) {
        if (!r.novel) {
            throw Error(ErrorCode::invalid_data,
                        "score_dev_set: record '" + r.id + "' has no novelty flag");
        }
        (*r.novel ? novel : known)++;
    }
    require_both_classes(novel, known, "score_dev_set");

    std::vector<ScoredSample> out;
    out.reserve(dev.size());
    for (const auto& r : dev) {
        out.push_back({query(gallery, r.values, k, p).mean_distance, *r.novel});
    }
    return out;
}

RocCurve roc_curve(std::span<const ScoredSample> samples) {
    RocCurve roc;
    std::vector<double> scores;
    scores.reserve(samples.size());
    for (const auto& s : samples) {
        if (!std::isfinite(s.score)) throw Error(ErrorCode::numeric, "roc_curve: non-finite score");
        (s.is_novel ? roc.positives : roc.negatives)++;
        scores.push_back(s.score);
    }
    require_both_classes(roc.positives, roc.negatives, "roc_curve");

    std::sort(scores.begin(), scores.end());
    scores.erase(std::unique(scores.begin(), scores.end()), scores.end());

    std::vector<double> thresholds;
    double above = scores.back() + 1.0;
    if (!(above > scores.back())) above = std::nextafter(scores.back(), INFINITY);
    thresholds.push_back(above);
    for (std::size_t i = scores.size() - 1; i > 0; --i) {
        const double lo = scores[i - 1];
        const double hi = scores[i];
        double mid = (lo + hi) / 2.0;
        if (!(mid > lo)) mid = hi;  // adjacent doubles
        thresholds.push_back(mid);
    }
    double below = scores.front() - 1.0;
    if (!(below < scores.front())) below = std::nextafter(scores.front(), -INFINITY);
    thresholds.push_back(below);

    // Sweep samples in descending score order alongside descending thresholds.
    std::vector<ScoredSample> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const ScoredSample& a, const ScoredSample& b) { return a.score > b.score; });
    std::size_t tp = 0, fp = 0, cursor = 0;
    const double pos = static_cast<double>(roc.positives);
    const double neg = static_cast<double>(roc.negatives);
    for (double t : thresholds) {
        while (cursor < sorted.size() && sorted[cursor].score >= t) {
            (sorted[cursor].is_novel ? tp : fp)++;
            ++cursor;
        }
        roc.points.push_back({t, static_cast<double>(tp) / pos, static_cast<double>(fp) / neg, tp, fp});
    }

    // Integer trapezoid: sum (dFP) * (TP_i + TP_{i+1}) over 2 * P * N.
    std::uint64_t twice_area = 0;
    for (std::size_t i = 1; i < roc.points.size(); ++i) {
        const auto& a = roc.points[i - 1];
        const auto& b = roc.points[i];
        twice_area += static_cast<std::uint64_t>(b.false_positives - a.false_positives) *
                      (a.true_positives + b.true_positives);
    }
    roc.auc = static_cast<double>(twice_area) / (2.0 * pos * neg);
    return roc;
}

YoudenChoice youden_threshold(const RocCurve& roc) {
    if (roc.points.empty()) throw Error(ErrorCode::invalid_data, "youden_threshold: empty ROC");
    require_both_classes(roc.positives, roc.negatives, "youden_threshold");
    // J * P * N as an exact integer, so ties are detected without rounding noise.
    const auto scaled_j = [&](const RocPoint& pt) {
        return static_cast<std::int64_t>(pt.true_positives * roc.negatives) -
               static_cast<std::int64_t>(pt.false_positives * roc.positives);
    };
    const RocPoint* best = &roc.points.front();
    for (const auto& pt : roc.points) {
        const auto j = scaled_j(pt);
        const auto bj = scaled_j(*best);
        if (j > bj ||
            (j == bj && (pt.false_positives < best->false_positives ||
                         (pt.false_positives == best->false_positives &&
                          pt.threshold < best->threshold)))) {
            best = &pt;
        }
    }
    return {best->threshold, best->tpr - best->fpr, best->tpr, best->fpr};
}

HistogramPair export_histograms(std::span<const ScoredSample> samples, std::size_t bins) {
    if (bins < 1) throw Error(ErrorCode::invalid_argument, "histogram needs at least one bin");
    HistogramPair out;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& s : samples) {
        lo = std::min(lo, s.score);
        hi = std::max(hi, s.score);
    }
    if (samples.empty()) {
        lo = 0.0;
        hi = 1.0;
    }
    if (!(hi > lo)) hi = lo + 1.0;

    std::vector<double> edges(bins + 1);
    const double width = (hi - lo) / static_cast<double>(bins);
    for (std::size_t b = 0; b <= bins; ++b) edges[b] = lo + width * static_cast<double>(b);
    edges.back() = hi;

    out.known = {edges, std::vector<std::size_t>(bins, 0)};
    out.novel = {edges, std::vector<std::size_t>(bins, 0)};
    for (const auto& s : samples) {
        // bin b holds edges[b] <= s < edges[b+1]; the last bin is closed
        auto it = std::upper_bound(edges.begin(), edges.end(), s.score);
        std::size_t b = static_cast<std::size_t>(std::distance(edges.begin(), it));
        b = b == 0 ? 0 : std::min(b - 1, bins - 1);
        (s.is_novel ? out.novel : out.known).counts[b]++;
    }
    return out;
}

CalibrationResult calibrate(std::span<const ScoredSample> samples, std::size_t bins) {
    CalibrationResult result;
    result.roc = roc_curve(samples);
    const auto choice = youden_threshold(result.roc);
    result.threshold = choice.threshold;
    result.youden_j = choice.youden_j;
    result.tpr_at = choice.tpr;
    result.fpr_at = choice.fpr;
    auto hist = export_histograms(samples, bins);
    result.known_hist = std::move(hist.known);
    result.novel_hist = std::move(hist.novel);
    return result;
}

std::string calibration_to_string(const CalibrationResult& r) {
    nlohmann::ordered_json doc;
    doc["threshold"] = r.threshold;
    doc["youden_j"] = r.youden_j;
    doc["tpr"] = r.tpr_at;
    doc["fpr"] = r.fpr_at;
    doc["auc"] = r.roc.auc;
    doc["positives"] = r.roc.positives;
    doc["negatives"] = r.roc.negatives;
    auto& pts = doc["roc"] = nlohmann::ordered_json::array();
    for (const auto& p : r.roc.points) {
        pts.push_back({{"threshold", p.threshold},
                       {"tpr", p.tpr},
                       {"fpr", p.fpr},
                       {"tp", p.true_positives},
                       {"fp", p.false_positives}});
    }
    doc["histogram"] = {{"edges", r.known_hist.edges},
                        {"known", r.known_hist.counts},
                        {"novel", r.novel_hist.counts}};
    return doc.dump(1) + "\n";
}

CalibrationResult calibration_from_string(const std::string& text) {
    CalibrationResult r;
    try {
        const auto doc = nlohmann::json::parse(text);
        r.threshold = doc.at("threshold").get<double>();
        r.youden_j = doc.at("youden_j").get<double>();
        r.tpr_at = doc.at("tpr").get<double>();
        r.fpr_at = doc.at("fpr").get<double>();
        r.roc.auc = doc.at("auc").get<double>();
        r.roc.positives = doc.at("positives").get<std::size_t>();
        r.roc.negatives = doc.at("negatives").get<std::size_t>();
        for (const auto& p : doc.at("roc")) {
            r.roc.points.push_back({p.at("threshold").get<double>(), p.at("tpr").get<double>(),
                                    p.at("fpr").get<double>(), p.at("tp").get<std::size_t>(),
                                    p.at("fp").get<std::size_t>()});
        }
        const auto& h = doc.at("histogram");
        r.known_hist.edges = h.at("edges").get<std::vector<double>>();
        r.novel_hist.edges = r.known_hist.edges;
        r.known_hist.counts = h.at("known").get<std::vector<std::size_t>>();
        r.novel_hist.counts = h.at("novel").get<std::vector<std::size_t>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::invalid_data, std::string("malformed calibration: ") + e.what());
    }
    if (!std::isfinite(r.threshold)) {
        throw Error(ErrorCode::numeric, "calibration threshold is not finite");
    }
    return r;
}

void save_calibration(const CalibrationResult& result, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
    out << calibration_to_string(result);
}

CalibrationResult load_calibration(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return calibration_from_string(buf.str());
}

void write_roc_csv(const RocCurve& roc, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
    out << "threshold,tpr,fpr\n";
    for (const auto& p : roc.points) {
        out << fmt_real(p.threshold) << ',' << fmt_real(p.tpr) << ',' << fmt_real(p.fpr) << '\n';
    }
}

void write_histogram_csv(const CalibrationResult& r, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
    out << "bin_lo,bin_hi,known,novel\n";
    for (std::size_t b = 0; b < r.known_hist.counts.size(); ++b) {
        out << fmt_real(r.known_hist.edges[b]) << ',' << fmt_real(r.known_hist.edges[b + 1]) << ','
            << r.known_hist.counts[b] << ',' << r.novel_hist.counts[b] << '\n';
    }
}

} // namespace openset
