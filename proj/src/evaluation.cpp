#include "openset/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include <json.hpp>

#include "openset/error.hpp"

namespace openset {

namespace {

void require_aligned(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw Error(ErrorCode::dimension_mismatch,
                    std::string(what) + ": length mismatch (" + std::to_string(a) + " actual vs " +
                        std::to_string(b) + " predicted)");
    }
    if (a == 0) throw Error(ErrorCode::invalid_data, std::string(what) + ": nothing to evaluate");
}

double safe_ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string fmt_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

nlohmann::ordered_json report_json(const ClassificationReport& r) {
    nlohmann::ordered_json doc;
    doc["labels"] = r.matrix.labels;
    doc["confusion"] = r.matrix.counts;
    doc["weighted_precision"] = r.f1.weighted_precision;
    doc["weighted_recall"] = r.f1.weighted_recall;
    doc["weighted_f1"] = r.f1.weighted_f1;
    auto& per = doc["per_class"] = nlohmann::ordered_json::object();
    for (const auto& [label, s] : r.f1.per_class) {
        per[label] = {{"precision", s.precision},
                      {"recall", s.recall},
                      {"f1", s.f1},
                      {"support", s.support}};
    }
    return doc;
}

} // namespace

std::size_t ConfusionMatrix::index_of(const std::string& label) const {
    const auto it = std::lower_bound(labels.begin(), labels.end(), label);
    if (it == labels.end() || *it != label) {
        throw Error(ErrorCode::invalid_argument, "label '" + label + "' not in confusion matrix");
    }
    return static_cast<std::size_t>(it - labels.begin());
}

std::size_t ConfusionMatrix::total() const {
    std::size_t n = 0;
    for (std::size_t r = 0; r < counts.size(); ++r) n += row_sum(r);
    return n;
}

std::size_t ConfusionMatrix::row_sum(std::size_t r) const {
    std::size_t n = 0;
    for (auto c : counts[r]) n += c;
    return n;
}

ClassificationReport classification_report(std::span<const std::string> actual,
                                           std::span<const std::string> predicted) {
    require_aligned(actual.size(), predicted.size(), "classification_report");
    std::set<std::string> label_set(actual.begin(), actual.end());
    label_set.insert(predicted.begin(), predicted.end());

    ClassificationReport out;
    auto& m = out.matrix;
    m.labels.assign(label_set.begin(), label_set.end());
    m.counts.assign(m.labels.size(), std::vector<std::size_t>(m.labels.size(), 0));
    for (std::size_t i = 0; i < actual.size(); ++i) {
        m.counts[m.index_of(actual[i])][m.index_of(predicted[i])]++;
    }

    const std::size_t n = m.labels.size();
    double wp = 0.0, wr = 0.0, wf = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t predicted_c = 0;
        for (std::size_t r = 0; r < n; ++r) predicted_c += m.counts[r][c];
        const std::size_t tp = m.counts[c][c];
        ClassScore s;
        s.support = m.row_sum(c);
        s.precision = safe_ratio(tp, predicted_c);
        s.recall = safe_ratio(tp, s.support);
        s.f1 = (s.precision + s.recall) > 0.0
                   ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
                   : 0.0;
        const double w = static_cast<double>(s.support);
        wp += w * s.precision;
        wr += w * s.recall;
        wf += w * s.f1;
        out.f1.per_class[m.labels[c]] = s;
    }
    const double total = static_cast<double>(actual.size());
    out.f1.weighted_precision = wp / total;
    out.f1.weighted_recall = wr / total;
    out.f1.weighted_f1 = wf / total;
    return out;
}

namespace {

BipartitionReport bipartition_from_labels(std::span<const std::string> actual,
                                          std::span<const std::string> predicted) {
    BipartitionReport out;
    static_cast<ClassificationReport&>(out) = classification_report(actual, predicted);
    // keep a full 2x2 layout even when one side never occurs
    for (const char* label : {kKnownLabel, kNovelLabel}) {
        if (!out.f1.per_class.count(label)) out.f1.per_class[label] = ClassScore{};
    }
    if (out.matrix.labels.size() < 2) {
        const std::size_t i = out.matrix.labels.front() == kKnownLabel ? 0 : 1;
        const std::size_t n = out.matrix.counts[0][0];
        out.matrix.labels = {kKnownLabel, kNovelLabel};
        out.matrix.counts.assign(2, std::vector<std::size_t>(2, 0));
        out.matrix.counts[i][i] = n;
    }
    out.novel_f1 = out.f1.per_class.at(kNovelLabel).f1;
    return out;
}

} // namespace

BipartitionReport bipartition_report(const std::vector<bool>& actual_novel,
                                     const std::vector<bool>& predicted_novel) {
    require_aligned(actual_novel.size(), predicted_novel.size(), "bipartition_report");
    std::vector<std::string> actual, predicted;
    for (bool a : actual_novel) actual.emplace_back(a ? kNovelLabel : kKnownLabel);
    for (bool p : predicted_novel) predicted.emplace_back(p ? kNovelLabel : kKnownLabel);
    return bipartition_from_labels(actual, predicted);
}

EndToEndReport end_to_end_report(std::span<const Truth> truth,
                                 std::span<const Prediction> predictions) {
    require_aligned(truth.size(), predictions.size(), "end_to_end_report");
    std::vector<std::string> actual_bin, predicted_bin;
    std::vector<std::string> actual, predicted, known_actual, known_predicted;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const auto& t = truth[i];
        const auto& p = predictions[i];
        if (!t.novel && t.label == kNovelLabel) {
            throw Error(ErrorCode::invalid_data,
                        std::string("class label '") + kNovelLabel + "' is reserved");
        }
        const std::string a = t.novel ? kNovelLabel : t.label;
        const std::string q = p.novel ? kNovelLabel : p.label;
        actual_bin.emplace_back(t.novel ? kNovelLabel : kKnownLabel);
        predicted_bin.emplace_back(p.novel ? kNovelLabel : kKnownLabel);
        actual.push_back(a);
        predicted.push_back(q);
        if (!t.novel) {
            known_actual.push_back(a);
            known_predicted.push_back(q);
        }
    }
    EndToEndReport out;
    out.bipartition = bipartition_from_labels(actual_bin, predicted_bin);
    out.overall = classification_report(actual, predicted);
    if (!known_actual.empty()) out.known_types = classification_report(known_actual, known_predicted);
    return out;
}

std::string report_to_string(const EndToEndReport& report) {
    nlohmann::ordered_json doc;
    doc["bipartition"] = report_json(report.bipartition);
    doc["bipartition"]["novel_f1"] = report.bipartition.novel_f1;
    doc["overall"] = report_json(report.overall);
    doc["known_types"] = report_json(report.known_types);
    return doc.dump(2) + "\n";
}

void write_f1_csv(const ClassificationReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
    out << "label,precision,recall,f1,support\n";
    std::size_t total = 0;
    for (const auto& [label, s] : report.f1.per_class) {
        out << label << ',' << fmt_real(s.precision) << ',' << fmt_real(s.recall) << ','
            << fmt_real(s.f1) << ',' << s.support << '\n';
        total += s.support;
    }
    out << "weighted," << fmt_real(report.f1.weighted_precision) << ','
        << fmt_real(report.f1.weighted_recall) << ',' << fmt_real(report.f1.weighted_f1) << ','
        << total << '\n';
}

void write_confusion_csv(const ConfusionMatrix& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
    out << "actual\\predicted";
    for (const auto& l : m.labels) out << ',' << l;
    out << '\n';
    for (std::size_t r = 0; r < m.labels.size(); ++r) {
        out << m.labels[r];
        for (auto c : m.counts[r]) out << ',' << c;
        out << '\n';
    }
}

} // namespace openset
