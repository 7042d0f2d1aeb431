#pragma once
// Evaluation metrics: top-1 accuracy, word-level activity accuracy, mean
// embedding word similarity (NB-WS) and class-wise mean average precision.

#include "openact/actionmap.hpp"
#include "openact/common.hpp"

#include <json.hpp>

#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace openact {

struct Activity {
    ConceptId verb;
    ConceptId noun;
    bool operator==(const Activity&) const = default;
};

using ConceptByClip = std::map<ClipId, ConceptId>;
using ActivityByClip = std::map<ClipId, Activity>;
using PositivesByClip = std::map<ClipId, std::set<std::string>>;
using ScoresByClip = std::map<ClipId, std::map<std::string, double>>;

namespace detail {

template <class A, class B>
void require_same_clips(const std::map<ClipId, A>& preds, const std::map<ClipId, B>& gt) {
    std::vector<std::string> missing_pred, missing_gt;
    for (const auto& [c, _] : gt)
        if (!preds.count(c)) missing_pred.push_back(c);
    for (const auto& [c, _] : preds)
        if (!gt.count(c)) missing_gt.push_back(c);
    if (missing_pred.empty() && missing_gt.empty()) {
        if (gt.empty()) throw DataError("no clips to evaluate");
        return;
    }
    std::string msg = "clip ids differ between predictions and ground truth;";
    auto list = [&](const char* what, const std::vector<std::string>& ids) {
        if (ids.empty()) return;
        msg += std::string(" ") + what + ":";
        for (const auto& id : ids) msg += " " + id;
    };
    list("missing predictions", missing_pred);
    list("missing ground truth", missing_gt);
    throw DataError(msg);
}

} // namespace detail

inline double accuracy(const ConceptByClip& preds, const ConceptByClip& gt) {
    detail::require_same_clips(preds, gt);
    std::size_t hits = 0;
    for (const auto& [c, truth] : gt) hits += preds.at(c) == truth;
    return static_cast<double>(hits) / static_cast<double>(gt.size());
}

/// Mean over clips of (verb match + noun match) / 2.
inline double word_level_accuracy(const ActivityByClip& preds, const ActivityByClip& gt) {
    detail::require_same_clips(preds, gt);
    double total = 0.0;
    for (const auto& [c, truth] : gt) {
        const auto& p = preds.at(c);
        total += ((p.verb == truth.verb ? 1.0 : 0.0) + (p.noun == truth.noun ? 1.0 : 0.0)) / 2.0;
    }
    return total / static_cast<double>(gt.size());
}

struct NbwsResult {
    double mean = 0.0;
    std::size_t support = 0;
    std::vector<ClipId> skipped;
};

/// Clips whose predicted or true verb lacks an embedding are skipped.
inline NbwsResult mean_nbws(const ConceptByClip& preds, const ConceptByClip& gt, const EmbeddingTable& emb) {
    detail::require_same_clips(preds, gt);
    NbwsResult r;
    double total = 0.0;
    for (const auto& [c, truth] : gt) {
        const auto& p = preds.at(c);
        if (!emb.contains(p) || !emb.contains(truth)) {
            r.skipped.push_back(c);
            continue;
        }
        total += word_similarity(p, truth, emb);
        ++r.support;
    }
    if (!r.skipped.empty()) {
        std::string msg = "NB-WS skipped " + std::to_string(r.skipped.size()) + " clip(s) with unembedded verbs:";
        for (const auto& c : r.skipped) msg += " " + c;
        log::warn(msg);
    }
    if (r.support == 0) throw DataError("NB-WS: no clip could be scored");
    r.mean = total / static_cast<double>(r.support);
    return r;
}

struct MapResult {
    double mean = 0.0;
    std::size_t labels_with_positives = 0;
    std::map<std::string, double> per_label;
};

/// Average precision of one ranking: mean precision at each positive hit.
/// `ranked_positive[i]` tells whether rank i is a positive.
inline double average_precision(const std::vector<bool>& ranked_positive) {
    std::size_t hits = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < ranked_positive.size(); ++i) {
        if (!ranked_positive[i]) continue;
        ++hits;
        sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
    return hits ? sum / static_cast<double>(hits) : 0.0;
}

/// Every clip must score the same label set. Per label, clips are ranked by
/// descending score with ties by clip id; labels without positives are left
/// out of the mean.
inline MapResult class_map(const ScoresByClip& scores, const PositivesByClip& gt) {
    if (scores.empty()) throw DataError("class mAP: no scored clips");
    std::set<std::string> labels;
    for (const auto& [l, _] : scores.begin()->second) labels.insert(l);
    for (const auto& [clip, row] : scores) {
        if (row.size() != labels.size())
            throw DataError("class mAP: clip '" + clip + "' does not score every label");
        for (const auto& [l, _] : row)
            if (!labels.count(l)) throw DataError("class mAP: clip '" + clip + "' does not score every label");
    }
    for (const auto& [clip, pos] : gt) {
        if (!scores.count(clip)) throw DataError("class mAP: ground-truth clip '" + clip + "' has no scores");
        for (const auto& l : pos)
            if (!labels.count(l)) throw DataError("class mAP: positive label '" + l + "' is not scored");
    }

    MapResult r;
    double total = 0.0;
    for (const auto& label : labels) {
        std::vector<std::pair<double, ClipId>> ranked;
        for (const auto& [clip, row] : scores) ranked.emplace_back(row.at(label), clip);
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        std::vector<bool> flags;
        bool any = false;
        for (const auto& [_, clip] : ranked) {
            const auto it = gt.find(clip);
            const bool pos = it != gt.end() && it->second.count(label);
            flags.push_back(pos);
            any = any || pos;
        }
        if (!any) continue;
        const double ap = average_precision(flags);
        r.per_label.emplace(label, ap);
        total += ap;
        ++r.labels_with_positives;
    }
    if (r.labels_with_positives == 0) throw DataError("class mAP: no label has a positive clip");
    r.mean = total / static_cast<double>(r.labels_with_positives);
    return r;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct Metric {
    std::optional<double> value;
    std::size_t support = 0;
};

struct MetricReport {
    Metric object_accuracy;
    Metric action_accuracy;
    Metric activity_word_accuracy;
    Metric mean_nbws;
    Metric class_map;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        auto put = [&](const char* key, const Metric& m) {
            nlohmann::ordered_json e;
            e["value"] = m.value ? nlohmann::ordered_json(*m.value) : nlohmann::ordered_json(nullptr);
            e["support"] = m.support;
            j[key] = e;
        };
        put("object_accuracy", object_accuracy);
        put("action_accuracy", action_accuracy);
        put("activity_word_accuracy", activity_word_accuracy);
        put("mean_nbws", mean_nbws);
        put("class_map", class_map);
        return j;
    }

    std::string to_table() const {
        std::ostringstream os;
        const std::pair<const char*, const Metric*> rows[] = {
            {"object accuracy", &object_accuracy}, {"action accuracy", &action_accuracy},
            {"activity word-level accuracy", &activity_word_accuracy}, {"mean NB-WS", &mean_nbws},
            {"class mAP", &class_map}};
        os << std::left << std::setw(30) << "metric" << std::right << std::setw(10) << "value" << std::setw(10)
           << "support" << '\n';
        for (const auto& [name, m] : rows) {
            std::ostringstream v;
            if (m->value)
                v << std::fixed << std::setprecision(4) << *m->value;
            else
                v << "-";
            os << std::left << std::setw(30) << name << std::right << std::setw(10) << v.str() << std::setw(10)
               << m->support << '\n';
        }
        return os.str();
    }
};

// ---------------------------------------------------------------------------
// Ground-truth files
// ---------------------------------------------------------------------------

/// CSV `clip_id,verb,noun`; the header row is optional.
inline ActivityByClip load_activities(std::istream& in, const std::string& source = "<ground truth>") {
    ActivityByClip out;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        strip_cr(line);
        if (trim(line).empty()) continue;
        const auto f = split(line, ',');
        if (f.size() == 3 && trim(f[0]) == "clip_id") continue;
        if (f.size() != 3) throw LoadError(source, row, "expected clip_id,verb,noun");
        const std::string clip(trim(f[0]));
        if (clip.empty()) throw LoadError(source, row, "empty clip id");
        try {
            if (!out.emplace(clip, Activity{ConceptId(f[1]), ConceptId(f[2])}).second)
                throw LoadError(source, row, "duplicate clip '" + clip + "'");
        } catch (const LoadError&) {
            throw;
        } catch (const DataError& e) {
            throw LoadError(source, row, e.what());
        }
    }
    return out;
}

/// CSV `clip_id,label_id`, several rows per clip allowed.
inline PositivesByClip load_label_positives(std::istream& in, const std::string& source = "<zero-shot ground truth>") {
    PositivesByClip out;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        strip_cr(line);
        if (trim(line).empty()) continue;
        const auto f = split(line, ',');
        if (f.size() == 2 && trim(f[0]) == "clip_id") continue;
        if (f.size() != 2) throw LoadError(source, row, "expected clip_id,label_id");
        const std::string clip(trim(f[0])), label(trim(f[1]));
        if (clip.empty() || label.empty()) throw LoadError(source, row, "empty clip or label id");
        out[clip].insert(label);
    }
    return out;
}

} // namespace openact
