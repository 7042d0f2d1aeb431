#pragma once
// Pipeline file formats: clip index, grounded scores with evidence sidecar,
// interpretation JSON-lines, priors, clip targets and activities, predictions.

#include "openact/actionmap.hpp"
#include "openact/common.hpp"
#include "openact/eval.hpp"
#include "openact/grounding.hpp"
#include "openact/inference.hpp"
#include "openact/refine.hpp"

#include <json.hpp>

#include <istream>
#include <map>
#include <ostream>

namespace openact::io {

using json = nlohmann::ordered_json;

struct RowReader {
    std::istream& in;
    std::string source;
    std::size_t row = 0;
    std::string line;

    RowReader(std::istream& is, std::string src) : in(is), source(std::move(src)) {}

    /// Next non-blank line split on commas; false at end of input.
    bool next(std::vector<std::string_view>& fields) {
        while (std::getline(in, line)) {
            ++row;
            strip_cr(line);
            if (trim(line).empty()) continue;
            fields = split(line, ',');
            return true;
        }
        return false;
    }

    [[noreturn]] void fail(const std::string& what) const { throw LoadError(source, row, what); }

    double number(std::string_view s, const char* what) const {
        const auto v = parse_double(s);
        if (!v) fail(std::string(what) + " '" + std::string(s) + "' is not a number");
        return *v;
    }

    std::size_t count(std::string_view s, const char* what) const {
        const auto v = number(s, what);
        if (!(v >= 0.0) || v != static_cast<double>(static_cast<std::size_t>(v)))
            fail(std::string(what) + " '" + std::string(s) + "' is not a non-negative integer");
        return static_cast<std::size_t>(v);
    }

    ConceptId concept_id(std::string_view s) const {
        try {
            return ConceptId(s);
        } catch (const DataError& e) {
            fail(e.what());
        }
    }
};

inline bool is_header(const std::vector<std::string_view>& f, std::initializer_list<std::string_view> names) {
    if (f.size() != names.size()) return false;
    std::size_t i = 0;
    for (const auto& n : names)
        if (trim(f[i++]) != n) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Clip index: `clip_id,frame_id`
// ---------------------------------------------------------------------------

struct ClipEntry {
    ClipId clip;
    std::vector<FrameId> frames;
};

/// Clips and frames keep their order of first appearance.
inline std::vector<ClipEntry> load_clips(std::istream& in, const std::string& source = "<clips>") {
    RowReader r{in, source};
    std::vector<ClipEntry> out;
    std::map<ClipId, std::size_t> index;
    std::set<FrameId> frames;
    std::vector<std::string_view> f;
    while (r.next(f)) {
        if (is_header(f, {"clip_id", "frame_id"})) continue;
        if (f.size() != 2) r.fail("expected clip_id,frame_id");
        const ClipId clip(trim(f[0]));
        const FrameId frame(trim(f[1]));
        if (clip.empty() || frame.empty()) r.fail("empty clip or frame id");
        if (!frames.insert(frame).second) r.fail("frame '" + frame + "' listed twice");
        auto [it, fresh] = index.emplace(clip, out.size());
        if (fresh) out.push_back({clip, {}});
        out[it->second].frames.push_back(frame);
    }
    if (out.empty()) throw DataError(source + ": no clips");
    return out;
}

inline void write_clips(std::ostream& os, std::span<const ClipEntry> clips) {
    os << "clip_id,frame_id\n";
    for (const auto& c : clips)
        for (const auto& f : c.frames) os << c.clip << ',' << f << '\n';
}

// ---------------------------------------------------------------------------
// Grounded scores
// ---------------------------------------------------------------------------

inline void write_grounded(std::ostream& os, std::span<const std::vector<GroundedScore>> frames) {
    os << "frame_id,object,score,oracle_likelihood,evidence_sum,normalized_evidence\n";
    for (const auto& frame : frames)
        for (const auto& s : frame)
            os << s.frame << ',' << s.object << ',' << format_double(s.score) << ','
               << format_double(s.oracle_likelihood) << ',' << format_double(s.evidence_sum) << ','
               << format_double(s.normalized_evidence) << '\n';
}

inline json evidence_json(std::span<const std::vector<GroundedScore>> frames) {
    json out = json::array();
    for (const auto& frame : frames) {
        if (frame.empty()) continue;
        json objs = json::array();
        for (const auto& s : frame) {
            json terms = json::array();
            for (const auto& t : s.evidence_breakdown) {
                terms.push_back({{"evidence", t.evidence.str()},
                                 {"relation", t.relation},
                                 {"weight", t.prior_weight},
                                 {"likelihood", t.oracle_likelihood ? json(*t.oracle_likelihood) : json(nullptr)},
                                 {"contribution", t.contribution}});
            }
            objs.push_back({{"object", s.object.str()}, {"evidence_sum", s.evidence_sum}, {"terms", terms}});
        }
        out.push_back({{"frame", frame.front().frame}, {"objects", objs}});
    }
    return json{{"frames", out}};
}

/// frame → object → grounded score.
using GroundedByFrame = std::map<FrameId, std::map<ConceptId, double>>;

inline GroundedByFrame load_grounded(std::istream& in, const std::string& source = "<grounded>") {
    RowReader r{in, source};
    GroundedByFrame out;
    std::vector<std::string_view> f;
    bool first = true;
    while (r.next(f)) {
        if (first) {
            first = false;
            if (!f.empty() && trim(f[0]) == "frame_id") continue;
        }
        if (f.size() != 6) r.fail("expected 6 fields, got " + std::to_string(f.size()));
        const double score = r.number(f[2], "score");
        if (!(score >= 0.0 && score <= 1.0)) r.fail("score outside [0,1]");
        if (!out[FrameId(trim(f[0]))].emplace(r.concept_id(f[1]), score).second) r.fail("duplicate (frame, object)");
    }
    return out;
}

/// Aligns loaded scores to the search space, per clip.
inline std::vector<ClipFrames> align_grounded(std::span<const ClipEntry> clips, const SearchSpace& space,
                                              const GroundedByFrame& grounded) {
    std::vector<ClipFrames> out;
    for (const auto& c : clips) {
        ClipFrames cf{c.clip, c.frames, {}};
        for (const auto& f : c.frames) {
            const auto it = grounded.find(f);
            if (it == grounded.end()) throw DataError("no grounded scores for frame '" + f + "'");
            std::vector<double> row;
            for (const auto& o : space.objects) {
                const auto jt = it->second.find(o);
                if (jt == it->second.end())
                    throw DataError("no grounded score for object '" + o.str() + "' in frame '" + f + "'");
                row.push_back(jt->second);
            }
            cf.grounded.push_back(std::move(row));
        }
        out.push_back(std::move(cf));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Interpretations (JSON lines: a header, then one record per frame)
// ---------------------------------------------------------------------------

inline json interpretation_json(const Interpretation& x) {
    return {{"action", x.action.str()},
            {"object", x.object.str()},
            {"energy", x.energy},
            {"grounded_score", x.grounded_score},
            {"affinity", x.affinity},
            {"affinity_normalizer", x.affinity_normalizer},
            {"action_prior", x.action_prior}};
}

inline void write_interpretations(std::ostream& os, InferenceMode mode, std::size_t top_k,
                                  std::span<const ClipFrames> clips, std::span<const FrameInterpretations> results) {
    os << json{{"format", "openact-interpretations"}, {"mode", to_string(mode)}, {"top_k", top_k}}.dump() << '\n';
    for (std::size_t c = 0; c < clips.size(); ++c)
        for (std::size_t f = 0; f < clips[c].frames.size(); ++f) {
            json list = json::array();
            for (const auto& x : results[c][f]) list.push_back(interpretation_json(x));
            os << json{{"clip", clips[c].clip}, {"frame", clips[c].frames[f]}, {"interpretations", list}}.dump()
               << '\n';
        }
}

struct InterpretationFile {
    std::string mode;
    std::size_t top_k = 0;
    std::vector<ClipId> clips;                   // first-appearance order
    std::vector<std::vector<FrameId>> frames;    // [clip]
    std::vector<FrameInterpretations> results;  // [clip][frame]
};

inline InterpretationFile load_interpretations(std::istream& in, const std::string& source = "<interpretations>") {
    InterpretationFile out;
    std::map<ClipId, std::size_t> index;
    std::string line;
    std::size_t row = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++row;
        strip_cr(line);
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
            if (!header) {
                if (j.value("format", "") != "openact-interpretations")
                    throw LoadError(source, row, "missing interpretation file header");
                out.mode = j.at("mode").get<std::string>();
                out.top_k = j.at("top_k").get<std::size_t>();
                header = true;
                continue;
            }
            const auto clip = j.at("clip").get<std::string>();
            auto [it, fresh] = index.emplace(clip, out.clips.size());
            if (fresh) {
                out.clips.push_back(clip);
                out.frames.emplace_back();
                out.results.emplace_back();
            }
            out.frames[it->second].push_back(j.at("frame").get<std::string>());
            std::vector<Interpretation> list;
            for (const auto& x : j.at("interpretations")) {
                Interpretation v;
                v.action = ConceptId(x.at("action").get<std::string>());
                v.object = ConceptId(x.at("object").get<std::string>());
                v.energy = x.at("energy").get<double>();
                v.grounded_score = x.at("grounded_score").get<double>();
                v.affinity = x.at("affinity").get<double>();
                v.affinity_normalizer = x.at("affinity_normalizer").get<double>();
                v.action_prior = x.at("action_prior").get<double>();
                list.push_back(std::move(v));
            }
            out.results[it->second].push_back(std::move(list));
        } catch (const LoadError&) {
            throw;
        } catch (const std::exception& e) {
            throw LoadError(source, row, e.what());
        }
    }
    if (!header) throw DataError(source + ": empty interpretation file");
    return out;
}

// ---------------------------------------------------------------------------
// Priors: `clip_id,action,prior`
// ---------------------------------------------------------------------------

inline void write_priors(std::ostream& os, const ActionPriorTable& t) {
    os << "clip_id,action,prior\n";
    for (const auto& [id, row] : t.entries())
        for (const auto& [a, p] : row) os << id << ',' << a << ',' << format_double(p) << '\n';
}

inline ActionPriorTable load_priors(std::istream& in, const std::string& source = "<priors>") {
    RowReader r{in, source};
    ActionPriorTable t;
    std::vector<std::string_view> f;
    while (r.next(f)) {
        if (is_header(f, {"clip_id", "action", "prior"})) continue;
        if (f.size() != 3) r.fail("expected clip_id,action,prior");
        try {
            t.set(std::string(trim(f[0])), r.concept_id(f[1]), r.number(f[2], "prior"));
        } catch (const LoadError&) {
            throw;
        } catch (const DataError& e) {
            r.fail(e.what());
        }
    }
    return t;
}

// ---------------------------------------------------------------------------
// Clip-level targets and activities
// ---------------------------------------------------------------------------

inline void write_targets(std::ostream& os, std::span<const ClipActionTargets> targets) {
    os << "clip_id,rank,action,frequency,energy\n";
    for (const auto& t : targets)
        for (std::size_t i = 0; i < t.top_actions.size(); ++i) {
            const auto& a = t.top_actions[i];
            os << t.clip << ',' << i + 1 << ',' << a.action << ',' << a.frequency << ',' << format_double(a.energy)
               << '\n';
        }
}

inline std::vector<ClipActionTargets> load_targets(std::istream& in, const std::string& source = "<targets>") {
    RowReader r{in, source};
    std::vector<ClipActionTargets> out;
    std::map<ClipId, std::size_t> index;
    std::vector<std::string_view> f;
    while (r.next(f)) {
        if (is_header(f, {"clip_id", "rank", "action", "frequency", "energy"})) continue;
        if (f.size() != 5) r.fail("expected clip_id,rank,action,frequency,energy");
        const ClipId clip(trim(f[0]));
        auto [it, fresh] = index.emplace(clip, out.size());
        if (fresh) out.push_back({clip, {}});
        auto& list = out[it->second].top_actions;
        if (r.count(f[1], "rank") != list.size() + 1) r.fail("ranks of clip '" + clip + "' are not consecutive");
        list.push_back({r.concept_id(f[2]), r.number(f[4], "energy"), r.count(f[3], "frequency")});
    }
    return out;
}

struct ClipActivities {
    ClipId clip;
    std::vector<ClipActivity> ranked;
};

inline void write_activities(std::ostream& os, std::span<const ClipActivities> clips) {
    os << "clip_id,rank,action,object,frequency,energy\n";
    for (const auto& c : clips)
        for (std::size_t i = 0; i < c.ranked.size(); ++i) {
            const auto& a = c.ranked[i];
            os << c.clip << ',' << i + 1 << ',' << a.action << ',' << a.object << ',' << a.frequency << ','
               << format_double(a.energy) << '\n';
        }
}

inline std::vector<ClipActivities> load_activities_ranked(std::istream& in, const std::string& source = "<activities>") {
    RowReader r{in, source};
    std::vector<ClipActivities> out;
    std::map<ClipId, std::size_t> index;
    std::vector<std::string_view> f;
    while (r.next(f)) {
        if (is_header(f, {"clip_id", "rank", "action", "object", "frequency", "energy"})) continue;
        if (f.size() != 6) r.fail("expected clip_id,rank,action,object,frequency,energy");
        const ClipId clip(trim(f[0]));
        auto [it, fresh] = index.emplace(clip, out.size());
        if (fresh) out.push_back({clip, {}});
        auto& list = out[it->second].ranked;
        if (r.count(f[1], "rank") != list.size() + 1) r.fail("ranks of clip '" + clip + "' are not consecutive");
        list.push_back({r.concept_id(f[2]), r.concept_id(f[3]), r.number(f[5], "energy"), r.count(f[4], "frequency")});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Predictions: `clip_id,verb,noun` (same layout as the ground truth)
// ---------------------------------------------------------------------------

inline void write_predictions(std::ostream& os, const ActivityByClip& preds) {
    os << "clip_id,verb,noun\n";
    for (const auto& [c, a] : preds) os << c << ',' << a.verb << ',' << a.noun << '\n';
}

inline ActivityByClip top1_predictions(std::span<const ClipActivities> clips) {
    ActivityByClip out;
    for (const auto& c : clips) {
        if (c.ranked.empty()) throw DataError("clip '" + c.clip + "' has no interpretation");
        out.emplace(c.clip, Activity{c.ranked.front().action, c.ranked.front().object});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Zero-shot scores: `clip_id,label_id,score`, score = 1 - cosine distance
// ---------------------------------------------------------------------------

inline void write_label_scores(std::ostream& os, const ScoresByClip& scores) {
    os << "clip_id,label_id,score\n";
    for (const auto& [c, row] : scores)
        for (const auto& [l, s] : row) os << c << ',' << l << ',' << format_double(s) << '\n';
}

inline ScoresByClip load_label_scores(std::istream& in, const std::string& source = "<label scores>") {
    RowReader r{in, source};
    ScoresByClip out;
    std::vector<std::string_view> f;
    while (r.next(f)) {
        if (is_header(f, {"clip_id", "label_id", "score"})) continue;
        if (f.size() != 3) r.fail("expected clip_id,label_id,score");
        if (!out[std::string(trim(f[0]))].emplace(std::string(trim(f[1])), r.number(f[2], "score")).second)
            r.fail("duplicate (clip, label)");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Refinement report
// ---------------------------------------------------------------------------

inline json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline json report_json(const IterationReport& r, const std::string& snapshot) {
    return {{"iteration", r.iteration},
            {"heldout_mse", optional_json(r.heldout_mse)},
            {"train_mse", r.train_mse},
            {"agreement", optional_json(r.agreement)},
            {"improvement", optional_json(r.improvement)},
            {"train_samples", r.train_samples},
            {"heldout_samples", r.heldout_samples},
            {"best_epoch", r.best_epoch},
            {"interpretations", snapshot}};
}

inline IterationReport report_from_json(const json& j) {
    auto opt = [&](const char* k) -> std::optional<double> {
        if (!j.contains(k) || j.at(k).is_null()) return std::nullopt;
        return j.at(k).get<double>();
    };
    IterationReport r;
    r.iteration = j.at("iteration").get<std::size_t>();
    r.heldout_mse = opt("heldout_mse");
    r.train_mse = j.at("train_mse").get<double>();
    r.agreement = opt("agreement");
    r.improvement = opt("improvement");
    r.train_samples = j.at("train_samples").get<std::size_t>();
    r.heldout_samples = j.at("heldout_samples").get<std::size_t>();
    r.best_epoch = j.at("best_epoch").get<std::size_t>();
    return r;
}

} // namespace openact::io
