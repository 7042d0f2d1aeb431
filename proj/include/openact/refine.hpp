#pragma once
// Posterior-based refinement: alternate energy inference with training of the
// action grounding map, feeding the map's action predictions back in as
// clip-level action priors. Also the nearest-neighbour mapping of open-world
// interpretations onto a fixed label set.

#include "openact/actionmap.hpp"
#include "openact/common.hpp"
#include "openact/grounding.hpp"
#include "openact/inference.hpp"

#include <functional>
#include <limits>
#include <map>
#include <set>

namespace openact {

/// Frames of one clip with their grounded object scores ([frame][object],
/// aligned with the search space).
struct ClipFrames {
    ClipId clip;
    std::vector<FrameId> frames;
    std::vector<std::vector<double>> grounded;
};

using FrameInterpretations = std::vector<std::vector<Interpretation>>;  // [frame][rank]

/// Infers every frame of every clip; the prior row of a clip applies to all
/// of its frames. Output is independent of `settings.threads`.
inline std::vector<FrameInterpretations> infer_clips(const SearchSpace& space, const AffinityTable& affinities,
                                                     std::span<const ClipFrames> clips,
                                                     const ActionPriorTable& priors,
                                                     const InferenceSettings& settings) {
    settings.validate();
    std::vector<std::pair<std::size_t, std::size_t>> jobs;
    std::vector<FrameInterpretations> out(clips.size());
    for (std::size_t c = 0; c < clips.size(); ++c) {
        if (clips[c].grounded.size() != clips[c].frames.size())
            throw DataError("clip '" + clips[c].clip + "': grounded scores do not match its frames");
        out[c].resize(clips[c].frames.size());
        for (std::size_t f = 0; f < clips[c].frames.size(); ++f) jobs.emplace_back(c, f);
    }
    std::vector<std::vector<double>> rows(clips.size());
    for (std::size_t c = 0; c < clips.size(); ++c) rows[c] = priors.row(clips[c].clip, space.actions);

    parallel_for(jobs.size(), settings.threads, [&](std::size_t j) {
        const auto [c, f] = jobs[j];
        const EnergyModel model(space, clips[c].grounded[f], affinities, rows[c], settings.transform);
        out[c][f] = infer_frame(model, settings, j);
    });
    return out;
}

// ---------------------------------------------------------------------------
// Refinement loop
// ---------------------------------------------------------------------------

struct RefinementConfig {
    std::size_t max_iterations = 3;
    double saturation_delta = 0.005;
    std::vector<ConceptId> unseen_actions;
    double prior_temperature = 0.1;
    SmoothingParams smoothing;

    void validate() const {
        if (max_iterations < 1) throw UsageError("max_iterations must be at least 1");
        if (!(saturation_delta >= 0.0)) throw UsageError("saturation_delta must be non-negative");
        if (!(prior_temperature > 0.0)) throw UsageError("prior temperature must be positive");
    }
};

struct IterationReport {
    std::size_t iteration = 0;
    std::optional<double> heldout_mse;
    double train_mse = 0.0;
    std::optional<double> agreement;    // top-1 activity agreement with the previous iteration
    std::optional<double> improvement;  // drop in held-out MSE versus the previous iteration
    std::size_t train_samples = 0;
    std::size_t heldout_samples = 0;
    std::size_t best_epoch = 0;
};

struct IterationSnapshot {
    std::size_t iteration = 0;
    std::vector<FrameInterpretations> frames;           // [clip]
    std::vector<std::vector<ClipActivity>> activities;  // [clip], ranked
    std::vector<ClipActionTargets> targets;             // [clip]

    /// Top-1 (action, object) of each clip.
    std::vector<std::pair<ConceptId, ConceptId>> top1() const {
        std::vector<std::pair<ConceptId, ConceptId>> out;
        for (const auto& a : activities) {
            if (a.empty())
                out.emplace_back();
            else
                out.emplace_back(a.front().action, a.front().object);
        }
        return out;
    }
};

/// Everything needed to continue the loop at `next_iteration`.
struct RefineState {
    std::size_t next_iteration = 0;
    ActionPriorTable priors;
    std::optional<LinearMap> map;
    std::optional<double> previous_mse;
    std::vector<IterationReport> reports;
    std::optional<std::size_t> best_iteration;
    std::optional<IterationSnapshot> best_snapshot;
    std::optional<LinearMap> best_map;
    std::vector<std::pair<ConceptId, ConceptId>> previous_top1;
    bool finished = false;
};

/// Best-iteration rule: lower held-out MSE wins; without a held-out MSE the
/// later iteration wins.
inline bool improves_on(const IterationReport& candidate, const IterationReport* best) {
    if (!best || !candidate.heldout_mse || !best->heldout_mse) return true;
    return *candidate.heldout_mse < *best->heldout_mse;
}

struct RefineInputs {
    const SearchSpace* space = nullptr;
    const AffinityTable* affinities = nullptr;
    std::span<const ClipFrames> clips;
    const std::map<ClipId, ClipFeature>* features = nullptr;
    const EmbeddingTable* embeddings = nullptr;
};

struct RefineResult {
    std::vector<IterationReport> reports;
    std::size_t best_iteration = 0;
    IterationSnapshot best;
    std::optional<LinearMap> map;  // map trained at the best iteration
    ActionPriorTable priors;       // priors predicted by the last trained map
};

using IterationCallback = std::function<void(const IterationReport&, const IterationSnapshot&, const RefineState&)>;

inline IterationSnapshot run_inference_step(const RefineInputs& in, const ActionPriorTable& priors,
                                            const InferenceSettings& settings, std::size_t iteration,
                                            const SmoothingParams& smoothing) {
    InferenceSettings s = settings;
    s.schedule.seed = derive_seed(settings.schedule.seed, "iteration", iteration);
    IterationSnapshot snap;
    snap.iteration = iteration;
    snap.frames = infer_clips(*in.space, *in.affinities, in.clips, priors, s);
    for (std::size_t c = 0; c < in.clips.size(); ++c) {
        snap.targets.push_back(temporal_smooth(in.clips[c].clip, snap.frames[c], smoothing));
        snap.activities.push_back(smooth_activities(snap.frames[c], smoothing));
    }
    return snap;
}

/// Each iteration: (1) infer with the current priors, (2) smooth to clip
/// targets, (3) train the map (warm-started from the previous iteration),
/// scoring held-out MSE on samples whose target is an unseen action,
/// (4) predict per-clip action priors, (5) install them. Stops after
/// max_iterations or once held-out MSE improves by less than
/// saturation_delta; the first iteration is compared against the untrained
/// map. Returns the iteration with the lowest held-out MSE (the last one when
/// there is no held-out set).
inline RefineResult refine_loop(const RefineInputs& in, const RefinementConfig& cfg, const TrainConfig& train_cfg,
                                const InferenceSettings& settings, RefineState state = {},
                                const IterationCallback& on_iteration = {}) {
    cfg.validate();
    train_cfg.validate();
    const auto& space = *in.space;
    for (const auto& a : space.actions)
        if (!in.embeddings->contains(a)) throw DataError("action '" + a.str() + "' has no embedding");
    const std::set<ConceptId> unseen(cfg.unseen_actions.begin(), cfg.unseen_actions.end());
    if (unseen.empty() && state.next_iteration == 0)
        log::warn("no unseen actions given; refinement runs for max_iterations without a saturation check");

    while (!state.finished && state.next_iteration < cfg.max_iterations) {
        const std::size_t it = state.next_iteration;
        auto snap = run_inference_step(in, state.priors, settings, it, cfg.smoothing);

        std::vector<Sample> train, heldout;
        try {
            for (auto& s : make_training_set(snap.targets, *in.features, *in.embeddings))
                (unseen.count(s.action) ? heldout : train).push_back(std::move(s));
        } catch (const DataError& e) {
            log::warn(std::string("iteration ") + std::to_string(it) + ": " + e.what() + "; stopping refinement");
        }
        if (train.empty()) {
            if (!state.best_snapshot) {
                state.best_iteration = it;
                state.best_snapshot = std::move(snap);
            }
            log::warn("iteration " + std::to_string(it) + " has no training samples; stopping refinement");
            state.finished = true;
            break;
        }

        LinearMap init = state.map ? *state.map
                                   : LinearMap::initialize(train.front().feature.size(), train.front().target.size(),
                                                           derive_seed(train_cfg.seed, "init"));
        std::optional<double> baseline = state.previous_mse;
        if (!baseline && !heldout.empty()) baseline = mse(init, heldout);

        TrainConfig tc = train_cfg;
        tc.seed = derive_seed(train_cfg.seed, "iteration", it);
        auto trained = train_map(train, tc, heldout, std::move(init));

        IterationReport rep;
        rep.iteration = it;
        rep.heldout_mse = trained.best().heldout_mse;
        rep.train_mse = trained.best().train_mse;
        rep.train_samples = train.size();
        rep.heldout_samples = heldout.size();
        rep.best_epoch = trained.best_epoch;
        if (baseline && rep.heldout_mse) rep.improvement = *baseline - *rep.heldout_mse;

        const auto top1 = snap.top1();
        if (!state.previous_top1.empty() && state.previous_top1.size() == top1.size()) {
            std::size_t same = 0;
            for (std::size_t c = 0; c < top1.size(); ++c) same += top1[c] == state.previous_top1[c];
            rep.agreement = static_cast<double>(same) / static_cast<double>(top1.size());
        }

        ActionPriorTable next;
        for (const auto& clip : in.clips) {
            const auto f = in.features->find(clip.clip);
            if (f == in.features->end()) continue;
            const auto p = predict_actions(trained.map, f->second.vector, space.actions, *in.embeddings,
                                           cfg.prior_temperature);
            for (std::size_t a = 0; a < space.actions.size(); ++a) next.set(clip.clip, space.actions[a], p[a]);
        }

        const IterationReport* best =
            state.best_iteration && state.best_map ? &state.reports.at(*state.best_iteration) : nullptr;
        if (improves_on(rep, best)) {
            state.best_iteration = it;
            state.best_snapshot = snap;
            state.best_map = trained.map;
        }
        state.map = trained.map;
        state.priors = std::move(next);
        state.previous_mse = rep.heldout_mse;
        state.previous_top1 = top1;
        state.reports.push_back(rep);
        state.next_iteration = it + 1;
        if (rep.improvement && *rep.improvement < cfg.saturation_delta) state.finished = true;
        if (on_iteration) on_iteration(rep, snap, state);
    }

    RefineResult res;
    res.reports = state.reports;
    res.best_iteration = state.best_iteration.value_or(0);
    if (state.best_snapshot) res.best = *state.best_snapshot;
    res.map = state.best_map;
    res.priors = state.priors;
    return res;
}

// ---------------------------------------------------------------------------
// Zero-shot label mapping
// ---------------------------------------------------------------------------

struct Label {
    std::string id;
    ConceptId verb;
    std::optional<ConceptId> noun;
};

struct LabelSet {
    std::vector<Label> labels;

    static LabelSet from_labels(std::vector<Label> labels) {
        std::set<std::string> ids;
        for (const auto& l : labels)
            if (!ids.insert(l.id).second) throw DataError("duplicate label id '" + l.id + "'");
        return {std::move(labels)};
    }
};

/// CSV `label_id,verb,noun` (noun may be empty); optional header.
inline LabelSet load_labels(std::istream& in, const std::string& source = "<labels>") {
    std::vector<Label> labels;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        strip_cr(line);
        if (trim(line).empty()) continue;
        const auto f = split(line, ',');
        if (trim(f[0]) == "label_id") continue;
        if (f.size() < 2 || f.size() > 3) throw LoadError(source, row, "expected label_id,verb[,noun]");
        try {
            Label l{std::string(trim(f[0])), ConceptId(f[1]), std::nullopt};
            if (f.size() == 3 && !trim(f[2]).empty()) l.noun = ConceptId(f[2]);
            if (l.id.empty()) throw DataError("empty label id");
            labels.push_back(std::move(l));
        } catch (const DataError& e) {
            throw LoadError(source, row, e.what());
        }
    }
    try {
        return LabelSet::from_labels(std::move(labels));
    } catch (const DataError& e) {
        throw LoadError(source, row, e.what());
    }
}

/// Mean of the verb and (optional) noun embeddings; nullopt if any is missing.
inline std::optional<std::vector<double>> pair_embedding(const ConceptId& verb, const std::optional<ConceptId>& noun,
                                                         const EmbeddingTable& emb) {
    const auto v = emb.find(verb);
    if (!v) return std::nullopt;
    std::vector<double> out(v->begin(), v->end());
    if (noun) {
        const auto n = emb.find(*noun);
        if (!n) return std::nullopt;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] + (*n)[i]) / 2.0;
    }
    return out;
}

/// Cosine distance from each label to its nearest interpretation (aligned
/// with labels.labels). Interpretations with unembeddable concepts are
/// skipped; throws when none is left.
inline std::vector<double> zero_shot_distances(std::span<const ClipActivity> interps, const LabelSet& labels,
                                               const EmbeddingTable& emb) {
    if (labels.labels.empty()) throw DataError("label set is empty");
    std::vector<std::vector<double>> reps;
    for (const auto& it : interps)
        if (auto v = pair_embedding(it.action, it.object, emb)) reps.push_back(std::move(*v));
    if (reps.empty()) throw DataError("no interpretation has embeddings for both its verb and noun");
    std::vector<double> out;
    for (const auto& l : labels.labels) {
        const auto lv = pair_embedding(l.verb, l.noun, emb);
        double best = std::numeric_limits<double>::infinity();
        if (lv)
            for (const auto& r : reps) best = std::min(best, 1.0 - cosine(r, *lv));
        out.push_back(best);
    }
    return out;
}

struct ZeroShotMatch {
    std::string label_id;
    double distance;
};

inline ZeroShotMatch zero_shot_map(std::span<const ClipActivity> interps, const LabelSet& labels,
                                   const EmbeddingTable& emb) {
    const auto d = zero_shot_distances(interps, labels, emb);
    std::size_t best = 0;
    for (std::size_t i = 1; i < d.size(); ++i)
        if (d[i] < d[best] || (d[i] == d[best] && labels.labels[i].id < labels.labels[best].id)) best = i;
    return {labels.labels[best].id, d[best]};
}

} // namespace openact
