#pragma once
// Evidence-based object grounding.
//
// For each candidate object o in frame t:
//   evidence_sum(o)        = Σ_{neighbors e of o} weight(o,e) · p(e | t)
//   normalized_evidence(o) = evidence_sum(o) / Σ_{o'} evidence_sum(o')
//   score(o)               = p(o | t) · normalized_evidence(o)
// with a uniform 1/|objects| fallback when every evidence sum is zero.

#include "openact/common.hpp"
#include "openact/kgraph.hpp"

#include <istream>
#include <map>
#include <set>
#include <unordered_map>

namespace openact {

// ---------------------------------------------------------------------------
// Likelihoods
// ---------------------------------------------------------------------------

struct LikelihoodRow {
    FrameId frame;
    ConceptId concept_id;
    double probability;
};

/// Per-frame oracle likelihoods. Frames keep their order of first appearance.
class LikelihoodTable {
public:
    /// Throws DataError on out-of-range probabilities or duplicate
    /// (frame, concept) pairs; `row_numbers`, when given, is used for messages.
    static LikelihoodTable from_rows(std::span<const LikelihoodRow> rows, const std::string& source = "<likelihoods>",
                                     std::span<const std::size_t> row_numbers = {}) {
        LikelihoodTable t;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto& r = rows[i];
            const std::size_t rowno = row_numbers.empty() ? i + 1 : row_numbers[i];
            if (!(r.probability >= 0.0 && r.probability <= 1.0))
                throw LoadError(source, rowno, "probability " + format_double(r.probability) + " outside [0,1]");
            auto [fit, fresh] = t.frame_index_.emplace(r.frame, t.frames_.size());
            if (fresh) {
                t.frames_.push_back(r.frame);
                t.entries_.emplace_back();
            }
            auto& per_frame = t.entries_[fit->second];
            if (!per_frame.emplace(r.concept_id, r.probability).second)
                throw LoadError(source, rowno,
                                "duplicate likelihood for (" + r.frame + ", " + r.concept_id.str() + ")");
        }
        return t;
    }

    const std::vector<FrameId>& frames() const noexcept { return frames_; }
    bool has_frame(const FrameId& f) const { return frame_index_.count(f) != 0; }

    std::optional<double> likelihood(const FrameId& f, const ConceptId& c) const {
        const auto fit = frame_index_.find(f);
        if (fit == frame_index_.end()) return std::nullopt;
        const auto& m = entries_[fit->second];
        const auto it = m.find(c);
        if (it == m.end()) return std::nullopt;
        return it->second;
    }

    std::size_t entry_count() const {
        std::size_t n = 0;
        for (const auto& m : entries_) n += m.size();
        return n;
    }

private:
    std::vector<FrameId> frames_;
    std::unordered_map<FrameId, std::size_t> frame_index_;
    std::vector<std::unordered_map<ConceptId, double>> entries_;
};

/// CSV with header `frame_id,concept,probability`.
inline LikelihoodTable load_likelihoods(std::istream& in, const std::string& source = "<likelihoods>") {
    std::vector<LikelihoodRow> rows;
    std::vector<std::size_t> rownos;
    std::string line;
    std::size_t row = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++row;
        strip_cr(line);
        if (trim(line).empty()) continue;
        const auto f = split(line, ',');
        if (!header_seen) {
            header_seen = true;
            if (f.size() == 3 && trim(f[0]) == "frame_id" && trim(f[1]) == "concept" && trim(f[2]) == "probability")
                continue;
            throw LoadError(source, row, "expected header 'frame_id,concept,probability'");
        }
        if (f.size() != 3) throw LoadError(source, row, "expected 3 fields, got " + std::to_string(f.size()));
        const auto p = parse_double(f[2]);
        if (!p) throw LoadError(source, row, "probability '" + std::string(f[2]) + "' is not a number");
        const auto frame = trim(f[0]);
        if (frame.empty()) throw LoadError(source, row, "empty frame id");
        try {
            rows.push_back({FrameId(frame), ConceptId(f[1]), *p});
        } catch (const LoadError&) {
            throw;
        } catch (const DataError& e) {
            throw LoadError(source, row, e.what());
        }
        rownos.push_back(row);
    }
    return LikelihoodTable::from_rows(rows, source, rownos);
}

// ---------------------------------------------------------------------------
// Search space
// ---------------------------------------------------------------------------

/// Drops duplicates and concepts unknown to `g` (with warnings); throws when
/// nothing is left. `what` names the list in messages.
inline std::vector<ConceptId> resolve_concepts(std::span<const ConceptId> in, const std::string& what,
                                               const KnowledgeGraph& g) {
    std::vector<ConceptId> out;
    std::set<ConceptId> seen;
    for (const auto& c : in) {
        if (!seen.insert(c).second) {
            log::warn("duplicate " + what + " '" + c.str() + "' dropped");
            continue;
        }
        if (!g.contains(c)) {
            log::warn(what + " '" + c.str() + "' not in the knowledge graph; dropped");
            continue;
        }
        out.push_back(c);
    }
    if (out.empty()) throw DataError(what + " search space is empty");
    return out;
}

struct SearchSpace {
    std::vector<ConceptId> objects;
    std::vector<ConceptId> actions;

    static SearchSpace resolve(std::span<const ConceptId> objects, std::span<const ConceptId> actions,
                               const KnowledgeGraph& g) {
        auto o = resolve_concepts(objects, "object", g);
        return {std::move(o), resolve_concepts(actions, "action", g)};
    }

    std::size_t pair_count() const noexcept { return objects.size() * actions.size(); }
};

/// One concept per line; blank lines and `#` comments skipped.
inline std::vector<ConceptId> load_concept_list(std::istream& in, const std::string& source = "<list>") {
    std::vector<ConceptId> out;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        strip_cr(line);
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        try {
            out.emplace_back(t);
        } catch (const DataError& e) {
            throw LoadError(source, row, e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Grounding
// ---------------------------------------------------------------------------

struct EvidenceTerm {
    ConceptId evidence;
    std::string relation;
    double prior_weight;
    std::optional<double> oracle_likelihood;  // absent from the table
    double contribution;                      // prior_weight × likelihood (0 when absent)
};

struct EvidenceSum {
    double total = 0.0;
    std::vector<EvidenceTerm> breakdown;
};

inline EvidenceSum evidence_sum(const ConceptId& object, const EgoGraph& ego, const FrameId& frame,
                                const LikelihoodTable& table) {
    if (ego.center != object)
        throw DataError("ego-graph centered on '" + ego.center.str() + "' used for '" + object.str() + "'");
    EvidenceSum out;
    for (const auto& nb : ego.neighbors) {
        const auto p = table.likelihood(frame, nb.evidence);
        const double c = p ? nb.weight * *p : 0.0;
        out.total += c;
        out.breakdown.push_back({nb.evidence, nb.relation_name(), nb.weight, p, c});
    }
    return out;
}

struct GroundedScore {
    ConceptId object;
    FrameId frame;
    double score = 0.0;
    double oracle_likelihood = 0.0;
    double evidence_sum = 0.0;
    double normalized_evidence = 0.0;
    std::vector<EvidenceTerm> evidence_breakdown;
};

inline std::vector<EgoGraph> build_ego_graphs(const KnowledgeGraph& g, std::span<const ConceptId> objects) {
    std::vector<EgoGraph> out;
    out.reserve(objects.size());
    for (const auto& o : objects) out.push_back(ego_graph(g, o));
    return out;
}

/// Scores aligned with `space.objects`. `egos[i]` must be the ego-graph of
/// `space.objects[i]`.
inline std::vector<GroundedScore> ground_frame_scores(const SearchSpace& space, const FrameId& frame,
                                                      const LikelihoodTable& table, std::span<const EgoGraph> egos) {
    if (!table.has_frame(frame)) throw DataError("frame '" + frame + "' not in likelihood table");
    if (egos.size() != space.objects.size()) throw DataError("ego-graph count does not match object space");

    std::vector<GroundedScore> out;
    out.reserve(space.objects.size());
    double denom = 0.0;
    std::vector<std::string> missing;
    for (std::size_t i = 0; i < space.objects.size(); ++i) {
        const auto& o = space.objects[i];
        auto ev = evidence_sum(o, egos[i], frame, table);
        for (const auto& t : ev.breakdown)
            if (!t.oracle_likelihood) missing.push_back(t.evidence.str());
        const auto own = table.likelihood(frame, o);
        if (!own) missing.push_back(o.str());
        GroundedScore gs;
        gs.object = o;
        gs.frame = frame;
        gs.oracle_likelihood = own.value_or(0.0);
        gs.evidence_sum = ev.total;
        gs.evidence_breakdown = std::move(ev.breakdown);
        denom += gs.evidence_sum;
        out.push_back(std::move(gs));
    }
    const double uniform = 1.0 / static_cast<double>(out.size());
    for (auto& gs : out) {
        gs.normalized_evidence = denom > 0.0 ? gs.evidence_sum / denom : uniform;
        gs.score = gs.oracle_likelihood * gs.normalized_evidence;
    }
    if (!missing.empty()) {
        std::sort(missing.begin(), missing.end());
        missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
        std::string msg = "frame '" + frame + "': no likelihood for";
        for (const auto& m : missing) msg += " " + m;
        msg += " (treated as 0)";
        log::warn(msg);
    }
    return out;
}

inline std::map<ConceptId, GroundedScore> ground_frame(const SearchSpace& space, const FrameId& frame,
                                                       const LikelihoodTable& table, const KnowledgeGraph& g) {
    const auto egos = build_ego_graphs(g, space.objects);
    std::map<ConceptId, GroundedScore> out;
    for (auto& gs : ground_frame_scores(space, frame, table, egos)) {
        auto key = gs.object;
        out.emplace(std::move(key), std::move(gs));
    }
    return out;
}

} // namespace openact
