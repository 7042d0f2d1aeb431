#pragma once
// Energy-based activity inference over (object, action) configurations.
//
// E(o, a) = φ(grounded(o)) + φ(affinity(a, o) / Σ_a' affinity(a', o)) + φ(prior(a))
// with φ(p) = -ln(max(p, ε)). Lower energy is better.

#include "openact/common.hpp"
#include "openact/grounding.hpp"
#include "openact/kgraph.hpp"

#include <cmath>
#include <exception>
#include <map>
#include <thread>

namespace openact {

// ---------------------------------------------------------------------------
// Pattern-theory structures
// ---------------------------------------------------------------------------

enum class GeneratorKind { grounded_object, ungrounded_evidence, action, affinity_node };

inline const char* to_string(GeneratorKind k) {
    switch (k) {
        case GeneratorKind::grounded_object: return "grounded_object";
        case GeneratorKind::ungrounded_evidence: return "ungrounded_evidence";
        case GeneratorKind::action: return "action";
        case GeneratorKind::affinity_node: return "affinity_node";
    }
    return "?";
}

using GeneratorId = std::size_t;

struct Generator {
    GeneratorId id;
    ConceptId concept_id;
    GeneratorKind kind;
    std::vector<std::size_t> bonds;  // indices into Configuration::bonds

    std::size_t arity() const noexcept { return bonds.size(); }
};

struct Bond {
    GeneratorId from;
    GeneratorId to;
    std::string label;  // relation name, or "hypothesis" for the bare object-action link
    double weight;
};

/// Generators are numbered object = 0, evidence 1..n, action n+1, then the
/// intermediate affinity nodes in path order from the action side.
struct Configuration {
    Generator object;
    std::vector<Generator> evidence;
    Generator action;
    std::vector<Generator> affinity_path;
    std::vector<Bond> bonds;
    std::optional<double> energy;

    std::size_t generator_count() const noexcept { return 2 + evidence.size() + affinity_path.size(); }

    const Generator& generator(GeneratorId id) const {
        if (id == object.id) return object;
        if (id == action.id) return action;
        if (id >= 1 && id <= evidence.size()) return evidence[id - 1];
        return affinity_path.at(id - evidence.size() - 2);
    }

    /// All generators reachable from the object over bonds.
    bool connected() const {
        const std::size_t n = generator_count();
        std::vector<std::vector<GeneratorId>> adj(n);
        for (const auto& b : bonds) {
            adj.at(b.from).push_back(b.to);
            adj.at(b.to).push_back(b.from);
        }
        std::vector<char> seen(n, 0);
        std::vector<GeneratorId> stack{object.id};
        seen[object.id] = 1;
        std::size_t count = 1;
        while (!stack.empty()) {
            const auto at = stack.back();
            stack.pop_back();
            for (auto nb : adj[at])
                if (!seen[nb]) {
                    seen[nb] = 1;
                    ++count;
                    stack.push_back(nb);
                }
        }
        return count == n;
    }
};

/// `path`, when given, runs from the action to the object (as produced by
/// best_affinity).
inline Configuration build_configuration(const KnowledgeGraph& g, const ConceptId& object, const ConceptId& action,
                                         const EgoGraph& ego, const KPath* path) {
    if (ego.center != object)
        throw DataError("ego-graph centered on '" + ego.center.str() + "' used for '" + object.str() + "'");
    Configuration cfg;
    cfg.object = {0, object, GeneratorKind::grounded_object, {}};
    for (std::size_t i = 0; i < ego.neighbors.size(); ++i)
        cfg.evidence.push_back({i + 1, ego.neighbors[i].evidence, GeneratorKind::ungrounded_evidence, {}});
    cfg.action = {ego.neighbors.size() + 1, action, GeneratorKind::action, {}};

    auto add_bond = [&](Generator& a, Generator& b, std::string label, double w) {
        cfg.bonds.push_back({a.id, b.id, std::move(label), w});
        a.bonds.push_back(cfg.bonds.size() - 1);
        b.bonds.push_back(cfg.bonds.size() - 1);
    };

    for (std::size_t i = 0; i < ego.neighbors.size(); ++i)
        add_bond(cfg.object, cfg.evidence[i], ego.neighbors[i].relation_name(), ego.neighbors[i].weight);

    if (path && path->hop_count() >= 1) {
        const GeneratorId first = cfg.action.id + 1;
        for (std::size_t k = 1; k + 1 < path->nodes.size(); ++k)
            cfg.affinity_path.push_back(
                {first + k - 1, g.concept_at(path->nodes[k]), GeneratorKind::affinity_node, {}});
        auto slot = [&](std::size_t k) -> Generator& {
            if (k == 0) return cfg.action;
            if (k + 1 == path->nodes.size()) return cfg.object;
            return cfg.affinity_path[k - 1];
        };
        for (std::size_t k = 0; k < path->edges.size(); ++k) {
            const auto& e = g.edge(path->edges[k]);
            add_bond(slot(k), slot(k + 1), relation_kind(e.relation).name, e.weight);
        }
    } else {
        add_bond(cfg.object, cfg.action, "hypothesis", 0.0);
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// Energy
// ---------------------------------------------------------------------------

struct EnergyTransform {
    double epsilon = 1e-6;

    double operator()(double p) const { return -std::log(std::max(p, epsilon)); }

    void validate() const {
        if (!(epsilon > 0.0)) throw UsageError("epsilon must be positive");
    }
};

/// Terms are added left to right: grounded, affinity, action prior.
inline double configuration_energy(double grounded_score, double affinity_value, double affinity_normalizer,
                                   double action_prior, const EnergyTransform& phi = {}) {
    return phi(grounded_score) + phi(affinity_value / affinity_normalizer) + phi(action_prior);
}

inline double energy(Configuration& cfg, const GroundedScore& grounded, double affinity_value, double action_prior,
                     const EnergyTransform& phi, double affinity_normalizer) {
    if (grounded.object != cfg.object.concept_id)
        throw DataError("grounded score for '" + grounded.object.str() + "' used on configuration of '" +
                        cfg.object.concept_id.str() + "'");
    cfg.energy = configuration_energy(grounded.score, affinity_value, affinity_normalizer, action_prior, phi);
    return *cfg.energy;
}

// ---------------------------------------------------------------------------
// Priors and precomputed affinities
// ---------------------------------------------------------------------------

/// Action priors keyed by frame or clip id; missing entries default to 1.
class ActionPriorTable {
public:
    double get(const std::string& id, const ConceptId& action) const {
        const auto it = values_.find(id);
        if (it == values_.end()) return 1.0;
        const auto jt = it->second.find(action);
        return jt == it->second.end() ? 1.0 : jt->second;
    }

    void set(const std::string& id, const ConceptId& action, double p) {
        if (!(p > 0.0 && p <= 1.0))
            throw DataError("action prior for (" + id + ", " + action.str() + ") = " + format_double(p) +
                            " outside (0,1]");
        values_[id][action] = p;
    }

    std::vector<double> row(const std::string& id, std::span<const ConceptId> actions) const {
        std::vector<double> out;
        out.reserve(actions.size());
        for (const auto& a : actions) out.push_back(get(id, a));
        return out;
    }

    const std::map<std::string, std::map<ConceptId, double>>& entries() const noexcept { return values_; }
    bool empty() const noexcept { return values_.empty(); }

private:
    std::map<std::string, std::map<ConceptId, double>> values_;
};

/// affinity(action, object) for every pair of a search space plus the per-object
/// normaliser Σ_actions affinity (1 when that sum is 0).
struct AffinityTable {
    std::vector<std::vector<double>> values;  // [object][action]
    std::vector<double> normalizer;           // [object]
    std::vector<std::vector<std::optional<KPath>>> paths;

    static AffinityTable compute(const KnowledgeGraph& g, const SearchSpace& space, const AffinityParams& params) {
        AffinityTable t;
        t.values.assign(space.objects.size(), std::vector<double>(space.actions.size(), 0.0));
        t.paths.assign(space.objects.size(), std::vector<std::optional<KPath>>(space.actions.size()));
        t.normalizer.assign(space.objects.size(), 1.0);
        for (std::size_t o = 0; o < space.objects.size(); ++o) {
            double sum = 0.0;
            for (std::size_t a = 0; a < space.actions.size(); ++a) {
                auto r = best_affinity(g, space.actions[a], space.objects[o], params);
                t.values[o][a] = r.score;
                t.paths[o][a] = std::move(r.best_path);
                sum += r.score;
            }
            t.normalizer[o] = sum > 0.0 ? sum : 1.0;
        }
        return t;
    }
};

// ---------------------------------------------------------------------------
// Search
// ---------------------------------------------------------------------------

struct Interpretation {
    ConceptId action;
    ConceptId object;
    double energy = 0.0;
    double grounded_score = 0.0;
    double affinity = 0.0;             // raw path score
    double affinity_normalizer = 1.0;  // Σ over the action space for this object
    double action_prior = 1.0;
};

/// Ascending energy, ties by (object, action).
inline bool interpretation_less(const Interpretation& x, const Interpretation& y) {
    if (x.energy != y.energy) return x.energy < y.energy;
    return std::tie(x.object, x.action) < std::tie(y.object, y.action);
}

/// Energy landscape of a single frame over the object × action grid.
class EnergyModel {
public:
    EnergyModel(const SearchSpace& space, std::span<const double> grounded, const AffinityTable& affinities,
                std::span<const double> action_priors, EnergyTransform phi = {})
        : space_(&space),
          grounded_(grounded.begin(), grounded.end()),
          affinities_(&affinities),
          priors_(action_priors.begin(), action_priors.end()),
          phi_(phi) {
        if (grounded_.size() != space.objects.size()) throw DataError("grounded scores do not match object space");
        if (priors_.size() != space.actions.size()) throw DataError("action priors do not match action space");
        if (affinities.values.size() != space.objects.size()) throw DataError("affinity table does not match space");
    }

    std::size_t object_count() const noexcept { return space_->objects.size(); }
    std::size_t action_count() const noexcept { return space_->actions.size(); }
    const SearchSpace& space() const noexcept { return *space_; }

    double operator()(std::size_t o, std::size_t a) const {
        return configuration_energy(grounded_[o], affinities_->values[o][a], affinities_->normalizer[o], priors_[a],
                                    phi_);
    }

    Interpretation interpretation(std::size_t o, std::size_t a) const {
        return {space_->actions[a],          space_->objects[o],           (*this)(o, a), grounded_[o],
                affinities_->values[o][a], affinities_->normalizer[o], priors_[a]};
    }

private:
    const SearchSpace* space_;
    std::vector<double> grounded_;
    const AffinityTable* affinities_;
    std::vector<double> priors_;
    EnergyTransform phi_;
};

/// Scores every pair; returns the k best.
inline std::vector<Interpretation> infer_exhaustive(const EnergyModel& model, std::size_t k) {
    std::vector<Interpretation> all;
    all.reserve(model.object_count() * model.action_count());
    for (std::size_t o = 0; o < model.object_count(); ++o)
        for (std::size_t a = 0; a < model.action_count(); ++a) all.push_back(model.interpretation(o, a));
    std::sort(all.begin(), all.end(), interpretation_less);
    if (all.size() > k) all.resize(k);
    return all;
}

struct AnnealSchedule {
    double t0 = 1.0;
    double alpha = 0.95;
    std::size_t iterations = 2000;
    std::uint64_t seed = 0;
    double t_min = 1e-3;  // restart threshold

    void validate() const {
        if (!(t0 > 0.0)) throw UsageError("t0 must be positive");
        if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("alpha must be in (0,1)");
        if (iterations < 1) throw UsageError("iterations must be at least 1");
        if (!(t_min > 0.0)) throw UsageError("t_min must be positive");
    }

    /// Steps per cooling cycle: the first j with t0·alpha^j < t_min.
    std::size_t cycle_length() const {
        if (t_min >= t0) return 1;
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::log(t_min / t0) / std::log(alpha))));
    }

    /// Temperature at step j of a cycle.
    double temperature(std::size_t j) const { return t0 * std::pow(alpha, static_cast<double>(j)); }
};

/// Metropolis chain over (object, action) states. Each step re-draws one
/// coordinate uniformly among its other values and accepts with
/// min(1, exp((E_cur - E_prop) / T)). T follows t0·alpha^j within a cycle;
/// when it falls below t_min the chain restarts from a fresh uniform state at
/// T = t0. Every state the chain occupies is recorded and the k lowest
/// distinct ones are returned.
inline std::vector<Interpretation> infer_mcmc(const EnergyModel& model, const AnnealSchedule& schedule,
                                              std::size_t k) {
    schedule.validate();
    const std::size_t no = model.object_count();
    const std::size_t na = model.action_count();
    const std::size_t cycle = schedule.cycle_length();
    Rng rng(schedule.seed);

    std::vector<char> visited(no * na, 0);
    std::size_t o = 0, a = 0;
    double e = 0.0;
    auto jump = [&] {
        o = rng.index(no);
        a = rng.index(na);
        e = model(o, a);
        visited[o * na + a] = 1;
    };
    jump();

    const bool can_o = no > 1, can_a = na > 1;
    for (std::size_t i = 0; i < schedule.iterations && (can_o || can_a); ++i) {
        const std::size_t j = i % cycle;
        if (j == 0 && i > 0) jump();
        const double temp = schedule.temperature(j);
        std::size_t po = o, pa = a;
        const bool flip_object = can_o && (!can_a || rng.index(2) == 0);
        if (flip_object) {
            po = rng.index(no - 1);
            if (po >= o) ++po;
        } else {
            pa = rng.index(na - 1);
            if (pa >= a) ++pa;
        }
        const double pe = model(po, pa);
        const double delta = e - pe;  // > 0 when the proposal is better
        if (delta >= 0.0 || rng.uniform() < std::exp(delta / temp)) {
            o = po;
            a = pa;
            e = pe;
            visited[o * na + a] = 1;
        }
    }

    std::vector<Interpretation> out;
    for (std::size_t so = 0; so < no; ++so)
        for (std::size_t sa = 0; sa < na; ++sa)
            if (visited[so * na + sa]) out.push_back(model.interpretation(so, sa));
    std::sort(out.begin(), out.end(), interpretation_less);
    if (out.size() > k) out.resize(k);
    return out;
}

enum class InferenceMode { automatic, exhaustive, mcmc };

inline InferenceMode parse_inference_mode(std::string_view s) {
    if (s == "auto") return InferenceMode::automatic;
    if (s == "exhaustive") return InferenceMode::exhaustive;
    if (s == "mcmc") return InferenceMode::mcmc;
    throw UsageError("unknown inference mode '" + std::string(s) + "' (expected exhaustive, mcmc or auto)");
}

inline const char* to_string(InferenceMode m) {
    switch (m) {
        case InferenceMode::automatic: return "auto";
        case InferenceMode::exhaustive: return "exhaustive";
        case InferenceMode::mcmc: return "mcmc";
    }
    return "?";
}

/// Exhaustive search is exact and cheap up to this many pairs.
inline constexpr std::size_t exhaustive_pair_limit = 10000;

inline InferenceMode resolve_mode(InferenceMode m, const SearchSpace& space) {
    if (m != InferenceMode::automatic) return m;
    return space.pair_count() <= exhaustive_pair_limit ? InferenceMode::exhaustive : InferenceMode::mcmc;
}

struct InferenceSettings {
    InferenceMode mode = InferenceMode::automatic;
    std::size_t top_k = 10;
    EnergyTransform transform;
    AnnealSchedule schedule;
    std::size_t threads = 1;

    void validate() const {
        if (top_k < 1) throw UsageError("k must be at least 1");
        if (threads < 1) throw UsageError("threads must be at least 1");
        transform.validate();
        schedule.validate();
    }
};

/// Runs `fn(i)` for i in [0, n) on up to `threads` workers. Results must be
/// written to slot i so the outcome does not depend on the thread count.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

/// Infers one frame. For MCMC the chain seed is derived from the schedule
/// seed and `stream_index`, so frames can be processed in any order.
inline std::vector<Interpretation> infer_frame(const EnergyModel& model, const InferenceSettings& s,
                                               std::uint64_t stream_index) {
    if (resolve_mode(s.mode, model.space()) == InferenceMode::exhaustive) return infer_exhaustive(model, s.top_k);
    AnnealSchedule sched = s.schedule;
    sched.seed = derive_seed(s.schedule.seed, "inference", stream_index);
    return infer_mcmc(model, sched, s.top_k);
}

inline std::vector<double> grounded_vector(const SearchSpace& space, const std::map<ConceptId, GroundedScore>& m) {
    std::vector<double> out;
    out.reserve(space.objects.size());
    for (const auto& o : space.objects) {
        const auto it = m.find(o);
        if (it == m.end()) throw DataError("no grounded score for object '" + o.str() + "'");
        out.push_back(it->second.score);
    }
    return out;
}

/// Convenience form taking the raw inputs; `prior_id` selects the row of
/// `priors` (a frame or clip id).
inline std::vector<Interpretation> infer_exhaustive(const SearchSpace& space, const std::string& prior_id,
                                                    const std::map<ConceptId, GroundedScore>& grounded,
                                                    const KnowledgeGraph& g, const ActionPriorTable& priors,
                                                    const AffinityParams& params, std::size_t k,
                                                    const EnergyTransform& phi = {}) {
    const auto aff = AffinityTable::compute(g, space, params);
    const auto gv = grounded_vector(space, grounded);
    const auto pr = priors.row(prior_id, space.actions);
    return infer_exhaustive(EnergyModel(space, gv, aff, pr, phi), k);
}

inline std::vector<Interpretation> infer_mcmc(const SearchSpace& space, const std::string& prior_id,
                                              const std::map<ConceptId, GroundedScore>& grounded,
                                              const KnowledgeGraph& g, const ActionPriorTable& priors,
                                              const AffinityParams& params, const AnnealSchedule& schedule,
                                              std::size_t k, const EnergyTransform& phi = {}) {
    const auto aff = AffinityTable::compute(g, space, params);
    const auto gv = grounded_vector(space, grounded);
    const auto pr = priors.row(prior_id, space.actions);
    return infer_mcmc(EnergyModel(space, gv, aff, pr, phi), schedule, k);
}

} // namespace openact
