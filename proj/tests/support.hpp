#pragma once
// Seeded generators and brute-force oracles shared by the unit tests and the
// acceptance binary. Oracles work from raw records and never call the
// library's search or scoring code.

#include "openact/actionmap.hpp"
#include "openact/common.hpp"
#include "openact/eval.hpp"
#include "openact/inference.hpp"
#include "openact/kgraph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace openact::testing {

inline const std::vector<std::string>& mixed_relations() {
    static const std::vector<std::string> r = {"IsA",       "UsedFor",   "HasProperty", "SynonymOf",
                                               "RelatedTo", "AtLocation", "PartOf",     "Synonym"};
    return r;
}

inline bool oracle_affinity_relation(const std::string& r) {
    return r == "IsA" || r == "UsedFor" || r == "HasProperty";
}

inline bool oracle_ego_relation(const std::string& r) { return oracle_affinity_relation(r) || r == "SynonymOf"; }

inline std::string node_name(std::size_t i) { return "n" + std::to_string(i); }

/// Random multigraph records: `nodes` concepts, `edges` assertions with mixed
/// relations, weights in (0, 3], occasional duplicates and self-loops.
inline std::vector<EdgeRecord> random_graph(Rng& rng, std::size_t nodes, std::size_t edges) {
    std::vector<EdgeRecord> out;
    const auto& rel = mixed_relations();
    for (std::size_t i = 0; i < edges; ++i) {
        const auto h = rng.index(nodes), t = rng.index(nodes);
        const double w = 0.05 + 2.95 * rng.uniform();
        out.push_back({ConceptId(node_name(h)), rel[rng.index(rel.size())], ConceptId(node_name(t)), w});
        if (rng.uniform() < 0.05) out.push_back({out.back().head, out.back().relation, out.back().tail, w / 2});
    }
    // Every node appears at least once so the node set is predictable.
    for (std::size_t i = 0; i < nodes; ++i)
        out.push_back({ConceptId(node_name(i)), "RelatedTo", ConceptId(node_name((i + 1) % nodes)), 1.0});
    return out;
}

struct RawEdge {
    std::string head, relation, tail;
    double weight;
};

/// Duplicate triples merged by max weight, self-loops dropped (a simple path
/// can never use one).
inline std::vector<RawEdge> oracle_edges(const std::vector<EdgeRecord>& records) {
    std::map<std::tuple<std::string, std::string, std::string>, double> merged;
    for (const auto& r : records) {
        auto key = std::make_tuple(r.head.str(), r.relation, r.tail.str());
        auto [it, fresh] = merged.emplace(key, r.weight);
        if (!fresh && r.weight > it->second) it->second = r.weight;
    }
    std::vector<RawEdge> out;
    for (const auto& [k, w] : merged)
        if (std::get<0>(k) != std::get<2>(k)) out.push_back({std::get<0>(k), std::get<1>(k), std::get<2>(k), w});
    return out;
}

/// Every simple undirected path from `from` to `to` with at most `max_hops`
/// edges, as edge index lists, found by scanning the full edge list per step.
inline std::vector<std::vector<std::size_t>> oracle_paths(const std::vector<RawEdge>& edges, const std::string& from,
                                                          const std::string& to, int max_hops) {
    std::vector<std::vector<std::size_t>> out;
    std::vector<std::size_t> path;
    std::set<std::string> visited{from};
    auto rec = [&](auto&& self, const std::string& at) -> void {
        if (at == to && !path.empty()) {
            out.push_back(path);
            return;
        }
        if (static_cast<int>(path.size()) == max_hops) return;
        for (std::size_t e = 0; e < edges.size(); ++e) {
            std::string next;
            if (edges[e].head == at)
                next = edges[e].tail;
            else if (edges[e].tail == at)
                next = edges[e].head;
            else
                continue;
            if (visited.count(next)) continue;
            visited.insert(next);
            path.push_back(e);
            self(self, next);
            path.pop_back();
            visited.erase(next);
        }
    };
    if (from != to) rec(rec, from);
    return out;
}

inline double oracle_affinity(const std::vector<RawEdge>& edges, const std::string& action, const std::string& object,
                              double lambda, int max_hops) {
    double best = 0.0;
    bool any = false;
    for (const auto& p : oracle_paths(edges, action, object, max_hops)) {
        bool ok = false;
        for (auto e : p) ok = ok || oracle_affinity_relation(edges[e].relation);
        if (!ok) continue;
        double s = 0.0;
        for (std::size_t k = 0; k < p.size(); ++k)
            s += std::exp(-lambda * static_cast<double>(k + 1)) * edges[p[k]].weight;
        if (!any || s > best) best = s;
        any = true;
    }
    return best;
}

/// Evidence sum of an object straight from raw edges and likelihood rows.
inline double oracle_evidence_sum(const std::vector<RawEdge>& edges, const std::string& object,
                                  const std::map<std::string, double>& likelihood) {
    double s = 0.0;
    for (const auto& e : edges) {
        if (!oracle_ego_relation(e.relation)) continue;
        std::string other;
        if (e.head == object)
            other = e.tail;
        else if (e.tail == object)
            other = e.head;
        else
            continue;
        const auto it = likelihood.find(other);
        if (it != likelihood.end()) s += e.weight * it->second;
    }
    return s;
}

inline double oracle_phi(double p) { return -std::log(p < 1e-6 ? 1e-6 : p); }

struct OracleInterp {
    std::string action, object;
    double energy;
};

/// All (object, action) pairs ranked by energy, ties by (object, action).
inline std::vector<OracleInterp> oracle_rank(const std::vector<std::string>& objects,
                                             const std::vector<std::string>& actions,
                                             const std::vector<double>& grounded,              // [object]
                                             const std::vector<std::vector<double>>& affinity,  // [object][action]
                                             const std::vector<double>& priors) {              // [action]
    std::vector<OracleInterp> out;
    for (std::size_t o = 0; o < objects.size(); ++o) {
        double norm = 0.0;
        for (double a : affinity[o]) norm += a;
        if (norm == 0.0) norm = 1.0;
        for (std::size_t a = 0; a < actions.size(); ++a)
            out.push_back({actions[a], objects[o],
                           oracle_phi(grounded[o]) + oracle_phi(affinity[o][a] / norm) + oracle_phi(priors[a])});
    }
    std::sort(out.begin(), out.end(), [](const OracleInterp& x, const OracleInterp& y) {
        if (x.energy != y.energy) return x.energy < y.energy;
        return std::tie(x.object, x.action) < std::tie(y.object, y.action);
    });
    return out;
}

/// Synthetic inference problem: random grounded scores, affinities (some
/// zero) and priors over an objects × actions space.
struct SyntheticSpace {
    SearchSpace space;
    std::vector<double> grounded;
    AffinityTable affinities;
    std::vector<double> priors;

    EnergyModel model(EnergyTransform phi = {}) const { return EnergyModel(space, grounded, affinities, priors, phi); }
};

inline AffinityTable affinity_table(std::vector<std::vector<double>> values) {
    AffinityTable t;
    t.normalizer.clear();
    for (const auto& row : values) {
        double sum = 0.0;
        for (double v : row) sum += v;
        t.normalizer.push_back(sum > 0.0 ? sum : 1.0);
        t.paths.emplace_back(row.size());
    }
    t.values = std::move(values);
    return t;
}

inline SyntheticSpace random_space(Rng& rng, std::size_t objects, std::size_t actions, bool random_priors = true) {
    SyntheticSpace s;
    for (std::size_t o = 0; o < objects; ++o) s.space.objects.emplace_back("obj" + std::to_string(o));
    for (std::size_t a = 0; a < actions; ++a) s.space.actions.emplace_back("act" + std::to_string(a));
    std::vector<std::vector<double>> aff(objects, std::vector<double>(actions, 0.0));
    for (std::size_t o = 0; o < objects; ++o) {
        s.grounded.push_back(rng.uniform() < 0.1 ? 0.0 : rng.uniform());
        for (std::size_t a = 0; a < actions; ++a) aff[o][a] = rng.uniform() < 0.3 ? 0.0 : 3.0 * rng.uniform();
    }
    s.affinities = affinity_table(std::move(aff));
    for (std::size_t a = 0; a < actions; ++a) s.priors.push_back(random_priors ? 0.05 + 0.95 * rng.uniform() : 1.0);
    return s;
}

/// Independent mean squared error of y = x·W + b.
inline double oracle_mse(const LinearMap& m, const std::vector<Sample>& samples) {
    double s = 0.0;
    for (const auto& smp : samples)
        for (std::size_t j = 0; j < m.out_dim; ++j) {
            double y = m.bias[j];
            for (std::size_t i = 0; i < m.in_dim; ++i) y += smp.feature[i] * m.weights[i * m.out_dim + j];
            s += (y - smp.target[j]) * (y - smp.target[j]);
        }
    return s / static_cast<double>(samples.size() * m.out_dim);
}

/// Relative error ‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖) between
/// mse_gradient and central differences of oracle_mse, over all parameters.
inline double gradient_check(LinearMap m, const std::vector<Sample>& samples, double step = 1e-5) {
    const auto g = mse_gradient(m, samples);
    double diff = 0.0, na = 0.0, nn = 0.0;
    auto probe = [&](double& param, double analytic) {
        const double keep = param;
        param = keep + step;
        const double up = oracle_mse(m, samples);
        param = keep - step;
        const double down = oracle_mse(m, samples);
        param = keep;
        const double numeric = (up - down) / (2 * step);
        diff += (analytic - numeric) * (analytic - numeric);
        na += analytic * analytic;
        nn += numeric * numeric;
    };
    for (std::size_t i = 0; i < m.weights.size(); ++i) probe(m.weights[i], g.weights[i]);
    for (std::size_t j = 0; j < m.bias.size(); ++j) probe(m.bias[j], g.bias[j]);
    const double scale = std::max(std::sqrt(na), std::sqrt(nn));
    return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

struct Planted {
    LinearMap truth;
    std::vector<Sample> samples;
};

/// Noiseless samples y = x·W* + b* with standard normal features.
inline Planted planted_data(Rng& rng, std::size_t n, std::size_t in, std::size_t out) {
    Planted p{LinearMap(in, out), {}};
    for (auto& w : p.truth.weights) w = rng.normal();
    for (auto& b : p.truth.bias) b = 0.1 * rng.normal();
    for (std::size_t k = 0; k < n; ++k) {
        Sample s{"c" + std::to_string(k), ConceptId("a"), std::vector<double>(in), {}};
        for (auto& x : s.feature) x = rng.normal();
        s.target = p.truth.project(s.feature);
        p.samples.push_back(std::move(s));
    }
    return p;
}

// ---------------------------------------------------------------------------
// Metric instances and brute-force metric oracles
// ---------------------------------------------------------------------------

struct MetricInstance {
    std::vector<std::string> clips;
    std::vector<std::string> verbs, nouns;      // vocabulary
    std::map<std::string, std::pair<std::string, std::string>> truth, pred;  // clip -> (verb, noun)
    std::map<std::string, std::map<std::string, double>> scores;              // clip -> label -> score
    std::map<std::string, std::set<std::string>> positives;
    EmbeddingTable embeddings{4};
};

/// Up to 20 clips and 10 labels; scores are drawn from a small grid so ties
/// occur; some verbs lack embeddings.
inline MetricInstance random_metric_instance(Rng& rng) {
    MetricInstance m;
    const std::size_t nc = 1 + rng.index(20), nl = 1 + rng.index(10);
    for (std::size_t v = 0; v < 4; ++v) m.verbs.push_back("verb" + std::to_string(v));
    for (std::size_t n = 0; n < 4; ++n) m.nouns.push_back("noun" + std::to_string(n));
    for (std::size_t v = 0; v < 3; ++v) {
        std::vector<double> e(4);
        for (auto& x : e) x = rng.normal();
        m.embeddings.add(ConceptId(m.verbs[v]), e);
    }
    for (std::size_t c = 0; c < nc; ++c) {
        const auto id = "clip" + std::to_string(c);
        m.clips.push_back(id);
        m.truth[id] = {m.verbs[rng.index(4)], m.nouns[rng.index(4)]};
        m.pred[id] = {m.verbs[rng.index(4)], m.nouns[rng.index(4)]};
        if (c == 0) m.truth[id].first = m.pred[id].first = m.verbs[0];  // at least one scorable clip
        for (std::size_t l = 0; l < nl; ++l) {
            const auto label = "L" + std::to_string(l);
            m.scores[id][label] = static_cast<double>(rng.index(6)) / 5.0;
            if (rng.uniform() < 0.3) m.positives[id].insert(label);
        }
    }
    m.positives[m.clips[rng.index(nc)]].insert("L0");
    return m;
}

inline double oracle_accuracy(const MetricInstance& m, bool verbs) {
    double hit = 0;
    for (const auto& c : m.clips) {
        const auto& t = m.truth.at(c);
        const auto& p = m.pred.at(c);
        hit += verbs ? t.first == p.first : t.second == p.second;
    }
    return hit / static_cast<double>(m.clips.size());
}

inline double oracle_word_accuracy(const MetricInstance& m) {
    // Pooled over all words; equal to the per-clip mean with two words per clip.
    double words = 0, hit = 0;
    for (const auto& c : m.clips) {
        const auto& t = m.truth.at(c);
        const auto& p = m.pred.at(c);
        words += 2;
        hit += (t.first == p.first) + (t.second == p.second);
    }
    return hit / words;
}

inline double oracle_nbws(const MetricInstance& m) {
    double total = 0;
    int n = 0;
    for (const auto& c : m.clips) {
        const auto a = m.embeddings.find(ConceptId(m.pred.at(c).first));
        const auto b = m.embeddings.find(ConceptId(m.truth.at(c).first));
        if (!a || !b) continue;
        double ab = 0, aa = 0, bb = 0;
        for (std::size_t i = 0; i < a->size(); ++i) {
            ab += (*a)[i] * (*b)[i];
            aa += (*a)[i] * (*a)[i];
            bb += (*b)[i] * (*b)[i];
        }
        total += ab / std::sqrt(aa * bb);
        ++n;
    }
    return total / n;
}

/// AP from pairwise rank counting: rank(c) = 1 + #clips ordered before c
/// (higher score, or equal score and smaller id).
inline double oracle_ap(const MetricInstance& m, const std::string& label) {
    auto before = [&](const std::string& x, const std::string& y) {
        const double sx = m.scores.at(x).at(label), sy = m.scores.at(y).at(label);
        return sx > sy || (sx == sy && x < y);
    };
    auto positive = [&](const std::string& c) {
        const auto it = m.positives.find(c);
        return it != m.positives.end() && it->second.count(label) > 0;
    };
    double sum = 0;
    int npos = 0;
    for (const auto& c : m.clips) {
        if (!positive(c)) continue;
        ++npos;
        int rank = 1, pos_at_or_above = 1;
        for (const auto& d : m.clips)
            if (d != c && before(d, c)) {
                ++rank;
                pos_at_or_above += positive(d);
            }
        sum += static_cast<double>(pos_at_or_above) / rank;
    }
    return npos ? sum / npos : -1.0;
}

inline double oracle_map(const MetricInstance& m) {
    double total = 0;
    int n = 0;
    for (const auto& [label, _] : m.scores.begin()->second) {
        const double ap = oracle_ap(m, label);
        if (ap < 0) continue;
        total += ap;
        ++n;
    }
    return total / n;
}

} // namespace openact::testing
