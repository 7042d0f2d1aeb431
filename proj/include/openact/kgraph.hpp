#pragma once
// Commonsense knowledge graph: loading, ego-graphs, bounded simple-path
// enumeration and action-object affinity.
//
// The graph is immutable after construction. Concepts are interned in
// lexicographic order so node indices compare the same way names do; edges
// are stored once, sorted by (head, relation, tail), and indexed from both
// endpoints so every query can treat them as undirected.

#include "openact/common.hpp"

#include <cmath>
#include <istream>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace openact {

// ---------------------------------------------------------------------------
// Relations
// ---------------------------------------------------------------------------

struct RelationKind {
    std::string name;
    bool compositional_for_egograph = false;
    bool compositional_for_affinity = false;
};

using RelationIndex = std::uint16_t;

/// ConceptNet 5 relation names plus `SynonymOf`. Only IsA, UsedFor,
/// HasProperty and SynonymOf qualify for ego-graphs; only UsedFor,
/// HasProperty and IsA qualify a path for affinity.
inline const std::vector<RelationKind>& relation_registry() {
    static const std::vector<RelationKind> registry = [] {
        std::vector<RelationKind> r = {
            {"IsA", true, true},
            {"UsedFor", true, true},
            {"HasProperty", true, true},
            {"SynonymOf", true, false},
        };
        for (const char* name :
             {"RelatedTo", "PartOf", "HasA", "CapableOf", "AtLocation", "Causes", "HasSubevent",
              "HasFirstSubevent", "HasLastSubevent", "HasPrerequisite", "MotivatedByGoal",
              "ObstructedBy", "Desires", "CreatedBy", "Synonym", "Antonym", "DistinctFrom",
              "DerivedFrom", "SymbolOf", "DefinedAs", "MannerOf", "LocatedNear", "HasContext",
              "SimilarTo", "EtymologicallyRelatedTo", "EtymologicallyDerivedFrom", "CausesDesire",
              "MadeOf", "ReceivesAction", "ExternalURL", "FormOf", "InstanceOf", "Entails",
              "NotDesires", "NotUsedFor", "NotCapableOf", "NotHasProperty"}) {
            r.push_back({name, false, false});
        }
        return r;
    }();
    return registry;
}

inline std::optional<RelationIndex> find_relation(std::string_view name) {
    const auto& reg = relation_registry();
    for (std::size_t i = 0; i < reg.size(); ++i) {
        if (reg[i].name == name) return static_cast<RelationIndex>(i);
    }
    return std::nullopt;
}

inline const RelationKind& relation_kind(RelationIndex r) { return relation_registry().at(r); }

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

using NodeIndex = std::uint32_t;
using EdgeIndex = std::uint32_t;

/// One assertion as read from a source, before interning.
struct EdgeRecord {
    ConceptId head;
    std::string relation;
    ConceptId tail;
    double weight = 1.0;
};

struct Edge {
    NodeIndex head;
    RelationIndex relation;
    NodeIndex tail;
    double weight;
};

/// Adjacency entry seen from one endpoint.
struct Incidence {
    NodeIndex other;
    EdgeIndex edge;
    bool outgoing;  // true when the viewing node is the edge's head
};

class KnowledgeGraph {
public:
    KnowledgeGraph() = default;

    /// Builds the graph; duplicate (head, relation, tail) triples keep the
    /// maximum weight. Throws DataError on unknown relations or bad weights.
    static KnowledgeGraph from_records(std::span<const EdgeRecord> records) {
        std::map<std::tuple<std::string, RelationIndex, std::string>, double> merged;
        std::vector<std::string> names;
        for (const auto& rec : records) {
            const auto rel = find_relation(rec.relation);
            if (!rel) throw DataError("unknown relation '" + rec.relation + "'");
            if (!(rec.weight > 0.0) || !std::isfinite(rec.weight))
                throw DataError("edge weight must be a positive finite number");
            auto key = std::make_tuple(rec.head.str(), *rel, rec.tail.str());
            auto [it, inserted] = merged.emplace(std::move(key), rec.weight);
            if (!inserted) it->second = std::max(it->second, rec.weight);
            names.push_back(rec.head.str());
            names.push_back(rec.tail.str());
        }
        std::sort(names.begin(), names.end());
        names.erase(std::unique(names.begin(), names.end()), names.end());

        KnowledgeGraph g;
        g.nodes_.reserve(names.size());
        for (auto& n : names) {
            g.index_.emplace(n, static_cast<NodeIndex>(g.nodes_.size()));
            g.nodes_.emplace_back(n);
        }
        // Map iteration order sorts edges by (head name, relation index, tail name).
        g.edges_.reserve(merged.size());
        for (const auto& [key, w] : merged) {
            const auto& [h, r, t] = key;
            g.edges_.push_back({g.index_.at(h), r, g.index_.at(t), w});
        }
        g.build_adjacency();
        return g;
    }

    std::size_t node_count() const noexcept { return nodes_.size(); }
    std::size_t edge_count() const noexcept { return edges_.size(); }

    bool contains(const ConceptId& c) const { return index_.count(c.str()) != 0; }

    std::optional<NodeIndex> find(const ConceptId& c) const {
        const auto it = index_.find(c.str());
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    NodeIndex require(const ConceptId& c) const {
        const auto n = find(c);
        if (!n) throw DataError("concept '" + c.str() + "' is not in the knowledge graph");
        return *n;
    }

    const ConceptId& concept_at(NodeIndex n) const { return nodes_.at(n); }
    std::span<const ConceptId> nodes() const noexcept { return nodes_; }
    std::span<const Edge> edges() const noexcept { return edges_; }
    const Edge& edge(EdgeIndex e) const { return edges_.at(e); }

    /// Incident edges of `n`, sorted by (other endpoint, edge index).
    std::span<const Incidence> incident(NodeIndex n) const {
        return std::span<const Incidence>(incidences_).subspan(offsets_[n], offsets_[n + 1] - offsets_[n]);
    }

    std::vector<EdgeRecord> records() const {
        std::vector<EdgeRecord> out;
        out.reserve(edges_.size());
        for (const auto& e : edges_)
            out.push_back({nodes_[e.head], relation_kind(e.relation).name, nodes_[e.tail], e.weight});
        return out;
    }

private:
    void build_adjacency() {
        std::vector<std::vector<Incidence>> adj(nodes_.size());
        for (EdgeIndex i = 0; i < edges_.size(); ++i) {
            const auto& e = edges_[i];
            if (e.head == e.tail) continue;  // self-loops never lie on a simple path
            adj[e.head].push_back({e.tail, i, true});
            adj[e.tail].push_back({e.head, i, false});
        }
        offsets_.assign(nodes_.size() + 1, 0);
        incidences_.clear();
        for (std::size_t n = 0; n < adj.size(); ++n) {
            std::sort(adj[n].begin(), adj[n].end(), [](const Incidence& a, const Incidence& b) {
                return std::tie(a.other, a.edge) < std::tie(b.other, b.edge);
            });
            incidences_.insert(incidences_.end(), adj[n].begin(), adj[n].end());
            offsets_[n + 1] = incidences_.size();
        }
    }

    std::vector<ConceptId> nodes_;
    std::unordered_map<std::string, NodeIndex> index_;
    std::vector<Edge> edges_;
    std::vector<std::size_t> offsets_{0};
    std::vector<Incidence> incidences_;
};

/// Reads `head<TAB>relation<TAB>tail<TAB>weight` lines; `#` lines and blank
/// lines are skipped.
inline KnowledgeGraph load_graph(std::istream& in, const std::string& source = "<graph>") {
    std::vector<EdgeRecord> recs;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        strip_cr(line);
        if (trim(line).empty() || line.front() == '#') continue;
        const auto fields = split(line, '\t');
        if (fields.size() != 4)
            throw LoadError(source, row, "expected 4 tab-separated fields, got " + std::to_string(fields.size()));
        const auto rel = trim(fields[1]);
        if (!find_relation(rel)) throw LoadError(source, row, "unknown relation '" + std::string(rel) + "'");
        const auto w = parse_double(fields[3]);
        if (!w) throw LoadError(source, row, "weight '" + std::string(fields[3]) + "' is not a number");
        if (!(*w > 0.0) || !std::isfinite(*w))
            throw LoadError(source, row, "weight must be positive, got " + std::string(trim(fields[3])));
        try {
            recs.push_back({ConceptId(fields[0]), std::string(rel), ConceptId(fields[2]), *w});
        } catch (const DataError& e) {
            throw LoadError(source, row, e.what());
        }
    }
    return KnowledgeGraph::from_records(recs);
}

// ---------------------------------------------------------------------------
// Ego-graphs
// ---------------------------------------------------------------------------

struct EgoNeighbor {
    ConceptId evidence;
    RelationIndex relation;
    double weight;
    bool outgoing;  // center is the edge's head

    const std::string& relation_name() const { return relation_kind(relation).name; }
};

struct EgoGraph {
    ConceptId center;
    std::vector<EgoNeighbor> neighbors;
};

/// 1-hop neighbourhood of `center` over edges in either direction whose
/// relation is ego-graph compositional.
inline EgoGraph ego_graph(const KnowledgeGraph& g, const ConceptId& center) {
    const NodeIndex c = g.require(center);
    EgoGraph ego{center, {}};
    for (const auto& inc : g.incident(c)) {
        const auto& e = g.edge(inc.edge);
        if (!relation_kind(e.relation).compositional_for_egograph) continue;
        ego.neighbors.push_back({g.concept_at(inc.other), e.relation, e.weight, inc.outgoing});
    }
    return ego;
}

// ---------------------------------------------------------------------------
// Paths
// ---------------------------------------------------------------------------

struct KPath {
    std::vector<NodeIndex> nodes;  // nodes.front() = source, nodes.back() = target
    std::vector<EdgeIndex> edges;  // edges[k] joins nodes[k] and nodes[k+1]

    std::size_t hop_count() const noexcept { return edges.size(); }
};

/// Visits every simple undirected path from `from` to `to` of at most
/// `max_hops` edges, in depth-first order over sorted adjacency. Parallel
/// edges between the same pair of nodes yield distinct paths.
template <class Visitor>
void for_each_path(const KnowledgeGraph& g, NodeIndex from, NodeIndex to, std::size_t max_hops, Visitor&& visit) {
    if (from == to || max_hops == 0) return;
    std::vector<char> on_path(g.node_count(), 0);
    std::vector<NodeIndex> nodes{from};
    std::vector<EdgeIndex> edges;
    on_path[from] = 1;

    auto dfs = [&](auto&& self, NodeIndex at) -> void {
        for (const auto& inc : g.incident(at)) {
            if (on_path[inc.other]) continue;
            nodes.push_back(inc.other);
            edges.push_back(inc.edge);
            if (inc.other == to) {
                visit(std::span<const NodeIndex>(nodes), std::span<const EdgeIndex>(edges));
            } else if (edges.size() < max_hops) {
                on_path[inc.other] = 1;
                self(self, inc.other);
                on_path[inc.other] = 0;
            }
            nodes.pop_back();
            edges.pop_back();
        }
    };
    dfs(dfs, from);
}

/// All simple paths, ordered by hop count, then node sequence, then edge
/// sequence.
inline std::vector<KPath> enumerate_paths(const KnowledgeGraph& g, const ConceptId& from, const ConceptId& to,
                                          std::size_t max_hops) {
    if (max_hops < 1) throw UsageError("max_hops must be at least 1");
    const NodeIndex a = g.require(from);
    const NodeIndex b = g.require(to);
    std::vector<KPath> out;
    for_each_path(g, a, b, max_hops, [&](std::span<const NodeIndex> n, std::span<const EdgeIndex> e) {
        out.push_back({{n.begin(), n.end()}, {e.begin(), e.end()}});
    });
    std::stable_sort(out.begin(), out.end(), [](const KPath& x, const KPath& y) {
        if (x.hop_count() != y.hop_count()) return x.hop_count() < y.hop_count();
        return std::tie(x.nodes, x.edges) < std::tie(y.nodes, y.edges);
    });
    return out;
}

// ---------------------------------------------------------------------------
// Affinity
// ---------------------------------------------------------------------------

struct AffinityParams {
    double decay_lambda = 1.0;
    std::size_t max_hops = 3;

    void validate() const {
        if (!(decay_lambda > 0.0)) throw UsageError("decay_lambda must be positive");
        if (max_hops < 1) throw UsageError("max_hops must be at least 1");
    }
};

/// True when at least one edge carries an affinity-compositional relation.
inline bool path_qualifies(const KnowledgeGraph& g, std::span<const EdgeIndex> edges) {
    return std::any_of(edges.begin(), edges.end(), [&](EdgeIndex e) {
        return relation_kind(g.edge(e).relation).compositional_for_affinity;
    });
}

/// Σ_k exp(-λ·k)·weight_k with k the 1-based hop index from the action end.
inline double path_score(const KnowledgeGraph& g, std::span<const EdgeIndex> edges, double decay_lambda) {
    double s = 0.0;
    for (std::size_t k = 0; k < edges.size(); ++k)
        s += std::exp(-decay_lambda * static_cast<double>(k + 1)) * g.edge(edges[k]).weight;
    return s;
}

struct AffinityResult {
    double score = 0.0;
    std::optional<KPath> best_path;  // first path (in traversal order) attaining the max
};

inline AffinityResult best_affinity(const KnowledgeGraph& g, const ConceptId& action, const ConceptId& object,
                                    const AffinityParams& params = {}) {
    params.validate();
    const NodeIndex a = g.require(action);
    const NodeIndex o = g.require(object);
    AffinityResult res;
    for_each_path(g, a, o, params.max_hops, [&](std::span<const NodeIndex> n, std::span<const EdgeIndex> e) {
        if (!path_qualifies(g, e)) return;
        const double s = path_score(g, e, params.decay_lambda);
        if (!res.best_path || s > res.score) {
            res.score = s;
            res.best_path = KPath{{n.begin(), n.end()}, {e.begin(), e.end()}};
        }
    });
    return res;
}

/// Max over qualifying action→object paths of the decayed weight sum; 0 when
/// no path qualifies (including action == object).
inline double affinity(const KnowledgeGraph& g, const ConceptId& action, const ConceptId& object,
                       const AffinityParams& params = {}) {
    return best_affinity(g, action, object, params).score;
}

} // namespace openact
