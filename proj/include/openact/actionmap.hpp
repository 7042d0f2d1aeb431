#pragma once
// Visual-semantic action grounding: temporal smoothing of frame-level
// interpretations into clip targets, and a linear map from clip features to
// the concept embedding space trained with squared error.

#include "openact/common.hpp"
#include "openact/inference.hpp"

#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <unordered_map>

namespace openact {

inline constexpr std::size_t default_embedding_dim = 300;

// ---------------------------------------------------------------------------
// Vector helpers
// ---------------------------------------------------------------------------

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// Cosine similarity; 0 if either vector has zero norm.
inline double cosine(std::span<const double> a, std::span<const double> b) {
    const double na = norm(a), nb = norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Embeddings and features
// ---------------------------------------------------------------------------

class EmbeddingTable {
public:
    explicit EmbeddingTable(std::size_t dim = default_embedding_dim) : dim_(dim) {}

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return names_.size(); }

    /// Throws on dimension mismatch, zero vectors or duplicates.
    void add(const ConceptId& c, std::span<const double> v) {
        if (v.size() != dim_)
            throw DataError("embedding for '" + c.str() + "' has " + std::to_string(v.size()) + " values, expected " +
                            std::to_string(dim_));
        if (norm(v) == 0.0) throw DataError("embedding for '" + c.str() + "' is the zero vector");
        if (!index_.emplace(c, names_.size()).second) throw DataError("duplicate embedding for '" + c.str() + "'");
        names_.push_back(c);
        data_.insert(data_.end(), v.begin(), v.end());
    }

    bool contains(const ConceptId& c) const { return index_.count(c) != 0; }

    std::optional<std::span<const double>> find(const ConceptId& c) const {
        const auto it = index_.find(c);
        if (it == index_.end()) return std::nullopt;
        return std::span<const double>(data_).subspan(it->second * dim_, dim_);
    }

    std::span<const double> at(const ConceptId& c) const {
        const auto v = find(c);
        if (!v) throw DataError("no embedding for concept '" + c.str() + "'");
        return *v;
    }

    const std::vector<ConceptId>& concepts() const noexcept { return names_; }

private:
    std::size_t dim_;
    std::vector<ConceptId> names_;
    std::unordered_map<ConceptId, std::size_t> index_;
    std::vector<double> data_;
};

/// `concept v1 ... vN` per line (space separated). A leading `count dim`
/// header line, as written by word2vec-style tools, is skipped.
inline EmbeddingTable load_embeddings(std::istream& in, std::size_t expected_dim = default_embedding_dim,
                                      const std::string& source = "<embeddings>") {
    EmbeddingTable t(expected_dim);
    std::string line;
    std::size_t row = 0;
    std::vector<double> v;
    while (std::getline(in, line)) {
        ++row;
        strip_cr(line);
        const auto f = split_ws(line);
        if (f.empty()) continue;
        if (row == 1 && f.size() == 2 && parse_double(f[0]) && parse_double(f[1])) continue;
        if (f.size() != expected_dim + 1)
            throw LoadError(source, row,
                            "expected concept + " + std::to_string(expected_dim) + " values, got " +
                                std::to_string(f.size() - 1) + " values");
        v.clear();
        for (std::size_t i = 1; i < f.size(); ++i) {
            const auto x = parse_double(f[i]);
            if (!x || !std::isfinite(*x)) throw LoadError(source, row, "bad value '" + std::string(f[i]) + "'");
            v.push_back(*x);
        }
        try {
            t.add(ConceptId(f[0]), v);
        } catch (const DataError& e) {
            throw LoadError(source, row, e.what());
        }
    }
    return t;
}

struct ClipFeature {
    ClipId clip;
    std::vector<double> vector;
};

/// CSV `clip_id,v1,...,vD`; an optional header row starting with `clip_id`.
inline std::map<ClipId, ClipFeature> load_features(std::istream& in, const std::string& source = "<features>") {
    std::map<ClipId, ClipFeature> out;
    std::string line;
    std::size_t row = 0;
    std::optional<std::size_t> dim;
    while (std::getline(in, line)) {
        ++row;
        strip_cr(line);
        if (trim(line).empty()) continue;
        const auto f = split(line, ',');
        if (trim(f[0]) == "clip_id") continue;
        if (f.size() < 2) throw LoadError(source, row, "feature row has no values");
        if (dim && f.size() - 1 != *dim)
            throw LoadError(source, row,
                            "feature dimension " + std::to_string(f.size() - 1) + " differs from " +
                                std::to_string(*dim));
        dim = f.size() - 1;
        ClipFeature cf{ClipId(trim(f[0])), {}};
        for (std::size_t i = 1; i < f.size(); ++i) {
            const auto x = parse_double(f[i]);
            if (!x || !std::isfinite(*x)) throw LoadError(source, row, "bad value '" + std::string(f[i]) + "'");
            cf.vector.push_back(*x);
        }
        if (cf.clip.empty()) throw LoadError(source, row, "empty clip id");
        auto key = cf.clip;
        if (!out.emplace(std::move(key), std::move(cf)).second)
            throw LoadError(source, row, "duplicate clip '" + std::string(trim(f[0])) + "'");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Temporal smoothing
// ---------------------------------------------------------------------------

struct ActionTarget {
    ConceptId action;
    double energy;          // consolidated (summed) energy
    std::size_t frequency;  // number of frames where the action was kept
};

struct ClipActionTargets {
    ClipId clip;
    std::vector<ActionTarget> top_actions;
};

struct SmoothingParams {
    std::size_t top_m = 10;        // interpretations considered per frame
    std::size_t per_frame_a = 5;   // actions kept per frame
    std::size_t top_actions = 5;   // clip-level targets
    std::size_t top_activities = 10;
};

namespace detail {
struct Tally {
    std::size_t count = 0;
    double energy = 0.0;
};

template <class Key>
std::vector<std::pair<Key, Tally>> rank_tallies(const std::map<Key, Tally>& m) {
    std::vector<std::pair<Key, Tally>> v(m.begin(), m.end());
    std::stable_sort(v.begin(), v.end(), [](const auto& x, const auto& y) {
        if (x.second.count != y.second.count) return x.second.count > y.second.count;
        if (x.second.energy != y.second.energy) return x.second.energy < y.second.energy;
        return x.first < y.first;
    });
    return v;
}
} // namespace detail

/// Per frame: count actions among the top_m interpretations, sum their
/// energies, keep the per_frame_a most frequent (ties: lower summed energy,
/// then name). Across frames: rank by number of frames an action was kept in,
/// ties by lower total energy, then name.
inline ClipActionTargets temporal_smooth(const ClipId& clip,
                                         std::span<const std::vector<Interpretation>> frame_interps,
                                         const SmoothingParams& p = {}) {
    if (frame_interps.empty()) throw DataError("temporal smoothing of clip '" + clip + "' with no frames");
    std::map<ConceptId, detail::Tally> clip_tally;
    for (const auto& frame : frame_interps) {
        if (frame.empty()) throw DataError("clip '" + clip + "' has a frame without interpretations");
        std::map<ConceptId, detail::Tally> f;
        const std::size_t m = std::min(p.top_m, frame.size());
        for (std::size_t i = 0; i < m; ++i) {
            auto& t = f[frame[i].action];
            ++t.count;
            t.energy += frame[i].energy;
        }
        auto ranked = detail::rank_tallies(f);
        if (ranked.size() > p.per_frame_a) ranked.resize(p.per_frame_a);
        for (const auto& [action, t] : ranked) {
            auto& c = clip_tally[action];
            ++c.count;
            c.energy += t.energy;
        }
    }
    ClipActionTargets out{clip, {}};
    for (const auto& [action, t] : detail::rank_tallies(clip_tally)) {
        if (out.top_actions.size() == p.top_actions) break;
        out.top_actions.push_back({action, t.energy, t.count});
    }
    return out;
}

struct ClipActivity {
    ConceptId action;
    ConceptId object;
    double energy;          // summed over frames
    std::size_t frequency;  // frames with the pair among their top_m
};

/// Clip-level activity ranking: each (action, object) pair counts once per
/// frame it appears in among the top_m; ranked by frame count, then summed
/// energy, then (action, object).
inline std::vector<ClipActivity> smooth_activities(std::span<const std::vector<Interpretation>> frame_interps,
                                                   const SmoothingParams& p = {}) {
    if (frame_interps.empty()) throw DataError("activity smoothing with no frames");
    std::map<std::pair<ConceptId, ConceptId>, detail::Tally> tally;
    for (const auto& frame : frame_interps) {
        const std::size_t m = std::min(p.top_m, frame.size());
        std::set<std::pair<ConceptId, ConceptId>> seen;
        for (std::size_t i = 0; i < m; ++i) {
            auto key = std::make_pair(frame[i].action, frame[i].object);
            if (!seen.insert(key).second) continue;
            auto& t = tally[key];
            ++t.count;
            t.energy += frame[i].energy;
        }
    }
    std::vector<ClipActivity> out;
    for (const auto& [key, t] : detail::rank_tallies(tally)) {
        if (out.size() == p.top_activities) break;
        out.push_back({key.first, key.second, t.energy, t.count});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Linear map
// ---------------------------------------------------------------------------

/// y = x·W + b with W stored row-major as in_dim × out_dim.
struct LinearMap {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    std::vector<double> weights;
    std::vector<double> bias;

    LinearMap() = default;
    LinearMap(std::size_t in, std::size_t out) : in_dim(in), out_dim(out), weights(in * out, 0.0), bias(out, 0.0) {}

    double& w(std::size_t i, std::size_t j) { return weights[i * out_dim + j]; }
    double w(std::size_t i, std::size_t j) const { return weights[i * out_dim + j]; }

    std::vector<double> project(std::span<const double> x) const {
        if (x.size() != in_dim)
            throw DataError("feature dimension " + std::to_string(x.size()) + " does not match map input " +
                            std::to_string(in_dim));
        std::vector<double> y(bias);
        for (std::size_t i = 0; i < in_dim; ++i) {
            const double xi = x[i];
            if (xi == 0.0) continue;
            const double* row = &weights[i * out_dim];
            for (std::size_t j = 0; j < out_dim; ++j) y[j] += xi * row[j];
        }
        return y;
    }

    /// Uniform in [-1/sqrt(in), 1/sqrt(in)], zero bias.
    static LinearMap initialize(std::size_t in, std::size_t out, std::uint64_t seed) {
        LinearMap m(in, out);
        Rng rng(seed);
        const double r = 1.0 / std::sqrt(static_cast<double>(in));
        for (auto& x : m.weights) x = rng.uniform(-r, r);
        return m;
    }

    friend bool operator==(const LinearMap&, const LinearMap&) = default;
};

/// Text format: `in out` header, `in` rows of `out` weights, one bias row.
inline void write_map(std::ostream& os, const LinearMap& m) {
    os << m.in_dim << ' ' << m.out_dim << '\n';
    for (std::size_t i = 0; i < m.in_dim; ++i) {
        for (std::size_t j = 0; j < m.out_dim; ++j) os << (j ? " " : "") << format_double(m.w(i, j));
        os << '\n';
    }
    for (std::size_t j = 0; j < m.out_dim; ++j) os << (j ? " " : "") << format_double(m.bias[j]);
    os << '\n';
}

inline LinearMap read_map(std::istream& is, const std::string& source = "<map>") {
    std::string line;
    std::size_t row = 0;
    auto next_fields = [&]() {
        while (std::getline(is, line)) {
            ++row;
            strip_cr(line);
            auto f = split_ws(line);
            if (!f.empty()) return f;
        }
        throw LoadError(source, row, "unexpected end of file");
    };
    auto header = next_fields();
    if (header.size() != 2) throw LoadError(source, row, "expected header 'D E'");
    const auto d = parse_double(header[0]), e = parse_double(header[1]);
    if (!d || !e || *d < 1 || *e < 1) throw LoadError(source, row, "bad map dimensions");
    LinearMap m(static_cast<std::size_t>(*d), static_cast<std::size_t>(*e));
    auto read_row = [&](double* dst) {
        auto f = next_fields();
        if (f.size() != m.out_dim)
            throw LoadError(source, row, "expected " + std::to_string(m.out_dim) + " values");
        for (std::size_t j = 0; j < f.size(); ++j) {
            const auto x = parse_double(f[j]);
            if (!x) throw LoadError(source, row, "bad value '" + std::string(f[j]) + "'");
            dst[j] = *x;
        }
    };
    for (std::size_t i = 0; i < m.in_dim; ++i) read_row(&m.weights[i * m.out_dim]);
    read_row(m.bias.data());
    return m;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct Sample {
    ClipId clip;
    ConceptId action;
    std::vector<double> feature;
    std::vector<double> target;
};

/// One sample per (clip, target action); clips without a feature and actions
/// without an embedding are dropped with a warning.
inline std::vector<Sample> make_training_set(std::span<const ClipActionTargets> targets,
                                             const std::map<ClipId, ClipFeature>& feats, const EmbeddingTable& emb) {
    std::vector<Sample> out;
    for (const auto& t : targets) {
        const auto f = feats.find(t.clip);
        if (f == feats.end()) {
            log::warn("clip '" + t.clip + "' has no feature vector; its targets are dropped");
            continue;
        }
        for (const auto& a : t.top_actions) {
            const auto e = emb.find(a.action);
            if (!e) {
                log::warn("target action '" + a.action.str() + "' has no embedding; sample dropped");
                continue;
            }
            out.push_back({t.clip, a.action, f->second.vector, {e->begin(), e->end()}});
        }
    }
    if (out.empty()) throw DataError("training set is empty");
    return out;
}

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 256;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    bool train_weights = true;  // false freezes W and fits only the bias

    void validate() const {
        if (epochs < 1) throw UsageError("epochs must be positive");
        if (batch_size < 1) throw UsageError("batch_size must be positive");
        if (!(learning_rate >= 0.0)) throw UsageError("learning_rate must be non-negative");
    }
};

struct MapGradient {
    std::vector<double> weights;
    std::vector<double> bias;
};

/// Mean over samples and output dimensions of the squared error.
inline double mse(const LinearMap& m, std::span<const Sample> samples) {
    if (samples.empty()) return 0.0;
    double s = 0.0;
    for (const auto& smp : samples) {
        const auto y = m.project(smp.feature);
        for (std::size_t j = 0; j < m.out_dim; ++j) {
            const double d = y[j] - smp.target[j];
            s += d * d;
        }
    }
    return s / (static_cast<double>(samples.size()) * static_cast<double>(m.out_dim));
}

/// Gradient of the summed squared error Σ_n Σ_j (ŷ_nj - y_nj)² over `batch`,
/// optionally restricted to the sample indices in `idx`.
inline MapGradient sse_gradient(const LinearMap& m, std::span<const Sample> samples,
                                std::span<const std::size_t> idx = {}) {
    MapGradient g{std::vector<double>(m.weights.size(), 0.0), std::vector<double>(m.out_dim, 0.0)};
    std::vector<double> r(m.out_dim);
    auto accumulate = [&](const Sample& s) {
        const auto y = m.project(s.feature);
        for (std::size_t j = 0; j < m.out_dim; ++j) {
            r[j] = 2.0 * (y[j] - s.target[j]);
            g.bias[j] += r[j];
        }
        for (std::size_t i = 0; i < m.in_dim; ++i) {
            const double xi = s.feature[i];
            if (xi == 0.0) continue;
            double* row = &g.weights[i * m.out_dim];
            for (std::size_t j = 0; j < m.out_dim; ++j) row[j] += xi * r[j];
        }
    };
    if (idx.empty())
        for (const auto& s : samples) accumulate(s);
    else
        for (auto i : idx) accumulate(samples[i]);
    return g;
}

/// Gradient of mse(): the summed-error gradient scaled by 1/(N·out_dim).
inline MapGradient mse_gradient(const LinearMap& m, std::span<const Sample> samples) {
    auto g = sse_gradient(m, samples);
    const double scale = 1.0 / (static_cast<double>(samples.size()) * static_cast<double>(m.out_dim));
    for (auto& x : g.weights) x *= scale;
    for (auto& x : g.bias) x *= scale;
    return g;
}

struct EpochReport {
    std::size_t epoch;  // 1-based
    double train_mse;
    std::optional<double> heldout_mse;
};

struct TrainResult {
    LinearMap map;               // map of the selected epoch
    std::size_t best_epoch = 0;  // 1-based
    std::vector<EpochReport> epochs;

    const EpochReport& best() const { return epochs.at(best_epoch - 1); }
};

class TrainingDiverged : public DataError {
public:
    using DataError::DataError;
};

/// Mini-batch gradient descent. Each step moves against the gradient of the
/// batch's summed squared error; samples are reshuffled every epoch from the
/// seeded stream. The returned map is the epoch with the lowest held-out MSE
/// (the last epoch when `heldout` is empty).
inline TrainResult train_map(std::span<const Sample> samples, const TrainConfig& cfg,
                             std::span<const Sample> heldout = {}, std::optional<LinearMap> init = std::nullopt) {
    cfg.validate();
    if (samples.empty()) throw DataError("training set is empty");
    const std::size_t in = samples.front().feature.size();
    const std::size_t out = samples.front().target.size();
    for (const auto* set : {&samples, &heldout})
        for (const auto& s : *set)
            if (s.feature.size() != in || s.target.size() != out)
                throw DataError("inconsistent sample dimensions (clip '" + s.clip + "')");

    LinearMap m = init ? std::move(*init) : LinearMap::initialize(in, out, derive_seed(cfg.seed, "init"));
    if (m.in_dim != in || m.out_dim != out) throw DataError("initial map dimensions do not match samples");

    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainResult res;
    std::optional<double> best_score;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const auto g = sse_gradient(m, samples, std::span<const std::size_t>(order).subspan(start, end - start));
            if (cfg.train_weights)
                for (std::size_t i = 0; i < m.weights.size(); ++i) m.weights[i] -= cfg.learning_rate * g.weights[i];
            for (std::size_t j = 0; j < m.out_dim; ++j) m.bias[j] -= cfg.learning_rate * g.bias[j];
        }
        EpochReport rep{epoch, mse(m, samples), std::nullopt};
        if (!heldout.empty()) rep.heldout_mse = mse(m, heldout);
        if (!std::isfinite(rep.train_mse) || (rep.heldout_mse && !std::isfinite(*rep.heldout_mse)))
            throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + " (train MSE " +
                                   format_double(rep.train_mse) + ", learning rate " +
                                   format_double(cfg.learning_rate) + "); lower the learning rate");
        res.epochs.push_back(rep);
        const bool use = heldout.empty() || !best_score || *rep.heldout_mse < *best_score;
        if (use) {
            if (!heldout.empty()) best_score = rep.heldout_mse;
            res.best_epoch = epoch;
            res.map = m;
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Prediction and similarity
// ---------------------------------------------------------------------------

/// Temperature softmax over cosine(ψ(feature), embedding(action)); aligned
/// with `actions`. A zero projected vector yields the uniform distribution.
inline std::vector<double> predict_actions(const LinearMap& m, std::span<const double> feature,
                                           std::span<const ConceptId> actions, const EmbeddingTable& emb,
                                           double temperature = 0.1) {
    if (!(temperature > 0.0)) throw UsageError("temperature must be positive");
    if (actions.empty()) return {};
    const auto y = m.project(feature);
    std::vector<double> p(actions.size(), 1.0 / static_cast<double>(actions.size()));
    if (norm(y) == 0.0) {
        log::warn("projected feature has zero norm; using uniform action probabilities");
        return p;
    }
    std::vector<double> z(actions.size());
    for (std::size_t i = 0; i < actions.size(); ++i) z[i] = cosine(y, emb.at(actions[i])) / temperature;
    const double zmax = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) total += (p[i] = std::exp(z[i] - zmax));
    for (auto& x : p) x = std::max(x / total, std::numeric_limits<double>::min());
    return p;
}

inline double word_similarity(const ConceptId& a, const ConceptId& b, const EmbeddingTable& emb) {
    return cosine(emb.at(a), emb.at(b));
}

} // namespace openact
