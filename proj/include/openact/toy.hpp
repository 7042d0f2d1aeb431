#pragma once
// Bundled synthetic dataset: five kitchen objects, four actions, twenty clips
// of five frames. Each clip shows one (action, object) activity; the correct
// object gets likelihood 0.95, distractors at most 0.05, and the correct
// action has the dominant knowledge-graph affinity for its object. Clip
// features cluster by action.

#include "openact/common.hpp"

#include <map>
#include <sstream>

namespace openact::toy {

struct ToyActivity {
    const char* verb;
    const char* noun;
};

inline constexpr ToyActivity activities[] = {
    {"cut", "tomato"}, {"cut", "bread"}, {"spread", "butter"}, {"pour", "cup"}, {"open", "jar"}};

inline constexpr const char* objects[] = {"bread", "butter", "cup", "jar", "tomato"};
inline constexpr const char* actions[] = {"cut", "open", "pour", "spread"};
inline constexpr const char* unseen_actions[] = {"open"};

struct ToyEdge {
    const char* head;
    const char* relation;
    const char* tail;
    double weight;
};

inline constexpr ToyEdge edges[] = {
    // grounding evidence
    {"tomato", "HasProperty", "red", 1.0},
    {"tomato", "IsA", "vegetable", 0.8},
    {"bread", "HasProperty", "crust", 1.0},
    {"bread", "IsA", "baked_good", 0.8},
    {"butter", "HasProperty", "creamy", 1.0},
    {"butter", "IsA", "dairy", 0.8},
    {"cup", "HasProperty", "handle", 1.0},
    {"cup", "IsA", "drinkware", 0.8},
    {"jar", "HasProperty", "screw_top", 1.0},
    {"jar", "IsA", "glassware", 0.8},
    // affordances through tools
    {"knife", "UsedFor", "cut", 1.0},
    {"tomato", "RelatedTo", "knife", 2.0},
    {"bread", "RelatedTo", "knife", 2.0},
    {"spatula", "UsedFor", "spread", 1.0},
    {"butter", "RelatedTo", "spatula", 2.0},
    {"bread", "RelatedTo", "spatula", 0.5},
    {"kettle", "UsedFor", "pour", 1.0},
    {"cup", "RelatedTo", "kettle", 2.0},
    {"lid", "UsedFor", "open", 1.0},
    {"jar", "RelatedTo", "lid", 2.0},
};

struct ToyLabel {
    const char* id;
    const char* verb;
    const char* noun;  // empty: verb-only label
};

inline constexpr ToyLabel labels[] = {{"L01", "cut", "tomato"}, {"L02", "cut", "bread"},
                                      {"L03", "spread", "butter"}, {"L04", "pour", "cup"},
                                      {"L05", "open", "jar"},     {"L06", "pour", ""}};

struct Params {
    std::uint64_t seed = 0;
    std::size_t clips = 20;
    std::size_t frames_per_clip = 5;
    std::size_t embedding_dim = 300;
    std::size_t feature_dim = 16;
    double feature_noise = 0.05;
};

/// File name → contents.
using Files = std::map<std::string, std::string>;

inline std::string clip_name(std::size_t c) {
    std::string s = std::to_string(c + 1);
    return "clip" + std::string(s.size() < 2 ? 2 - s.size() : 0, '0') + s;
}

inline std::string round6(double x) {
    const double r = std::round(x * 1e6) / 1e6;
    return format_double(r);
}

inline Files generate(const Params& p = {}) {
    Files files;
    std::ostringstream graph, objs, acts, unseen, clips, like, emb, feats, gt, lab, zgt;

    graph << "# head\trelation\ttail\tweight\n";
    for (const auto& e : edges) graph << e.head << '\t' << e.relation << '\t' << e.tail << '\t' << format_double(e.weight) << '\n';
    for (const auto* o : objects) objs << o << '\n';
    for (const auto* a : actions) acts << a << '\n';
    for (const auto* a : unseen_actions) unseen << a << '\n';

    // Evidence concepts per object, from the grounding edges.
    std::map<std::string, std::vector<std::string>> evidence;
    std::vector<std::string> vocab(std::begin(objects), std::end(objects));
    for (const auto& e : edges) {
        const std::string rel = e.relation;
        if (rel == "HasProperty" || rel == "IsA") {
            evidence[e.head].push_back(e.tail);
            vocab.push_back(e.tail);
        }
    }
    std::sort(vocab.begin(), vocab.end());

    Rng like_rng(derive_seed(p.seed, "likelihoods"));
    Rng feat_rng(derive_seed(p.seed, "features"));
    Rng emb_rng(derive_seed(p.seed, "embeddings"));

    std::map<std::string, std::vector<double>> centers;
    for (const auto* a : actions) {
        std::vector<double> c(p.feature_dim);
        for (auto& v : c) v = feat_rng.normal();
        centers[a] = std::move(c);
    }

    clips << "clip_id,frame_id\n";
    like << "frame_id,concept,probability\n";
    feats << "clip_id";
    for (std::size_t i = 0; i < p.feature_dim; ++i) feats << ",v" << i + 1;
    feats << '\n';
    gt << "clip_id,verb,noun\n";
    zgt << "clip_id,label_id\n";
    constexpr std::size_t n_act = std::size(activities);
    for (std::size_t c = 0; c < p.clips; ++c) {
        const auto& act = activities[c % n_act];
        const std::string clip = clip_name(c);
        gt << clip << ',' << act.verb << ',' << act.noun << '\n';
        zgt << clip << ',' << labels[c % n_act].id << '\n';
        const auto& own = evidence[act.noun];
        for (std::size_t f = 0; f < p.frames_per_clip; ++f) {
            const std::string frame = clip + "_f" + std::to_string(f + 1);
            clips << clip << ',' << frame << '\n';
            for (const auto& v : vocab) {
                double prob;
                if (v == act.noun)
                    prob = 0.95;
                else if (std::find(own.begin(), own.end(), v) != own.end())
                    prob = like_rng.uniform(0.8, 0.9);
                else
                    prob = like_rng.uniform(0.01, 0.05);
                like << frame << ',' << v << ',' << round6(prob) << '\n';
            }
        }
        feats << clip;
        for (double x : centers[act.verb]) feats << ',' << round6(x + p.feature_noise * feat_rng.normal());
        feats << '\n';
    }

    std::vector<std::string> embedded(std::begin(actions), std::end(actions));
    embedded.insert(embedded.end(), vocab.begin(), vocab.end());
    std::sort(embedded.begin(), embedded.end());
    emb << embedded.size() << ' ' << p.embedding_dim << '\n';
    for (const auto& w : embedded) {
        emb << w;
        for (std::size_t i = 0; i < p.embedding_dim; ++i) emb << ' ' << round6(emb_rng.normal());
        emb << '\n';
    }

    lab << "label_id,verb,noun\n";
    for (const auto& l : labels) lab << l.id << ',' << l.verb << ',' << l.noun << '\n';

    files["graph.tsv"] = graph.str();
    files["objects.txt"] = objs.str();
    files["actions.txt"] = acts.str();
    files["unseen_actions.txt"] = unseen.str();
    files["clips.csv"] = clips.str();
    files["likelihoods.csv"] = like.str();
    files["embeddings.txt"] = emb.str();
    files["features.csv"] = feats.str();
    files["ground_truth.csv"] = gt.str();
    files["labels.csv"] = lab.str();
    files["zeroshot_gt.csv"] = zgt.str();
    return files;
}

} // namespace openact::toy
