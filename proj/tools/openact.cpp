// openact: command-line driver for the grounding, inference, refinement and
// evaluation pipeline.

#include "openact/actionmap.hpp"
#include "openact/eval.hpp"
#include "openact/grounding.hpp"
#include "openact/inference.hpp"
#include "openact/io.hpp"
#include "openact/kgraph.hpp"
#include "openact/refine.hpp"
#include "openact/toy.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace openact;
using json = nlohmann::ordered_json;

namespace {

enum ExitCode { exit_ok = 0, exit_usage = 1, exit_data = 2, exit_internal = 3 };

std::ifstream open_input(const std::string& path) {
    if (path.empty()) throw UsageError("missing required input path");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    return in;
}

void write_file(const fs::path& path, const std::string& contents) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << contents;
    if (!out) throw DataError("failed writing '" + path.string() + "'");
}

template <class Fn>
void write_with(const fs::path& path, Fn&& fn) {
    std::ostringstream os;
    fn(os);
    write_file(path, os.str());
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Shared option groups
// ---------------------------------------------------------------------------

struct GlobalOpts {
    std::uint64_t seed = 0;
    std::size_t threads = 1;
};

struct SpaceOpts {
    std::string graph, objects, actions;
    AffinityParams affinity;

    void add(CLI::App& app, bool need_actions) {
        app.add_option("--graph", graph, "Knowledge graph TSV (head, relation, tail, weight)")->required();
        app.add_option("--objects", objects, "Object search space, one concept per line")->required();
        if (need_actions)
            app.add_option("--actions", actions, "Action search space, one concept per line")->required();
        app.add_option("--lambda", affinity.decay_lambda, "Affinity hop decay");
        app.add_option("--max-hops", affinity.max_hops, "Longest affinity path in hops");
    }

    KnowledgeGraph load_graph_file() const {
        auto in = open_input(graph);
        return load_graph(in, graph);
    }

    std::vector<ConceptId> load_list(const std::string& path) const {
        auto in = open_input(path);
        return load_concept_list(in, path);
    }
};

struct GroundedSource {
    std::string grounded, likelihoods, clips;

    void add(CLI::App& app) {
        app.add_option("--clips", clips, "Clip index CSV (clip_id,frame_id)")->required();
        auto* g = app.add_option("--grounded", grounded, "Grounded scores CSV from `ground`");
        auto* l = app.add_option("--likelihoods", likelihoods, "Likelihood CSV; grounds inline when --grounded is absent");
        g->excludes(l);
    }

    std::vector<ClipFrames> load(const KnowledgeGraph& g, const SearchSpace& space) const {
        auto cin = open_input(clips);
        const auto entries = io::load_clips(cin, clips);
        if (!grounded.empty()) {
            auto in = open_input(grounded);
            return io::align_grounded(entries, space, io::load_grounded(in, grounded));
        }
        if (likelihoods.empty()) throw UsageError("one of --grounded or --likelihoods is required");
        auto in = open_input(likelihoods);
        const auto table = load_likelihoods(in, likelihoods);
        const auto egos = build_ego_graphs(g, space.objects);
        std::vector<ClipFrames> out;
        for (const auto& c : entries) {
            ClipFrames cf{c.clip, c.frames, {}};
            for (const auto& f : c.frames) {
                std::vector<double> row;
                for (const auto& s : ground_frame_scores(space, f, table, egos)) row.push_back(s.score);
                cf.grounded.push_back(std::move(row));
            }
            out.push_back(std::move(cf));
        }
        return out;
    }
};

struct InferOpts {
    std::string mode = "auto";
    std::size_t top_k = 10;
    InferenceSettings settings;

    void add(CLI::App& app) {
        app.add_option("--mode", mode, "Inference mode: exhaustive, mcmc, or auto (exhaustive up to 10000 pairs)");
        app.add_option("-k,--top-k", top_k, "Interpretations kept per frame");
        app.add_option("--t0", settings.schedule.t0, "Annealing start temperature");
        app.add_option("--alpha", settings.schedule.alpha, "Annealing cooling factor");
        app.add_option("--iterations", settings.schedule.iterations, "MCMC steps per frame");
        app.add_option("--t-min", settings.schedule.t_min, "Temperature at which the chain restarts");
        app.add_option("--epsilon", settings.transform.epsilon, "Probability floor inside -ln");
    }

    InferenceSettings resolve(const GlobalOpts& g) const {
        InferenceSettings s = settings;
        s.mode = parse_inference_mode(mode);
        s.top_k = top_k;
        s.threads = g.threads;
        s.schedule.seed = derive_seed(g.seed, "inference");
        s.validate();
        return s;
    }
};

struct SmoothOpts {
    SmoothingParams params;

    void add(CLI::App& app) {
        app.add_option("--top-m", params.top_m, "Interpretations per frame considered by smoothing");
        app.add_option("--per-frame", params.per_frame_a, "Actions kept per frame");
        app.add_option("--top-actions", params.top_actions, "Clip-level action targets");
        app.add_option("--top-activities", params.top_activities, "Clip-level activities kept");
    }
};

struct TrainOpts {
    TrainConfig cfg;
    bool freeze = false;
    std::size_t embedding_dim = default_embedding_dim;

    void add(CLI::App& app) {
        app.add_option("--epochs", cfg.epochs, "Training epochs");
        app.add_option("--batch-size", cfg.batch_size, "Mini-batch size");
        app.add_option("--lr", cfg.learning_rate, "Learning rate");
        app.add_flag("--freeze-weights", freeze, "Fit only the bias");
        app.add_option("--embedding-dim", embedding_dim, "Semantic embedding dimension");
    }

    TrainConfig resolve(const GlobalOpts& g) const {
        TrainConfig c = cfg;
        c.seed = derive_seed(g.seed, "training");
        c.train_weights = !freeze;
        c.validate();
        return c;
    }
};

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct GroundCmd {
    SpaceOpts space;
    std::string likelihoods, out = "grounded.csv", evidence_out;

    void add(CLI::App& app) {
        space.add(app, false);
        app.add_option("--likelihoods", likelihoods, "Likelihood CSV (frame_id,concept,probability)")->required();
        app.add_option("-o,--out", out, "Grounded scores CSV");
        app.add_option("--evidence-out", evidence_out, "Evidence breakdown JSON (default: <out stem>.evidence.json)");
    }

    void run() const {
        const auto g = space.load_graph_file();
        const SearchSpace ss{resolve_concepts(space.load_list(space.objects), "object", g), {}};
        auto in = open_input(likelihoods);
        const auto table = load_likelihoods(in, likelihoods);
        const auto egos = build_ego_graphs(g, ss.objects);
        std::vector<std::vector<GroundedScore>> frames;
        for (const auto& f : table.frames()) frames.push_back(ground_frame_scores(ss, f, table, egos));
        write_with(out, [&](std::ostream& os) { io::write_grounded(os, frames); });
        fs::path ev = evidence_out;
        if (ev.empty()) ev = fs::path(out).replace_extension(".evidence.json");
        write_file(ev, dump(io::evidence_json(frames)));
    }
};

struct VocabCmd {
    SpaceOpts space;
    std::string out = "vocab.txt";

    void add(CLI::App& app) {
        space.add(app, false);
        app.add_option("-o,--out", out, "Vocabulary file: objects and their ego-graph evidence concepts");
    }

    void run() const {
        const auto g = space.load_graph_file();
        const auto objects = resolve_concepts(space.load_list(space.objects), "object", g);
        std::set<ConceptId> vocab(objects.begin(), objects.end());
        for (const auto& o : objects)
            for (const auto& nb : ego_graph(g, o).neighbors) vocab.insert(nb.evidence);
        write_with(out, [&](std::ostream& os) {
            for (const auto& c : vocab) os << c << '\n';
        });
    }
};

struct InferCmd {
    SpaceOpts space;
    GroundedSource source;
    InferOpts infer;
    std::string priors, out = "interpretations.jsonl";

    void add(CLI::App& app) {
        space.add(app, true);
        source.add(app);
        infer.add(app);
        app.add_option("--priors", priors, "Action priors CSV (clip_id,action,prior); missing entries are 1");
        app.add_option("-o,--out", out, "Interpretations JSON-lines");
    }

    void run(const GlobalOpts& gopts) const {
        const auto settings = infer.resolve(gopts);
        const auto g = space.load_graph_file();
        const auto ss = SearchSpace::resolve(space.load_list(space.objects), space.load_list(space.actions), g);
        const auto clips = source.load(g, ss);
        ActionPriorTable pt;
        if (!priors.empty()) {
            auto in = open_input(priors);
            pt = io::load_priors(in, priors);
        }
        const auto aff = AffinityTable::compute(g, ss, space.affinity);
        const auto results = infer_clips(ss, aff, clips, pt, settings);
        write_with(out, [&](std::ostream& os) {
            io::write_interpretations(os, resolve_mode(settings.mode, ss), settings.top_k, clips, results);
        });
    }
};

struct SmoothCmd {
    SmoothOpts smooth;
    std::string interpretations, targets_out = "targets.csv", activities_out = "activities.csv",
                                 predictions_out = "predictions.csv";

    void add(CLI::App& app) {
        app.add_option("--interpretations", interpretations, "Interpretations JSON-lines from `infer`")->required();
        smooth.add(app);
        app.add_option("--targets-out", targets_out, "Clip action targets CSV");
        app.add_option("--activities-out", activities_out, "Clip activity ranking CSV");
        app.add_option("--predictions-out", predictions_out, "Top-1 predictions CSV (clip_id,verb,noun)");
    }

    void run() const {
        auto in = open_input(interpretations);
        const auto file = io::load_interpretations(in, interpretations);
        std::vector<ClipActionTargets> targets;
        std::vector<io::ClipActivities> acts;
        for (std::size_t c = 0; c < file.clips.size(); ++c) {
            targets.push_back(temporal_smooth(file.clips[c], file.results[c], smooth.params));
            acts.push_back({file.clips[c], smooth_activities(file.results[c], smooth.params)});
        }
        write_with(targets_out, [&](std::ostream& os) { io::write_targets(os, targets); });
        write_with(activities_out, [&](std::ostream& os) { io::write_activities(os, acts); });
        write_with(predictions_out, [&](std::ostream& os) { io::write_predictions(os, io::top1_predictions(acts)); });
    }
};

std::vector<ConceptId> load_optional_list(const std::string& path) {
    if (path.empty()) return {};
    auto in = open_input(path);
    return load_concept_list(in, path);
}

EmbeddingTable load_embedding_file(const std::string& path, std::size_t dim) {
    auto in = open_input(path);
    return load_embeddings(in, dim, path);
}

std::map<ClipId, ClipFeature> load_feature_file(const std::string& path) {
    auto in = open_input(path);
    return load_features(in, path);
}

struct TrainMapCmd {
    TrainOpts train;
    std::string targets, features, embeddings, unseen, out = "map.txt", report_out = "train_report.json";

    void add(CLI::App& app) {
        app.add_option("--targets", targets, "Clip action targets CSV from `smooth`")->required();
        app.add_option("--features", features, "Clip feature CSV (clip_id,v1..vD)")->required();
        app.add_option("--embeddings", embeddings, "Word embeddings (concept v1 .. vN)")->required();
        app.add_option("--unseen-actions", unseen, "Actions held out for validation, one per line");
        train.add(app);
        app.add_option("-o,--out", out, "Trained map");
        app.add_option("--report-out", report_out, "Per-epoch training report JSON");
    }

    void run(const GlobalOpts& gopts) const {
        const auto cfg = train.resolve(gopts);
        auto tin = open_input(targets);
        const auto tg = io::load_targets(tin, targets);
        const auto feats = load_feature_file(features);
        const auto emb = load_embedding_file(embeddings, train.embedding_dim);
        const auto held = load_optional_list(unseen);
        const std::set<ConceptId> unseen_set(held.begin(), held.end());
        std::vector<Sample> tr, ho;
        for (auto& s : make_training_set(tg, feats, emb)) (unseen_set.count(s.action) ? ho : tr).push_back(std::move(s));
        if (tr.empty()) throw DataError("no training samples outside the unseen actions");
        const auto res = train_map(tr, cfg, ho);
        write_with(out, [&](std::ostream& os) { write_map(os, res.map); });
        json epochs = json::array();
        for (const auto& e : res.epochs)
            epochs.push_back({{"epoch", e.epoch}, {"train_mse", e.train_mse}, {"heldout_mse", io::optional_json(e.heldout_mse)}});
        write_file(report_out, dump({{"best_epoch", res.best_epoch},
                                     {"train_samples", tr.size()},
                                     {"heldout_samples", ho.size()},
                                     {"epochs", epochs}}));
    }
};

struct RefineCmd {
    SpaceOpts space;
    GroundedSource source;
    InferOpts infer;
    SmoothOpts smooth;
    TrainOpts train;
    RefinementConfig rcfg;
    std::string features, embeddings, unseen, out_dir = "refine";
    std::size_t resume_from = 0;

    void add(CLI::App& app) {
        space.add(app, true);
        source.add(app);
        app.add_option("--features", features, "Clip feature CSV")->required();
        app.add_option("--embeddings", embeddings, "Word embeddings")->required();
        app.add_option("--unseen-actions", unseen, "Actions whose targets form the held-out set");
        app.add_option("--max-iterations", rcfg.max_iterations, "Refinement iterations");
        app.add_option("--saturation-delta", rcfg.saturation_delta, "Stop when held-out MSE improves by less");
        app.add_option("--prior-temperature", rcfg.prior_temperature, "Softmax temperature of predicted priors");
        infer.add(app);
        smooth.add(app);
        train.add(app);
        app.add_option("--out-dir", out_dir, "Directory for per-iteration artifacts and final outputs");
        app.add_option("--resume-from", resume_from, "Continue at this iteration using persisted artifacts");
    }

    fs::path iter_dir(std::size_t i) const { return fs::path(out_dir) / ("iter_" + std::to_string(i)); }
    static std::string snapshot_ref(std::size_t i) { return "iter_" + std::to_string(i) + "/interpretations.jsonl"; }

    json report_doc(const std::vector<IterationReport>& reports, std::optional<std::size_t> best) const {
        json list = json::array();
        for (const auto& r : reports) list.push_back(io::report_json(r, snapshot_ref(r.iteration)));
        return {{"best_iteration", best ? json(*best) : json(nullptr)}, {"iterations", list}};
    }

    IterationSnapshot load_snapshot(std::size_t i, std::span<const ClipFrames> clips) const {
        const auto path = (iter_dir(i) / "interpretations.jsonl").string();
        auto in = open_input(path);
        const auto file = io::load_interpretations(in, path);
        if (file.clips.size() != clips.size()) throw DataError(path + ": clip set differs from the clip index");
        IterationSnapshot s;
        s.iteration = i;
        for (std::size_t c = 0; c < clips.size(); ++c) {
            if (file.clips[c] != clips[c].clip || file.frames[c] != clips[c].frames)
                throw DataError(path + ": clip '" + clips[c].clip + "' differs from the clip index");
            s.targets.push_back(temporal_smooth(clips[c].clip, file.results[c], smooth.params));
            s.activities.push_back(smooth_activities(file.results[c], smooth.params));
        }
        s.frames = file.results;
        return s;
    }

    LinearMap load_map_file(const fs::path& p) const {
        auto in = open_input(p.string());
        return read_map(in, p.string());
    }

    RefineState resume_state(std::span<const ClipFrames> clips, const RefinementConfig& cfg) const {
        RefineState st;
        if (resume_from == 0) return st;
        const auto rpath = (fs::path(out_dir) / "refine_report.json").string();
        auto rin = open_input(rpath);
        json doc;
        try {
            doc = json::parse(rin);
        } catch (const std::exception& e) {
            throw DataError(rpath + ": " + e.what());
        }
        const auto& list = doc.at("iterations");
        if (list.size() < resume_from)
            throw DataError("cannot resume from iteration " + std::to_string(resume_from) + ": only " +
                            std::to_string(list.size()) + " iteration(s) persisted in " + out_dir);
        for (std::size_t i = 0; i < resume_from; ++i) {
            st.reports.push_back(io::report_from_json(list.at(i)));
            if (st.reports.back().iteration != i) throw DataError(rpath + ": iteration indices are not consecutive");
        }
        for (std::size_t i = 0; i < resume_from; ++i) {
            const IterationReport* best = st.best_iteration ? &st.reports[*st.best_iteration] : nullptr;
            if (improves_on(st.reports[i], best)) st.best_iteration = i;
        }
        const std::size_t last = resume_from - 1;
        {
            const auto p = (iter_dir(last) / "priors.csv").string();
            auto in = open_input(p);
            st.priors = io::load_priors(in, p);
        }
        st.map = load_map_file(iter_dir(last) / "map.txt");
        st.best_map = load_map_file(iter_dir(*st.best_iteration) / "map.txt");
        st.best_snapshot = load_snapshot(*st.best_iteration, clips);
        st.previous_top1 = load_snapshot(last, clips).top1();
        st.previous_mse = st.reports.back().heldout_mse;
        st.next_iteration = resume_from;
        const auto& imp = st.reports.back().improvement;
        st.finished = imp && *imp < cfg.saturation_delta;
        return st;
    }

    void run(const GlobalOpts& gopts) const {
        const auto settings = infer.resolve(gopts);
        const auto tcfg = train.resolve(gopts);
        const auto g = space.load_graph_file();
        const auto ss = SearchSpace::resolve(space.load_list(space.objects), space.load_list(space.actions), g);
        const auto clips = source.load(g, ss);
        const auto feats = load_feature_file(features);
        const auto emb = load_embedding_file(embeddings, train.embedding_dim);
        const auto aff = AffinityTable::compute(g, ss, space.affinity);

        RefinementConfig cfg = rcfg;
        cfg.smoothing = smooth.params;
        cfg.unseen_actions = load_optional_list(unseen);
        cfg.validate();
        if (resume_from >= cfg.max_iterations)
            throw UsageError("--resume-from must be below --max-iterations");

        RefineInputs inputs{&ss, &aff, clips, &feats, &emb};
        auto state = resume_state(clips, cfg);
        std::vector<IterationReport> reports = state.reports;
        std::optional<std::size_t> best = state.best_iteration;

        auto on_iteration = [&](const IterationReport& rep, const IterationSnapshot& snap, const RefineState& st) {
            const auto dir = iter_dir(rep.iteration);
            write_with(dir / "interpretations.jsonl", [&](std::ostream& os) {
                io::write_interpretations(os, resolve_mode(settings.mode, ss), settings.top_k, clips, snap.frames);
            });
            write_with(dir / "targets.csv", [&](std::ostream& os) { io::write_targets(os, snap.targets); });
            write_with(dir / "activities.csv", [&](std::ostream& os) { write_activity_file(os, snap); });
            write_with(dir / "priors.csv", [&](std::ostream& os) { io::write_priors(os, st.priors); });
            write_with(dir / "map.txt", [&](std::ostream& os) { write_map(os, *st.map); });
            reports = st.reports;
            best = st.best_iteration;
            write_file(fs::path(out_dir) / "refine_report.json", dump(report_doc(reports, best)));
        };
        const auto res = refine_loop(inputs, cfg, tcfg, settings, std::move(state), on_iteration);

        const fs::path od(out_dir);
        write_file(od / "refine_report.json", dump(report_doc(res.reports, res.best_iteration)));
        write_with(od / "interpretations.jsonl", [&](std::ostream& os) {
            io::write_interpretations(os, resolve_mode(settings.mode, ss), settings.top_k, clips, res.best.frames);
        });
        write_with(od / "targets.csv", [&](std::ostream& os) { io::write_targets(os, res.best.targets); });
        write_with(od / "activities.csv", [&](std::ostream& os) { write_activity_file(os, res.best); });
        write_with(od / "predictions.csv", [&](std::ostream& os) {
            io::write_predictions(os, io::top1_predictions(activity_rows(res.best)));
        });
        write_with(od / "priors.csv", [&](std::ostream& os) { io::write_priors(os, res.priors); });
        if (res.map) write_with(od / "map.txt", [&](std::ostream& os) { write_map(os, *res.map); });
        for (const auto& r : res.reports) {
            std::cerr << "iteration " << r.iteration << ": train_mse=" << format_double(r.train_mse);
            if (r.heldout_mse) std::cerr << " heldout_mse=" << format_double(*r.heldout_mse);
            if (r.agreement) std::cerr << " agreement=" << format_double(*r.agreement);
            std::cerr << '\n';
        }
    }

    std::vector<io::ClipActivities> activity_rows(const IterationSnapshot& s) const {
        std::vector<io::ClipActivities> out;
        for (std::size_t c = 0; c < s.activities.size(); ++c) out.push_back({s.targets[c].clip, s.activities[c]});
        return out;
    }

    void write_activity_file(std::ostream& os, const IterationSnapshot& s) const {
        io::write_activities(os, activity_rows(s));
    }
};

struct ZeroShotCmd {
    std::string activities, labels, embeddings, out = "zeroshot.csv", scores_out = "zeroshot_scores.csv";
    std::size_t embedding_dim = default_embedding_dim;
    std::size_t top = 10;

    void add(CLI::App& app) {
        app.add_option("--activities", activities, "Clip activity ranking CSV from `smooth` or `refine`")->required();
        app.add_option("--labels", labels, "Label set CSV (label_id,verb,noun)")->required();
        app.add_option("--embeddings", embeddings, "Word embeddings")->required();
        app.add_option("--embedding-dim", embedding_dim, "Semantic embedding dimension");
        app.add_option("--top", top, "Clip interpretations searched per clip");
        app.add_option("-o,--out", out, "Mapped labels CSV (clip_id,label_id,distance)");
        app.add_option("--scores-out", scores_out, "Per-label scores CSV (clip_id,label_id,score), score = 1 - distance");
    }

    void run() const {
        if (top < 1) throw UsageError("--top must be at least 1");
        auto ain = open_input(activities);
        const auto acts = io::load_activities_ranked(ain, activities);
        auto lin = open_input(labels);
        const auto ls = load_labels(lin, labels);
        const auto emb = load_embedding_file(embeddings, embedding_dim);
        ScoresByClip scores;
        std::ostringstream os;
        os << "clip_id,label_id,distance\n";
        for (const auto& c : acts) {
            const std::size_t n = std::min(top, c.ranked.size());
            const std::span<const ClipActivity> head(c.ranked.data(), n);
            const auto m = zero_shot_map(head, ls, emb);
            os << c.clip << ',' << m.label_id << ',' << format_double(m.distance) << '\n';
            const auto d = zero_shot_distances(head, ls, emb);
            for (std::size_t i = 0; i < d.size(); ++i) scores[c.clip][ls.labels[i].id] = 1.0 - d[i];
        }
        write_file(out, os.str());
        write_with(scores_out, [&](std::ostream& s) { io::write_label_scores(s, scores); });
    }
};

struct EvalCmd {
    std::string ground_truth, predictions, embeddings, zs_gt, zs_scores, out = "metrics.json", table_out;
    std::size_t embedding_dim = default_embedding_dim;

    void add(CLI::App& app) {
        app.add_option("--ground-truth", ground_truth, "Ground truth CSV (clip_id,verb,noun)")->required();
        app.add_option("--predictions", predictions, "Predictions CSV (clip_id,verb,noun)")->required();
        app.add_option("--embeddings", embeddings, "Word embeddings; enables NB-WS");
        app.add_option("--embedding-dim", embedding_dim, "Semantic embedding dimension");
        app.add_option("--zeroshot-gt", zs_gt, "Zero-shot positives CSV (clip_id,label_id); enables class mAP");
        app.add_option("--zeroshot-scores", zs_scores, "Per-label scores CSV from `zeroshot`");
        app.add_option("-o,--out", out, "Metric report JSON");
        app.add_option("--table-out", table_out, "Also write the plain-text table here");
    }

    void run() const {
        auto gin = open_input(ground_truth);
        const auto gt = load_activities(gin, ground_truth);
        auto pin = open_input(predictions);
        const auto pred = load_activities(pin, predictions);
        ConceptByClip gv, gn, pv, pn;
        for (const auto& [c, a] : gt) gv.emplace(c, a.verb), gn.emplace(c, a.noun);
        for (const auto& [c, a] : pred) pv.emplace(c, a.verb), pn.emplace(c, a.noun);
        MetricReport rep;
        rep.object_accuracy = {accuracy(pn, gn), gt.size()};
        rep.action_accuracy = {accuracy(pv, gv), gt.size()};
        rep.activity_word_accuracy = {word_level_accuracy(pred, gt), gt.size()};
        if (!embeddings.empty()) {
            const auto emb = load_embedding_file(embeddings, embedding_dim);
            const auto r = mean_nbws(pv, gv, emb);
            rep.mean_nbws = {r.mean, r.support};
        }
        if (zs_gt.empty() != zs_scores.empty()) throw UsageError("--zeroshot-gt and --zeroshot-scores go together");
        if (!zs_gt.empty()) {
            auto zin = open_input(zs_gt);
            const auto pos = load_label_positives(zin, zs_gt);
            auto sin = open_input(zs_scores);
            const auto m = class_map(io::load_label_scores(sin, zs_scores), pos);
            rep.class_map = {m.mean, m.labels_with_positives};
        }
        write_file(out, dump(rep.to_json()));
        const auto table = rep.to_table();
        if (!table_out.empty()) write_file(table_out, table);
        std::cout << table;
    }
};

struct GenToyCmd {
    std::string out_dir = "toy";
    toy::Params params;

    void add(CLI::App& app) {
        app.add_option("--out-dir", out_dir, "Directory receiving the synthetic dataset");
        app.add_option("--clips", params.clips, "Number of clips");
        app.add_option("--frames", params.frames_per_clip, "Frames per clip");
        app.add_option("--feature-dim", params.feature_dim, "Clip feature dimension");
        app.add_option("--feature-noise", params.feature_noise, "Feature noise standard deviation");
    }

    void run(const GlobalOpts& g) const {
        if (params.clips < 1 || params.frames_per_clip < 1 || params.feature_dim < 1)
            throw UsageError("--clips, --frames and --feature-dim must be positive");
        toy::Params p = params;
        p.seed = g.seed;
        for (const auto& [name, contents] : toy::generate(p)) write_file(fs::path(out_dir) / name, contents);
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Open-world activity inference over a commonsense knowledge graph"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "TOML or INI config file; [section] per subcommand, flags override it");

    GlobalOpts g;
    app.add_option("--seed", g.seed, "Root seed for every random stream");
    app.add_option("--threads", g.threads, "Worker threads for frame-parallel inference")
        ->check(CLI::PositiveNumber);

    GroundCmd ground;
    VocabCmd vocab;
    InferCmd infer;
    SmoothCmd smooth;
    TrainMapCmd train;
    RefineCmd refine;
    ZeroShotCmd zeroshot;
    EvalCmd eval;
    GenToyCmd gentoy;

    auto* s_ground = app.add_subcommand("ground", "Score candidate objects per frame from evidence and likelihoods");
    ground.add(*s_ground);
    auto* s_vocab = app.add_subcommand("vocab-dump", "List the concepts whose likelihoods grounding needs");
    vocab.add(*s_vocab);
    auto* s_infer = app.add_subcommand("infer", "Rank (action, object) interpretations per frame");
    infer.add(*s_infer);
    auto* s_smooth = app.add_subcommand("smooth", "Consolidate frame interpretations into clip targets");
    smooth.add(*s_smooth);
    auto* s_train = app.add_subcommand("train-map", "Train the visual-semantic action map");
    train.add(*s_train);
    auto* s_refine = app.add_subcommand("refine", "Iterate inference and action-map training");
    refine.add(*s_refine);
    auto* s_zero = app.add_subcommand("zeroshot", "Map clip interpretations onto a fixed label set");
    zeroshot.add(*s_zero);
    auto* s_eval = app.add_subcommand("eval", "Score predictions against ground truth");
    eval.add(*s_eval);
    auto* s_toy = app.add_subcommand("gen-toy", "Write the bundled synthetic dataset");
    gentoy.add(*s_toy);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_usage;
    }

    try {
        if (*s_ground) ground.run();
        if (*s_vocab) vocab.run();
        if (*s_infer) infer.run(g);
        if (*s_smooth) smooth.run();
        if (*s_train) train.run(g);
        if (*s_refine) refine.run(g);
        if (*s_zero) zeroshot.run();
        if (*s_eval) eval.run();
        if (*s_toy) gentoy.run(g);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return exit_usage;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_data;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_data;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return exit_internal;
    }
    return exit_ok;
}
