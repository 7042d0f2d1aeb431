#include "cli_runner.hpp"
#include "support.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>

using namespace openact;
using namespace openact::testing;

namespace {

const std::string exe = OPENACT_CLI;

CliResult cli(const ScratchDir& d, std::vector<std::string> args) { return run_cli(exe, args, d.path()); }

void gen_toy(const ScratchDir& d, const std::string& seed = "0") {
    ASSERT_EQ(cli(d, {"--seed", seed, "gen-toy", "--out-dir", "toy"}).code, 0);
}

std::vector<std::string> space_args() {
    return {"--graph", "toy/graph.tsv", "--objects", "toy/objects.txt", "--actions", "toy/actions.txt"};
}

std::vector<std::string> operator+(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

// ground -> infer -> smooth -> refine -> eval on the toy set, inside `d`.
void pipeline(const ScratchDir& d, const std::string& threads = "1") {
    gen_toy(d);
    auto r = cli(d, std::vector<std::string>{"ground", "--graph", "toy/graph.tsv", "--objects", "toy/objects.txt",
                                             "--likelihoods", "toy/likelihoods.csv", "-o", "grounded.csv"});
    ASSERT_EQ(r.code, 0) << r.err;
    r = cli(d, std::vector<std::string>{"--threads", threads, "infer"} + space_args() +
                   std::vector<std::string>{"--clips", "toy/clips.csv", "--grounded", "grounded.csv", "-o",
                                            "interpretations.jsonl"});
    ASSERT_EQ(r.code, 0) << r.err;
    r = cli(d, {"smooth", "--interpretations", "interpretations.jsonl", "--targets-out", "targets.csv",
                "--activities-out", "activities.csv", "--predictions-out", "predictions.csv"});
    ASSERT_EQ(r.code, 0) << r.err;
    r = cli(d, std::vector<std::string>{"--threads", threads, "refine"} + space_args() +
                   std::vector<std::string>{"--clips", "toy/clips.csv", "--grounded", "grounded.csv", "--features",
                                            "toy/features.csv", "--embeddings", "toy/embeddings.txt",
                                            "--unseen-actions", "toy/unseen_actions.txt", "--out-dir", "refine"});
    ASSERT_EQ(r.code, 0) << r.err;
    r = cli(d, {"eval", "--ground-truth", "toy/ground_truth.csv", "--predictions", "refine/predictions.csv",
                "--embeddings", "toy/embeddings.txt", "-o", "metrics.json"});
    ASSERT_EQ(r.code, 0) << r.err;
}

const char* pipeline_outputs[] = {"grounded.csv",          "grounded.evidence.json", "interpretations.jsonl",
                                  "targets.csv",           "activities.csv",         "predictions.csv",
                                  "refine/refine_report.json", "refine/interpretations.jsonl",
                                  "refine/predictions.csv", "refine/priors.csv",     "refine/map.txt",
                                  "metrics.json"};

} // namespace

TEST(Cli, HelpShowsDefaults) {
    ScratchDir d("help");
    const std::map<std::string, std::string> expected{
        {"ground", "grounded.csv"},     {"vocab-dump", "vocab.txt"},    {"infer", "auto"},
        {"smooth", "10"},               {"train-map", "0.001"},         {"refine", "0.005"},
        {"zeroshot", "zeroshot.csv"},   {"eval", "metrics.json"},       {"gen-toy", "20"}};
    for (const auto& [sub, token] : expected) {
        const auto r = cli(d, {sub, "--help"});
        EXPECT_EQ(r.code, 0) << sub;
        EXPECT_NE(r.out.find("[" + token + "]"), std::string::npos) << sub << ":\n" << r.out;
    }
    const auto top = cli(d, {"--help"});
    EXPECT_EQ(top.code, 0);
    EXPECT_NE(top.out.find("[1]"), std::string::npos);
}

TEST(Cli, ExitCodes) {
    ScratchDir d("exit");
    gen_toy(d);
    EXPECT_EQ(cli(d, {}).code, 1);
    EXPECT_EQ(cli(d, {"infer", "--bogus"}).code, 1);
    auto base = space_args() + std::vector<std::string>{"--clips", "toy/clips.csv", "--likelihoods",
                                                        "toy/likelihoods.csv"};
    EXPECT_EQ(cli(d, std::vector<std::string>{"infer", "-k", "0"} + base).code, 1);
    EXPECT_EQ(cli(d, std::vector<std::string>{"infer", "--mode", "greedy"} + base).code, 1);
    EXPECT_EQ(cli(d, {"ground", "--graph", "nope.tsv", "--objects", "toy/objects.txt", "--likelihoods",
                      "toy/likelihoods.csv"})
                  .code,
              2);
    write_text(d / "empty.txt", "");
    const auto r = cli(d, {"ground", "--graph", "toy/graph.tsv", "--objects", "empty.txt", "--likelihoods",
                           "toy/likelihoods.csv"});
    EXPECT_EQ(r.code, 2);
    EXPECT_FALSE(r.err.empty());
}

TEST(Cli, VocabDumpListsObjectsAndEvidence) {
    ScratchDir d("vocab");
    gen_toy(d);
    ASSERT_EQ(cli(d, {"vocab-dump", "--graph", "toy/graph.tsv", "--objects", "toy/objects.txt"}).code, 0);
    const auto v = read_file(d / "vocab.txt");
    for (const char* c : {"bread\n", "red\n", "screw_top\n", "crust\n"}) EXPECT_NE(v.find(c), std::string::npos) << c;
    // Only ego-graph relations contribute evidence concepts.
    EXPECT_EQ(v.find("knife\n"), std::string::npos);
    EXPECT_EQ(v.find("lid\n"), std::string::npos);
}

TEST(Cli, PipelineIsByteReproducible) {
    ScratchDir a("repro-a"), b("repro-b");
    pipeline(a);
    pipeline(b, "4");
    for (const char* f : pipeline_outputs) {
        const auto x = read_file(a / f);
        EXPECT_FALSE(x.empty()) << f;
        EXPECT_EQ(x, read_file(b / f)) << f;
    }
    const auto m = nlohmann::json::parse(read_file(a / "metrics.json"));
    EXPECT_EQ(m["activity_word_accuracy"]["value"], 1.0);
}

TEST(Cli, McmcThreadInvariance) {
    ScratchDir d("threads");
    gen_toy(d);
    const auto base = space_args() + std::vector<std::string>{"--clips", "toy/clips.csv", "--likelihoods",
                                                              "toy/likelihoods.csv", "--mode", "mcmc",
                                                              "--iterations", "300"};
    ASSERT_EQ(cli(d, std::vector<std::string>{"--seed", "9", "infer"} + base + std::vector<std::string>{"-o", "one.jsonl"})
                  .code,
              0);
    ASSERT_EQ(cli(d, std::vector<std::string>{"--seed", "9", "--threads", "5", "infer"} + base +
                         std::vector<std::string>{"-o", "five.jsonl"})
                  .code,
              0);
    EXPECT_EQ(read_file(d / "one.jsonl"), read_file(d / "five.jsonl"));
}

TEST(Cli, ResumeMatchesUninterruptedRun) {
    ScratchDir d("resume");
    gen_toy(d);
    const auto base = std::vector<std::string>{"refine"} + space_args() +
                      std::vector<std::string>{"--clips", "toy/clips.csv", "--likelihoods", "toy/likelihoods.csv",
                                               "--features", "toy/features.csv", "--embeddings", "toy/embeddings.txt",
                                               "--unseen-actions", "toy/unseen_actions.txt"};
    ASSERT_EQ(cli(d, base + std::vector<std::string>{"--out-dir", "full"}).code, 0);
    ASSERT_EQ(cli(d, base + std::vector<std::string>{"--out-dir", "part", "--max-iterations", "1"}).code, 0);
    const auto r = cli(d, base + std::vector<std::string>{"--out-dir", "part", "--resume-from", "1"});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"refine_report.json", "interpretations.jsonl", "predictions.csv", "priors.csv", "map.txt",
                          "iter_1/map.txt", "iter_1/interpretations.jsonl"}) {
        const auto full = read_file(d / (std::string("full/") + f));
        EXPECT_FALSE(full.empty()) << f;
        EXPECT_EQ(full, read_file(d / (std::string("part/") + f))) << f;
    }
    EXPECT_EQ(cli(d, base + std::vector<std::string>{"--out-dir", "part", "--resume-from", "3"}).code, 1);
    EXPECT_EQ(cli(d, base + std::vector<std::string>{"--out-dir", "missing", "--resume-from", "1"}).code, 2);
}

TEST(Cli, RefineWithoutUnseenActionsWarns) {
    ScratchDir d("unseen");
    gen_toy(d);
    const auto r = cli(d, std::vector<std::string>{"refine"} + space_args() +
                              std::vector<std::string>{"--clips", "toy/clips.csv", "--likelihoods",
                                                       "toy/likelihoods.csv", "--features", "toy/features.csv",
                                                       "--embeddings", "toy/embeddings.txt", "--max-iterations", "2"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.err.find("no unseen actions"), std::string::npos) << r.err;
    const auto rep = nlohmann::json::parse(read_file(d / "refine/refine_report.json"));
    EXPECT_EQ(rep["iterations"].size(), 2u);
}

TEST(Cli, EvalIgnoresRowOrder) {
    ScratchDir d("eval");
    gen_toy(d);
    auto lines = read_file(d / "toy/ground_truth.csv");
    std::vector<std::string> rows;
    std::istringstream in(lines);
    std::string header, line;
    std::getline(in, header);
    while (std::getline(in, line)) rows.push_back(line);
    std::reverse(rows.begin(), rows.end());
    std::string shuffled = header + "\n";
    for (auto& r : rows) shuffled += r + "\n";
    write_text(d / "shuffled.csv", shuffled);
    ASSERT_EQ(cli(d, {"eval", "--ground-truth", "toy/ground_truth.csv", "--predictions", "toy/ground_truth.csv",
                      "--embeddings", "toy/embeddings.txt", "-o", "a.json"})
                  .code,
              0);
    ASSERT_EQ(cli(d, {"eval", "--ground-truth", "toy/ground_truth.csv", "--predictions", "shuffled.csv",
                      "--embeddings", "toy/embeddings.txt", "-o", "b.json"})
                  .code,
              0);
    EXPECT_EQ(read_file(d / "a.json"), read_file(d / "b.json"));
    const auto m = nlohmann::json::parse(read_file(d / "a.json"));
    EXPECT_EQ(m["object_accuracy"]["value"], 1.0);
    EXPECT_EQ(m["mean_nbws"]["value"], 1.0);
    EXPECT_TRUE(m["class_map"]["value"].is_null());
}

TEST(Cli, ZeroShotScoresFeedClassMap) {
    ScratchDir d("zeroshot");
    pipeline(d);
    auto r = cli(d, {"zeroshot", "--activities", "refine/activities.csv", "--labels", "toy/labels.csv",
                     "--embeddings", "toy/embeddings.txt", "--top", "1"});
    ASSERT_EQ(r.code, 0) << r.err;
    r = cli(d, {"eval", "--ground-truth", "toy/ground_truth.csv", "--predictions", "refine/predictions.csv",
                "--zeroshot-gt", "toy/zeroshot_gt.csv", "--zeroshot-scores", "zeroshot_scores.csv", "-o", "m.json",
                "--table-out", "m.txt"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto m = nlohmann::json::parse(read_file(d / "m.json"));
    ASSERT_TRUE(m["class_map"]["value"].is_number());
    EXPECT_GT(m["class_map"]["value"].get<double>(), 0.0);
    EXPECT_NE(read_file(d / "m.txt").find("class mAP"), std::string::npos);
    const auto mapped = read_file(d / "zeroshot.csv");
    EXPECT_NE(mapped.find("clip01,L01"), std::string::npos) << mapped;
}

namespace {

std::vector<std::vector<std::string>> read_rows(const std::string& text, char sep) {
    std::vector<std::vector<std::string>> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> f;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, sep)) f.push_back(cell);
        out.push_back(f);
    }
    return out;
}

std::vector<std::string> read_list(const std::string& text) {
    std::vector<std::string> out;
    for (auto& r : read_rows(text, '\n')) out.push_back(r[0]);
    return out;
}

} // namespace

// Exhaustive inference on the toy set against rankings rebuilt from the raw
// files with the brute-force oracles.
TEST(Cli, ToyExhaustiveMatchesOracle) {
    ScratchDir d("golden");
    gen_toy(d);
    const auto r = cli(d, std::vector<std::string>{"infer", "--mode", "exhaustive", "-k", "20"} + space_args() +
                              std::vector<std::string>{"--clips", "toy/clips.csv", "--likelihoods",
                                                       "toy/likelihoods.csv"});
    ASSERT_EQ(r.code, 0) << r.err;

    std::vector<EdgeRecord> recs;
    for (const auto& f : read_rows(read_file(d / "toy/graph.tsv"), '\t'))
        recs.push_back({ConceptId(f[0]), f[1], ConceptId(f[2]), std::stod(f[3])});
    const auto edges = oracle_edges(recs);
    const auto objects = read_list(read_file(d / "toy/objects.txt"));
    const auto actions = read_list(read_file(d / "toy/actions.txt"));
    std::map<std::string, std::map<std::string, double>> like;  // frame -> concept -> p
    for (const auto& f : read_rows(read_file(d / "toy/likelihoods.csv"), ',')) {
        if (f[0] == "frame_id") continue;
        like[f[0]][f[1]] = std::stod(f[2]);
    }
    std::vector<std::vector<double>> aff(objects.size(), std::vector<double>(actions.size()));
    for (std::size_t o = 0; o < objects.size(); ++o)
        for (std::size_t a = 0; a < actions.size(); ++a)
            aff[o][a] = oracle_affinity(edges, actions[a], objects[o], 1.0, 3);
    const std::vector<double> priors(actions.size(), 1.0);

    std::istringstream in(read_file(d / "interpretations.jsonl"));
    std::string line;
    std::getline(in, line);
    std::size_t frames = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        const auto& lk = like.at(j["frame"].get<std::string>());
        std::vector<double> sums, grounded;
        for (const auto& o : objects) sums.push_back(oracle_evidence_sum(edges, o, lk));
        double total = 0;
        for (double s : sums) total += s;
        for (std::size_t o = 0; o < objects.size(); ++o)
            grounded.push_back(lk.at(objects[o]) * (total > 0 ? sums[o] / total : 1.0 / objects.size()));
        const auto oracle = oracle_rank(objects, actions, grounded, aff, priors);
        std::map<std::pair<std::string, std::string>, double> energy_of;
        for (const auto& x : oracle) energy_of[{x.action, x.object}] = x.energy;
        const auto& list = j["interpretations"];
        ASSERT_EQ(list.size(), oracle.size());
        for (std::size_t i = 0; i < list.size(); ++i) {
            const double e = list[i]["energy"].get<double>();
            EXPECT_NEAR(e, oracle[i].energy, 1e-12);
            EXPECT_NEAR(energy_of.at({list[i]["action"].get<std::string>(), list[i]["object"].get<std::string>()}), e,
                        1e-12);
        }
        EXPECT_EQ(list[0]["object"], oracle[0].object);
        EXPECT_EQ(list[0]["action"], oracle[0].action);
        ++frames;
    }
    EXPECT_EQ(frames, 100u);
}
