#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "scopekit/cli.hpp"
#include "scopekit/io.hpp"
#include "scopekit/simulator.hpp"
#include "scopekit/training.hpp"

using namespace scopekit;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code = 0;
    std::string out;
    std::string err;
};

Result tool(std::vector<std::string> args) {
    args.insert(args.begin(), "scopekit");
    std::ostringstream out, err;
    Result r;
    r.code = cli::run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::path(::testing::TempDir()) / ("scopekit_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// every file below dir, relative path -> contents; manifest wall clock dropped
std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::string text = io::readText(e.path());
        if (e.path().filename() == "manifest.json") {
            auto j = nlohmann::json::parse(text);
            j.erase("wall_clock_seconds");
            text = j.dump();
        }
        files[fs::relative(e.path(), dir).string()] = text;
    }
    return files;
}

void writeFile(const fs::path& p, const std::string& text) { io::writeText(p, text); }

std::string readCsvColumn(const std::string& csv, const std::string& column, std::size_t row) {
    std::istringstream in(csv);
    std::string header, line;
    std::getline(in, header);
    std::vector<std::string> names;
    std::stringstream hs(header);
    for (std::string n; std::getline(hs, n, ',');) names.push_back(n);
    for (std::size_t r = 0; r <= row; ++r) std::getline(in, line);
    std::stringstream ls(line);
    std::vector<std::string> cells;
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == column) return cells.at(i);
    }
    return "";
}

const fs::path& smallData() {
    static const fs::path dir = [] {
        const auto d = scratch("data5");
        EXPECT_EQ(tool({"gen", "--scenarios", "5", "--seed", "11", "--out", (d / "data").string()}).code, 0);
        return d / "data";
    }();
    return dir;
}

}  // namespace

TEST(Cli, HelpListsSubcommandsAndSchema) {
    const auto r = tool({"--help"});
    EXPECT_EQ(r.code, 0);
    for (const char* word : {"gen", "decompose", "train", "eval", "compare", "loss.timenorm", "exit"}) {
        EXPECT_NE(r.out.find(word), std::string::npos) << word;
    }
}

TEST(Cli, UnknownFlagIsUsageError) {
    EXPECT_EQ(tool({"gen", "--scenarios", "1", "--seed", "1", "--out", "x", "--bogus"}).code, cli::kExitUsage);
    EXPECT_EQ(tool({}).code, cli::kExitUsage);
}

TEST(Cli, GenIsDeterministicForAnyJobCount) {
    const auto d = scratch("gen");
    ASSERT_EQ(tool({"gen", "--scenarios", "2", "--seed", "7", "--out", (d / "a").string()}).code, 0);
    ASSERT_EQ(tool({"gen", "--scenarios", "2", "--seed", "7", "--out", (d / "b").string()}).code, 0);
    ASSERT_EQ(tool({"gen", "--scenarios", "2", "--seed", "7", "--out", (d / "c").string(), "--jobs", "4"}).code, 0);
    const auto a = snapshot(d / "a");
    EXPECT_EQ(a, snapshot(d / "b"));
    EXPECT_EQ(a, snapshot(d / "c"));
    EXPECT_TRUE(a.count("episode_0000/states.csv"));
    EXPECT_TRUE(a.count("episode_0001/events.json"));
    EXPECT_TRUE(a.count("manifest.json"));
    ASSERT_EQ(tool({"gen", "--scenarios", "2", "--seed", "8", "--out", (d / "e").string()}).code, 0);
    EXPECT_NE(a, snapshot(d / "e"));
}

TEST(Cli, GenZeroScenariosWarns) {
    const auto d = scratch("gen0");
    const auto r = tool({"gen", "--scenarios", "0", "--seed", "1", "--out", (d / "x").string()});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.err.find("warning"), std::string::npos);
    EXPECT_TRUE(fs::exists(d / "x" / "manifest.json"));
}

TEST(Cli, GenMalformedConfig) {
    const auto d = scratch("genbad");
    writeFile(d / "bad.json", R"({"episode_steps": "long"})");
    auto r = tool({"gen", "--scenarios", "1", "--seed", "1", "--out", (d / "x").string(), "--config", (d / "bad.json").string()});
    EXPECT_EQ(r.code, cli::kExitUsage);
    EXPECT_NE(r.err.find("episode_steps"), std::string::npos);
    writeFile(d / "unknown.json", R"({"episode_stepz": 100})");
    r = tool({"gen", "--scenarios", "1", "--seed", "1", "--out", (d / "y").string(), "--config", (d / "unknown.json").string()});
    EXPECT_EQ(r.code, cli::kExitUsage);
    writeFile(d / "broken.json", "{");
    r = tool({"gen", "--scenarios", "1", "--seed", "1", "--out", (d / "z").string(), "--config", (d / "broken.json").string()});
    EXPECT_EQ(r.code, cli::kExitUsage);
}

TEST(Cli, DecomposeRoundTrip) {
    const auto d = scratch("dec");
    const auto log = sim::expertRollout(sim::sampleScenario(3, sim::ScenarioConfig{}), {false, false});
    Trajectory traj;
    traj.points.assign(log.states.begin() + 40, log.states.begin() + 120);
    writeFile(d / "traj.csv", io::trajectoryCsv(traj));
    const auto r = tool({"decompose", "--input", (d / "traj.csv").string(), "--levels", "3", "--out", (d / "p").string(), "--verify"});
    ASSERT_EQ(r.code, 0) << r.err;
    std::size_t components = 0;
    for (const auto& e : fs::directory_iterator(d / "p")) {
        const auto name = e.path().filename().string();
        if (name.rfind("approx_", 0) == 0 || name.rfind("detail_", 0) == 0) ++components;
    }
    EXPECT_EQ(components, 4u);
    EXPECT_TRUE(fs::exists(d / "p" / "metadata.json"));
    const auto pos = r.out.find("max_abs_error ");
    ASSERT_NE(pos, std::string::npos);
    EXPECT_LE(std::stod(r.out.substr(pos + 14)), 1e-10);
}

TEST(Cli, DecomposeConstantHasZeroDetails) {
    const auto d = scratch("const");
    Trajectory traj;
    traj.points.assign(16, Waypoint{3.0, -1.0, 1.0, 0.0, 0.0, 0.0});
    writeFile(d / "c.csv", io::trajectoryCsv(traj));
    ASSERT_EQ(tool({"decompose", "--input", (d / "c.csv").string(), "--levels", "2", "--out", (d / "p").string()}).code, 0);
    for (const char* f : {"detail_l1.csv", "detail_l2.csv"}) {
        std::istringstream in(io::readText(d / "p" / f));
        std::string line;
        std::getline(in, line);
        std::size_t rows = 0;
        while (std::getline(in, line)) {
            std::stringstream ls(line);
            std::string cell;
            std::getline(ls, cell, ',');
            while (std::getline(ls, cell, ',')) EXPECT_EQ(std::stod(cell), 0.0) << f;
            ++rows;
        }
        EXPECT_GT(rows, 0u);
    }
}

TEST(Cli, DecomposeIndivisibleLength) {
    const auto d = scratch("div");
    Trajectory traj;
    traj.points.assign(80, Waypoint{});
    writeFile(d / "t.csv", io::trajectoryCsv(traj));
    const auto r = tool({"decompose", "--input", (d / "t.csv").string(), "--levels", "5", "--out", (d / "p").string()});
    EXPECT_EQ(r.code, cli::kExitUsage);
    EXPECT_NE(r.err.find("32"), std::string::npos);
}

TEST(Cli, DecomposeDwh) {
    const auto d = scratch("dwh");
    Trajectory traj;
    for (int k = 0; k < 80; ++k) traj.points.push_back(Waypoint{0.8 * k, 0.0, 1.0, 0.0, 8.0, 0.0});
    writeFile(d / "t.csv", io::trajectoryCsv(traj));
    const auto r = tool({"decompose", "--input", (d / "t.csv").string(), "--levels", "3", "--mode", "dwh", "--horizon",
                         "20", "--out", (d / "p").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"level_l1.csv", "level_l2.csv", "level_l3.csv", "metadata.json"}) EXPECT_TRUE(fs::exists(d / "p" / f)) << f;
}

TEST(Cli, TrainSmokeAndDeterminism) {
    const auto d = scratch("train");
    writeFile(d / "cfg.json", R"({"name": "baseline", "seed": 3, "optimizer": {"epochs": 2}})");
    const auto start = std::chrono::steady_clock::now();
    const auto r = tool({"train", "--config", (d / "cfg.json").string(), "--data", smallData().string(), "--out", (d / "a").string()});
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_LT(secs, 60.0);
    ASSERT_EQ(tool({"train", "--config", (d / "cfg.json").string(), "--data", smallData().string(), "--out", (d / "b").string()}).code, 0);
    const auto a = snapshot(d / "a");
    EXPECT_EQ(a, snapshot(d / "b"));
    EXPECT_TRUE(a.count("checkpoint.json"));
    EXPECT_EQ(a.at("training_log.csv").substr(0, 25), "step,reg,cls,col,ds,total");
    const auto ck = train::parseCheckpoint(a.at("checkpoint.json"));
    EXPECT_EQ(ck.kind, "policy");
    EXPECT_GT(ck.step, 0u);
}

TEST(Cli, TrainExclusiveSchemes) {
    const auto d = scratch("excl");
    writeFile(d / "cfg.json", R"({"loss": {"timenorm": {"enabled": true}, "truncation": {"enabled": true}}})");
    const auto r = tool({"train", "--config", (d / "cfg.json").string(), "--data", smallData().string(), "--out", (d / "a").string()});
    EXPECT_EQ(r.code, cli::kExitUsage);
    EXPECT_NE(r.err.find("exclusive"), std::string::npos);
}

TEST(Cli, TrainDivergenceIsRuntimeFailure) {
    const auto d = scratch("diverge");
    writeFile(d / "cfg.json", R"({"optimizer": {"lr": 1e306, "warmup_epochs": 0, "epochs": 2}})");
    const auto r = tool({"train", "--config", (d / "cfg.json").string(), "--data", smallData().string(), "--out", (d / "a").string()});
    EXPECT_EQ(r.code, cli::kExitRuntime);
    EXPECT_TRUE(fs::exists(d / "a" / "checkpoint.json"));
}

TEST(Cli, TrainMissingData) {
    const auto d = scratch("nodata");
    writeFile(d / "cfg.json", "{}");
    EXPECT_NE(tool({"train", "--config", (d / "cfg.json").string(), "--data", (d / "nope").string(), "--out", (d / "a").string()}).code, 0);
}

TEST(Cli, EvalExpertScoresOne) {
    const auto d = scratch("evalexp");
    writeFile(d / "expert.json", train::serializeCheckpoint(train::expertCheckpoint()));
    const auto r = tool({"eval", "--checkpoint", (d / "expert.json").string(), "--scenarios", "10", "--seed", "5", "--out", (d / "e").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto report = io::readText(d / "e" / "report.csv");
    EXPECT_NEAR(std::stod(readCsvColumn(report, "mean_composite", 0)), 1.0, 1e-9);
}

TEST(Cli, EvalZeroPolicyAndDeterminism) {
    const auto d = scratch("evalzero");
    const train::TrainConfig cfg;
    const train::Checkpoint ck{"policy", "zero", cfg, 0, 0, policy::PolicyParams::zeros(train::policyConfigFor(cfg))};
    writeFile(d / "zero.json", train::serializeCheckpoint(ck));
    const std::string path = (d / "zero.json").string();
    ASSERT_EQ(tool({"eval", "--checkpoint", path, "--scenarios", "6", "--seed", "9", "--out", (d / "a").string()}).code, 0);
    ASSERT_EQ(tool({"eval", "--checkpoint", path, "--scenarios", "6", "--seed", "9", "--out", (d / "b").string(), "--jobs", "4"}).code, 0);
    const auto a = snapshot(d / "a");
    EXPECT_EQ(a, snapshot(d / "b"));
    EXPECT_LE(std::stod(readCsvColumn(a.at("report.csv"), "mean_composite", 0)), 0.55);
}

TEST(Cli, EvalCorruptCheckpoint) {
    const auto d = scratch("corrupt");
    writeFile(d / "bad.json", R"({"format": "scopekit-checkpoint", "version": 1, "kind": "policy", "parameters": [1, 2)");
    const auto r = tool({"eval", "--checkpoint", (d / "bad.json").string(), "--scenarios", "2", "--seed", "1", "--out", (d / "e").string()});
    EXPECT_EQ(r.code, cli::kExitUsage);
    EXPECT_FALSE(r.err.empty());
}

TEST(Cli, CompareRuns) {
    const auto d = scratch("compare");
    writeFile(d / "expert.json", train::serializeCheckpoint(train::expertCheckpoint()));
    const train::TrainConfig cfg;
    writeFile(d / "zero.json", train::serializeCheckpoint(
                                   {"policy", "zero", cfg, 0, 0, policy::PolicyParams::zeros(train::policyConfigFor(cfg))}));
    ASSERT_EQ(tool({"eval", "--checkpoint", (d / "expert.json").string(), "--scenarios", "4", "--seed", "2", "--out", (d / "x").string()}).code, 0);
    ASSERT_EQ(tool({"eval", "--checkpoint", (d / "zero.json").string(), "--scenarios", "4", "--seed", "2", "--out", (d / "z").string()}).code, 0);
    ASSERT_EQ(tool({"eval", "--checkpoint", (d / "zero.json").string(), "--scenarios", "4", "--seed", "3", "--out", (d / "w").string()}).code, 0);

    auto r = tool({"compare", "--runs", (d / "x").string(), "--out", (d / "one.csv").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto one = io::readText(d / "one.csv");
    EXPECT_EQ(readCsvColumn(one, "mean_composite", 0), readCsvColumn(io::readText(d / "x" / "report.csv"), "mean_composite", 0));

    r = tool({"compare", "--runs", (d / "z").string(), (d / "z").string(), "--out", (d / "dup.csv").string()});
    ASSERT_EQ(r.code, 0);
    std::istringstream dup(io::readText(d / "dup.csv"));
    std::string header, row1, row2;
    std::getline(dup, header);
    std::getline(dup, row1);
    std::getline(dup, row2);
    EXPECT_EQ(row1, row2);

    r = tool({"compare", "--runs", (d / "z").string(), (d / "x").string(), "--out", (d / "rank.csv").string()});
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(readCsvColumn(io::readText(d / "rank.csv"), "config", 0), "expert");

    r = tool({"compare", "--runs", (d / "z").string(), (d / "w").string(), "--out", (d / "bad.csv").string()});
    EXPECT_EQ(r.code, cli::kExitUsage);
}

TEST(Cli, InstalledBinaryRuns) {
    const auto d = scratch("binary");
    const std::string cmd = std::string(SCOPEKIT_TOOL_PATH) + " gen --scenarios 1 --seed 4 --out " + (d / "g").string() +
                            " > /dev/null 2>&1";
    EXPECT_EQ(std::system(cmd.c_str()), 0);
    EXPECT_TRUE(fs::exists(d / "g" / "episode_0000" / "states.csv"));
    const std::string bad = std::string(SCOPEKIT_TOOL_PATH) + " decompose > /dev/null 2>&1";
    const int status = std::system(bad.c_str());
    EXPECT_EQ(WEXITSTATUS(status), 2);
}
