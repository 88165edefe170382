#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <iostream>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "scopekit/cli.hpp"
#include "scopekit/errors.hpp"
#include "scopekit/evaluation.hpp"
#include "scopekit/io.hpp"
#include "scopekit/rng.hpp"
#include "scopekit/simulator.hpp"
#include "scopekit/training.hpp"
#include "scopekit/wavelet.hpp"

namespace scopekit::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

/// Raised for bad flags or inputs that should exit with the usage code.
class UsageError : public Error {
public:
    using Error::Error;
};

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first failure by
/// index is rethrown after all workers finish.
void parallelFor(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

std::string episodeName(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "episode_%04zu", i);
    return buf;
}

sim::ScenarioConfig loadScenarioConfig(const std::string& path) {
    if (path.empty()) return {};
    json j;
    try {
        j = json::parse(io::readText(path));
    } catch (const json::exception& e) {
        throw ConfigError(path + ": not valid JSON: " + e.what());
    } catch (const IoError& e) {
        throw UsageError(e.what());
    }
    return io::scenarioConfigFromJson(j);
}

// ---------------------------------------------------------------------------

struct GenArgs {
    std::size_t scenarios = 0;
    std::uint64_t seed = 0;
    std::string out;
    std::string config;
    std::size_t jobs = 1;
};

int cmdGen(const GenArgs& a, std::ostream& out, std::ostream& err) {
    Stopwatch clock;
    const auto cfg = loadScenarioConfig(a.config);
    const fs::path dir(a.out);
    io::ensureDirectory(dir);
    if (a.scenarios == 0) err << "warning: zero scenarios requested, the dataset is empty\n";

    std::vector<std::uint64_t> seeds(a.scenarios);
    for (std::size_t i = 0; i < a.scenarios; ++i) seeds[i] = subSeed(a.seed, "gen-scenario", i);
    parallelFor(a.scenarios, a.jobs, [&](std::size_t i) {
        const auto sc = sim::sampleScenario(seeds[i], cfg);
        const auto log = sim::expertRollout(sc, {false, false});
        io::writeEpisode(dir / episodeName(i), log);
    });

    io::Manifest m;
    m.command = "gen";
    m.config_hash = io::hex64(fnv1a64(io::toJson(cfg).dump()));
    m.seed = a.seed;
    if (!a.config.empty()) m.inputs.push_back(a.config);
    for (std::size_t i = 0; i < a.scenarios; ++i) m.outputs.push_back(episodeName(i));
    m.extra["scenarios"] = a.scenarios;
    m.extra["scenario_seeds"] = seeds;
    m.extra["scenario_config"] = io::toJson(cfg);
    m.wall_clock_seconds = clock.seconds();
    io::writeManifest(dir, m);
    out << "wrote " << a.scenarios << " expert episodes to " << dir.string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct DecomposeArgs {
    std::string input;
    std::size_t levels = 1;
    std::string mode = "dwt";
    std::size_t horizon = 0;
    std::string out;
    bool verify = false;
};

int cmdDecompose(const DecomposeArgs& a, std::ostream& out, std::ostream&) {
    Stopwatch clock;
    Trajectory traj;
    try {
        traj = io::readTrajectoryCsv(a.input);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    if (traj.points.empty()) throw UsageError("input trajectory is empty");
    const Matrix pos = positionChannels(channelMatrix(traj));
    const std::vector<std::string> names{"px", "py"};
    const fs::path dir(a.out);
    std::vector<fs::path> files;
    double max_err = 0.0;
    try {
        if (a.mode == "dwt") {
            const auto pyramid = wavelet::decompose(pos, a.levels);
            files = io::writePyramid(dir, pyramid, names);
            if (a.verify) {
                const Matrix back = wavelet::reconstruct(pyramid);
                for (std::size_t i = 0; i < pos.flat().size(); ++i) {
                    max_err = std::max(max_err, std::abs(back.data()[i] - pos.data()[i]));
                }
            }
        } else if (a.mode == "dwh") {
            if (a.horizon == 0) throw UsageError("--mode dwh needs --horizon H >= 1");
            if (a.verify) throw UsageError("--verify applies to --mode dwt only");
            files = io::writeScopedStack(dir, wavelet::dwhDecompose(pos, a.levels, a.horizon), names,
                                         pos.rows());
        } else {
            throw UsageError("unknown --mode \"" + a.mode + "\" (expected dwt or dwh)");
        }
    } catch (const LengthError& e) {
        throw UsageError(e.what());
    } catch (const ParameterError& e) {
        throw UsageError(e.what());
    }
    io::Manifest m;
    m.command = "decompose";
    m.config_hash = io::hex64(fnv1a64(a.mode + ":" + std::to_string(a.levels) + ":" + std::to_string(a.horizon)));
    m.inputs.push_back(a.input);
    for (const auto& f : files) m.outputs.push_back(f.filename().string());
    m.outputs.push_back("metadata.json");
    m.extra["levels"] = a.levels;
    m.extra["mode"] = a.mode;
    m.wall_clock_seconds = clock.seconds();
    io::writeManifest(dir, m);
    out << "wrote " << files.size() << " component files to " << dir.string() << "\n";
    if (a.verify) out << "max_abs_error " << io::formatReal(max_err) << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string config;
    std::string data;
    std::string out;
};

std::vector<sim::EpisodeLog> loadEpisodes(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw UsageError("data directory does not exist: " + dir.string());
    std::vector<sim::EpisodeLog> logs;
    for (const auto& p : io::episodeDirectories(dir)) logs.push_back(io::readEpisode(p));
    return logs;
}

int cmdTrain(const TrainArgs& a, std::ostream& out, std::ostream& err) {
    Stopwatch clock;
    std::string text;
    try {
        text = io::readText(a.config);
    } catch (const IoError& e) {
        throw UsageError(e.what());
    }
    const auto cfg = train::parseTrainConfig(text);
    const auto episodes = loadEpisodes(a.data);
    const auto data = train::buildDataset(episodes, cfg.dataset_stride, cfg.history_steps, cfg.policy.future_steps);
    const auto result = train::trainRun(cfg, data);

    const fs::path dir(a.out);
    io::ensureDirectory(dir);
    train::Checkpoint ck;
    ck.kind = "policy";
    ck.name = cfg.name;
    ck.config = cfg;
    ck.seed = cfg.seed;
    ck.step = result.steps;
    ck.params = result.params;
    io::writeText(dir / "checkpoint.json", train::serializeCheckpoint(ck));
    io::writeText(dir / "training_log.csv", io::trainingLogCsv(result.log));

    io::Manifest m;
    m.command = "train";
    m.config_hash = io::hex64(train::configHash(cfg));
    m.seed = cfg.seed;
    m.inputs = {a.config, a.data};
    m.outputs = {"checkpoint.json", "training_log.csv"};
    m.extra["config_name"] = cfg.name;
    m.extra["samples"] = data.size();
    m.extra["steps"] = result.steps;
    m.extra["parameter_count"] = result.params.count();
    m.extra["aborted"] = result.aborted;
    m.wall_clock_seconds = clock.seconds();
    io::writeManifest(dir, m);
    if (result.aborted) {
        err << "training aborted: " << result.diagnostics << " (last good checkpoint written)\n";
        return kExitRuntime;
    }
    out << "trained " << cfg.name << " for " << result.steps << " steps on " << data.size() << " samples\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string checkpoint;
    std::size_t scenarios = 0;
    std::uint64_t seed = 0;
    std::string out;
    std::string config;
    std::size_t jobs = 1;
    std::size_t replan = 10;
    bool save_episodes = false;
};

int cmdEval(const EvalArgs& a, std::ostream& out, std::ostream&) {
    Stopwatch clock;
    train::Checkpoint ck;
    std::string ck_text;
    try {
        ck_text = io::readText(a.checkpoint);
        ck = train::parseCheckpoint(ck_text);
    } catch (const IoError& e) {
        throw UsageError(e.what());
    } catch (const DataError& e) {
        throw UsageError(e.what());
    }
    if (a.scenarios == 0) throw UsageError("--scenarios must be at least 1");
    if (a.replan == 0) throw UsageError("--replan must be at least 1");
    const auto cfg = loadScenarioConfig(a.config);
    std::shared_ptr<const policy::PolicyParams> params;
    std::size_t history = cfg.history_steps;
    if (ck.kind == "policy") {
        params = std::make_shared<const policy::PolicyParams>(*ck.params);
        history = ck.config ? ck.config->history_steps : (params->config.feature_dim - 12) / 4;
        if (policy::featureLength(history) != params->config.feature_dim) {
            throw UsageError("checkpoint feature size does not match any history length");
        }
    }

    const fs::path dir(a.out);
    io::ensureDirectory(dir);
    eval::RunScores run;
    run.config = ck.name.empty() ? ck.kind : ck.name;
    run.scenario_seeds.resize(a.scenarios);
    run.scores.resize(a.scenarios);
    for (std::size_t i = 0; i < a.scenarios; ++i) run.scenario_seeds[i] = subSeed(a.seed, "eval-scenario", i);

    parallelFor(a.scenarios, a.jobs, [&](std::size_t i) {
        const auto sc = sim::sampleScenario(run.scenario_seeds[i], cfg);
        const auto expert = sim::expertRollout(sc, {false, false});
        std::unique_ptr<sim::Planner> planner;
        if (params) {
            planner = std::make_unique<sim::PolicyPlanner>(params, history);
        } else {
            planner = std::make_unique<sim::ExpertPlanner>(sc, cfg.future_steps);
        }
        const auto log = sim::closedLoopRollout(*planner, sc, a.replan, {false, a.save_episodes});
        run.scores[i] = eval::scoreEpisode(log, sc, expert);
        if (a.save_episodes) io::writeEpisode(dir / "episodes" / episodeName(i), log);
    });

    const auto report = eval::compareRuns({run});
    io::writeText(dir / "report.csv", eval::reportCsv(report));
    io::writeText(dir / "scores.csv", io::scoresCsv(run));

    io::Manifest m;
    m.command = "eval";
    m.config_hash = io::hex64(fnv1a64(ck_text + io::toJson(cfg).dump()));
    m.seed = a.seed;
    m.inputs.push_back(a.checkpoint);
    if (!a.config.empty()) m.inputs.push_back(a.config);
    m.outputs = {"report.csv", "scores.csv"};
    if (a.save_episodes) m.outputs.push_back("episodes");
    m.extra["config_name"] = run.config;
    m.extra["scenarios"] = a.scenarios;
    m.extra["scenario_seeds"] = run.scenario_seeds;
    m.extra["replan_interval"] = a.replan;
    m.wall_clock_seconds = clock.seconds();
    io::writeManifest(dir, m);
    const auto& row = report.rows.front();
    out << run.config << ": mean composite " << io::formatReal(row.mean_composite) << " (std "
        << io::formatReal(row.std_composite) << ") over " << a.scenarios << " scenarios\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct CompareArgs {
    std::vector<std::string> runs;
    std::string out;
};

int cmdCompare(const CompareArgs& a, std::ostream& out, std::ostream&) {
    std::vector<eval::RunScores> runs;
    for (const auto& r : a.runs) {
        const fs::path dir(r);
        json manifest;
        std::string scores;
        try {
            manifest = io::readManifest(dir);
            scores = io::readText(dir / "scores.csv");
        } catch (const Error& e) {
            throw UsageError(e.what());
        }
        const std::string name = manifest.value("config_name", dir.filename().string());
        runs.push_back(io::parseScoresCsv(scores, name));
    }
    eval::Report report;
    try {
        report = eval::compareRuns(runs);
    } catch (const DataError& e) {
        throw UsageError(e.what());
    }
    const fs::path path(a.out);
    if (path.has_parent_path()) io::ensureDirectory(path.parent_path());
    io::writeText(path, eval::reportCsv(report));
    for (std::size_t idx : report.ranking) {
        const auto& row = report.rows[idx];
        out << row.rank << ". " << row.config << " " << io::formatReal(row.mean_composite) << " +- "
            << io::formatReal(row.std_composite) << "\n";
    }
    return kExitOk;
}

std::string scenarioSchema() {
    std::ostringstream s;
    s << "Scenario config (JSON object, every key optional, unknown keys rejected):\n  ";
    const auto j = io::toJson(sim::ScenarioConfig{});
    std::size_t col = 2;
    for (const auto& [k, v] : j.items()) {
        const std::string item = k + "=" + v.dump() + " ";
        if (col + item.size() > 100) {
            s << "\n  ";
            col = 2;
        }
        s << item;
        col += item.size();
    }
    s << "\n";
    return s.str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"scopekit: decision-scope supervision toolkit with a closed-loop driving sandbox", "scopekit"};
    app.set_version_flag("--version", SCOPEKIT_VERSION);
    app.require_subcommand(1);
    app.footer("Exit codes: 0 ok, 2 usage or config error, 3 runtime failure.\n\n" + train::configSchema() + "\n" +
               scenarioSchema());

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "Generate expert demonstration episodes");
    g->add_option("--scenarios", gen.scenarios, "Number of scenarios")->required();
    g->add_option("--seed", gen.seed, "Root seed")->required();
    g->add_option("--out", gen.out, "Output directory")->required();
    g->add_option("--config", gen.config, "Scenario config JSON");
    g->add_option("--jobs", gen.jobs, "Worker threads (output is identical for any value)")->check(CLI::PositiveNumber);

    DecomposeArgs dec;
    auto* d = app.add_subcommand("decompose", "Wavelet (dwt) or strided (dwh) decomposition of a trajectory CSV");
    d->add_option("--input", dec.input, "Trajectory CSV (t,px,py,cos_h,sin_h,vx,vy)")->required();
    d->add_option("--levels", dec.levels, "Levels N")->required();
    d->add_option("--mode", dec.mode, "dwt or dwh")->capture_default_str();
    d->add_option("--horizon", dec.horizon, "Samples kept per level (dwh)");
    d->add_option("--out", dec.out, "Output directory")->required();
    d->add_flag("--verify", dec.verify, "Reconstruct and print the max abs error (dwt)");

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train a policy on generated episodes");
    t->add_option("--config", tr.config, "Training config JSON")->required();
    t->add_option("--data", tr.data, "Directory written by gen")->required();
    t->add_option("--out", tr.out, "Output directory")->required();

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Closed-loop evaluation on freshly sampled scenarios");
    e->add_option("--checkpoint", ev.checkpoint, "Checkpoint JSON (kind policy or expert)")->required();
    e->add_option("--scenarios", ev.scenarios, "Number of scenarios")->required();
    e->add_option("--seed", ev.seed, "Root seed")->required();
    e->add_option("--out", ev.out, "Output directory")->required();
    e->add_option("--config", ev.config, "Scenario config JSON");
    e->add_option("--jobs", ev.jobs, "Worker threads (output is identical for any value)")->check(CLI::PositiveNumber);
    e->add_option("--replan", ev.replan, "Executed steps between replans")->capture_default_str();
    e->add_flag("--save-episodes", ev.save_episodes, "Also write every closed-loop episode log");

    CompareArgs cmp;
    auto* c = app.add_subcommand("compare", "Compare eval runs scored on the same scenarios");
    c->add_option("--runs", cmp.runs, "Eval output directories")->required()->expected(1, -1);
    c->add_option("--out", cmp.out, "Report CSV path")->required();

    std::vector<std::string> rev(args.rbegin(), args.rend());
    if (!rev.empty()) rev.pop_back();
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << SCOPEKIT_VERSION << "\n";
        return kExitOk;
    } catch (const CLI::ParseError& ex) {
        err << "error: " << ex.what() << "\n";
        return kExitUsage;
    }

    try {
        if (g->parsed()) return cmdGen(gen, out, err);
        if (d->parsed()) return cmdDecompose(dec, out, err);
        if (t->parsed()) return cmdTrain(tr, out, err);
        if (e->parsed()) return cmdEval(ev, out, err);
        if (c->parsed()) return cmdCompare(cmp, out, err);
    } catch (const UsageError& ex) {
        err << "error: " << ex.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& ex) {
        err << "config error: " << ex.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace scopekit::cli
