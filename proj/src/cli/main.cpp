#include <iostream>

#include <CLI11.hpp>

#include "opts/cli.hpp"
#include "opts/errors.hpp"

namespace opts::cli {

namespace {

std::ostream& err_of(CommandEnv& env) { return env.err ? *env.err : std::cerr; }

// Flags that override config-file values.
struct Overrides {
    std::optional<std::string> algorithm;
    std::optional<std::string> mechanism;
    std::optional<std::size_t> population_size;
    std::optional<int> generations;
    std::optional<std::size_t> dev_size;
    std::optional<std::uint64_t> seed;
    std::optional<long long> budget_limit;
    std::optional<std::string> output_dir;
    std::optional<std::string> seed_description;

    void attach(CLI::App& app) {
        app.add_option("--algorithm", algorithm, "GA or DE");
        app.add_option("--mechanism", mechanism, "TS, US, APET or none");
        app.add_option("--population", population_size, "population size N");
        app.add_option("--generations", generations, "number of generations T");
        app.add_option("--dev-size", dev_size, "development set size");
        app.add_option("--seed", seed, "random seed");
        app.add_option("--budget-limit", budget_limit, "maximum upstream calls");
        app.add_option("--output", output_dir, "run directory");
        app.add_option("--seed-description", seed_description, "initial task description");
    }

    void apply(RunConfig& c) const {
        if (algorithm) c.algorithm = *algorithm;
        if (mechanism) c.mechanism = *mechanism;
        if (population_size) c.population_size = *population_size;
        if (generations) c.generations = *generations;
        if (dev_size) c.dev_size = *dev_size;
        if (seed) c.seed = *seed;
        if (budget_limit) c.budget_limit = *budget_limit;
        if (output_dir) c.output_dir = *output_dir;
        if (seed_description) c.seed_description = *seed_description;
    }
};

}  // namespace

int run_cli(int argc, const char* const* argv, CommandEnv& env) {
    CLI::App app{"Evolutionary prompt optimization with explicit strategy selection"};
    app.require_subcommand(1);

    std::string config_path;
    Overrides overrides;
    OptimizeOptions optimize_options;
    auto* optimize = app.add_subcommand("optimize", "run the optimizer from a config file");
    optimize->add_option("--config", config_path, "run config (JSON)")->required();
    optimize->add_option("--stop-after", optimize_options.stop_after,
                         "stop after this many generations, leaving the run resumable");
    overrides.attach(*optimize);

    std::string run_dir;
    ResumeOptions resume_options;
    std::optional<std::string> replay;
    auto* resume = app.add_subcommand("resume", "continue a run from its last checkpoint");
    resume->add_option("run_dir", run_dir, "run directory")->required();
    resume->add_option("--replay", replay, "answer every call from this transcript");
    resume->add_option("--budget-limit", resume_options.budget_limit, "new call budget");
    resume->add_option("--stop-after", resume_options.stop_after, "stop after this many generations");

    EvaluateOptions evaluate_options;
    std::string split = "both";
    auto* evaluate = app.add_subcommand("evaluate", "score a description on the dev and test splits");
    evaluate->add_option("--config", config_path, "run config (JSON)")->required();
    evaluate->add_option("--description", evaluate_options.description,
                         "description to score (default: the config's seed description)");
    evaluate->add_flag("--apet", evaluate_options.apet, "rewrite once with all strategies first");
    evaluate->add_option("--split", split, "dev, test or both")
        ->check(CLI::IsMember({"dev", "test", "both"}));
    overrides.attach(*evaluate);

    SimulateOptions sim;
    std::optional<std::string> sim_out;
    auto* simulate = app.add_subcommand("simulate", "run the optimizer in the synthetic world");
    simulate->add_option("--algorithm", sim.algorithm, "GA or DE");
    simulate->add_option("--mechanism", sim.mechanism, "TS, US, APET or none");
    simulate->add_option("--population", sim.population_size, "population size N");
    simulate->add_option("--generations", sim.generations, "number of generations T");
    simulate->add_option("--seed", sim.seed, "first seed");
    simulate->add_option("--runs", sim.runs, "number of consecutive seeds");
    simulate->add_option("--good-arm", sim.good_arm, "index of the helpful strategy");
    simulate->add_option("--good-p", sim.good_probability, "improvement probability of the helpful strategy");
    simulate->add_option("--bad-p", sim.bad_probability, "improvement probability of the others");
    simulate->add_option("--output", sim_out, "write run directories here");

    std::vector<std::string> report_dirs;
    std::optional<std::string> data_dir;
    auto* report = app.add_subcommand("report", "summarize one or more run directories");
    report->add_option("run_dirs", report_dirs, "run directories")->required();
    report->add_option("--data", data_dir, "write CSV data files here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, env.out ? *env.out : std::cout, err_of(env));
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*optimize || *evaluate) {
            RunConfig config = RunConfig::load(config_path);
            overrides.apply(config);
            if (*optimize) return cmd_optimize(config, optimize_options, env);
            evaluate_options.dev = split != "test";
            evaluate_options.test = split != "dev";
            return cmd_evaluate(config, evaluate_options, env);
        }
        if (*resume) {
            if (replay) resume_options.replay = *replay;
            return cmd_resume(run_dir, resume_options, env);
        }
        if (*simulate) {
            if (sim_out) sim.output_dir = *sim_out;
            return cmd_simulate(sim, env);
        }
        std::vector<fs::path> dirs(report_dirs.begin(), report_dirs.end());
        std::optional<fs::path> data;
        if (data_dir) data = *data_dir;
        return cmd_report(dirs, data, env);
    } catch (const ConfigError& e) {
        err_of(env) << "configuration error:\n";
        for (const auto& p : e.problems()) err_of(env) << "  - " << p << '\n';
        return kExitConfig;
    } catch (const BudgetExceeded& e) {
        err_of(env) << "halted: " << e.what() << '\n';
        return kExitBudget;
    } catch (const TransportError& e) {
        err_of(env) << "transport failure: " << e.what();
        if (e.status()) err_of(env) << " (HTTP " << e.status() << ")";
        if (!e.body().empty()) err_of(env) << "\n" << e.body().substr(0, 500);
        err_of(env) << '\n';
        return kExitTransport;
    } catch (const ScriptMiss& e) {
        err_of(env) << "replay failure: " << e.what() << '\n';
        return kExitTransport;
    } catch (const std::exception& e) {
        err_of(env) << "error: " << e.what() << '\n';
        return kExitError;
    }
}

}  // namespace opts::cli
