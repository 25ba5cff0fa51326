#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "opts/cli.hpp"
#include "opts/errors.hpp"
#include "opts/simharness.hpp"

namespace opts::cli {

namespace {

using nlohmann::json;

std::ostream& out_of(CommandEnv& env) { return env.out ? *env.out : std::cout; }

fs::path absolute_or_empty(const std::string& p) {
    return p.empty() ? fs::path{} : fs::absolute(p).lexically_normal();
}

// Relative paths are taken from the working directory once, so the stored
// snapshot works from anywhere.
RunConfig with_absolute_paths(RunConfig c) {
    c.dataset = absolute_or_empty(c.dataset).string();
    c.few_shot = absolute_or_empty(c.few_shot).string();
    c.strategies = absolute_or_empty(c.strategies).string();
    c.backend.transcript = absolute_or_empty(c.backend.transcript).string();
    c.output_dir = absolute_or_empty(c.output_dir).string();
    return c;
}

void check_inputs(const RunConfig& c, bool needs_output) {
    auto problems = c.problems();
    auto must_exist = [&](const std::string& key, const std::string& path) {
        if (!path.empty() && !fs::is_regular_file(path)) {
            problems.push_back("'" + key + "' file not found: " + path);
        }
    };
    must_exist("dataset", c.dataset);
    must_exist("few_shot", c.few_shot);
    must_exist("strategies", c.strategies);
    if (c.backend.kind == "replay") must_exist("backend.transcript", c.backend.transcript);
    if (needs_output && !c.output_dir.empty() && fs::exists(RunPaths{c.output_dir}.checkpoints())) {
        problems.push_back("'output_dir' already holds a run (use resume): " + c.output_dir);
    }
    if (!problems.empty()) {
        throw ConfigError(problems);
    }
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot read " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Everything a command needs besides the run state.
struct Session {
    RunConfig config;
    evaluator::DataSplit split;
    std::string few_shot;
    std::optional<strategies::OptsResources> resources;
    evoprompt::MetaPrompts prompts = evoprompt::MetaPrompts::defaults();
    std::shared_ptr<llm::Backend> backend;
    llm::LlmClient designer;
    llm::LlmClient task;
    std::unique_ptr<DatasetScorer> dev;
    std::unique_ptr<DatasetScorer> test;

    Session(RunConfig c, std::shared_ptr<llm::Backend> b, llm::CallBudget* budget,
            std::optional<fs::path> audit_log)
        : config(std::move(c)), backend(std::move(b)) {
        std::vector<evaluator::TaskExample> dataset;
        try {
            dataset = evaluator::load_dataset(config.dataset);
            // The split depends on the seed alone, so a resumed run sees the
            // same dev set.
            auto split_rng = RngStreams::from_seed(config.seed).split;
            split = evaluator::make_split(dataset, config.dev_size, split_rng);
        } catch (const LoadError& e) {
            throw ConfigError(std::string("dataset: ") + e.what());
        } catch (const SplitError& e) {
            throw ConfigError(std::string("dev_size: ") + e.what());
        }
        if (!config.few_shot.empty()) few_shot = read_text(config.few_shot);
        auto catalog = config.strategies.empty() ? strategies::StrategyCatalog::defaults()
                                                 : strategies::StrategyCatalog::load(config.strategies);
        resources.emplace(std::move(catalog));

        designer = llm::LlmClient(backend, config.designer.model, config.designer.temperature,
                                  config.designer.max_tokens, budget);
        task = llm::LlmClient(backend, config.task.model, config.task.temperature, config.task.max_tokens,
                              config.budget_scope == "all" ? budget : nullptr);
        const evaluator::EvalOptions eval{config.parallelism, config.case_insensitive};
        dev = std::make_unique<DatasetScorer>(split.dev, few_shot, task, eval, "dev", audit_log);
        test = std::make_unique<DatasetScorer>(split.test, few_shot, task, eval, "test", audit_log);
    }
};

evoprompt::EvolutionSettings settings_of(const RunConfig& c) {
    evoprompt::EvolutionSettings s;
    s.algorithm = c.algorithm_kind();
    s.population_size = c.population_size;
    s.generations = c.generations;
    s.return_best_ever = c.return_best_ever;
    return s;
}

std::string format_score(double v) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(4) << v;
    return ss.str();
}

std::string summary_text(const RunConfig& c, const evoprompt::RunOutcome& outcome,
                         const llm::CallBudget& budget) {
    std::ostringstream ss;
    ss << "status: " << evoprompt::status_name(outcome.status) << '\n';
    ss << "method: EvoPrompt(" << c.algorithm << ")"
       << (c.mechanism == "none" ? "" : "-OPTS(" + c.mechanism + ")") << ", seed " << c.seed << '\n';
    ss << "generations completed: " << outcome.generations_completed << " / " << c.generations << '\n';
    if (outcome.best) {
        ss << "best candidate " << outcome.best->id << " (dev " << format_score(outcome.best->score())
           << "): " << outcome.best->description << '\n';
    } else {
        ss << "best candidate: none (halted during initialization)\n";
    }
    if (outcome.test_accuracy) ss << "test accuracy: " << format_score(*outcome.test_accuracy) << '\n';
    ss << "budget used: " << budget.used();
    if (budget.limit()) ss << " / " << *budget.limit();
    ss << " (" << c.budget_scope << " calls)\n";
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) {
        throw Error("cannot write " + path.string());
    }
}

int execute(Session& session, evoprompt::RunState& state, const RunPaths& paths,
            std::optional<int> stop_after, CommandEnv& env) {
    const auto started = std::chrono::steady_clock::now();
    const auto settings = settings_of(session.config);
    RunStore store(paths);
    evoprompt::StepContext ctx{session.designer, *session.dev, *session.resources, session.prompts};
    evoprompt::RunOptions options;
    options.seed_description = session.config.seed_description;
    options.stop_after = stop_after;
    options.test_scorer = session.config.evaluate_test ? session.test.get() : nullptr;

    const auto outcome = evoprompt::run(state, settings, ctx, options, &store);
    store.write_final(outcome);

    write_file(paths.report(), build_run_report(paths.dir).dump(2) + "\n");
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (fs::exists(paths.usage())) {
        try {
            wall += json::parse(read_text(paths.usage())).value("wall_seconds", 0.0);
        } catch (const json::exception&) {
        }
    }
    const json usage = {{"budget_used", state.budget->used()},
                        {"budget_limit", state.budget->limit() ? json(*state.budget->limit()) : json()},
                        {"budget_scope", session.config.budget_scope},
                        {"wall_seconds", wall}};
    write_file(paths.usage(), usage.dump(2) + "\n");
    const auto summary = summary_text(session.config, outcome, *state.budget);
    write_file(paths.summary(), summary);
    out_of(env) << summary;

    return outcome.status == evoprompt::RunStatus::HaltedBudget ? kExitBudget : kExitOk;
}

std::shared_ptr<llm::Backend> recorded(const RunPaths& paths, std::shared_ptr<llm::Backend> upstream) {
    return std::make_shared<llm::TranscriptCache>(paths.transcript(), std::move(upstream),
                                                  llm::TranscriptMode::Record);
}

std::vector<json> read_jsonl(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw CorruptCheckpoint("cannot read " + path.string());
    }
    std::vector<json> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            records.push_back(json::parse(line));
        } catch (const json::exception& e) {
            throw CorruptCheckpoint(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

}  // namespace

int cmd_optimize(const RunConfig& raw, const OptimizeOptions& options, CommandEnv& env) {
    const RunConfig config = with_absolute_paths(raw);
    check_inputs(config, true);
    const RunPaths paths{config.output_dir};

    evoprompt::RunState state;
    state.rng = RngStreams::from_seed(config.seed);
    state.budget = std::make_shared<llm::CallBudget>(config.budget_limit);
    Session session(config, recorded(paths, env.upstream(config)), state.budget.get(), paths.evaluations());
    if (auto kind = config.mechanism_kind()) {
        state.mechanism = strategies::SelectionMechanism::make(*kind, session.resources->catalog.size());
    }
    fs::create_directories(paths.dir);
    config.save(paths.config());
    return execute(session, state, paths, options.stop_after, env);
}

int cmd_resume(const fs::path& run_dir, const ResumeOptions& options, CommandEnv& env) {
    const RunPaths paths{fs::absolute(run_dir)};
    if (!fs::exists(paths.config())) {
        throw ConfigError("no run found in " + paths.dir.string());
    }
    RunConfig config = RunConfig::load(paths.config());
    if (options.budget_limit) {
        config.budget_limit = options.budget_limit;
    }
    if (options.replay && !fs::is_regular_file(*options.replay)) {
        throw ConfigError("replay transcript not found: " + options.replay->string());
    }
    check_inputs(config, false);

    if (!fs::exists(paths.checkpoints())) {
        throw CorruptCheckpoint("no checkpoint log in " + paths.dir.string());
    }
    const auto records = read_jsonl(paths.checkpoints());
    if (!records.empty() && records.back().value("kind", "") == "final" &&
        records.back().value("status", "") == evoprompt::status_name(evoprompt::RunStatus::Completed)) {
        out_of(env) << "run in " << paths.dir.string() << " is already complete; nothing to resume\n";
        return kExitOk;
    }

    // Last committed generation, and the budget spent by any halt after it.
    const json* checkpoint = nullptr;
    bool halted = false;
    long long halted_used = 0;
    for (const auto& r : records) {
        const auto kind = r.value("kind", "");
        if (kind == "generation") {
            checkpoint = &r;
            halted = false;
        } else if (kind == "halt") {
            if (!r.contains("budget_used") || !r["budget_used"].is_number_integer()) {
                throw CorruptCheckpoint("halt record without budget_used");
            }
            halted = true;
            halted_used = r["budget_used"].get<long long>();
        } else if (kind != "final") {
            throw CorruptCheckpoint("unknown checkpoint record kind '" + kind + "'");
        }
    }

    evoprompt::RunState state;
    std::size_t history_records = 0;
    if (checkpoint) {
        state = evoprompt::checkpoint_from_json(*checkpoint);
        history_records = checkpoint->at("history_records").get<std::size_t>();
    } else if (halted) {
        // Halted before the first checkpoint: start over with the spent budget.
        state.rng = RngStreams::from_seed(config.seed);
    } else {
        throw CorruptCheckpoint("checkpoint log has no generation record");
    }
    if (halted) {
        state.budget->set_used(halted_used);
    }
    state.budget->set_limit(config.budget_limit);

    // Drop history written after the checkpoint; that work is redone.
    std::vector<std::string> kept;
    if (fs::exists(paths.history())) {
        std::ifstream in(paths.history());
        std::string line;
        while (kept.size() < history_records && std::getline(in, line)) {
            kept.push_back(line);
        }
    }
    if (kept.size() < history_records) {
        throw CorruptCheckpoint("history log has " + std::to_string(kept.size()) +
                                " records, checkpoint expects " + std::to_string(history_records));
    }
    for (const auto& line : kept) {
        try {
            state.history.push_back(evoprompt::history_from_json(json::parse(line)));
        } catch (const std::exception& e) {
            throw CorruptCheckpoint(std::string("history log: ") + e.what());
        }
    }

    std::shared_ptr<llm::Backend> upstream =
        options.replay ? std::make_shared<llm::TranscriptCache>(*options.replay, nullptr) : env.upstream(config);
    Session session(config, recorded(paths, std::move(upstream)), state.budget.get(), paths.evaluations());
    if (!checkpoint) {
        if (auto kind = config.mechanism_kind()) {
            state.mechanism = strategies::SelectionMechanism::make(*kind, session.resources->catalog.size());
        }
    }

    {
        std::string text;
        for (const auto& line : kept) text += line + "\n";
        write_file(paths.history(), text);
    }
    config.save(paths.config());
    out_of(env) << "resuming " << paths.dir.string() << " from generation " << state.population.generation
                << " (budget used " << state.budget->used() << ")\n";
    return execute(session, state, paths, options.stop_after, env);
}

int cmd_evaluate(const RunConfig& raw, const EvaluateOptions& options, CommandEnv& env) {
    const RunConfig config = with_absolute_paths(raw);
    check_inputs(config, false);
    const std::string description = options.description.empty() ? config.seed_description : options.description;
    if (description.empty()) {
        throw ConfigError("nothing to evaluate: no description given");
    }
    llm::CallBudget budget(config.budget_limit);
    Session session(config, env.upstream(config), &budget, std::nullopt);

    json result;
    if (options.apet) {
        const auto r = evoprompt::apet_baseline(description, *session.resources, session.designer, *session.dev,
                                                options.test ? session.test.get() : nullptr);
        result = {{"source_description", description},
                  {"description", r.description},
                  {"dev_accuracy", r.dev_score},
                  {"test_accuracy", r.test_score ? json(*r.test_score) : json()}};
    } else {
        result = {{"description", description}};
        if (options.dev) result["dev_accuracy"] = session.dev->score(description);
        if (options.test) result["test_accuracy"] = session.test->score(description);
    }
    result["dev_examples"] = session.split.dev.size();
    result["test_examples"] = session.split.test.size();
    result["budget_used"] = budget.used();
    out_of(env) << result.dump(2) << '\n';
    return kExitOk;
}

int cmd_simulate(const SimulateOptions& options, CommandEnv& env) {
    std::vector<std::string> problems;
    if (options.algorithm != "GA" && options.algorithm != "DE") problems.push_back("algorithm must be GA or DE");
    if (options.mechanism != "TS" && options.mechanism != "US" && options.mechanism != "APET" &&
        options.mechanism != "none") {
        problems.push_back("mechanism must be TS, US, APET or none");
    }
    if (options.runs < 1) problems.push_back("runs must be positive");
    if (options.generations < 0) problems.push_back("generations must be non-negative");
    const std::size_t strategies = strategies::StrategyCatalog::defaults().size();
    if (options.good_arm >= strategies) {
        problems.push_back("good arm must be below " + std::to_string(strategies));
    }
    if (!problems.empty()) throw ConfigError(problems);

    auto& out = out_of(env);
    double share_total = 0.0;
    for (int r = 0; r < options.runs; ++r) {
        const std::uint64_t seed = options.seed + static_cast<std::uint64_t>(r);
        const auto world = simharness::SyntheticWorld::one_good_arm(strategies, options.good_arm,
                                                                    options.good_probability,
                                                                    options.bad_probability, seed);
        simharness::SyntheticRunConfig sim;
        sim.algorithm = options.algorithm == "GA" ? evoprompt::Algorithm::GA : evoprompt::Algorithm::DE;
        RunConfig named;
        named.mechanism = options.mechanism;
        sim.mechanism = named.mechanism_kind();
        sim.population_size = options.population_size;
        sim.generations = options.generations;
        sim.seed = seed;

        std::optional<RunStore> store;
        std::optional<RunPaths> paths;
        if (options.output_dir) {
            paths = RunPaths{options.runs > 1 ? *options.output_dir / ("seed-" + std::to_string(seed))
                                              : *options.output_dir};
            if (fs::exists(paths->checkpoints())) {
                throw ConfigError("output directory already holds a run: " + paths->dir.string());
            }
            store.emplace(*paths);
            const json config = {{"simulation",
                                  {{"good_arm", options.good_arm},
                                   {"good_probability", options.good_probability},
                                   {"bad_probability", options.bad_probability},
                                   {"improvement_step", world.improvement_step}}},
                                 {"algorithm", options.algorithm},
                                 {"mechanism", options.mechanism},
                                 {"population_size", options.population_size},
                                 {"generations", options.generations},
                                 {"seed", seed}};
            write_file(paths->config(), config.dump(2) + "\n");
        }
        auto run = simharness::make_synthetic_run(world, sim, store ? &*store : nullptr);
        if (store) {
            store->write_final(run.outcome);
            write_file(paths->report(), build_run_report(paths->dir).dump(2) + "\n");
        }
        const double share =
            simharness::arm_share(run.state.history, options.good_arm, options.generations - 9);
        share_total += share;
        out << "seed " << seed << ": best dev " << format_score(run.outcome.best->score())
            << ", good-arm share in final 10 generations " << format_score(share) << ", designer calls "
            << run.designer_invocations << '\n';
    }
    if (options.runs > 1) {
        out << "mean good-arm share: " << format_score(share_total / options.runs) << '\n';
    }
    return kExitOk;
}

}  // namespace opts::cli
