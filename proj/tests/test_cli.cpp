#include <doctest.h>

#include <cstdlib>
#include <numeric>
#include <sys/wait.h>

#include "fake_endpoint.hpp"
#include "fixtures.hpp"
#include "opts/cli.hpp"
#include "opts/errors.hpp"

using namespace opts;
using namespace opts::cli;
using fixtures::read_file;
using nlohmann::json;

namespace {

// Command environment whose upstream is the toy world.
struct ToyCli {
    std::shared_ptr<llm::ScriptedBackend> backend = fixtures::toy_backend();
    std::ostringstream out;
    std::ostringstream err;
    CommandEnv env;

    ToyCli() {
        env.upstream = [this](const RunConfig&) { return backend; };
        env.out = &out;
        env.err = &err;
    }

    int cli(std::vector<std::string> args) {
        args.insert(args.begin(), "opts");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        return run_cli(static_cast<int>(argv.size()), argv.data(), env);
    }
};

json read_json(const fs::path& p) { return json::parse(read_file(p)); }

std::vector<json> read_lines(const fs::path& p) {
    std::vector<json> out;
    std::istringstream in(read_file(p));
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) out.push_back(json::parse(line));
    }
    return out;
}

int shell(const std::string& command) {
    const int status = std::system(command.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config round trip") {
    fixtures::TempDir dir;
    auto c = fixtures::toy_config(dir.path(), "run");
    c.mechanism = "US";
    c.budget_limit = 77;
    c.budget_scope = "all";
    c.backend.base_url = "http://localhost:8000";
    c.designer.temperature = 0.7;
    CHECK(RunConfig::from_json(c.to_json()) == c);
    c.save(dir / "c.json");
    CHECK(RunConfig::load(dir / "c.json") == c);
    CHECK(RunConfig::from_json(RunConfig::load(dir / "c.json").to_json()).to_json() == c.to_json());
}

TEST_CASE("config problems are listed exhaustively") {
    RunConfig c;
    c.algorithm = "PSO";
    c.mechanism = "greedy";
    c.population_size = 1;
    c.generations = -3;
    c.budget_scope = "task";
    const auto problems = c.problems();
    CHECK(problems.size() >= 7);
    for (const char* key : {"dataset", "seed_description", "algorithm", "mechanism", "population_size",
                            "generations", "budget.scope"}) {
        CAPTURE(key);
        CHECK(std::any_of(problems.begin(), problems.end(),
                          [&](const std::string& p) { return p.find(key) != std::string::npos; }));
    }
    try {
        c.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.problems() == problems);
    }

    RunConfig de;
    de.dataset = "d";
    de.seed_description = "s";
    de.population_size = 2;
    CHECK(de.problems().size() == 1);
    de.algorithm = "GA";
    CHECK(de.problems().empty());
}

TEST_CASE("config file errors") {
    CHECK_THROWS_AS(RunConfig::from_json({{"dataset", "d"}, {"populaton_size", 10}}), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json({{"population_size", "ten"}}), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json({{"budget", {{"limit", "lots"}}}}), ConfigError);
    try {
        RunConfig::from_json({{"bogus", 1}, {"generations", "x"}});
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.problems().size() == 2);
    }
    CHECK_THROWS_AS(RunConfig::load("/nonexistent/config.json"), ConfigError);
    const auto defaults = RunConfig::from_json(json::object());
    CHECK(defaults.population_size == 10);
    CHECK(defaults.generations == 50);
    CHECK(defaults.dev_size == 50);
    CHECK(defaults.mechanism == "TS");
}

TEST_CASE("optimize writes the run directory") {
    fixtures::TempDir dir;
    ToyCli t;
    auto c = fixtures::toy_config(dir.path(), "run");
    c.generations = 4;
    REQUIRE(cmd_optimize(c, {}, t.env) == kExitOk);
    const RunPaths paths{dir / "run"};
    for (const auto& p : {paths.config(), paths.checkpoints(), paths.history(), paths.transcript(),
                          paths.evaluations(), paths.report(), paths.usage(), paths.summary()}) {
        CAPTURE(p.string());
        CHECK(fs::exists(p));
    }
    const auto report = read_json(paths.report());
    CHECK(report["status"] == "completed");
    CHECK(report["generations_completed"] == 4);
    CHECK(report["trajectory"].size() == 5);
    CHECK(report["children"] == 40);
    CHECK(report["test_accuracy"].is_number());
    // Same numbers when rebuilt from the logs alone.
    CHECK(build_run_report(paths.dir) == report);
    // Designer calls only, by default.
    CHECK(read_json(paths.usage())["budget_used"] == fixtures::designer_invocations(*t.backend));

    // A second optimize into the same directory is refused.
    CHECK_THROWS_AS(cmd_optimize(c, {}, t.env), ConfigError);
}

TEST_CASE("arm bookkeeping in reports") {
    fixtures::TempDir dir;
    ToyCli t;
    auto ts = fixtures::toy_config(dir.path(), "ts");
    ts.generations = 5;
    REQUIRE(cmd_optimize(ts, {}, t.env) == kExitOk);
    const auto r = read_json(dir / "ts" / "report.json");
    const auto pulls = r["arm_pulls"].get<std::vector<long long>>();
    CHECK(pulls.size() == 12);
    CHECK(std::accumulate(pulls.begin(), pulls.end(), 0LL) == 10 * 5);
    CHECK(r["arm_trajectory"].size() == 6);

    auto none = fixtures::toy_config(dir.path(), "none");
    none.generations = 5;
    none.mechanism = "none";
    REQUIRE(cmd_optimize(none, {}, t.env) == kExitOk);
    const auto plain = read_json(dir / "none" / "report.json");
    CHECK_FALSE(plain.contains("arm_trajectory"));
    CHECK_FALSE(plain.contains("arm_pulls"));
    CHECK(plain["strategy_applications"] == 0);
    for (const auto& key : {"status", "best", "trajectory", "test_accuracy", "children"}) {
        CHECK(plain.contains(key));
    }

    auto us = fixtures::toy_config(dir.path(), "us");
    us.generations = 5;
    us.mechanism = "US";
    REQUIRE(cmd_optimize(us, {}, t.env) == kExitOk);
    const auto u = read_json(dir / "us" / "report.json")["arm_pulls"].get<std::vector<long long>>();
    CHECK(std::accumulate(u.begin(), u.end(), 0LL) == 10 * 5);
}

TEST_CASE("budget halt at 500 calls, then replay resume matches the reference") {
    fixtures::TempDir dir;
    ToyCli ref;
    auto reference = fixtures::toy_config(dir.path(), "reference");
    reference.generations = 40;
    REQUIRE(cmd_optimize(reference, {}, ref.env) == kExitOk);
    REQUIRE(read_json(dir / "reference" / "usage.json")["budget_used"].get<long long>() > 500);

    ToyCli t;
    auto limited = fixtures::toy_config(dir.path(), "limited");
    limited.generations = 40;
    limited.budget_limit = 500;
    CHECK(cmd_optimize(limited, {}, t.env) == kExitBudget);
    CHECK(fixtures::designer_invocations(*t.backend) == 500);
    const RunPaths paths{dir / "limited"};
    CHECK(read_json(paths.usage())["budget_used"] == 500);
    CHECK(read_json(paths.report())["status"] == "halted: budget");
    CHECK(read_file(paths.summary()).find("budget used: 500 / 500") != std::string::npos);

    ToyCli replay;
    ResumeOptions opts;
    opts.replay = dir / "reference" / "transcript.jsonl";
    opts.budget_limit = 100000;
    CHECK(cmd_resume(paths.dir, opts, replay.env) == kExitOk);
    CHECK(replay.backend->invocations() == 0);
    CHECK(read_file(paths.history()) == read_file(dir / "reference" / "history.jsonl"));
    CHECK(read_file(paths.report()) == read_file(dir / "reference" / "report.json"));
    // Replayed calls never reach upstream, so they cost nothing.
    CHECK(read_json(paths.usage())["budget_used"] == 500);
}

TEST_CASE("interrupted run resumed under replay gives a byte-equal report") {
    fixtures::TempDir dir;
    ToyCli ref;
    auto reference = fixtures::toy_config(dir.path(), "reference");
    REQUIRE(cmd_optimize(reference, {}, ref.env) == kExitOk);

    ToyCli t;
    auto partial = fixtures::toy_config(dir.path(), "partial");
    CHECK(cmd_optimize(partial, {7}, t.env) == kExitOk);
    CHECK(read_json(dir / "partial" / "report.json")["status"] == "interrupted");
    CHECK(read_json(dir / "partial" / "report.json")["generations_completed"] == 7);

    ToyCli replay;
    CHECK(replay.cli({"resume", (dir / "partial").string(), "--replay",
                      (dir / "reference" / "transcript.jsonl").string()}) == kExitOk);
    CHECK(read_file(dir / "partial" / "report.json") == read_file(dir / "reference" / "report.json"));
    CHECK(read_file(dir / "partial" / "history.jsonl") == read_file(dir / "reference" / "history.jsonl"));
}

TEST_CASE("replay that runs off the transcript is a transport-class failure") {
    fixtures::TempDir dir;
    ToyCli ref;
    auto short_run = fixtures::toy_config(dir.path(), "short");
    short_run.generations = 2;
    REQUIRE(cmd_optimize(short_run, {}, ref.env) == kExitOk);

    ToyCli t;
    auto longer = fixtures::toy_config(dir.path(), "longer");
    longer.generations = 6;
    CHECK(cmd_optimize(longer, {1}, t.env) == kExitOk);
    ToyCli replay;
    CHECK(replay.cli({"resume", (dir / "longer").string(), "--replay", (dir / "short" / "transcript.jsonl").string()}) ==
          kExitTransport);
}

TEST_CASE("resume edge cases") {
    fixtures::TempDir dir;
    ToyCli t;
    auto c = fixtures::toy_config(dir.path(), "done");
    c.generations = 2;
    REQUIRE(cmd_optimize(c, {}, t.env) == kExitOk);
    const auto before = read_file(dir / "done" / "checkpoints" / "checkpoint.jsonl");
    const auto calls = t.backend->invocations();
    t.out.str("");
    CHECK(cmd_resume(dir / "done", {}, t.env) == kExitOk);
    CHECK(t.out.str().find("already complete") != std::string::npos);
    CHECK(t.backend->invocations() == calls);
    CHECK(read_file(dir / "done" / "checkpoints" / "checkpoint.jsonl") == before);

    auto p = fixtures::toy_config(dir.path(), "cut");
    p.generations = 4;
    REQUIRE(cmd_optimize(p, {2}, t.env) == kExitOk);
    const RunPaths paths{dir / "cut"};
    auto records = read_lines(paths.checkpoints());
    const auto history_before = read_file(paths.history());
    std::string rewritten;
    for (auto& r : records) {
        if (r["kind"] == "generation") r.erase("rng");
        rewritten += r.dump() + "\n";
    }
    fixtures::write_file(paths.checkpoints(), rewritten);
    CHECK_THROWS_AS(cmd_resume(paths.dir, {}, t.env), CorruptCheckpoint);
    CHECK(read_file(paths.history()) == history_before);
    CHECK(t.cli({"resume", paths.dir.string()}) == kExitError);

    CHECK_THROWS_AS(cmd_resume(dir / "missing", {}, t.env), ConfigError);
}

TEST_CASE("evaluate scores a description on both splits") {
    fixtures::TempDir dir;
    ToyCli t;
    auto c = fixtures::toy_config(dir.path(), "eval");
    REQUIRE(cmd_evaluate(c, {"Answer the question.", false, true, true}, t.env) == kExitOk);
    const auto r = json::parse(t.out.str());
    CHECK(r["dev_examples"] == 20);
    CHECK(r["test_examples"] == 20);
    CHECK(r["budget_used"] == 0);
    CHECK(r["dev_accuracy"].get<double>() >= 0.0);

    ToyCli all;
    c.budget_scope = "all";
    REQUIRE(cmd_evaluate(c, {"Answer the question.", false, true, true}, all.env) == kExitOk);
    const auto ra = json::parse(all.out.str());
    CHECK(ra["budget_used"] == 40);
    CHECK(ra["dev_accuracy"] == r["dev_accuracy"]);

    ToyCli apet;
    c.budget_scope = "designer";
    REQUIRE(cmd_evaluate(c, {"Answer the question.", true, true, false}, apet.env) == kExitOk);
    const auto rp = json::parse(apet.out.str());
    CHECK(rp["budget_used"] == 1);
    CHECK(rp["description"] != rp["source_description"]);
    CHECK(rp["test_accuracy"].is_null());
}

TEST_CASE("report aggregates seeds as mean (std)") {
    fixtures::TempDir dir;
    ToyCli t;
    std::vector<std::string> args = {"report"};
    for (int seed = 1; seed <= 3; ++seed) {
        auto c = fixtures::toy_config(dir.path(), "seed" + std::to_string(seed));
        c.generations = 3;
        c.seed = static_cast<std::uint64_t>(seed);
        REQUIRE(cmd_optimize(c, {}, t.env) == kExitOk);
        args.push_back(c.output_dir);
    }
    t.out.str("");
    args.push_back("--data");
    args.push_back((dir / "data").string());
    REQUIRE(t.cli(args) == kExitOk);
    const auto text = t.out.str();
    const auto row = text.substr(text.find("EvoPrompt(DE)-OPTS(TS)"));
    CHECK(row.find(" (") != std::string::npos);
    CHECK(text.find("Arm selection frequency") != std::string::npos);
    CHECK(text.find("(inaction)") != std::string::npos);
    for (const char* f : {"generations.csv", "arms.csv", "summary.csv"}) CHECK(fs::exists(dir / "data" / f));
    CHECK(read_file(dir / "data" / "summary.csv").find("seed2,completed") != std::string::npos);

    ToyCli single;
    REQUIRE(single.cli({"report", (dir / "seed1").string()}) == kExitOk);
    const auto one = single.out.str();
    const auto one_row = one.substr(one.find("EvoPrompt(DE)-OPTS(TS)"));
    CHECK(one_row.substr(0, one_row.find('\n')).find('(', 22) == std::string::npos);

    auto other = fixtures::toy_config(dir.path(), "other");
    other.generations = 2;
    REQUIRE(cmd_optimize(other, {}, t.env) == kExitOk);
    ToyCli mixed;
    CHECK(mixed.cli({"report", (dir / "seed1").string(), (dir / "other").string()}) == kExitConfig);
    CHECK(mixed.err.str().find("generations") != std::string::npos);
}

TEST_CASE("mean and population std cells") {
    CHECK(mean_std_cell({0.5}) == "50.00");
    // Population std of (0.4, 0.6) is 0.1.
    CHECK(mean_std_cell({0.4, 0.6}) == "50.00 (10.00)");
    CHECK(mean_std_cell({0.2, 0.2, 0.2}) == "20.00 (0.00)");
    CHECK(mean_std_cell({}) == "-");
}

TEST_CASE("report refuses an empty history") {
    fixtures::TempDir dir;
    ToyCli t;
    auto c = fixtures::toy_config(dir.path(), "empty");
    c.generations = 0;
    REQUIRE(cmd_optimize(c, {}, t.env) == kExitOk);
    CHECK(t.cli({"report", (dir / "empty").string()}) == kExitError);
}

TEST_CASE("simulate runs offline and writes a standard run directory") {
    fixtures::TempDir dir;
    ToyCli t;
    SimulateOptions s;
    s.generations = 5;
    s.good_arm = 2;
    s.output_dir = dir / "sim";
    REQUIRE(cmd_simulate(s, t.env) == kExitOk);
    CHECK(t.backend->invocations() == 0);
    const auto r = read_json(dir / "sim" / "report.json");
    const auto pulls = r["arm_pulls"].get<std::vector<long long>>();
    CHECK(std::accumulate(pulls.begin(), pulls.end(), 0LL) == 50);
    CHECK(t.cli({"report", (dir / "sim").string()}) == kExitOk);

    s.good_arm = 11;
    CHECK_THROWS_AS(cmd_simulate(s, t.env), ConfigError);
}

TEST_CASE("command line: flags override the file, bad configs exit 2") {
    fixtures::TempDir dir;
    auto c = fixtures::toy_config(dir.path(), "flags");
    c.save(dir / "config.json");
    ToyCli t;
    REQUIRE(t.cli({"optimize", "--config", (dir / "config.json").string(), "--generations", "2", "--mechanism",
                   "US"}) == kExitOk);
    const auto saved = RunConfig::load(dir / "flags" / "config.json");
    CHECK(saved.generations == 2);
    CHECK(saved.mechanism == "US");

    ToyCli bad;
    CHECK(bad.cli({"optimize", "--config", (dir / "config.json").string(), "--population", "1", "--algorithm",
                   "XX", "--output", (dir / "other").string()}) == kExitConfig);
    CHECK(bad.err.str().find("population_size") != std::string::npos);
    CHECK(bad.err.str().find("algorithm") != std::string::npos);
    CHECK(bad.backend->invocations() == 0);
    CHECK(bad.cli({"frobnicate"}) == kExitConfig);
}

TEST_CASE("the binary: exit codes for config and transport failures") {
    fixtures::TempDir dir;
    const std::string cli = OPTS_CLI_PATH;
    fixtures::write_file(dir / "bad.json", R"({"dataset": "/nonexistent.json", "population_size": 1})");
    CHECK(shell(cli + " optimize --config " + (dir / "bad.json").string() + " 2> " + (dir / "err.txt").string()) ==
          2);
    CHECK(read_file(dir / "err.txt").find("seed_description") != std::string::npos);

    int hits = 0;
    fixtures::FakeEndpoint server([&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 401;
        res.set_content(R"({"error": {"message": "invalid api key"}})", "application/json");
    });
    auto c = fixtures::toy_config(dir.path(), "http");
    c.backend.base_url = server.url();
    c.backend.api_key_env = "OPTS_TEST_UNSET_KEY";
    c.save(dir / "http.json");
    CHECK(shell(cli + " optimize --config " + (dir / "http.json").string() + " > /dev/null 2> " +
                (dir / "err2.txt").string()) == 4);
    CHECK(hits == 1);
    CHECK(read_file(dir / "err2.txt").find("401") != std::string::npos);
}

TEST_CASE("task model can live on its own endpoint") {
    auto reply = [](const std::string& text) {
        return json{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}}}.dump();
    };
    std::vector<std::string> designer_models;
    std::vector<std::string> task_models;
    fixtures::FakeEndpoint designer_server([&](const httplib::Request& req, httplib::Response& res) {
        designer_models.push_back(json::parse(req.body)["model"]);
        res.set_content(reply("from designer"), "application/json");
    });
    fixtures::FakeEndpoint task_server([&](const httplib::Request& req, httplib::Response& res) {
        task_models.push_back(json::parse(req.body)["model"]);
        res.set_content(reply("from task"), "application/json");
    });
    RunConfig c;
    c.backend.base_url = designer_server.url();
    c.task_backend.emplace();
    c.task_backend->base_url = task_server.url();
    CHECK(RunConfig::from_json(c.to_json()) == c);

    auto upstream = make_upstream(c);
    llm::CallBudget budget;
    const llm::LlmClient designer(upstream, c.designer.model, 1.0, 64, &budget);
    const llm::LlmClient task(upstream, c.task.model, 0.0, 64);
    CHECK(designer.ask({{llm::Role::User, "hi"}}) == "from designer");
    CHECK(task.ask({{llm::Role::User, "hi"}}) == "from task");
    CHECK(designer_models == std::vector<std::string>{c.designer.model});
    CHECK(task_models == std::vector<std::string>{c.task.model});
    CHECK(budget.used() == 1);

    c.dataset = "d";
    c.seed_description = "s";
    CHECK(c.problems().empty());
    c.task.model = c.designer.model;
    REQUIRE(c.problems().size() == 1);
    CHECK(c.problems().front().find("task.model") != std::string::npos);
}
