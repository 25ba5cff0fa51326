#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "opts/evaluator.hpp"
#include "opts/evoprompt.hpp"
#include "opts/llm.hpp"

namespace opts::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
    kExitOk = 0,
    kExitError = 1,
    kExitConfig = 2,
    kExitBudget = 3,
    kExitTransport = 4,
};

struct ModelSettings {
    std::string model;
    double temperature = 0.0;
    int max_tokens = 1024;

    friend bool operator==(const ModelSettings&, const ModelSettings&) = default;
};

struct BackendConfig {
    // "http" talks to an OpenAI-compatible endpoint; "replay" answers from a
    // recorded transcript only.
    std::string kind = "http";
    std::string base_url = "https://api.openai.com";
    std::string path = "/v1/chat/completions";
    // Name of the environment variable holding the API key.
    std::string api_key_env = "OPENAI_API_KEY";
    std::string transcript;
    int timeout_seconds = 120;
    int max_attempts = 5;
    int initial_backoff_ms = 1000;

    friend bool operator==(const BackendConfig&, const BackendConfig&) = default;
};

struct RunConfig {
    std::string dataset;
    // File holding the frozen few-shot block; empty for none.
    std::string few_shot;
    std::string seed_description;
    std::string algorithm = "DE";
    std::string mechanism = "TS";
    std::size_t population_size = 10;
    int generations = 50;
    std::size_t dev_size = 50;
    std::uint64_t seed = 0;
    bool return_best_ever = false;
    bool evaluate_test = true;
    bool case_insensitive = false;
    std::size_t parallelism = 4;
    // Strategy catalog file; empty for the built-in eleven.
    std::string strategies;
    BackendConfig backend;
    // Separate endpoint for the task-solving model (e.g. a self-hosted
    // server), selected by model name. Absent: both roles use `backend`.
    std::optional<BackendConfig> task_backend;
    ModelSettings designer{"gpt-4o-mini", 1.0, 2048};
    ModelSettings task{"llama-3-8b-instruct", 0.0, 1024};
    std::optional<long long> budget_limit;
    // "designer": only prompt-designing calls count; "all": task calls too.
    std::string budget_scope = "designer";
    std::string output_dir = "runs/run";

    friend bool operator==(const RunConfig&, const RunConfig&) = default;

    // Missing keys take defaults; unknown keys and wrong types throw
    // ConfigError.
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const fs::path& path);
    nlohmann::json to_json() const;
    void save(const fs::path& path) const;

    // Every problem found, in field order; empty when usable. Does not touch
    // the file system.
    std::vector<std::string> problems() const;
    // Throws ConfigError listing all problems.
    void validate() const;

    evoprompt::Algorithm algorithm_kind() const;
    std::optional<strategies::MechanismKind> mechanism_kind() const;
};

// Fixed file names inside a run directory.
struct RunPaths {
    fs::path dir;

    fs::path config() const { return dir / "config.json"; }
    fs::path checkpoints() const { return dir / "checkpoints" / "checkpoint.jsonl"; }
    fs::path history() const { return dir / "history.jsonl"; }
    fs::path transcript() const { return dir / "transcript.jsonl"; }
    fs::path evaluations() const { return dir / "evaluations.jsonl"; }
    fs::path report() const { return dir / "report.json"; }
    fs::path usage() const { return dir / "usage.json"; }
    fs::path summary() const { return dir / "summary.txt"; }
};

// Appends history and checkpoint records as the run commits them.
class RunStore final : public evoprompt::RunObserver {
public:
    explicit RunStore(RunPaths paths);

    void on_checkpoint(const evoprompt::RunState& state,
                       std::span<const evoprompt::HistoryRecord> new_records) override;
    void on_budget_halt(const evoprompt::RunState& last_checkpoint, long long budget_used) override;

    // Terminal record: status, chosen candidate, test accuracy.
    void write_final(const evoprompt::RunOutcome& outcome);

    const RunPaths& paths() const noexcept { return paths_; }

private:
    void append(const fs::path& file, const nlohmann::json& record);
    RunPaths paths_;
};

// Scores descriptions by running the task model over a fixed example set.
class DatasetScorer final : public evoprompt::PromptScorer {
public:
    DatasetScorer(std::vector<evaluator::TaskExample> examples, std::string few_shot,
                  const llm::LlmClient& task, evaluator::EvalOptions options, std::string split_name,
                  std::optional<fs::path> audit_log = std::nullopt);

    double score(const std::string& description) override;
    evaluator::ScoreReport last_report() const { return last_; }

private:
    std::vector<evaluator::TaskExample> examples_;
    std::string few_shot_;
    const llm::LlmClient& task_;
    evaluator::EvalOptions options_;
    std::string split_name_;
    std::optional<fs::path> audit_log_;
    evaluator::ScoreReport last_;
};

// Builds the raw upstream backend for a config; tests substitute their own.
using BackendFactory = std::function<std::shared_ptr<llm::Backend>(const RunConfig&)>;
std::shared_ptr<llm::Backend> make_backend(const BackendConfig& config);
// The configured backend, or a router sending task-model requests to
// `task_backend` when one is set.
std::shared_ptr<llm::Backend> make_upstream(const RunConfig& config);

struct CommandEnv {
    BackendFactory upstream = make_upstream;
    std::ostream* out = nullptr;  // defaults to std::cout
    std::ostream* err = nullptr;  // defaults to std::cerr
};

struct OptimizeOptions {
    std::optional<int> stop_after;
};

struct ResumeOptions {
    // Answer every call from this transcript instead of the configured backend.
    std::optional<fs::path> replay;
    std::optional<long long> budget_limit;
    std::optional<int> stop_after;
};

struct EvaluateOptions {
    std::string description;
    // Rewrite the description once with all strategies before scoring.
    bool apet = false;
    bool dev = true;
    bool test = true;
};

struct SimulateOptions {
    std::string algorithm = "DE";
    std::string mechanism = "TS";
    std::size_t population_size = 10;
    int generations = 30;
    std::uint64_t seed = 0;
    int runs = 1;
    std::size_t good_arm = 0;
    double good_probability = 0.6;
    double bad_probability = 0.05;
    std::optional<fs::path> output_dir;
};

int cmd_optimize(const RunConfig& config, const OptimizeOptions& options, CommandEnv& env);
int cmd_resume(const fs::path& run_dir, const ResumeOptions& options, CommandEnv& env);
int cmd_evaluate(const RunConfig& config, const EvaluateOptions& options, CommandEnv& env);
int cmd_simulate(const SimulateOptions& options, CommandEnv& env);
int cmd_report(const std::vector<fs::path>& run_dirs, const std::optional<fs::path>& data_dir,
               CommandEnv& env);

// Deterministic run report rebuilt from config.json, the checkpoint log and
// the history log. Throws LoadError on an empty history.
nlohmann::json build_run_report(const fs::path& run_dir);

// "55.67 (1.23)" for several values, "55.67" for one. Values are fractions
// and are shown as percentages; std is the population std.
std::string mean_std_cell(const std::vector<double>& values);

// Parses arguments and dispatches; returns the process exit code.
int run_cli(int argc, const char* const* argv, CommandEnv& env);

}  // namespace opts::cli
