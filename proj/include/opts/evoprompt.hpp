#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "opts/llm.hpp"
#include "opts/rng.hpp"
#include "opts/strategies.hpp"

namespace opts::evoprompt {

enum class Algorithm { GA, DE };

std::string_view algorithm_name(Algorithm algorithm);

struct Lineage {
    std::vector<long long> parent_ids;
    // Arm the selection mechanism picked for this candidate (inaction included).
    std::optional<std::size_t> arm;
    // True when the prompt-designing model rewrote the prompt with a strategy.
    bool strategy_applied = false;
    int generation = 0;
};

struct Candidate {
    long long id = 0;
    std::string description;
    std::optional<double> dev_score;
    Lineage lineage;

    // Throws UsageError for an unscored candidate.
    double score() const;
};

struct Population {
    std::vector<Candidate> members;
    int generation = 0;

    // Highest dev score, lowest position on ties.
    std::size_t best_index() const;
    const Candidate& best() const { return members.at(best_index()); }
};

// One child produced during a generation.
struct HistoryRecord {
    int generation = 0;
    int slot = 0;
    std::optional<long long> child_id;
    std::vector<long long> parent_ids;
    std::vector<double> parent_scores;
    std::optional<std::size_t> arm;
    bool strategy_applied = false;
    std::optional<int> reward;
    std::optional<double> child_score;
    bool accepted = false;
    std::string child_description;
    int designer_calls = 0;
    std::optional<std::string> error;
};

nlohmann::json to_json(const HistoryRecord& record);
HistoryRecord history_from_json(const nlohmann::json& j);

// Scores a task description on the development set.
class PromptScorer {
public:
    virtual ~PromptScorer() = default;
    virtual double score(const std::string& description) = 0;
};

// Meta-prompts for crossover/mutation and for seeding the population.
struct MetaPrompts {
    std::string ga_user;
    std::string de_user;
    std::string init_variations;
    std::string resample;

    static MetaPrompts defaults();
};

std::vector<llm::ChatMessage> render_ga_messages(const MetaPrompts& prompts, std::string_view first,
                                                 std::string_view second);
std::vector<llm::ChatMessage> render_de_messages(const MetaPrompts& prompts, std::string_view parent,
                                                 std::string_view donor1, std::string_view donor2,
                                                 std::string_view best);

// Contents of the last complete <prompt>...</prompt> pair, trimmed.
// Throws ParseError when there is none or it is empty.
std::string parse_generated_prompt(std::string_view reply);

// Pulls `expected` list items out of a numbered (or plain line) listing.
// Throws ParseError when fewer are present.
std::vector<std::string> parse_variations(std::string_view reply, std::size_t expected);

struct EvolutionSettings {
    Algorithm algorithm = Algorithm::DE;
    std::size_t population_size = 10;
    int generations = 50;
    std::size_t init_variations = 19;
    bool return_best_ever = false;

    // Throws ConfigError on an unusable combination.
    void validate() const;
};

// Everything a run needs to continue from a generation boundary.
struct RunState {
    Population population;
    std::optional<strategies::SelectionMechanism> mechanism;
    RngStreams rng = RngStreams::from_seed(0);
    long long next_candidate_id = 0;
    std::shared_ptr<llm::CallBudget> budget = std::make_shared<llm::CallBudget>();
    std::vector<HistoryRecord> history;
    std::optional<Candidate> best_ever;
    bool initialized = false;

    // Consistent deep copy; the budget stays shared.
    RunState snapshot() const { return *this; }
};

// Checkpoint record for the state at the end of `state.population.generation`.
nlohmann::json checkpoint_to_json(const RunState& state);
// Throws CorruptCheckpoint on any missing or malformed field.
RunState checkpoint_from_json(const nlohmann::json& j);

struct StepContext {
    const llm::LlmClient& designer;
    PromptScorer& scorer;
    const strategies::OptsResources& opts;
    const MetaPrompts& prompts;
};

// Seeds the population from one description: variations, top half by dev
// score, one paraphrase each.
Population init_population(const std::string& seed_description, const EvolutionSettings& settings,
                           StepContext& ctx, RunState& state);

// One DE generation; appends one history record per slot.
void de_generation(RunState& state, StepContext& ctx);

// One GA generation; next population is the best N of parents and children.
void ga_generation(RunState& state, const EvolutionSettings& settings, StepContext& ctx);

// Best N of the union, by score then older generation then lower id.
std::vector<Candidate> select_survivors(std::vector<Candidate> pool, std::size_t n);

// Arms applied anywhere in a candidate's ancestry, following history records.
std::vector<std::size_t> lineage_arms(std::span<const HistoryRecord> history, long long candidate_id);

// Receives durable progress from run().
class RunObserver {
public:
    virtual ~RunObserver() = default;
    // Called after initialization (generation 0) and after each generation.
    virtual void on_checkpoint(const RunState& state, std::span<const HistoryRecord> new_records) = 0;
    virtual void on_budget_halt(const RunState& last_checkpoint, long long budget_used) = 0;
};

enum class RunStatus { Completed, HaltedBudget, Interrupted };

std::string_view status_name(RunStatus status);

struct RunOutcome {
    RunStatus status = RunStatus::Completed;
    // Absent only when the budget ran out before initialization finished.
    std::optional<Candidate> best;
    std::optional<double> test_accuracy;
    int generations_completed = 0;
};

struct RunOptions {
    std::string seed_description;
    // Stop cleanly after this many generations in total, leaving the run
    // resumable.
    std::optional<int> stop_after;
    PromptScorer* test_scorer = nullptr;
};

// Initializes if needed, then runs generations up to settings.generations.
// A BudgetExceeded rolls `state` back to the last checkpoint and reports a
// budget halt.
RunOutcome run(RunState& state, const EvolutionSettings& settings, StepContext& ctx,
               const RunOptions& options, RunObserver* observer = nullptr);

struct ApetBaselineResult {
    std::string description;
    double dev_score = 0.0;
    std::optional<double> test_score;
};

// One all-strategies rewrite of the manual description, scored on dev and
// (when given) test.
ApetBaselineResult apet_baseline(const std::string& manual_description,
                                 const strategies::OptsResources& opts,
                                 const llm::LlmClient& designer, PromptScorer& dev_scorer,
                                 PromptScorer* test_scorer = nullptr);

}  // namespace opts::evoprompt
