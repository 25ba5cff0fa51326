#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "opts/llm.hpp"
#include "opts/rng.hpp"

namespace opts::evaluator {

struct TaskExample {
    std::string input;
    std::string target;

    friend bool operator==(const TaskExample&, const TaskExample&) = default;
};

// Reads {"examples": [{"input": ..., "target": ...}, ...]} preserving order.
// Throws LoadError naming the line (syntax) or the record index (schema).
std::vector<TaskExample> load_dataset(const std::filesystem::path& path);
std::vector<TaskExample> parse_dataset(std::string_view json_text, std::string_view source = "<memory>");

struct DataSplit {
    std::vector<TaskExample> dev;
    std::vector<TaskExample> test;
    // Positions in the source dataset, both ascending.
    std::vector<std::size_t> dev_indices;
    std::vector<std::size_t> test_indices;
};

// Uniform random dev subset of dev_size; dev and test both keep dataset
// order. Throws SplitError unless 0 < dev_size < dataset size.
DataSplit make_split(std::span<const TaskExample> dataset, std::size_t dev_size, Rng& rng);

// Optimized description, frozen few-shot block, then the question.
struct PromptTemplate {
    std::string task_description;
    std::string few_shot_block;

    std::string render(std::string_view input) const;
};

// Text after the last case-insensitive "the answer is", up to end of line,
// trimmed, with one trailing period removed. Absent when the marker never
// occurs.
std::optional<std::string> extract_answer(std::string_view response);

int score_example(std::string_view gold, std::string_view response, bool case_insensitive = false);

struct ExampleResult {
    std::size_t index = 0;
    std::optional<std::string> extracted;
    bool correct = false;
};

struct ScoreReport {
    double accuracy = 0.0;
    std::vector<ExampleResult> per_example;
    long long llm_calls = 0;

    std::size_t correct_count() const;
};

nlohmann::json to_json(const ScoreReport& report);

struct EvalOptions {
    std::size_t parallelism = 1;
    bool case_insensitive = false;
};

// Scores the template on every example. Calls may run concurrently; the
// report keeps example order. Any BudgetExceeded aborts the whole batch.
ScoreReport evaluate(const PromptTemplate& tmpl, std::span<const TaskExample> examples,
                     const llm::LlmClient& task_llm, const EvalOptions& options = {});

}  // namespace opts::evaluator
