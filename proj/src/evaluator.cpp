#include "opts/evaluator.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "opts/errors.hpp"
#include "opts/text.hpp"

namespace opts::evaluator {

namespace {

constexpr std::string_view kAnswerMarker = "the answer is";

std::string line_context(std::string_view text, std::size_t byte) {
    byte = std::min(byte, text.size());
    const auto before = text.substr(0, byte);
    const auto line = std::count(before.begin(), before.end(), '\n') + 1;
    const auto last_nl = before.rfind('\n');
    const auto column = last_nl == std::string_view::npos ? byte + 1 : byte - last_nl;
    return "line " + std::to_string(line) + ", column " + std::to_string(column);
}

std::string required_text(const nlohmann::json& record, const char* field, std::size_t index,
                          std::string_view source) {
    const auto prefix = std::string(source) + ": example " + std::to_string(index);
    if (!record.is_object()) {
        throw LoadError(prefix + " is not an object");
    }
    const auto it = record.find(field);
    if (it == record.end()) {
        throw LoadError(prefix + " is missing field '" + field + "'");
    }
    if (!it->is_string()) {
        throw LoadError(prefix + " field '" + field + "' is not a string");
    }
    auto value = it->get<std::string>();
    if (value.empty()) {
        throw LoadError(prefix + " field '" + field + "' is empty");
    }
    return value;
}

}  // namespace

std::vector<TaskExample> parse_dataset(std::string_view json_text, std::string_view source) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw LoadError(std::string(source) + ": malformed JSON at " +
                        line_context(json_text, e.byte == 0 ? 0 : e.byte - 1) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("examples") || !j["examples"].is_array()) {
        throw LoadError(std::string(source) + ": expected an object with an \"examples\" array");
    }
    const auto& records = j["examples"];
    if (records.empty()) {
        throw LoadError(std::string(source) + ": \"examples\" is empty");
    }
    std::vector<TaskExample> examples;
    examples.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        examples.push_back({required_text(records[i], "input", i, source),
                            required_text(records[i], "target", i, source)});
    }
    return examples;
}

std::vector<TaskExample> load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw LoadError("cannot open dataset " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_dataset(buffer.str(), path.string());
}

DataSplit make_split(std::span<const TaskExample> dataset, std::size_t dev_size, Rng& rng) {
    if (dev_size == 0 || dev_size >= dataset.size()) {
        throw SplitError("dev size " + std::to_string(dev_size) + " needs a dataset larger than itself (have " +
                         std::to_string(dataset.size()) + " examples)");
    }
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    // Partial Fisher-Yates: the first dev_size slots are a uniform subset.
    for (std::size_t i = 0; i < dev_size; ++i) {
        const std::size_t j = i + uniform_index(rng, order.size() - i);
        std::swap(order[i], order[j]);
    }
    DataSplit split;
    split.dev_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(dev_size));
    std::sort(split.dev_indices.begin(), split.dev_indices.end());

    std::vector<bool> in_dev(dataset.size(), false);
    for (auto i : split.dev_indices) in_dev[i] = true;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (!in_dev[i]) split.test_indices.push_back(i);
    }
    for (auto i : split.dev_indices) split.dev.push_back(dataset[i]);
    for (auto i : split.test_indices) split.test.push_back(dataset[i]);
    return split;
}

std::string PromptTemplate::render(std::string_view input) const {
    std::string out = task_description;
    if (!few_shot_block.empty()) {
        out += "\n\n";
        out += few_shot_block;
    }
    out += "\n\nQ: ";
    out += input;
    out += "\nA:";
    return out;
}

std::optional<std::string> extract_answer(std::string_view response) {
    const auto pos = text::rfind_ci(response, kAnswerMarker);
    if (pos == std::string_view::npos) {
        return std::nullopt;
    }
    auto rest = response.substr(pos + kAnswerMarker.size());
    rest = rest.substr(0, rest.find_first_of("\r\n"));
    rest = text::trim(rest);
    if (rest.ends_with('.')) {
        rest.remove_suffix(1);
        rest = text::trim(rest);
    }
    return std::string(rest);
}

int score_example(std::string_view gold, std::string_view response, bool case_insensitive) {
    if (gold.empty()) {
        throw UsageError("gold answer is empty");
    }
    const auto answer = extract_answer(response);
    if (!answer) {
        return 0;
    }
    const auto lhs = text::trim(*answer);
    const auto rhs = text::trim(gold);
    if (case_insensitive) {
        return text::ascii_lower(lhs) == text::ascii_lower(rhs) ? 1 : 0;
    }
    return lhs == rhs ? 1 : 0;
}

std::size_t ScoreReport::correct_count() const {
    return static_cast<std::size_t>(
        std::count_if(per_example.begin(), per_example.end(), [](const auto& r) { return r.correct; }));
}

nlohmann::json to_json(const ScoreReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.per_example) {
        rows.push_back({{"index", r.index},
                        {"extracted", r.extracted ? nlohmann::json(*r.extracted) : nlohmann::json()},
                        {"correct", r.correct}});
    }
    return {{"accuracy", report.accuracy}, {"llm_calls", report.llm_calls}, {"per_example", std::move(rows)}};
}

ScoreReport evaluate(const PromptTemplate& tmpl, std::span<const TaskExample> examples,
                     const llm::LlmClient& task_llm, const EvalOptions& options) {
    if (examples.empty()) {
        throw UsageError("cannot evaluate on an empty example list");
    }
    const std::size_t n = examples.size();
    std::vector<ExampleResult> results(n);
    std::vector<std::exception_ptr> failures(n);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> abort{false};

    auto worker = [&] {
        for (std::size_t i = next++; i < n && !abort.load(); i = next++) {
            try {
                const auto reply = task_llm.ask({{llm::Role::User, tmpl.render(examples[i].input)}});
                auto extracted = extract_answer(reply);
                results[i] = {i, extracted,
                              score_example(examples[i].target, reply, options.case_insensitive) == 1};
            } catch (...) {
                failures[i] = std::current_exception();
                abort = true;
            }
        }
    };

    const std::size_t threads = std::clamp<std::size_t>(options.parallelism, 1, n);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }

    std::exception_ptr first;
    for (const auto& f : failures) {
        if (!f) continue;
        try {
            std::rethrow_exception(f);
        } catch (const BudgetExceeded&) {
            throw;
        } catch (...) {
            if (!first) first = f;
        }
    }
    if (first) {
        std::rethrow_exception(first);
    }

    ScoreReport report;
    report.per_example = std::move(results);
    report.llm_calls = static_cast<long long>(n);
    report.accuracy = static_cast<double>(report.correct_count()) / static_cast<double>(n);
    return report;
}

}  // namespace opts::evaluator
