#include <cstdlib>
#include <fstream>

#include "opts/cli.hpp"
#include "opts/errors.hpp"

namespace opts::cli {

using nlohmann::json;

RunStore::RunStore(RunPaths paths) : paths_(std::move(paths)) {
    fs::create_directories(paths_.checkpoints().parent_path());
}

void RunStore::append(const fs::path& file, const json& record) {
    std::ofstream out(file, std::ios::app);
    out << record.dump() << '\n';
    out.flush();
    if (!out) {
        throw Error("cannot append to " + file.string());
    }
}

void RunStore::on_checkpoint(const evoprompt::RunState& state,
                             std::span<const evoprompt::HistoryRecord> new_records) {
    // History first: a checkpoint never counts records that are not on disk.
    {
        std::ofstream out(paths_.history(), std::ios::app);
        for (const auto& r : new_records) {
            out << evoprompt::to_json(r).dump() << '\n';
        }
        out.flush();
        if (!out) {
            throw Error("cannot append to " + paths_.history().string());
        }
    }
    append(paths_.checkpoints(), evoprompt::checkpoint_to_json(state));
}

void RunStore::on_budget_halt(const evoprompt::RunState& last_checkpoint, long long budget_used) {
    append(paths_.checkpoints(), {{"kind", "halt"},
                                  {"reason", "budget"},
                                  {"generation", last_checkpoint.population.generation},
                                  {"initialized", last_checkpoint.initialized},
                                  {"budget_used", budget_used},
                                  {"history_records", last_checkpoint.history.size()}});
}

void RunStore::write_final(const evoprompt::RunOutcome& outcome) {
    json best;
    if (outcome.best) {
        best = {{"id", outcome.best->id},
                {"description", outcome.best->description},
                {"dev_score", outcome.best->score()}};
    }
    append(paths_.checkpoints(),
           {{"kind", "final"},
            {"status", evoprompt::status_name(outcome.status)},
            {"generations_completed", outcome.generations_completed},
            {"best", best},
            {"test_accuracy", outcome.test_accuracy ? json(*outcome.test_accuracy) : json()}});
}

DatasetScorer::DatasetScorer(std::vector<evaluator::TaskExample> examples, std::string few_shot,
                             const llm::LlmClient& task, evaluator::EvalOptions options,
                             std::string split_name, std::optional<fs::path> audit_log)
    : examples_(std::move(examples)),
      few_shot_(std::move(few_shot)),
      task_(task),
      options_(options),
      split_name_(std::move(split_name)),
      audit_log_(std::move(audit_log)) {}

double DatasetScorer::score(const std::string& description) {
    last_ = evaluator::evaluate({description, few_shot_}, examples_, task_, options_);
    if (audit_log_) {
        std::ofstream out(*audit_log_, std::ios::app);
        out << json{{"split", split_name_},
                    {"description", description},
                    {"accuracy", last_.accuracy},
                    {"correct", last_.correct_count()},
                    {"examples", examples_.size()}}
                   .dump()
            << '\n';
    }
    return last_.accuracy;
}

namespace {

class ModelRouter final : public llm::Backend {
public:
    ModelRouter(std::shared_ptr<llm::Backend> main, std::string task_model, std::shared_ptr<llm::Backend> task)
        : main_(std::move(main)), task_model_(std::move(task_model)), task_(std::move(task)) {}

    std::string complete(const llm::LlmRequest& request, llm::CallBudget* budget) override {
        return (request.model == task_model_ ? task_ : main_)->complete(request, budget);
    }

private:
    std::shared_ptr<llm::Backend> main_;
    std::string task_model_;
    std::shared_ptr<llm::Backend> task_;
};

}  // namespace

std::shared_ptr<llm::Backend> make_backend(const BackendConfig& config) {
    if (config.kind == "replay") {
        return std::make_shared<llm::TranscriptCache>(config.transcript, nullptr);
    }
    llm::HttpSettings settings;
    settings.base_url = config.base_url;
    settings.path = config.path;
    if (!config.api_key_env.empty()) {
        if (const char* key = std::getenv(config.api_key_env.c_str())) {
            settings.api_key = key;
        }
    }
    settings.timeout = std::chrono::seconds(config.timeout_seconds);
    settings.retry.max_attempts = config.max_attempts;
    settings.retry.initial_backoff = std::chrono::milliseconds(config.initial_backoff_ms);
    return std::make_shared<llm::HttpBackend>(std::move(settings));
}

std::shared_ptr<llm::Backend> make_upstream(const RunConfig& config) {
    auto main = make_backend(config.backend);
    if (!config.task_backend) return main;
    return std::make_shared<ModelRouter>(std::move(main), config.task.model, make_backend(*config.task_backend));
}

}  // namespace opts::cli
