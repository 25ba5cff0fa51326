#include "opts/errors.hpp"
#include "opts/evoprompt.hpp"

namespace opts::evoprompt {

std::string_view status_name(RunStatus status) {
    switch (status) {
        case RunStatus::Completed:
            return "completed";
        case RunStatus::HaltedBudget:
            return "halted: budget";
        case RunStatus::Interrupted:
            return "interrupted";
    }
    return "completed";
}

RunOutcome run(RunState& state, const EvolutionSettings& settings, StepContext& ctx,
               const RunOptions& options, RunObserver* observer) {
    settings.validate();
    RunOutcome outcome;
    RunState committed = state.snapshot();

    auto commit = [&](std::size_t history_before) {
        if (observer) {
            observer->on_checkpoint(state, std::span(state.history).subspan(history_before));
        }
        committed = state.snapshot();
    };

    try {
        if (!state.initialized) {
            state.population = init_population(options.seed_description, settings, ctx, state);
            state.initialized = true;
            commit(state.history.size());
        }
        while (state.population.generation < settings.generations) {
            if (options.stop_after && state.population.generation >= *options.stop_after) {
                outcome.status = RunStatus::Interrupted;
                break;
            }
            const std::size_t before = state.history.size();
            if (settings.algorithm == Algorithm::DE) {
                de_generation(state, ctx);
            } else {
                ga_generation(state, settings, ctx);
            }
            commit(before);
        }
    } catch (const BudgetExceeded&) {
        const long long used = state.budget->used();
        state = std::move(committed);
        if (observer) {
            observer->on_budget_halt(state, used);
        }
        outcome.status = RunStatus::HaltedBudget;
    }

    outcome.generations_completed = state.initialized ? state.population.generation : 0;
    if (state.initialized) {
        outcome.best = settings.return_best_ever && state.best_ever ? *state.best_ever
                                                                     : state.population.best();
    }
    if (outcome.best && options.test_scorer && outcome.status != RunStatus::Interrupted) {
        try {
            outcome.test_accuracy = options.test_scorer->score(outcome.best->description);
        } catch (const BudgetExceeded&) {
        }
    }
    return outcome;
}

ApetBaselineResult apet_baseline(const std::string& manual_description,
                                 const strategies::OptsResources& opts,
                                 const llm::LlmClient& designer, PromptScorer& dev_scorer,
                                 PromptScorer* test_scorer) {
    if (manual_description.empty()) {
        throw UsageError("manual description is empty");
    }
    auto messages = strategies::render_all_strategies_messages(opts.all, opts.catalog, manual_description);
    ApetBaselineResult result;
    result.description = strategies::clean_designer_reply(designer.ask(std::move(messages)));
    result.dev_score = dev_scorer.score(result.description);
    if (test_scorer) {
        result.test_score = test_scorer->score(result.description);
    }
    return result;
}

}  // namespace opts::evoprompt
