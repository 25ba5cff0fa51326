#include <algorithm>
#include <deque>
#include <numeric>
#include <regex>
#include <set>
#include <unordered_map>

#include "opts/bandit.hpp"
#include "opts/errors.hpp"
#include "opts/evoprompt.hpp"
#include "opts/templates.hpp"

namespace opts::evoprompt {

namespace {

constexpr std::string_view kPromptFollowUp =
    "Please reply again, giving the final prompt bracketed with <prompt> and </prompt>.";
constexpr std::string_view kParaphraseFollowUp =
    "Please reply with the new instruction only.";

std::string variations_follow_up(std::size_t count) {
    return "Please list exactly " + std::to_string(count) +
           " variations, one per line, numbered 1 to " + std::to_string(count) + ".";
}

std::vector<llm::ChatMessage> single_input_messages(const std::string& tmpl, const std::string& input) {
    static const std::regex input_tag("<input>");
    return {{llm::Role::User, fill_placeholders(tmpl, {{"<input>", input}}, input_tag)}};
}

// Crossover/mutation reply with one corrective retry.
std::string ask_for_prompt(const llm::LlmClient& designer, std::vector<llm::ChatMessage> messages,
                           int& calls) {
    auto reply = designer.ask(messages);
    ++calls;
    try {
        return parse_generated_prompt(reply);
    } catch (const ParseError&) {
    }
    messages.push_back({llm::Role::Assistant, reply});
    messages.push_back({llm::Role::User, std::string(kPromptFollowUp)});
    reply = designer.ask(std::move(messages));
    ++calls;
    return parse_generated_prompt(reply);
}

std::string ask_for_paraphrase(const llm::LlmClient& designer, const MetaPrompts& prompts,
                               const std::string& description) {
    auto messages = single_input_messages(prompts.resample, description);
    auto reply = designer.ask(messages);
    try {
        return strategies::clean_designer_reply(reply);
    } catch (const GenerationError&) {
    }
    messages.push_back({llm::Role::Assistant, reply});
    messages.push_back({llm::Role::User, std::string(kParaphraseFollowUp)});
    return strategies::clean_designer_reply(designer.ask(std::move(messages)));
}

strategies::OptsOutcome apply_selection(RunState& state, StepContext& ctx, const std::string& prompt) {
    if (!state.mechanism) {
        return {prompt, std::nullopt, 0};
    }
    return strategies::apply_opts(*state.mechanism, ctx.opts, prompt, ctx.designer, state.rng.selection);
}

void note_best_ever(RunState& state, const Candidate& c) {
    if (!state.best_ever || c.score() > state.best_ever->score()) {
        state.best_ever = c;
    }
}

// Mutated prompt -> strategy selection -> evaluation -> reward. Fills the
// record and returns the scored child, or nothing when the step failed.
std::optional<Candidate> produce_child(RunState& state, StepContext& ctx,
                                       std::vector<llm::ChatMessage> meta_messages, int generation,
                                       HistoryRecord& record) {
    try {
        const auto mutated = ask_for_prompt(ctx.designer, std::move(meta_messages), record.designer_calls);
        const auto outcome = apply_selection(state, ctx, mutated);
        record.designer_calls += outcome.llm_calls;
        record.arm = outcome.arm;
        record.strategy_applied = outcome.llm_calls > 0;

        Candidate child;
        child.description = outcome.prompt;
        child.dev_score = ctx.scorer.score(child.description);
        child.id = state.next_candidate_id++;
        child.lineage = {record.parent_ids, outcome.arm, record.strategy_applied, generation};

        const int reward = bandit::compute_reward(*child.dev_score, record.parent_scores);
        if (state.mechanism && state.mechanism->bandit && outcome.arm) {
            state.mechanism->bandit->record(*outcome.arm, reward);
        }
        record.child_id = child.id;
        record.child_description = child.description;
        record.child_score = child.dev_score;
        record.reward = reward;
        note_best_ever(state, child);
        return child;
    } catch (const ParseError& e) {
        record.error = std::string("unparseable designer reply: ") + e.what();
    } catch (const GenerationError& e) {
        record.error = e.what();
    }
    return std::nullopt;
}

std::size_t roulette(const std::vector<Candidate>& members, Rng& rng) {
    double total = 0.0;
    for (const auto& c : members) total += c.score();
    if (!(total > 0.0)) {
        return uniform_index(rng, members.size());
    }
    const double target = uniform01(rng) * total;
    double cumulative = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < members.size(); ++i) {
        if (members[i].score() <= 0.0) continue;
        cumulative += members[i].score();
        last_positive = i;
        if (target < cumulative) return i;
    }
    return last_positive;
}

}  // namespace

void EvolutionSettings::validate() const {
    if (population_size < 2) {
        throw ConfigError("population size must be at least 2");
    }
    if (algorithm == Algorithm::DE && population_size < 3) {
        throw ConfigError("DE needs a population of at least 3 (parent plus two distinct donors)");
    }
    if (generations < 0) {
        throw ConfigError("generation count must be non-negative");
    }
    if (init_variations + 1 < population_size - population_size / 2) {
        throw ConfigError("too few initial variations to fill the population");
    }
}

Population init_population(const std::string& seed_description, const EvolutionSettings& settings,
                           StepContext& ctx, RunState& state) {
    if (seed_description.empty()) {
        throw UsageError("seed description is empty");
    }
    settings.validate();

    const std::size_t count = settings.init_variations;
    auto messages = single_input_messages(ctx.prompts.init_variations, seed_description);
    auto reply = ctx.designer.ask(messages);
    std::vector<std::string> variations;
    try {
        variations = parse_variations(reply, count);
    } catch (const ParseError&) {
        messages.push_back({llm::Role::Assistant, reply});
        messages.push_back({llm::Role::User, variations_follow_up(count)});
        try {
            variations = parse_variations(ctx.designer.ask(std::move(messages)), count);
        } catch (const ParseError& e) {
            throw GenerationError(std::string("initial variations: ") + e.what());
        }
    }

    std::vector<Candidate> pool;
    pool.reserve(count + 1);
    auto add = [&](std::string description, std::vector<long long> parents) {
        Candidate c;
        c.id = state.next_candidate_id++;
        c.description = std::move(description);
        c.lineage.parent_ids = std::move(parents);
        c.dev_score = ctx.scorer.score(c.description);
        return c;
    };
    pool.push_back(add(seed_description, {}));
    for (auto& v : variations) {
        pool.push_back(add(std::move(v), {}));
    }

    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return pool[a].score() > pool[b].score(); });

    const std::size_t paraphrased = settings.population_size / 2;
    const std::size_t kept = settings.population_size - paraphrased;
    Population population;
    for (std::size_t r = 0; r < kept; ++r) {
        population.members.push_back(pool[order[r]]);
    }
    for (std::size_t r = 0; r < paraphrased; ++r) {
        const auto& source = population.members[r];
        auto text = ask_for_paraphrase(ctx.designer, ctx.prompts, source.description);
        population.members.push_back(add(std::move(text), {source.id}));
    }
    for (const auto& c : population.members) {
        note_best_ever(state, c);
    }
    return population;
}

void de_generation(RunState& state, StepContext& ctx) {
    auto& members = state.population.members;
    const std::size_t n = members.size();
    if (n < 3) {
        throw UsageError("DE needs a population of at least 3");
    }
    const int generation = state.population.generation + 1;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> others;
        for (std::size_t k = 0; k < n; ++k) {
            if (k != i) others.push_back(k);
        }
        const std::size_t r1 = others[uniform_index(state.rng.evolution, others.size())];
        std::erase(others, r1);
        const std::size_t r2 = others[uniform_index(state.rng.evolution, others.size())];
        const std::size_t best = state.population.best_index();

        HistoryRecord record;
        record.generation = generation;
        record.slot = static_cast<int>(i);
        for (auto k : {i, r1, r2, best}) {
            record.parent_ids.push_back(members[k].id);
            record.parent_scores.push_back(members[k].score());
        }

        auto meta = render_de_messages(ctx.prompts, members[i].description, members[r1].description,
                                       members[r2].description, members[best].description);
        if (auto child = produce_child(state, ctx, std::move(meta), generation, record)) {
            if (child->score() > members[i].score()) {
                members[i] = std::move(*child);
                record.accepted = true;
            }
        }
        state.history.push_back(std::move(record));
    }
    state.population.generation = generation;
}

void ga_generation(RunState& state, const EvolutionSettings& settings, StepContext& ctx) {
    const auto parents = state.population.members;
    const int generation = state.population.generation + 1;
    const std::size_t first_record = state.history.size();
    std::vector<Candidate> pool = parents;

    for (std::size_t i = 0; i < settings.population_size; ++i) {
        const std::size_t r1 = roulette(parents, state.rng.evolution);
        const std::size_t r2 = roulette(parents, state.rng.evolution);

        HistoryRecord record;
        record.generation = generation;
        record.slot = static_cast<int>(i);
        for (auto k : {r1, r2}) {
            record.parent_ids.push_back(parents[k].id);
            record.parent_scores.push_back(parents[k].score());
        }
        auto meta = render_ga_messages(ctx.prompts, parents[r1].description, parents[r2].description);
        if (auto child = produce_child(state, ctx, std::move(meta), generation, record)) {
            pool.push_back(std::move(*child));
        }
        state.history.push_back(std::move(record));
    }

    state.population.members = select_survivors(std::move(pool), settings.population_size);
    std::set<long long> survivors;
    for (const auto& c : state.population.members) survivors.insert(c.id);
    for (std::size_t r = first_record; r < state.history.size(); ++r) {
        auto& record = state.history[r];
        record.accepted = record.child_id && survivors.contains(*record.child_id);
    }
    state.population.generation = generation;
}

std::vector<Candidate> select_survivors(std::vector<Candidate> pool, std::size_t n) {
    std::stable_sort(pool.begin(), pool.end(), [](const Candidate& a, const Candidate& b) {
        if (a.score() != b.score()) return a.score() > b.score();
        if (a.lineage.generation != b.lineage.generation) return a.lineage.generation < b.lineage.generation;
        return a.id < b.id;
    });
    if (pool.size() > n) {
        pool.resize(n);
    }
    return pool;
}

std::vector<std::size_t> lineage_arms(std::span<const HistoryRecord> history, long long candidate_id) {
    std::unordered_map<long long, const HistoryRecord*> by_child;
    for (const auto& r : history) {
        if (r.child_id) by_child[*r.child_id] = &r;
    }
    std::vector<std::size_t> arms;
    std::set<long long> visited;
    std::deque<long long> frontier{candidate_id};
    while (!frontier.empty()) {
        const long long id = frontier.front();
        frontier.pop_front();
        if (!visited.insert(id).second) continue;
        const auto it = by_child.find(id);
        if (it == by_child.end()) continue;
        const auto& r = *it->second;
        if (r.strategy_applied && r.arm && std::find(arms.begin(), arms.end(), *r.arm) == arms.end()) {
            arms.push_back(*r.arm);
        }
        frontier.insert(frontier.end(), r.parent_ids.begin(), r.parent_ids.end());
    }
    return arms;
}

}  // namespace opts::evoprompt
