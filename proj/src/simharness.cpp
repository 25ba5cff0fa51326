#include "opts/simharness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>

#include "opts/errors.hpp"
#include "opts/text.hpp"

namespace opts::simharness {

namespace {

// Stream reserved for the world's own coin flips.
constexpr std::uint64_t kWorldStream = 7;

std::uint64_t fnv1a(std::string_view s, std::uint64_t seed) {
    std::uint64_t h = 14695981039346656037ull ^ (seed * 0x9E3779B97F4A7C15ull);
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    // final avalanche so neighbouring tokens spread out
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdull;
    h ^= h >> 33;
    return h;
}

std::string_view first_token(std::string_view description) {
    description = text::trim(description);
    const auto end = description.find_first_of(" \t\n");
    return description.substr(0, end);
}

std::string_view rest_after_token(std::string_view description) {
    description = text::trim(description);
    const auto end = description.find_first_of(" \t\n");
    return end == std::string_view::npos ? std::string_view{} : description.substr(end);
}

// Value of the last line starting with `label`.
std::string last_labelled_line(std::string_view text_in, std::string_view label) {
    std::string found;
    for (const auto line : text::split_lines(text_in)) {
        if (line.starts_with(label)) {
            found = std::string(text::trim(line.substr(label.size())));
        }
    }
    if (found.empty()) {
        throw ParseError("no line labelled '" + std::string(label) + "'");
    }
    return found;
}

// The prompt fenced at the end of the strategy meta-prompt.
std::string fenced_input(const std::string& user) {
    constexpr std::string_view kOpen = "\"\"\"\"\n";
    constexpr std::string_view kClose = "\n\"\"\"";
    const auto open = user.rfind(kOpen);
    const auto close = user.rfind(kClose);
    if (open == std::string::npos || close == std::string::npos || close < open + kOpen.size()) {
        throw ParseError("strategy meta-prompt has no fenced input");
    }
    return user.substr(open + kOpen.size(), close - open - kOpen.size());
}

std::string input_line(const std::string& user) {
    return last_labelled_line(user, "Input: ");
}

struct WorldDice {
    std::mutex mutex;
    Rng rng;
    long long paraphrases = 0;
};

}  // namespace

BernoulliEnv::BernoulliEnv(std::vector<double> arm_means, std::uint64_t seed)
    : means_(std::move(arm_means)), rng_(make_stream(seed, kWorldStream)) {
    if (means_.empty()) {
        throw ConfigError("Bernoulli environment needs at least one arm");
    }
    for (double m : means_) {
        if (!(m >= 0.0 && m <= 1.0)) {
            throw ConfigError("arm mean outside [0, 1]");
        }
    }
}

int BernoulliEnv::pull(std::size_t arm) {
    return uniform01(rng_) < means_.at(arm) ? 1 : 0;
}

PolicyRunResult run_policy(bandit::BanditPolicy& policy, BernoulliEnv& env, long long rounds, Rng& rng) {
    if (rounds < 1) {
        throw UsageError("rounds must be positive");
    }
    if (policy.arm_count() != env.arm_count()) {
        throw UsageError("policy has " + std::to_string(policy.arm_count()) + " arms, environment has " +
                         std::to_string(env.arm_count()));
    }
    PolicyRunResult result;
    result.counts.assign(env.arm_count(), 0);
    result.choices.reserve(static_cast<std::size_t>(rounds));
    for (long long t = 0; t < rounds; ++t) {
        const auto arm = policy.select_arm(rng);
        const int reward = env.pull(arm);
        policy.record(arm, reward);
        ++result.counts[arm];
        result.total_reward += reward;
        result.choices.push_back(arm);
    }
    return result;
}

SyntheticWorld SyntheticWorld::one_good_arm(std::size_t strategies, std::size_t good_arm,
                                            double good_probability, double bad_probability,
                                            std::uint64_t seed) {
    if (good_arm >= strategies) {
        throw ConfigError("good arm index out of range");
    }
    SyntheticWorld world;
    world.improvement_probability.assign(strategies, bad_probability);
    world.improvement_probability[good_arm] = good_probability;
    world.seed = seed;
    world.validate();
    return world;
}

void SyntheticWorld::validate() const {
    if (improvement_probability.empty()) {
        throw ConfigError("synthetic world needs at least one strategy");
    }
    for (double p : improvement_probability) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw ConfigError("improvement probability outside [0, 1]");
        }
    }
    if (!(improvement_step >= 0.0) || !(base_low >= 0.0) || !(base_high <= 1.0) || base_low > base_high) {
        throw ConfigError("synthetic world score range is invalid");
    }
}

double SyntheticWorld::base_score(std::string_view token) const {
    const double unit = static_cast<double>(fnv1a(token, seed) >> 11) * 0x1.0p-53;
    return base_low + (base_high - base_low) * unit;
}

double SyntheticWorld::score(std::string_view description) const {
    std::size_t gains = 0;
    for (std::size_t pos = 0; (pos = description.find("+]", pos)) != std::string_view::npos; pos += 2) {
        ++gains;
    }
    const double s = base_score(first_token(description)) + improvement_step * static_cast<double>(gains);
    return std::clamp(s, 0.0, 1.0);
}

std::shared_ptr<llm::ScriptedBackend> make_world_designer(const SyntheticWorld& world,
                                                          const strategies::StrategyCatalog& catalog) {
    world.validate();
    if (world.improvement_probability.size() != catalog.size()) {
        throw ConfigError("synthetic world has " + std::to_string(world.improvement_probability.size()) +
                          " strategies but the catalog has " + std::to_string(catalog.size()));
    }
    auto dice = std::make_shared<WorldDice>();
    dice->rng = make_stream(world.seed, kWorldStream);
    auto designer = std::make_shared<llm::ScriptedBackend>();
    const auto& user = [](const llm::LlmRequest& r) -> const std::string& {
        return llm::ScriptedBackend::last_user_text(r);
    };

    // Rule order matters: a corrective follow-up is answered by the rule
    // that matches its text, so the content rules come first.
    designer->on(
        "variations",
        [user](const llm::LlmRequest& r) { return user(r).starts_with("Generate 19 variations"); },
        [](const llm::LlmRequest&) {
            std::string reply;
            for (int i = 1; i <= 19; ++i) {
                reply += std::to_string(i) + ". P" + std::to_string(i) + "\n";
            }
            return reply;
        });
    designer->on(
        "paraphrase",
        [user](const llm::LlmRequest& r) { return user(r).starts_with("Generate a variation"); },
        [user, dice](const llm::LlmRequest& r) {
            const auto source = input_line(user(r));
            std::lock_guard lock(dice->mutex);
            const long long n = ++dice->paraphrases;
            return std::string(first_token(source)) + "r" + std::to_string(n) +
                   std::string(rest_after_token(source));
        });
    designer->on(
        "de_crossover",
        [user](const llm::LlmRequest& r) { return user(r).find("Basic Prompt: ") != std::string::npos; },
        [user](const llm::LlmRequest& r) {
            const auto best = last_labelled_line(user(r), "Prompt 3: ");
            return "Mutated and combined.\nFinal Prompt: <prompt>" + best + "</prompt>";
        });
    designer->on(
        "ga_crossover",
        [user](const llm::LlmRequest& r) {
            return user(r).find("Crossover the following prompts") != std::string::npos;
        },
        [user, world](const llm::LlmRequest& r) {
            const auto a = last_labelled_line(user(r), "Prompt 1: ");
            const auto b = last_labelled_line(user(r), "Prompt 2: ");
            const auto& pick = world.score(b) > world.score(a) ? b : a;
            return "Crossover Prompt: " + a + "\n2. <prompt>" + pick + "</prompt>";
        });
    designer->on(
        "strategy",
        [user](const llm::LlmRequest& r) {
            return user(r).find("reformulate below prompt") != std::string::npos;
        },
        [user, world, catalog, dice](const llm::LlmRequest& r) {
            const auto& text_in = user(r);
            std::vector<std::size_t> named;
            for (std::size_t k = 0; k < catalog.size(); ++k) {
                if (text_in.find(catalog.at(k).description) != std::string::npos) named.push_back(k);
            }
            if (named.empty()) {
                throw ParseError("strategy meta-prompt names no known strategy");
            }
            const auto input = fenced_input(text_in);
            std::lock_guard lock(dice->mutex);
            // All strategies offered at once: the model effectively follows one.
            const std::size_t k = named.size() == 1 ? named.front() : named[uniform_index(dice->rng, named.size())];
            const bool helped = uniform01(dice->rng) < world.improvement_probability[k];
            return input + " [s" + std::to_string(k) + (helped ? "+]" : "-]");
        });
    return designer;
}

SyntheticRun make_synthetic_run(const SyntheticWorld& world, const SyntheticRunConfig& config,
                                evoprompt::RunObserver* observer) {
    const auto catalog = [&] {
        const auto defaults = strategies::StrategyCatalog::defaults();
        if (world.improvement_probability.size() == defaults.size()) return defaults;
        std::vector<strategies::Strategy> entries;
        for (std::size_t k = 0; k < world.improvement_probability.size(); ++k) {
            entries.push_back({"s" + std::to_string(k), "Strategy " + std::to_string(k),
                               "Synthetic strategy number " + std::to_string(k) + "."});
        }
        return strategies::StrategyCatalog(std::move(entries));
    }();
    const strategies::OptsResources resources(catalog);
    const auto prompts = evoprompt::MetaPrompts::defaults();
    auto designer_backend = make_world_designer(world, catalog);
    const llm::LlmClient designer(designer_backend, "world-designer", 1.0, 2048);
    WorldScorer scorer(world);

    evoprompt::EvolutionSettings settings;
    settings.algorithm = config.algorithm;
    settings.population_size = config.population_size;
    settings.generations = config.generations;

    SyntheticRun out;
    out.state.rng = RngStreams::from_seed(config.seed);
    if (config.mechanism) {
        out.state.mechanism = strategies::SelectionMechanism::make(*config.mechanism, catalog.size());
    }
    evoprompt::StepContext ctx{designer, scorer, resources, prompts};
    evoprompt::RunOptions options;
    options.seed_description = "P0";
    out.outcome = evoprompt::run(out.state, settings, ctx, options, observer);
    out.designer_invocations = designer_backend->invocations();
    return out;
}

double arm_share(std::span<const evoprompt::HistoryRecord> history, std::size_t arm, int from_generation) {
    long long total = 0;
    long long hits = 0;
    for (const auto& r : history) {
        if (r.generation < from_generation || !r.arm) continue;
        ++total;
        if (*r.arm == arm) ++hits;
    }
    return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace opts::simharness
