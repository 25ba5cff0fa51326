#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "opts/bandit.hpp"
#include "opts/evoprompt.hpp"
#include "opts/llm.hpp"
#include "opts/rng.hpp"
#include "opts/strategies.hpp"

namespace opts::simharness {

// Stationary Bernoulli arms.
class BernoulliEnv {
public:
    // Throws ConfigError on an empty list or a mean outside [0, 1].
    BernoulliEnv(std::vector<double> arm_means, std::uint64_t seed);

    std::size_t arm_count() const noexcept { return means_.size(); }
    const std::vector<double>& means() const noexcept { return means_; }
    int pull(std::size_t arm);

private:
    std::vector<double> means_;
    Rng rng_;
};

struct PolicyRunResult {
    std::vector<long long> counts;
    long long total_reward = 0;
    // Arm chosen in each round.
    std::vector<std::size_t> choices;
};

// Throws UsageError when rounds < 1 or arm counts differ.
PolicyRunResult run_policy(bandit::BanditPolicy& policy, BernoulliEnv& env, long long rounds, Rng& rng);

// Symbolic prompt world. A description is a base token followed by strategy
// tags "[s<k>+]" (the strategy helped) or "[s<k>-]" (it did not). Its score
// is the base score of the token plus improvement_step per "+" tag, clamped
// to [0, 1].
struct SyntheticWorld {
    // Chance that applying strategy k improves the prompt; one entry per
    // strategy arm.
    std::vector<double> improvement_probability;
    double improvement_step = 0.002;
    double base_low = 0.2;
    double base_high = 0.4;
    std::uint64_t seed = 0;

    static SyntheticWorld one_good_arm(std::size_t strategies, std::size_t good_arm, double good_probability,
                                       double bad_probability, std::uint64_t seed);

    void validate() const;
    double base_score(std::string_view token) const;
    double score(std::string_view description) const;
};

// Scripted prompt-designing backend acting out the world: numbered
// variations, paraphrases, crossover that keeps the stronger (GA) or the
// current best (DE) prompt, and strategy application that appends a tag.
std::shared_ptr<llm::ScriptedBackend> make_world_designer(const SyntheticWorld& world,
                                                          const strategies::StrategyCatalog& catalog);

class WorldScorer final : public evoprompt::PromptScorer {
public:
    explicit WorldScorer(const SyntheticWorld& world) : world_(world) {}
    double score(const std::string& description) override { return world_.score(description); }

private:
    const SyntheticWorld& world_;
};

struct SyntheticRunConfig {
    std::optional<strategies::MechanismKind> mechanism = strategies::MechanismKind::TS;
    evoprompt::Algorithm algorithm = evoprompt::Algorithm::DE;
    std::size_t population_size = 10;
    int generations = 30;
    std::uint64_t seed = 0;
};

struct SyntheticRun {
    evoprompt::RunState state;
    evoprompt::RunOutcome outcome;
    long long designer_invocations = 0;
};

// Runs the full optimizer against the world with no external calls.
SyntheticRun make_synthetic_run(const SyntheticWorld& world, const SyntheticRunConfig& config,
                                evoprompt::RunObserver* observer = nullptr);

// Among history records from generation `from_generation` onward that
// selected an arm, the fraction that selected `arm`.
double arm_share(std::span<const evoprompt::HistoryRecord> history, std::size_t arm, int from_generation);

}  // namespace opts::simharness
