#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "opts/rng.hpp"

namespace opts::bandit {

// Beta posterior of one arm. Starts at the Beta(1, 1) prior.
struct ArmState {
    std::size_t arm_id = 0;
    double alpha = 1.0;
    double beta = 1.0;
    long long pulls = 0;
    long long cumulative_reward = 0;

    friend bool operator==(const ArmState&, const ArmState&) = default;
};

enum class PolicyKind { ThompsonSampling, UniformSampling };

// K strategy arms followed by the inaction arm at index K.
class BanditPolicy {
public:
    // Throws ConfigError when strategy_arms == 0.
    BanditPolicy(PolicyKind kind, std::size_t strategy_arms);

    // Adopts saved arm states. Throws ConfigError unless there are at least
    // two arms with consecutive ids and positive posterior parameters.
    BanditPolicy(PolicyKind kind, std::vector<ArmState> arms);

    PolicyKind kind() const noexcept { return kind_; }
    std::size_t strategy_arms() const noexcept { return arms_.size() - 1; }
    std::size_t inaction_arm() const noexcept { return arms_.size() - 1; }
    std::size_t arm_count() const noexcept { return arms_.size(); }
    std::span<const ArmState> arms() const noexcept { return arms_; }
    const ArmState& arm(std::size_t index) const { return arms_.at(index); }

    std::size_t select_arm(Rng& rng) const;

    // Credits a reward to an arm. A no-op for the uniform policy.
    void record(std::size_t arm, int reward);

private:
    PolicyKind kind_;
    std::vector<ArmState> arms_;
};

// Thompson draw (or uniform index) over an explicit arm list; lowest index
// wins ties. Throws ConfigError for fewer than two arms.
std::size_t select_arm(PolicyKind kind, std::span<const ArmState> arms, Rng& rng);

// 1 iff child_score is strictly above every parent score.
// Throws UsageError when parent_scores is empty.
int compute_reward(double child_score, std::span<const double> parent_scores);

// Conjugate Bernoulli update. Throws UsageError unless reward is 0 or 1.
ArmState update(ArmState arm, int reward);

}  // namespace opts::bandit
