#include "opts/bandit.hpp"

#include <algorithm>
#include <string>

#include "opts/errors.hpp"

namespace opts::bandit {

BanditPolicy::BanditPolicy(PolicyKind kind, std::size_t strategy_arms) : kind_(kind) {
    if (strategy_arms == 0) {
        throw ConfigError("bandit needs at least one strategy arm besides the inaction arm");
    }
    arms_.resize(strategy_arms + 1);
    for (std::size_t i = 0; i < arms_.size(); ++i) {
        arms_[i].arm_id = i;
    }
}

BanditPolicy::BanditPolicy(PolicyKind kind, std::vector<ArmState> arms)
    : kind_(kind), arms_(std::move(arms)) {
    if (arms_.size() < 2) {
        throw ConfigError("bandit needs at least one strategy arm besides the inaction arm");
    }
    for (std::size_t i = 0; i < arms_.size(); ++i) {
        const auto& a = arms_[i];
        if (a.arm_id != i) {
            throw ConfigError("arm ids must be 0..K in order, got " + std::to_string(a.arm_id) +
                              " at position " + std::to_string(i));
        }
        if (!(a.alpha > 0.0) || !(a.beta > 0.0)) {
            throw ConfigError("arm " + std::to_string(i) + " has a non-positive Beta parameter");
        }
        if (a.pulls < 0 || a.cumulative_reward < 0 || a.cumulative_reward > a.pulls) {
            throw ConfigError("arm " + std::to_string(i) + " has inconsistent pull counts");
        }
    }
}

std::size_t BanditPolicy::select_arm(Rng& rng) const {
    return bandit::select_arm(kind_, arms_, rng);
}

void BanditPolicy::record(std::size_t arm, int reward) {
    if (kind_ == PolicyKind::UniformSampling) {
        return;
    }
    auto& state = arms_.at(arm);
    state = update(state, reward);
}

std::size_t select_arm(PolicyKind kind, std::span<const ArmState> arms, Rng& rng) {
    if (arms.size() < 2) {
        throw ConfigError("arm selection needs at least one strategy arm plus the inaction arm");
    }
    if (kind == PolicyKind::UniformSampling) {
        return uniform_index(rng, arms.size());
    }
    std::size_t best = 0;
    double best_draw = -1.0;
    for (std::size_t k = 0; k < arms.size(); ++k) {
        const double theta = sample_beta(rng, arms[k].alpha, arms[k].beta);
        if (theta > best_draw) {
            best_draw = theta;
            best = k;
        }
    }
    return best;
}

int compute_reward(double child_score, std::span<const double> parent_scores) {
    if (parent_scores.empty()) {
        throw UsageError("reward needs at least one parent score");
    }
    const double best_parent = *std::max_element(parent_scores.begin(), parent_scores.end());
    return child_score > best_parent ? 1 : 0;
}

ArmState update(ArmState arm, int reward) {
    if (reward != 0 && reward != 1) {
        throw UsageError("reward must be 0 or 1, got " + std::to_string(reward));
    }
    if (reward == 1) {
        arm.alpha += 1.0;
    } else {
        arm.beta += 1.0;
    }
    arm.pulls += 1;
    arm.cumulative_reward += reward;
    return arm;
}

}  // namespace opts::bandit
