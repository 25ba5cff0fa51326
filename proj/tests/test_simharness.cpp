#include <doctest.h>

#include <cmath>

#include "opts/bandit.hpp"
#include "opts/errors.hpp"
#include "opts/simharness.hpp"

using namespace opts;
using namespace opts::simharness;
using bandit::BanditPolicy;
using bandit::PolicyKind;

namespace {

// BanditPolicy always carries an inaction arm, so a "K-armed" environment
// here uses K - 1 strategy arms.
BanditPolicy policy_for(PolicyKind kind, std::size_t total_arms) { return BanditPolicy(kind, total_arms - 1); }

}  // namespace

TEST_CASE("environment validation") {
    CHECK_THROWS_AS(BernoulliEnv({}, 1), ConfigError);
    CHECK_THROWS_AS(BernoulliEnv({0.5, 1.5}, 1), ConfigError);
    CHECK_THROWS_AS(BernoulliEnv({-0.1, 0.5}, 1), ConfigError);
    BernoulliEnv env({1.0, 0.0}, 1);
    for (int i = 0; i < 50; ++i) {
        CHECK(env.pull(0) == 1);
        CHECK(env.pull(1) == 0);
    }
}

TEST_CASE("a certain arm dominates within 100 rounds") {
    int good_seeds = 0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        auto policy = policy_for(PolicyKind::ThompsonSampling, 2);
        BernoulliEnv env({1.0, 0.0}, seed);
        Rng rng = make_stream(seed, 99);
        const auto r = run_policy(policy, env, 100, rng);
        if (r.counts[0] >= 90) ++good_seeds;
        CHECK(r.total_reward == r.counts[0]);
    }
    CHECK(good_seeds >= 198);
}

TEST_CASE("equal means: uniform counts stay near rounds / K") {
    auto policy = policy_for(PolicyKind::UniformSampling, 4);
    BernoulliEnv env({0.5, 0.5, 0.5, 0.5}, 3);
    Rng rng = make_stream(3, 1);
    const long long rounds = 40000;
    const auto r = run_policy(policy, env, rounds, rng);
    for (auto c : r.counts) CHECK(std::abs(static_cast<double>(c) - rounds / 4.0) <= 0.05 * rounds / 4.0);
    // The uniform policy never learns.
    for (const auto& a : policy.arms()) CHECK(a.pulls == 0);
}

TEST_CASE("run_policy bookkeeping") {
    auto policy = policy_for(PolicyKind::ThompsonSampling, 3);
    BernoulliEnv env({0.2, 0.5, 0.8}, 1);
    Rng rng = make_stream(1, 1);
    const auto one = run_policy(policy, env, 1, rng);
    CHECK(one.counts[0] + one.counts[1] + one.counts[2] == 1);
    CHECK(one.choices.size() == 1);
    CHECK_THROWS_AS(run_policy(policy, env, 0, rng), UsageError);
    BernoulliEnv mismatched({0.2, 0.5}, 1);
    CHECK_THROWS_AS(run_policy(policy, mismatched, 10, rng), UsageError);
}

TEST_CASE("world score is a pure function of token and tags") {
    const auto world = SyntheticWorld::one_good_arm(11, 3, 0.6, 0.05, 42);
    const double base = world.base_score("P7");
    CHECK(base >= 0.2);
    CHECK(base <= 0.4);
    CHECK(world.score("P7") == base);
    CHECK(world.score("P7 [s3+] [s1-] [s3+]") == doctest::Approx(base + 2 * 0.002));
    CHECK(world.score("P7 [s3+] [s1-] [s3+]") == world.score("P7 [s3+] [s1-] [s3+]"));
    // Different world seeds give different bases.
    const auto other = SyntheticWorld::one_good_arm(11, 3, 0.6, 0.05, 43);
    CHECK(other.base_score("P7") != base);

    SyntheticWorld saturated = world;
    saturated.improvement_step = 0.5;
    CHECK(saturated.score("P7 [s1+] [s1+] [s1+]") == 1.0);
}

TEST_CASE("world validation") {
    CHECK_THROWS_AS(SyntheticWorld::one_good_arm(11, 11, 0.6, 0.05, 1), ConfigError);
    CHECK_THROWS_AS(SyntheticWorld::one_good_arm(11, 0, 1.6, 0.05, 1), ConfigError);
    SyntheticWorld empty;
    CHECK_THROWS_AS(empty.validate(), ConfigError);
}

TEST_CASE("synthetic runs are deterministic and offline") {
    const auto world = SyntheticWorld::one_good_arm(11, 4, 0.6, 0.05, 7);
    SyntheticRunConfig cfg;
    cfg.generations = 6;
    cfg.seed = 7;
    const auto a = make_synthetic_run(world, cfg);
    const auto b = make_synthetic_run(world, cfg);
    REQUIRE(a.state.history.size() == 60);
    REQUIRE(a.state.history.size() == b.state.history.size());
    for (std::size_t i = 0; i < a.state.history.size(); ++i) {
        CHECK(evoprompt::to_json(a.state.history[i]) == evoprompt::to_json(b.state.history[i]));
    }
    CHECK(a.designer_invocations > 0);
    // No budget pointer ever reaches a network backend.
    CHECK_FALSE(a.state.budget->limit().has_value());
}

TEST_CASE("scores are recomputable from the tags alone") {
    const auto world = SyntheticWorld::one_good_arm(11, 4, 0.6, 0.05, 11);
    SyntheticRunConfig cfg;
    cfg.generations = 5;
    cfg.seed = 11;
    const auto run = make_synthetic_run(world, cfg);
    for (const auto& r : run.state.history) {
        if (r.child_score) CHECK(*r.child_score == world.score(r.child_description));
    }
    for (const auto& m : run.state.population.members) CHECK(m.score() == world.score(m.description));
}

TEST_CASE("a world without improvements never beats its base maximum") {
    auto world = SyntheticWorld::one_good_arm(11, 0, 0.0, 0.0, 5);
    for (auto algorithm : {evoprompt::Algorithm::DE, evoprompt::Algorithm::GA}) {
        SyntheticRunConfig cfg;
        cfg.algorithm = algorithm;
        cfg.generations = 8;
        cfg.seed = 5;
        const auto run = make_synthetic_run(world, cfg);
        for (const auto& r : run.state.history) {
            if (r.child_score) CHECK(*r.child_score <= world.base_high);
        }
        CHECK(run.outcome.best->score() <= world.base_high);
    }
}

TEST_CASE("helpful strategy is pulled more under Thompson sampling") {
    const auto world = SyntheticWorld::one_good_arm(11, 2, 0.6, 0.05, 3);
    SyntheticRunConfig ts;
    ts.seed = 3;
    SyntheticRunConfig us = ts;
    us.mechanism = strategies::MechanismKind::US;
    const auto a = make_synthetic_run(world, ts);
    const auto b = make_synthetic_run(world, us);
    CHECK(arm_share(a.state.history, 2, 21) > arm_share(b.state.history, 2, 21));
}

TEST_CASE("arm share counts the selected arm from a generation onward") {
    std::vector<evoprompt::HistoryRecord> h(4);
    h[0].generation = 1;
    h[0].arm = 2;
    h[1].generation = 2;
    h[1].arm = 2;
    h[2].generation = 2;
    h[2].arm = 1;
    h[3].generation = 3;
    // Records without a selected arm (failed steps) are left out.
    CHECK(arm_share(h, 2, 1) == doctest::Approx(2.0 / 3.0));
    CHECK(arm_share(h, 2, 2) == 0.5);
    CHECK(arm_share(h, 2, 9) == 0.0);
}
