#include <doctest.h>

#include <array>
#include <vector>

#include "opts/bandit.hpp"
#include "opts/errors.hpp"
#include "opts/rng.hpp"

using namespace opts;
using namespace opts::bandit;

TEST_CASE("conjugate update moves one parameter") {
    ArmState a;
    a = update(a, 1);
    CHECK(a.alpha == 2.0);
    CHECK(a.beta == 1.0);
    a = update(a, 0);
    CHECK(a.alpha == 2.0);
    CHECK(a.beta == 2.0);
    CHECK(a.pulls == 2);
    CHECK(a.cumulative_reward == 1);
}

TEST_CASE("seven rewards with three ones give Beta(4, 5)") {
    ArmState a;
    for (int r : {1, 0, 0, 1, 0, 1, 0}) a = update(a, r);
    CHECK(a.alpha == 4.0);
    CHECK(a.beta == 5.0);
}

TEST_CASE("update rejects rewards other than 0 and 1") {
    CHECK_THROWS_AS(update(ArmState{}, 2), UsageError);
    CHECK_THROWS_AS(update(ArmState{}, -1), UsageError);
}

TEST_CASE("reward needs a strict improvement over every parent") {
    const std::vector<double> two{0.50, 0.55};
    CHECK(compute_reward(0.60, two) == 1);
    const std::vector<double> one{0.50};
    CHECK(compute_reward(0.50, one) == 0);
    const std::vector<double> zeros{0.0, 0.0};
    CHECK(compute_reward(0.0, zeros) == 0);
    CHECK_THROWS_AS(compute_reward(0.5, std::span<const double>{}), UsageError);
}

TEST_CASE("policy arm layout") {
    BanditPolicy p(PolicyKind::ThompsonSampling, 11);
    CHECK(p.arm_count() == 12);
    CHECK(p.inaction_arm() == 11);
    for (std::size_t i = 0; i < p.arm_count(); ++i) CHECK(p.arm(i).arm_id == i);
    CHECK_THROWS_AS(BanditPolicy(PolicyKind::ThompsonSampling, 0), ConfigError);
}

TEST_CASE("uniform policy never touches arm state") {
    BanditPolicy p(PolicyKind::UniformSampling, 3);
    p.record(1, 1);
    p.record(2, 0);
    for (const auto& a : p.arms()) {
        CHECK(a.alpha == 1.0);
        CHECK(a.beta == 1.0);
        CHECK(a.pulls == 0);
    }
}

TEST_CASE("selection over fewer than two arms is a configuration error") {
    Rng rng = make_stream(1, 1);
    std::vector<ArmState> single(1);
    CHECK_THROWS_AS(select_arm(PolicyKind::ThompsonSampling, single, rng), ConfigError);
    CHECK_THROWS_AS(select_arm(PolicyKind::UniformSampling, std::span<const ArmState>{}, rng), ConfigError);
}

TEST_CASE("a confident arm wins almost every Thompson draw") {
    std::vector<ArmState> arms{{0, 1000.0, 1.0, 0, 0}, {1, 1.0, 1000.0, 0, 0}};
    Rng rng = make_stream(42, 9);
    int wins = 0;
    for (int i = 0; i < 10000; ++i) wins += select_arm(PolicyKind::ThompsonSampling, arms, rng) == 0;
    CHECK(wins > 9990);
}

TEST_CASE("restoring saved arms validates them") {
    std::vector<ArmState> bad{{0, 1.0, 1.0, 0, 0}, {2, 1.0, 1.0, 0, 0}};
    CHECK_THROWS_AS(BanditPolicy(PolicyKind::ThompsonSampling, bad), ConfigError);
    std::vector<ArmState> zero{{0, 0.0, 1.0, 0, 0}, {1, 1.0, 1.0, 0, 0}};
    CHECK_THROWS_AS(BanditPolicy(PolicyKind::ThompsonSampling, zero), ConfigError);
    std::vector<ArmState> ok{{0, 3.0, 2.0, 3, 2}, {1, 1.0, 1.0, 0, 0}};
    BanditPolicy p(PolicyKind::ThompsonSampling, ok);
    CHECK(p.arm(0).alpha == 3.0);
}

TEST_CASE("rng state survives a text round trip") {
    Rng a = make_stream(7, 2);
    for (int i = 0; i < 10; ++i) a();
    Rng b = restore_rng(save_rng(a));
    for (int i = 0; i < 100; ++i) CHECK(a() == b());
    CHECK_THROWS_AS(restore_rng("not an engine"), CorruptCheckpoint);
}

TEST_CASE("streams of one seed differ; equal seeds agree") {
    auto s = RngStreams::from_seed(5);
    auto t = RngStreams::from_seed(5);
    CHECK(s.evolution() == t.evolution());
    CHECK(RngStreams::from_seed(5).evolution() != RngStreams::from_seed(5).selection());
}

TEST_CASE("beta sampler has the right mean") {
    Rng rng = make_stream(3, 3);
    double sum = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) sum += sample_beta(rng, 2.0, 6.0);
    CHECK(sum / n == doctest::Approx(0.25).epsilon(0.02));
}
