#include <algorithm>

#include "opts/errors.hpp"
#include "opts/evoprompt.hpp"

namespace opts::evoprompt {

namespace {

using nlohmann::json;

template <class T>
json optional_json(const std::optional<T>& value) {
    return value ? json(*value) : json();
}

template <class T>
std::optional<T> optional_from(const json& j, const char* key) {
    const auto& v = j.at(key);
    if (v.is_null()) return std::nullopt;
    return v.get<T>();
}

json candidate_to_json(const Candidate& c) {
    return {{"id", c.id},
            {"description", c.description},
            {"dev_score", optional_json(c.dev_score)},
            {"parents", c.lineage.parent_ids},
            {"arm", optional_json(c.lineage.arm)},
            {"strategy_applied", c.lineage.strategy_applied},
            {"generation", c.lineage.generation}};
}

Candidate candidate_from_json(const json& j) {
    Candidate c;
    c.id = j.at("id").get<long long>();
    c.description = j.at("description").get<std::string>();
    c.dev_score = optional_from<double>(j, "dev_score");
    c.lineage.parent_ids = j.at("parents").get<std::vector<long long>>();
    c.lineage.arm = optional_from<std::size_t>(j, "arm");
    c.lineage.strategy_applied = j.at("strategy_applied").get<bool>();
    c.lineage.generation = j.at("generation").get<int>();
    return c;
}

strategies::MechanismKind mechanism_from_name(const std::string& name) {
    if (name == "TS") return strategies::MechanismKind::TS;
    if (name == "US") return strategies::MechanismKind::US;
    if (name == "APET") return strategies::MechanismKind::APET;
    throw CorruptCheckpoint("unknown selection mechanism '" + name + "'");
}

}  // namespace

std::string_view algorithm_name(Algorithm algorithm) {
    return algorithm == Algorithm::GA ? "GA" : "DE";
}

double Candidate::score() const {
    if (!dev_score) {
        throw UsageError("candidate " + std::to_string(id) + " has no dev score");
    }
    return *dev_score;
}

std::size_t Population::best_index() const {
    if (members.empty()) {
        throw UsageError("empty population has no best member");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < members.size(); ++i) {
        if (members[i].score() > members[best].score()) {
            best = i;
        }
    }
    return best;
}

json to_json(const HistoryRecord& r) {
    return {{"generation", r.generation},
            {"slot", r.slot},
            {"child_id", optional_json(r.child_id)},
            {"parent_ids", r.parent_ids},
            {"parent_scores", r.parent_scores},
            {"arm", optional_json(r.arm)},
            {"strategy_applied", r.strategy_applied},
            {"reward", optional_json(r.reward)},
            {"child_score", optional_json(r.child_score)},
            {"accepted", r.accepted},
            {"child_description", r.child_description},
            {"designer_calls", r.designer_calls},
            {"error", optional_json(r.error)}};
}

HistoryRecord history_from_json(const json& j) {
    HistoryRecord r;
    r.generation = j.at("generation").get<int>();
    r.slot = j.at("slot").get<int>();
    r.child_id = optional_from<long long>(j, "child_id");
    r.parent_ids = j.at("parent_ids").get<std::vector<long long>>();
    r.parent_scores = j.at("parent_scores").get<std::vector<double>>();
    r.arm = optional_from<std::size_t>(j, "arm");
    r.strategy_applied = j.at("strategy_applied").get<bool>();
    r.reward = optional_from<int>(j, "reward");
    r.child_score = optional_from<double>(j, "child_score");
    r.accepted = j.at("accepted").get<bool>();
    r.child_description = j.at("child_description").get<std::string>();
    r.designer_calls = j.at("designer_calls").get<int>();
    r.error = optional_from<std::string>(j, "error");
    return r;
}

json checkpoint_to_json(const RunState& state) {
    json population = json::array();
    for (const auto& c : state.population.members) {
        population.push_back(candidate_to_json(c));
    }
    json mechanism;
    if (state.mechanism) {
        json arms = json::array();
        if (state.mechanism->bandit) {
            for (const auto& a : state.mechanism->bandit->arms()) {
                arms.push_back({{"arm_id", a.arm_id},
                                {"alpha", a.alpha},
                                {"beta", a.beta},
                                {"pulls", a.pulls},
                                {"cumulative_reward", a.cumulative_reward}});
            }
        }
        mechanism = {{"kind", strategies::mechanism_name(state.mechanism->kind)},
                     {"apet_apply_probability", state.mechanism->apet_apply_probability},
                     {"arms", std::move(arms)}};
    }
    return {{"kind", "generation"},
            {"generation", state.population.generation},
            {"initialized", state.initialized},
            {"population", std::move(population)},
            {"mechanism", std::move(mechanism)},
            {"rng",
             {{"evolution", save_rng(state.rng.evolution)},
              {"selection", save_rng(state.rng.selection)},
              {"split", save_rng(state.rng.split)}}},
            {"budget", {{"limit", optional_json(state.budget->limit())}, {"used", state.budget->used()}}},
            {"next_candidate_id", state.next_candidate_id},
            {"history_records", state.history.size()},
            {"best_ever", state.best_ever ? candidate_to_json(*state.best_ever) : json()}};
}

RunState checkpoint_from_json(const json& j) {
    try {
        if (j.at("kind").get<std::string>() != "generation") {
            throw CorruptCheckpoint("not a generation checkpoint record");
        }
        RunState state;
        state.population.generation = j.at("generation").get<int>();
        state.initialized = j.at("initialized").get<bool>();
        for (const auto& c : j.at("population")) {
            state.population.members.push_back(candidate_from_json(c));
        }
        const auto& m = j.at("mechanism");
        if (!m.is_null()) {
            strategies::SelectionMechanism mechanism;
            mechanism.kind = mechanism_from_name(m.at("kind").get<std::string>());
            mechanism.apet_apply_probability = m.at("apet_apply_probability").get<double>();
            if (mechanism.kind != strategies::MechanismKind::APET) {
                std::vector<bandit::ArmState> arms;
                for (const auto& a : m.at("arms")) {
                    arms.push_back({a.at("arm_id").get<std::size_t>(), a.at("alpha").get<double>(),
                                    a.at("beta").get<double>(), a.at("pulls").get<long long>(),
                                    a.at("cumulative_reward").get<long long>()});
                }
                const auto kind = mechanism.kind == strategies::MechanismKind::TS
                                      ? bandit::PolicyKind::ThompsonSampling
                                      : bandit::PolicyKind::UniformSampling;
                try {
                    mechanism.bandit.emplace(kind, std::move(arms));
                } catch (const ConfigError& e) {
                    throw CorruptCheckpoint(std::string("bad bandit state: ") + e.what());
                }
            }
            state.mechanism = std::move(mechanism);
        }
        const auto& rng = j.at("rng");
        state.rng.evolution = restore_rng(rng.at("evolution").get<std::string>());
        state.rng.selection = restore_rng(rng.at("selection").get<std::string>());
        state.rng.split = restore_rng(rng.at("split").get<std::string>());
        const auto& budget = j.at("budget");
        state.budget = std::make_shared<llm::CallBudget>(optional_from<long long>(budget, "limit"),
                                                         budget.at("used").get<long long>());
        state.next_candidate_id = j.at("next_candidate_id").get<long long>();
        j.at("history_records").get<std::size_t>();
        if (!j.at("best_ever").is_null()) {
            state.best_ever = candidate_from_json(j.at("best_ever"));
        }
        for (const auto& c : state.population.members) {
            if (!c.dev_score) {
                throw CorruptCheckpoint("population member " + std::to_string(c.id) + " is unscored");
            }
        }
        return state;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptCheckpoint(std::string("corrupt checkpoint: ") + e.what());
    } catch (const ConfigError& e) {
        throw CorruptCheckpoint(std::string("corrupt checkpoint: ") + e.what());
    }
}

}  // namespace opts::evoprompt
