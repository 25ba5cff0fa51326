#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "opts/bandit.hpp"
#include "opts/llm.hpp"
#include "opts/rng.hpp"

namespace opts::strategies {

struct Strategy {
    std::string id;
    std::string name;
    std::string description;
};

// Ordered strategy list; arm k of a bandit maps to entry k for the whole run.
class StrategyCatalog {
public:
    // Throws ConfigError on an empty list, an empty description or a
    // duplicate id.
    explicit StrategyCatalog(std::vector<Strategy> strategies);

    // The eleven built-in strategies.
    static StrategyCatalog defaults();
    // Reads {"strategies": [{"id", "name", "description"}, ...]}.
    static StrategyCatalog load(const std::filesystem::path& path);
    static StrategyCatalog from_json(const nlohmann::json& j);

    nlohmann::json to_json() const;

    std::size_t size() const noexcept { return strategies_.size(); }
    const Strategy& at(std::size_t k) const { return strategies_.at(k); }
    const std::vector<Strategy>& entries() const noexcept { return strategies_; }
    std::optional<std::size_t> find(std::string_view id) const;

private:
    std::vector<Strategy> strategies_;
};

// System and user text of the strategy-application meta-prompt.
// The user text carries <strategy> (or <strategy 1>..<strategy K>) and <input>.
struct MetaPromptTemplate {
    std::string system_text;
    std::string user_text;

    static MetaPromptTemplate defaults();
};

// Turns the single "- <strategy>" bullet into K numbered bullets
// "- <strategy 1>" .. "- <strategy K>". Throws TemplateError if the
// template does not contain exactly one <strategy> tag.
MetaPromptTemplate expand_strategy_slots(const MetaPromptTemplate& single, std::size_t k);

std::vector<llm::ChatMessage> render_single_strategy_messages(const MetaPromptTemplate& tmpl,
                                                              const Strategy& strategy,
                                                              std::string_view prompt_text);

std::vector<llm::ChatMessage> render_all_strategies_messages(const MetaPromptTemplate& tmpl,
                                                             const StrategyCatalog& catalog,
                                                             std::string_view prompt_text);

enum class MechanismKind { TS, US, APET };

std::string_view mechanism_name(MechanismKind kind);

struct SelectionMechanism {
    MechanismKind kind = MechanismKind::TS;
    std::optional<bandit::BanditPolicy> bandit;
    double apet_apply_probability = 0.5;

    // TS and US get a fresh bandit over K + 1 arms; APET gets none.
    static SelectionMechanism make(MechanismKind kind, std::size_t strategy_count);
};

// Catalog plus the two rendered forms of the meta-prompt.
struct OptsResources {
    StrategyCatalog catalog;
    MetaPromptTemplate single;
    MetaPromptTemplate all;

    explicit OptsResources(StrategyCatalog catalog,
                           MetaPromptTemplate tmpl = MetaPromptTemplate::defaults());
};

struct OptsOutcome {
    std::string prompt;
    // Arm chosen by TS/US; the inaction arm is arm K. Absent for APET.
    std::optional<std::size_t> arm;
    int llm_calls = 0;
};

// Trims whitespace and strips surrounding triple-quote or backtick fences.
// Throws GenerationError if nothing is left.
std::string clean_designer_reply(std::string_view reply);

OptsOutcome apply_opts(SelectionMechanism& mechanism, const OptsResources& resources,
                       std::string_view prompt_text, const llm::LlmClient& designer, Rng& rng);

}  // namespace opts::strategies
