#include "opts/strategies.hpp"

#include <fstream>
#include <map>
#include <regex>
#include <set>

#include "opts/errors.hpp"
#include "opts/templates.hpp"
#include "opts/text.hpp"

namespace opts::strategies {

namespace {

const std::regex& strategy_family() {
    static const std::regex family(R"(<strategy(?: \d+)?>|<input>)");
    return family;
}

std::string strategy_tag(std::size_t k) {
    return "<strategy " + std::to_string(k) + ">";
}

void require_prompt(std::string_view prompt_text) {
    if (prompt_text.empty()) {
        throw UsageError("prompt text to reformulate is empty");
    }
}

std::size_t strip_run(std::string_view s, char c, bool from_front) {
    std::size_t n = 0;
    if (from_front) {
        while (n < s.size() && s[n] == c) ++n;
    } else {
        while (n < s.size() && s[s.size() - 1 - n] == c) ++n;
    }
    return n;
}

}  // namespace

StrategyCatalog::StrategyCatalog(std::vector<Strategy> strategies) : strategies_(std::move(strategies)) {
    if (strategies_.empty()) {
        throw ConfigError("strategy catalog is empty");
    }
    std::set<std::string> ids;
    for (const auto& s : strategies_) {
        if (s.id.empty()) {
            throw ConfigError("strategy with empty id");
        }
        if (s.description.empty()) {
            throw ConfigError("strategy '" + s.id + "' has an empty description");
        }
        if (!ids.insert(s.id).second) {
            throw ConfigError("duplicate strategy id '" + s.id + "'");
        }
    }
}

StrategyCatalog StrategyCatalog::defaults() {
    return from_json(nlohmann::json::parse(embedded::strategies_json()));
}

StrategyCatalog StrategyCatalog::from_json(const nlohmann::json& j) {
    std::vector<Strategy> list;
    try {
        for (const auto& item : j.at("strategies")) {
            Strategy s;
            s.id = item.at("id").get<std::string>();
            s.name = item.value("name", s.id);
            s.description = item.at("description").get<std::string>();
            list.push_back(std::move(s));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed strategy catalog: ") + e.what());
    }
    return StrategyCatalog(std::move(list));
}

StrategyCatalog StrategyCatalog::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open strategy catalog " + path.string());
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return from_json(j);
}

nlohmann::json StrategyCatalog::to_json() const {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& s : strategies_) {
        list.push_back({{"id", s.id}, {"name", s.name}, {"description", s.description}});
    }
    return {{"strategies", std::move(list)}};
}

std::optional<std::size_t> StrategyCatalog::find(std::string_view id) const {
    for (std::size_t k = 0; k < strategies_.size(); ++k) {
        if (strategies_[k].id == id) {
            return k;
        }
    }
    return std::nullopt;
}

MetaPromptTemplate MetaPromptTemplate::defaults() {
    return {std::string(embedded::opts_system()), std::string(embedded::opts_user())};
}

MetaPromptTemplate expand_strategy_slots(const MetaPromptTemplate& single, std::size_t k) {
    if (k == 0) {
        throw TemplateError("cannot expand a strategy slot to zero strategies");
    }
    std::string slots = strategy_tag(1);
    for (std::size_t i = 2; i <= k; ++i) {
        slots += "\n- " + strategy_tag(i);
    }
    static const std::regex only_single("<strategy>");
    MetaPromptTemplate out = single;
    out.user_text = fill_placeholders(single.user_text, {{"<strategy>", slots}}, only_single);
    return out;
}

std::vector<llm::ChatMessage> render_single_strategy_messages(const MetaPromptTemplate& tmpl,
                                                              const Strategy& strategy,
                                                              std::string_view prompt_text) {
    require_prompt(prompt_text);
    const std::string user = fill_placeholders(
        tmpl.user_text,
        {{"<strategy>", strategy.description}, {"<input>", std::string(prompt_text)}},
        strategy_family());
    return {{llm::Role::System, tmpl.system_text}, {llm::Role::User, user}};
}

std::vector<llm::ChatMessage> render_all_strategies_messages(const MetaPromptTemplate& tmpl,
                                                             const StrategyCatalog& catalog,
                                                             std::string_view prompt_text) {
    require_prompt(prompt_text);
    std::map<std::string, std::string> values{{"<input>", std::string(prompt_text)}};
    for (std::size_t k = 0; k < catalog.size(); ++k) {
        values.emplace(strategy_tag(k + 1), catalog.at(k).description);
    }
    const std::string user = fill_placeholders(tmpl.user_text, values, strategy_family());
    return {{llm::Role::System, tmpl.system_text}, {llm::Role::User, user}};
}

std::string_view mechanism_name(MechanismKind kind) {
    switch (kind) {
        case MechanismKind::TS:
            return "TS";
        case MechanismKind::US:
            return "US";
        case MechanismKind::APET:
            return "APET";
    }
    return "TS";
}

SelectionMechanism SelectionMechanism::make(MechanismKind kind, std::size_t strategy_count) {
    SelectionMechanism m;
    m.kind = kind;
    if (kind == MechanismKind::TS) {
        m.bandit.emplace(bandit::PolicyKind::ThompsonSampling, strategy_count);
    } else if (kind == MechanismKind::US) {
        m.bandit.emplace(bandit::PolicyKind::UniformSampling, strategy_count);
    }
    return m;
}

OptsResources::OptsResources(StrategyCatalog catalog_in, MetaPromptTemplate tmpl)
    : catalog(std::move(catalog_in)),
      single(std::move(tmpl)),
      all(expand_strategy_slots(single, catalog.size())) {}

std::string clean_designer_reply(std::string_view reply) {
    std::string_view s = text::trim(reply);
    if (s.starts_with("```")) {
        const auto eol = s.find('\n');
        s = eol == std::string_view::npos ? std::string_view{} : s.substr(eol + 1);
        if (s.ends_with("```")) {
            s.remove_suffix(3);
        }
    } else {
        if (const auto n = strip_run(s, '"', true); n >= 3) {
            s.remove_prefix(n);
        }
        if (const auto n = strip_run(s, '"', false); n >= 3) {
            s.remove_suffix(n);
        }
    }
    s = text::trim(s);
    if (s.empty()) {
        throw GenerationError("prompt-designing model returned an empty reply");
    }
    return std::string(s);
}

OptsOutcome apply_opts(SelectionMechanism& mechanism, const OptsResources& resources,
                       std::string_view prompt_text, const llm::LlmClient& designer, Rng& rng) {
    require_prompt(prompt_text);
    if (mechanism.kind == MechanismKind::APET) {
        if (uniform01(rng) >= mechanism.apet_apply_probability) {
            return {std::string(prompt_text), std::nullopt, 0};
        }
        auto messages = render_all_strategies_messages(resources.all, resources.catalog, prompt_text);
        return {clean_designer_reply(designer.ask(std::move(messages))), std::nullopt, 1};
    }

    if (!mechanism.bandit) {
        throw ConfigError("selection mechanism " + std::string(mechanism_name(mechanism.kind)) +
                          " has no bandit");
    }
    const auto& policy = *mechanism.bandit;
    if (policy.strategy_arms() != resources.catalog.size()) {
        throw ConfigError("bandit has " + std::to_string(policy.strategy_arms()) +
                          " strategy arms but the catalog has " +
                          std::to_string(resources.catalog.size()) + " strategies");
    }
    const std::size_t arm = policy.select_arm(rng);
    if (arm == policy.inaction_arm()) {
        return {std::string(prompt_text), arm, 0};
    }
    auto messages =
        render_single_strategy_messages(resources.single, resources.catalog.at(arm), prompt_text);
    return {clean_designer_reply(designer.ask(std::move(messages))), arm, 1};
}

}  // namespace opts::strategies
