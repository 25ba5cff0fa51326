#include <regex>

#include "opts/errors.hpp"
#include "opts/evoprompt.hpp"
#include "opts/templates.hpp"
#include "opts/text.hpp"

namespace opts::evoprompt {

namespace {

const std::regex& prompt_family() {
    static const std::regex family(R"(<prompt\d>)");
    return family;
}

}  // namespace

MetaPrompts MetaPrompts::defaults() {
    return {std::string(embedded::ga_user()), std::string(embedded::de_user()),
            std::string(embedded::init_variations()), std::string(embedded::resample())};
}

std::vector<llm::ChatMessage> render_ga_messages(const MetaPrompts& prompts, std::string_view first,
                                                 std::string_view second) {
    auto user = fill_placeholders(
        prompts.ga_user, {{"<prompt1>", std::string(first)}, {"<prompt2>", std::string(second)}},
        prompt_family());
    return {{llm::Role::User, std::move(user)}};
}

std::vector<llm::ChatMessage> render_de_messages(const MetaPrompts& prompts, std::string_view parent,
                                                 std::string_view donor1, std::string_view donor2,
                                                 std::string_view best) {
    auto user = fill_placeholders(prompts.de_user,
                                  {{"<prompt0>", std::string(parent)},
                                   {"<prompt1>", std::string(donor1)},
                                   {"<prompt2>", std::string(donor2)},
                                   {"<prompt3>", std::string(best)}},
                                  prompt_family());
    return {{llm::Role::User, std::move(user)}};
}

std::string parse_generated_prompt(std::string_view reply) {
    static constexpr std::string_view kOpen = "<prompt>";
    static constexpr std::string_view kClose = "</prompt>";
    const auto close = reply.rfind(kClose);
    if (close == std::string_view::npos) {
        throw ParseError("reply has no closing </prompt> tag");
    }
    const auto open = reply.substr(0, close).rfind(kOpen);
    if (open == std::string_view::npos) {
        throw ParseError("reply has no <prompt> tag before the last </prompt>");
    }
    const auto inner = text::trim(reply.substr(open + kOpen.size(), close - open - kOpen.size()));
    if (inner.empty()) {
        throw ParseError("reply has an empty <prompt></prompt> block");
    }
    return std::string(inner);
}

std::vector<std::string> parse_variations(std::string_view reply, std::size_t expected) {
    static const std::regex numbered(R"(^\s*\d+\s*[.):]\s*(.*)$)");
    static const std::regex bulleted(R"(^\s*[-*]\s+(.*)$)");
    std::vector<std::string> numbered_items;
    std::vector<std::string> plain_items;
    for (const auto line_view : text::split_lines(reply)) {
        const std::string line(line_view);
        std::smatch m;
        if (std::regex_match(line, m, numbered)) {
            auto item = text::trim(std::string_view(line).substr(m.position(1)));
            if (!item.empty()) numbered_items.emplace_back(item);
        } else if (std::regex_match(line, m, bulleted)) {
            auto item = text::trim(std::string_view(line).substr(m.position(1)));
            if (!item.empty()) plain_items.emplace_back(item);
        } else if (auto item = text::trim(line); !item.empty()) {
            plain_items.emplace_back(item);
        }
    }
    // A numbered list wins over any surrounding chatter.
    auto& items = numbered_items.empty() ? plain_items : numbered_items;
    if (items.size() < expected) {
        throw ParseError("expected " + std::to_string(expected) + " variations, found " +
                         std::to_string(items.size()));
    }
    items.resize(expected);
    return items;
}

}  // namespace opts::evoprompt
