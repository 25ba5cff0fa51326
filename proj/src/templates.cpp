#include "opts/templates.hpp"

#include "opts/errors.hpp"

namespace opts {

std::string fill_placeholders(std::string_view text, const std::map<std::string, std::string>& values,
                              const std::regex& family) {
    std::map<std::string, int> seen;
    std::string out;
    out.reserve(text.size());
    auto cursor = text.begin();
    for (std::regex_iterator<std::string_view::const_iterator> it(text.begin(), text.end(), family), end;
         it != end; ++it) {
        const auto& match = *it;
        const std::string tag = match.str();
        const auto value = values.find(tag);
        if (value == values.end()) {
            throw TemplateError("template placeholder " + tag + " has no value");
        }
        out.append(cursor, match[0].first);
        out += value->second;
        cursor = match[0].second;
        ++seen[tag];
    }
    out.append(cursor, text.end());
    for (const auto& [tag, _] : values) {
        const int count = seen[tag];
        if (count != 1) {
            throw TemplateError("template placeholder " + tag + " occurs " + std::to_string(count) +
                                " times, expected exactly once");
        }
    }
    return out;
}

}  // namespace opts
