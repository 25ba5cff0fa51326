#include <algorithm>

#include "opts/errors.hpp"
#include "opts/llm.hpp"

namespace opts::llm {

ScriptedBackend& ScriptedBackend::on(std::string name, Predicate when, Responder reply) {
    std::lock_guard lock(mutex_);
    rules_.push_back({std::move(name), std::move(when), std::move(reply)});
    return *this;
}

ScriptedBackend& ScriptedBackend::on_user_contains(std::string needle, std::string reply) {
    std::string name = "user contains \"" + needle + "\"";
    return on(
        std::move(name),
        [needle](const LlmRequest& r) { return last_user_text(r).find(needle) != std::string::npos; },
        [reply = std::move(reply)](const LlmRequest&) { return reply; });
}

const std::string& ScriptedBackend::last_user_text(const LlmRequest& request) {
    static const std::string empty;
    for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it) {
        if (it->role == Role::User) {
            return it->content;
        }
    }
    return empty;
}

std::string ScriptedBackend::complete(const LlmRequest& request, CallBudget* budget) {
    BudgetTicket ticket(budget);
    std::lock_guard lock(mutex_);
    for (auto& rule : rules_) {
        if (rule.when(request)) {
            std::string reply = rule.reply(request);
            ++rule.hits;
            ++invocations_;
            ticket.commit();
            return reply;
        }
    }
    std::string excerpt = last_user_text(request).substr(0, 160);
    throw ScriptMiss("no scripted rule matches request: " + excerpt);
}

long long ScriptedBackend::invocations(std::string_view rule) const {
    std::lock_guard lock(mutex_);
    long long total = 0;
    for (const auto& r : rules_) {
        if (r.name == rule) {
            total += r.hits;
        }
    }
    return total;
}

}  // namespace opts::llm
