#include <openssl/evp.h>

#include <array>
#include <string>

#include "opts/errors.hpp"
#include "opts/llm.hpp"

namespace opts::llm {

std::string_view role_name(Role role) {
    switch (role) {
        case Role::System:
            return "system";
        case Role::User:
            return "user";
        case Role::Assistant:
            return "assistant";
    }
    return "user";
}

Role parse_role(std::string_view name) {
    if (name == "system") return Role::System;
    if (name == "user") return Role::User;
    if (name == "assistant") return Role::Assistant;
    throw ParseError("unknown chat role '" + std::string(name) + "'");
}

nlohmann::json request_to_json(const LlmRequest& request) {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : request.messages) {
        messages.push_back({{"role", role_name(m.role)}, {"content", m.content}});
    }
    nlohmann::json j = {{"model", request.model},
                        {"messages", std::move(messages)},
                        {"temperature", request.temperature},
                        {"max_tokens", request.max_tokens}};
    if (request.seed) {
        j["seed"] = *request.seed;
    }
    return j;
}

LlmRequest request_from_json(const nlohmann::json& j) {
    LlmRequest request;
    request.model = j.at("model").get<std::string>();
    for (const auto& m : j.at("messages")) {
        request.messages.push_back(
            {parse_role(m.at("role").get<std::string>()), m.at("content").get<std::string>()});
    }
    request.temperature = j.at("temperature").get<double>();
    request.max_tokens = j.at("max_tokens").get<int>();
    if (j.contains("seed")) {
        request.seed = j.at("seed").get<std::int64_t>();
    }
    return request;
}

std::string request_fingerprint(const LlmRequest& request) {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : request.messages) {
        messages.push_back(nlohmann::json::array({role_name(m.role), m.content}));
    }
    const nlohmann::json canonical = {{"model", request.model},
                                      {"messages", std::move(messages)},
                                      {"temperature", request.temperature},
                                      {"max_tokens", request.max_tokens}};
    const std::string bytes = canonical.dump();

    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int length = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 digest failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string hex;
    hex.reserve(length * 2);
    for (unsigned int i = 0; i < length; ++i) {
        hex.push_back(kHex[digest[i] >> 4]);
        hex.push_back(kHex[digest[i] & 0x0f]);
    }
    return hex;
}

CallBudget::CallBudget(std::optional<long long> limit, long long used) : limit_(limit), used_(used) {
    if (limit_ && *limit_ <= 0) {
        throw ConfigError("call budget limit must be positive");
    }
}

bool CallBudget::exhausted() const noexcept {
    return limit_ && used_.load() >= *limit_;
}

void CallBudget::acquire() {
    if (!limit_) {
        used_.fetch_add(1);
        return;
    }
    long long current = used_.load();
    do {
        if (current >= *limit_) {
            throw BudgetExceeded(*limit_);
        }
    } while (!used_.compare_exchange_weak(current, current + 1));
}

void CallBudget::refund() noexcept {
    used_.fetch_sub(1);
}

void CallBudget::set_limit(std::optional<long long> limit) {
    if (limit && *limit <= 0) {
        throw ConfigError("call budget limit must be positive");
    }
    limit_ = limit;
}

void CallBudget::set_used(long long used) {
    used_.store(used);
}

BudgetTicket::BudgetTicket(CallBudget* budget) : budget_(budget) {
    if (budget_) {
        budget_->acquire();
    }
}

BudgetTicket::~BudgetTicket() {
    if (budget_ && !committed_) {
        budget_->refund();
    }
}

std::string complete(Backend& backend, CallBudget* budget, const LlmRequest& request) {
    if (request.model.empty()) {
        throw UsageError("LLM request names no model");
    }
    if (request.messages.empty()) {
        throw UsageError("LLM request has no messages");
    }
    for (const auto& m : request.messages) {
        if (m.role != Role::Assistant && m.content.empty()) {
            throw UsageError("outbound " + std::string(role_name(m.role)) + " message is empty");
        }
    }
    if (request.temperature < 0.0) {
        throw UsageError("temperature must be non-negative");
    }
    if (request.max_tokens <= 0) {
        throw UsageError("max_tokens must be positive");
    }
    return backend.complete(request, budget);
}

LlmClient::LlmClient(std::shared_ptr<Backend> backend, std::string model, double temperature,
                     int max_tokens, CallBudget* budget)
    : backend_(std::move(backend)),
      model_(std::move(model)),
      temperature_(temperature),
      max_tokens_(max_tokens),
      budget_(budget) {}

LlmRequest LlmClient::make_request(std::vector<ChatMessage> messages) const {
    return LlmRequest{model_, std::move(messages), temperature_, max_tokens_, std::nullopt};
}

std::string LlmClient::ask(std::vector<ChatMessage> messages) const {
    if (!backend_) {
        throw UsageError("LLM client has no backend");
    }
    return complete(*backend_, budget_, make_request(std::move(messages)));
}

}  // namespace opts::llm
