#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <thread>

#include "opts/errors.hpp"
#include "opts/llm.hpp"

namespace opts::llm {

namespace {

bool transient_status(int status) {
    return status == 429 || (status >= 500 && status <= 599);
}

std::string extract_content(const std::string& body) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
        throw TransportError(std::string("malformed chat-completions response: ") + e.what(), 200, body);
    }
    try {
        const auto& content = j.at("choices").at(0).at("message").at("content");
        if (content.is_null()) {
            return {};
        }
        return content.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("unexpected chat-completions response: ") + e.what(), 200,
                             body);
    }
}

}  // namespace

HttpBackend::HttpBackend(HttpSettings settings) : settings_(std::move(settings)) {
    if (settings_.retry.max_attempts < 1) {
        throw ConfigError("HTTP retry policy needs at least one attempt");
    }
}

std::string HttpBackend::complete(const LlmRequest& request, CallBudget* budget) {
    BudgetTicket ticket(budget);

    httplib::Client client(settings_.base_url);
    client.set_connection_timeout(settings_.timeout);
    client.set_read_timeout(settings_.timeout);
    client.set_write_timeout(settings_.timeout);
    httplib::Headers headers;
    if (!settings_.api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + settings_.api_key);
    }
    const std::string body = request_to_json(request).dump();

    auto backoff = settings_.retry.initial_backoff;
    std::string last_failure;
    int last_status = 0;
    std::string last_body;
    for (int attempt = 1; attempt <= settings_.retry.max_attempts; ++attempt) {
        ++attempts_;
        auto result = client.Post(settings_.path, headers, body, "application/json");
        if (!result) {
            last_failure = "request failed: " + httplib::to_string(result.error());
            last_status = 0;
            last_body.clear();
        } else if (result->status >= 200 && result->status < 300) {
            std::string content = extract_content(result->body);
            ticket.commit();
            return content;
        } else if (transient_status(result->status)) {
            last_failure = "HTTP " + std::to_string(result->status);
            last_status = result->status;
            last_body = result->body;
        } else {
            throw TransportError("HTTP " + std::to_string(result->status) + " from " +
                                     settings_.base_url + settings_.path,
                                 result->status, result->body);
        }
        if (attempt < settings_.retry.max_attempts) {
            std::this_thread::sleep_for(backoff);
            backoff = std::chrono::duration_cast<std::chrono::milliseconds>(
                backoff * settings_.retry.multiplier);
        }
    }
    throw TransportError(last_failure + " after " + std::to_string(settings_.retry.max_attempts) +
                             " attempts",
                         last_status, last_body);
}

}  // namespace opts::llm
