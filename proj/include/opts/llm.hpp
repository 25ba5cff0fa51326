#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace opts::llm {

enum class Role { System, User, Assistant };

std::string_view role_name(Role role);
Role parse_role(std::string_view name);

struct ChatMessage {
    Role role = Role::User;
    std::string content;

    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct LlmRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_tokens = 1024;
    std::optional<std::int64_t> seed;
};

nlohmann::json request_to_json(const LlmRequest& request);
LlmRequest request_from_json(const nlohmann::json& j);

// Hex SHA-256 over (model, roles, contents, temperature, max_tokens).
// No normalization: whitespace and message order both matter.
std::string request_fingerprint(const LlmRequest& request);

// Hard cap on upstream calls. Shared by concurrent workers.
class CallBudget {
public:
    explicit CallBudget(std::optional<long long> limit = std::nullopt, long long used = 0);

    CallBudget(const CallBudget&) = delete;
    CallBudget& operator=(const CallBudget&) = delete;

    std::optional<long long> limit() const noexcept { return limit_; }
    long long used() const noexcept { return used_.load(); }
    bool exhausted() const noexcept;

    // Reserves one call; throws BudgetExceeded when none is left.
    void acquire();
    // Returns a reservation whose call did not succeed.
    void refund() noexcept;

    void set_limit(std::optional<long long> limit);
    void set_used(long long used);

private:
    std::optional<long long> limit_;
    std::atomic<long long> used_;
};

// Holds one budget reservation for the duration of an upstream call and
// gives it back unless the call commits.
class BudgetTicket {
public:
    explicit BudgetTicket(CallBudget* budget);
    ~BudgetTicket();
    BudgetTicket(const BudgetTicket&) = delete;
    BudgetTicket& operator=(const BudgetTicket&) = delete;

    void commit() noexcept { committed_ = true; }

private:
    CallBudget* budget_;
    bool committed_ = false;
};

class Backend {
public:
    virtual ~Backend() = default;

    // Returns the assistant text. Backends that reach upstream charge
    // `budget` (when non-null) exactly once per successful call.
    virtual std::string complete(const LlmRequest& request, CallBudget* budget) = 0;
};

// Validates the request and forwards to the backend.
std::string complete(Backend& backend, CallBudget* budget, const LlmRequest& request);

// Deterministic rule table for tests and offline simulation. Each accepted
// request counts as one upstream call.
class ScriptedBackend final : public Backend {
public:
    using Predicate = std::function<bool(const LlmRequest&)>;
    using Responder = std::function<std::string(const LlmRequest&)>;

    ScriptedBackend& on(std::string name, Predicate when, Responder reply);
    ScriptedBackend& on_user_contains(std::string needle, std::string reply);

    std::string complete(const LlmRequest& request, CallBudget* budget) override;

    long long invocations() const noexcept { return invocations_.load(); }
    long long invocations(std::string_view rule) const;

    static const std::string& last_user_text(const LlmRequest& request);

private:
    struct Rule {
        std::string name;
        Predicate when;
        Responder reply;
        long long hits = 0;
    };
    mutable std::mutex mutex_;
    std::vector<Rule> rules_;
    std::atomic<long long> invocations_{0};
};

struct RetryPolicy {
    int max_attempts = 5;
    std::chrono::milliseconds initial_backoff{1000};
    double multiplier = 2.0;
};

struct HttpSettings {
    std::string base_url = "https://api.openai.com";
    std::string path = "/v1/chat/completions";
    std::string api_key;
    std::chrono::seconds timeout{120};
    RetryPolicy retry;
};

// OpenAI-compatible chat-completions client.
class HttpBackend final : public Backend {
public:
    explicit HttpBackend(HttpSettings settings);

    std::string complete(const LlmRequest& request, CallBudget* budget) override;

    long long attempts() const noexcept { return attempts_.load(); }

private:
    HttpSettings settings_;
    std::atomic<long long> attempts_{0};
};

// Append-only JSONL transcript of upstream calls.
//   Record: every request goes upstream and is appended.
//   Cache:  a request seen before is answered from the transcript for free.
//   Replay: no upstream; the n-th identical request gets the n-th recorded
//           reply (the last one once they run out), a miss raises ScriptMiss.
// Only upstream calls touch the budget.
enum class TranscriptMode { Record, Cache, Replay };

class TranscriptCache final : public Backend {
public:
    // Replay mode when upstream is null, otherwise Record or Cache.
    TranscriptCache(std::filesystem::path transcript, std::shared_ptr<Backend> upstream,
                    TranscriptMode mode = TranscriptMode::Cache);

    std::string complete(const LlmRequest& request, CallBudget* budget) override;

    TranscriptMode mode() const noexcept { return mode_; }
    long long hits() const noexcept { return hits_.load(); }
    long long misses() const noexcept { return misses_.load(); }
    // Distinct recorded requests.
    std::size_t size() const;

private:
    void load();

    struct Entry {
        std::vector<std::string> replies;
        std::size_t cursor = 0;
    };

    std::filesystem::path path_;
    std::shared_ptr<Backend> upstream_;
    TranscriptMode mode_;
    mutable std::mutex cache_mutex_;
    std::unordered_map<std::string, Entry> replies_;
    std::mutex write_mutex_;
    std::atomic<long long> hits_{0};
    std::atomic<long long> misses_{0};
};

// A backend bound to one role's model and decoding settings.
class LlmClient {
public:
    LlmClient() = default;
    LlmClient(std::shared_ptr<Backend> backend, std::string model, double temperature,
              int max_tokens, CallBudget* budget = nullptr);

    std::string ask(std::vector<ChatMessage> messages) const;

    LlmRequest make_request(std::vector<ChatMessage> messages) const;
    Backend& backend() const { return *backend_; }
    CallBudget* budget() const noexcept { return budget_; }
    void set_budget(CallBudget* budget) noexcept { budget_ = budget; }

private:
    std::shared_ptr<Backend> backend_;
    std::string model_;
    double temperature_ = 0.0;
    int max_tokens_ = 1024;
    CallBudget* budget_ = nullptr;
};

}  // namespace opts::llm
