#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace opts {

// Root of every error the library throws on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what), problems_{what} {}
    // Several independent problems, reported together.
    explicit ConfigError(std::vector<std::string> problems)
        : Error(join(problems)), problems_(std::move(problems)) {}

    const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    static std::string join(const std::vector<std::string>& problems) {
        std::string out;
        for (const auto& p : problems) {
            if (!out.empty()) out += "; ";
            out += p;
        }
        return out;
    }

    std::vector<std::string> problems_;
};

// A caller broke an operation's precondition.
class UsageError : public Error {
public:
    using Error::Error;
};

class TemplateError : public Error {
public:
    using Error::Error;
};

// The prompt-designing model returned nothing usable.
class GenerationError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class LoadError : public Error {
public:
    using Error::Error;
};

class SplitError : public Error {
public:
    using Error::Error;
};

class CorruptCheckpoint : public Error {
public:
    using Error::Error;
};

// The call budget has no calls left. Callers checkpoint and halt.
class BudgetExceeded : public Error {
public:
    BudgetExceeded(long long limit)
        : Error("call budget exhausted (limit " + std::to_string(limit) + ")"), limit_(limit) {}

    long long limit() const noexcept { return limit_; }

private:
    long long limit_;
};

class TransportError : public Error {
public:
    TransportError(std::string what, int status = 0, std::string body = {})
        : Error(std::move(what)), status_(status), body_(std::move(body)) {}

    // HTTP status, 0 when the request never got a response.
    int status() const noexcept { return status_; }
    const std::string& body() const noexcept { return body_; }

private:
    int status_;
    std::string body_;
};

// A scripted backend received a request none of its rules cover, or a
// replay transcript has no entry for a request. Always a test setup bug.
class ScriptMiss : public Error {
public:
    using Error::Error;
};

}  // namespace opts
