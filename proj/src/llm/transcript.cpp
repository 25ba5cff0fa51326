#include <algorithm>
#include <chrono>
#include <fstream>

#include "opts/errors.hpp"
#include "opts/llm.hpp"

namespace opts::llm {

namespace {

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

TranscriptCache::TranscriptCache(std::filesystem::path transcript, std::shared_ptr<Backend> upstream,
                                 TranscriptMode mode)
    : path_(std::move(transcript)),
      upstream_(std::move(upstream)),
      mode_(upstream_ ? mode : TranscriptMode::Replay) {
    if (upstream_ && mode == TranscriptMode::Replay) {
        throw UsageError("replay transcript must not have an upstream backend");
    }
    load();
}

void TranscriptCache::load() {
    if (!std::filesystem::exists(path_)) {
        if (mode_ == TranscriptMode::Replay) {
            throw LoadError("replay transcript not found: " + path_.string());
        }
        return;
    }
    std::ifstream in(path_);
    if (!in) {
        throw LoadError("cannot open transcript " + path_.string());
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(line);
            replies_[j.at("fingerprint").get<std::string>()].replies.push_back(
                j.at("reply").get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw LoadError(path_.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

std::size_t TranscriptCache::size() const {
    std::lock_guard lock(cache_mutex_);
    return replies_.size();
}

std::string TranscriptCache::complete(const LlmRequest& request, CallBudget* budget) {
    const std::string fingerprint = request_fingerprint(request);
    if (mode_ != TranscriptMode::Record) {
        std::lock_guard lock(cache_mutex_);
        if (auto it = replies_.find(fingerprint); it != replies_.end()) {
            ++hits_;
            auto& entry = it->second;
            if (mode_ == TranscriptMode::Cache) {
                return entry.replies.front();
            }
            const std::size_t at = std::min(entry.cursor, entry.replies.size() - 1);
            ++entry.cursor;
            return entry.replies[at];
        }
    }
    ++misses_;
    if (mode_ == TranscriptMode::Replay) {
        throw ScriptMiss("replay transcript " + path_.string() + " has no entry for request " +
                         fingerprint);
    }
    std::string reply = upstream_->complete(request, budget);

    const nlohmann::json record = {{"fingerprint", fingerprint},
                                   {"request", request_to_json(request)},
                                   {"reply", reply},
                                   {"timestamp", utc_timestamp()}};
    {
        std::lock_guard write(write_mutex_);
        std::ofstream out(path_, std::ios::app);
        if (!out) {
            throw Error("cannot append to transcript " + path_.string());
        }
        out << record.dump() << '\n';
    }
    std::lock_guard lock(cache_mutex_);
    replies_[fingerprint].replies.push_back(reply);
    return reply;
}

}  // namespace opts::llm
