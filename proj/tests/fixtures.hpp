#pragma once

// Shared scaffolding for tests: temp dirs, a toy dataset and a scripted
// "toy world" whose designer and task model are pure functions of the
// request, so record/replay is exact.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include <json.hpp>

#include "opts/cli.hpp"
#include "opts/llm.hpp"
#include "opts/text.hpp"

namespace fixtures {

namespace fs = std::filesystem;

inline std::uint64_t mix(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    h ^= h >> 31;
    h *= 0x9E3779B97F4A7C15ull;
    h ^= h >> 29;
    return h;
}

inline double unit(std::string_view s) { return static_cast<double>(mix(s) >> 11) * 0x1.0p-53; }

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                ("opts-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

// n examples "Question i" with targets cycling through (A)..(D).
inline void write_dataset(const fs::path& p, int n) {
    nlohmann::json examples = nlohmann::json::array();
    for (int i = 0; i < n; ++i) {
        examples.push_back({{"input", "Question " + std::to_string(i)},
                            {"target", std::string("(") + static_cast<char>('A' + i % 4) + ")"}});
    }
    write_file(p, nlohmann::json{{"examples", examples}}.dump());
}

// Quality of a description in the toy world: a base from its first word
// plus 0.08 per "[s1]" tag (strategy 1 helps, the rest do nothing).
inline double toy_quality(std::string_view description) {
    description = opts::text::trim(description);
    const auto word = description.substr(0, description.find(' '));
    double q = 0.15 + 0.35 * unit(word);
    for (std::size_t pos = 0; (pos = description.find("[s1]", pos)) != std::string_view::npos; pos += 4) {
        q += 0.08;
    }
    return std::min(q, 1.0);
}

inline std::string hex8(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string s(8, '0');
    for (int i = 7; i >= 0; --i, h >>= 4) s[static_cast<std::size_t>(i)] = digits[h & 15];
    return s;
}

inline std::string last_line_value(const std::string& text, std::string_view label) {
    std::string found;
    for (auto line : opts::text::split_lines(text)) {
        if (line.starts_with(label)) found = std::string(opts::text::trim(line.substr(label.size())));
    }
    return found;
}

inline std::string tags_of(const std::string& description) {
    const auto space = description.find(' ');
    return space == std::string::npos ? std::string() : description.substr(space);
}

// Designer and task rules for the toy world, on one scripted backend.
// Designer rule names start with "designer_".
inline std::shared_ptr<opts::llm::ScriptedBackend> toy_backend() {
    using opts::llm::LlmRequest;
    using opts::llm::ScriptedBackend;
    auto b = std::make_shared<ScriptedBackend>();
    auto user = [](const LlmRequest& r) -> const std::string& { return ScriptedBackend::last_user_text(r); };
    b->on("designer_variations",
          [user](const LlmRequest& r) { return user(r).starts_with("Generate 19 variations"); },
          [](const LlmRequest&) {
              std::string reply = "Here are the variations:\n";
              for (int i = 1; i <= 19; ++i) reply += std::to_string(i) + ". V" + std::to_string(i) + "\n";
              return reply;
          });
    b->on("designer_paraphrase",
          [user](const LlmRequest& r) { return user(r).starts_with("Generate a variation"); },
          [user](const LlmRequest& r) {
              const auto source = last_line_value(user(r), "Input: ");
              return "R" + hex8(mix(source)) + tags_of(source);
          });
    b->on("designer_de",
          [user](const LlmRequest& r) { return user(r).find("Basic Prompt: ") != std::string::npos; },
          [user](const LlmRequest& r) {
              const auto best = last_line_value(user(r), "Prompt 3: ");
              return "Steps done.\nFinal Prompt: <prompt>C" + hex8(mix(user(r))) + tags_of(best) + "</prompt>";
          });
    b->on("designer_ga",
          [user](const LlmRequest& r) { return user(r).find("Crossover the following prompts") != std::string::npos; },
          [user](const LlmRequest& r) {
              const auto a = last_line_value(user(r), "Prompt 1: ");
              const auto c = last_line_value(user(r), "Prompt 2: ");
              const auto& keep = toy_quality(c) > toy_quality(a) ? c : a;
              return "Crossover Prompt: mixed\n2. <prompt>G" + hex8(mix(user(r))) + tags_of(keep) + "</prompt>";
          });
    b->on("designer_strategy",
          [user](const LlmRequest& r) { return user(r).find("reformulate below prompt") != std::string::npos; },
          [user](const LlmRequest& r) {
              const auto& text = user(r);
              const auto open = text.rfind("\"\"\"\"\n");
              const auto close = text.rfind("\n\"\"\"");
              const auto input = text.substr(open + 5, close - open - 5);
              const auto k = text.find("Let's think step-by-step") != std::string::npos ? 1 : mix(text) % 11;
              return input + " [s" + std::to_string(k) + "]";
          });
    b->on("task",
          [user](const LlmRequest& r) { return user(r).ends_with("\nA:"); },
          [user](const LlmRequest& r) {
              const auto& text = user(r);
              const auto q = text.rfind("\n\nQ: ");
              const auto description = text.substr(0, text.find("\n\n"));
              const auto input = text.substr(q + 5, text.size() - q - 5 - 3);
              const auto index = std::stoi(input.substr(input.rfind(' ') + 1));
              const char gold = static_cast<char>('A' + index % 4);
              const bool right = unit(description + "|" + input) < toy_quality(description);
              const char said = right ? gold : static_cast<char>('A' + (index + 1) % 4);
              return std::string("Let's see. So the answer is (") + said + ").";
          });
    return b;
}

inline long long designer_invocations(const opts::llm::ScriptedBackend& b) {
    long long total = 0;
    for (const char* rule : {"designer_variations", "designer_paraphrase", "designer_de", "designer_ga",
                             "designer_strategy"}) {
        total += b.invocations(rule);
    }
    return total;
}

// Run config over a toy dataset inside `dir`.
inline opts::cli::RunConfig toy_config(const fs::path& dir, const std::string& name) {
    const auto dataset = dir / "toy.json";
    if (!fs::exists(dataset)) write_dataset(dataset, 40);
    opts::cli::RunConfig c;
    c.dataset = dataset.string();
    c.seed_description = "Answer the question.";
    c.dev_size = 20;
    c.generations = 10;
    c.parallelism = 2;
    c.output_dir = (dir / name).string();
    return c;
}

}  // namespace fixtures
