#include <fstream>
#include <sstream>

#include "opts/cli.hpp"
#include "opts/errors.hpp"

namespace opts::cli {

namespace {

using nlohmann::json;

// Reads fields off one JSON object, remembering every problem instead of
// stopping at the first.
class FieldReader {
public:
    FieldReader(const json& j, std::string prefix, std::vector<std::string>& problems)
        : j_(j), prefix_(std::move(prefix)), problems_(problems) {
        if (!j_.is_object()) {
            problems_.push_back(where("") + "must be an object");
        }
    }

    template <class T>
    void read(const char* key, T& out) {
        seen_.push_back(key);
        if (!j_.is_object() || !j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            problems_.push_back(where(key) + "has the wrong type");
        }
    }

    void read_optional(const char* key, std::optional<long long>& out) {
        seen_.push_back(key);
        if (!j_.is_object() || !j_.contains(key)) return;
        const auto& v = j_.at(key);
        if (v.is_null()) {
            out.reset();
        } else if (v.is_number_integer()) {
            out = v.get<long long>();
        } else {
            problems_.push_back(where(key) + "must be an integer or null");
        }
    }

    const json* object(const char* key) {
        seen_.push_back(key);
        if (!j_.is_object() || !j_.contains(key)) return nullptr;
        return &j_.at(key);
    }

    void reject_unknown() {
        if (!j_.is_object()) return;
        for (const auto& item : j_.items()) {
            if (std::find(seen_.begin(), seen_.end(), item.key()) == seen_.end()) {
                problems_.push_back(where(item.key()) + "is not a known setting");
            }
        }
    }

private:
    std::string where(const std::string& key) const {
        const auto name = prefix_.empty() ? key : key.empty() ? prefix_ : prefix_ + "." + key;
        return name.empty() ? "config " : "'" + name + "' ";
    }

    const json& j_;
    std::string prefix_;
    std::vector<std::string>& problems_;
    std::vector<std::string> seen_;
};

void read_model(FieldReader& parent, const char* key, ModelSettings& m, std::vector<std::string>& problems) {
    if (const json* sub = parent.object(key)) {
        FieldReader r(*sub, key, problems);
        r.read("model", m.model);
        r.read("temperature", m.temperature);
        r.read("max_tokens", m.max_tokens);
        r.reject_unknown();
    }
}

void read_backend(const json& b, const char* key, BackendConfig& out, std::vector<std::string>& problems) {
    FieldReader br(b, key, problems);
    br.read("kind", out.kind);
    br.read("base_url", out.base_url);
    br.read("path", out.path);
    br.read("api_key_env", out.api_key_env);
    br.read("transcript", out.transcript);
    br.read("timeout_seconds", out.timeout_seconds);
    br.read("max_attempts", out.max_attempts);
    br.read("initial_backoff_ms", out.initial_backoff_ms);
    br.reject_unknown();
}

json backend_json(const BackendConfig& b) {
    return {{"kind", b.kind},
            {"base_url", b.base_url},
            {"path", b.path},
            {"api_key_env", b.api_key_env},
            {"transcript", b.transcript},
            {"timeout_seconds", b.timeout_seconds},
            {"max_attempts", b.max_attempts},
            {"initial_backoff_ms", b.initial_backoff_ms}};
}

void check_http(const std::string& key, const BackendConfig& b, std::vector<std::string>& p) {
    if (b.base_url.empty()) p.push_back("'" + key + ".base_url' must not be empty");
    if (b.path.empty() || b.path.front() != '/') p.push_back("'" + key + ".path' must start with '/'");
    if (b.timeout_seconds < 1) p.push_back("'" + key + ".timeout_seconds' must be positive");
    if (b.max_attempts < 1) p.push_back("'" + key + ".max_attempts' must be positive");
    if (b.initial_backoff_ms < 0) p.push_back("'" + key + ".initial_backoff_ms' must be non-negative");
}

json model_json(const ModelSettings& m) {
    return {{"model", m.model}, {"temperature", m.temperature}, {"max_tokens", m.max_tokens}};
}

void check_model(const char* role, const ModelSettings& m, std::vector<std::string>& problems) {
    const std::string p = std::string("'") + role;
    if (m.model.empty()) problems.push_back(p + ".model' must not be empty");
    if (!(m.temperature >= 0.0 && m.temperature <= 2.0)) {
        problems.push_back(p + ".temperature' must be within [0, 2]");
    }
    if (m.max_tokens < 1) problems.push_back(p + ".max_tokens' must be positive");
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
    RunConfig c;
    std::vector<std::string> problems;
    FieldReader r(j, "", problems);
    r.read("dataset", c.dataset);
    r.read("few_shot", c.few_shot);
    r.read("seed_description", c.seed_description);
    r.read("algorithm", c.algorithm);
    r.read("mechanism", c.mechanism);
    r.read("population_size", c.population_size);
    r.read("generations", c.generations);
    r.read("dev_size", c.dev_size);
    r.read("seed", c.seed);
    r.read("return_best_ever", c.return_best_ever);
    r.read("evaluate_test", c.evaluate_test);
    r.read("case_insensitive", c.case_insensitive);
    r.read("parallelism", c.parallelism);
    r.read("strategies", c.strategies);
    if (const json* b = r.object("backend")) {
        read_backend(*b, "backend", c.backend, problems);
    }
    if (const json* b = r.object("task_backend"); b && !b->is_null()) {
        c.task_backend.emplace();
        read_backend(*b, "task_backend", *c.task_backend, problems);
    }
    read_model(r, "designer", c.designer, problems);
    read_model(r, "task", c.task, problems);
    if (const json* b = r.object("budget")) {
        FieldReader br(*b, "budget", problems);
        br.read_optional("limit", c.budget_limit);
        br.read("scope", c.budget_scope);
        br.reject_unknown();
    }
    r.read("output_dir", c.output_dir);
    r.reject_unknown();
    if (!problems.empty()) {
        throw ConfigError(problems);
    }
    return c;
}

json RunConfig::to_json() const {
    return {{"dataset", dataset},
            {"few_shot", few_shot},
            {"seed_description", seed_description},
            {"algorithm", algorithm},
            {"mechanism", mechanism},
            {"population_size", population_size},
            {"generations", generations},
            {"dev_size", dev_size},
            {"seed", seed},
            {"return_best_ever", return_best_ever},
            {"evaluate_test", evaluate_test},
            {"case_insensitive", case_insensitive},
            {"parallelism", parallelism},
            {"strategies", strategies},
            {"backend", backend_json(backend)},
            {"task_backend", task_backend ? backend_json(*task_backend) : json()},
            {"designer", model_json(designer)},
            {"task", model_json(task)},
            {"budget", {{"limit", budget_limit ? json(*budget_limit) : json()}, {"scope", budget_scope}}},
            {"output_dir", output_dir}};
}

RunConfig RunConfig::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config " + path.string());
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return from_json(j);
}

void RunConfig::save(const fs::path& path) const {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write config " + path.string());
    }
    out << to_json().dump(2) << '\n';
}

std::vector<std::string> RunConfig::problems() const {
    std::vector<std::string> p;
    if (dataset.empty()) p.push_back("'dataset' must name a dataset file");
    if (seed_description.empty()) p.push_back("'seed_description' must not be empty");
    if (algorithm != "GA" && algorithm != "DE") p.push_back("'algorithm' must be GA or DE");
    if (mechanism != "TS" && mechanism != "US" && mechanism != "APET" && mechanism != "none") {
        p.push_back("'mechanism' must be TS, US, APET or none");
    }
    if (population_size < 2) {
        p.push_back("'population_size' must be at least 2");
    } else if (algorithm == "DE" && population_size < 3) {
        p.push_back("'population_size' must be at least 3 for DE");
    } else if (population_size - population_size / 2 > 20) {
        p.push_back("'population_size' must be at most 40 (half of it comes from 20 seed descriptions)");
    }
    if (generations < 0) p.push_back("'generations' must be non-negative");
    if (dev_size < 1) p.push_back("'dev_size' must be positive");
    if (parallelism < 1) p.push_back("'parallelism' must be positive");
    if (backend.kind == "http") {
        check_http("backend", backend, p);
    } else if (backend.kind == "replay") {
        if (backend.transcript.empty()) p.push_back("'backend.transcript' is required for replay");
    } else {
        p.push_back("'backend.kind' must be http or replay");
    }
    if (task_backend) {
        // Requests are routed by model name, so the roles need distinct models.
        if (task_backend->kind != "http") p.push_back("'task_backend.kind' must be http");
        check_http("task_backend", *task_backend, p);
        if (backend.kind != "http") p.push_back("'task_backend' cannot be combined with a replay backend");
        if (designer.model == task.model) {
            p.push_back("'task.model' must differ from 'designer.model' when 'task_backend' is set");
        }
    }
    check_model("designer", designer, p);
    check_model("task", task, p);
    if (budget_limit && *budget_limit < 0) p.push_back("'budget.limit' must be non-negative");
    if (budget_scope != "designer" && budget_scope != "all") {
        p.push_back("'budget.scope' must be designer or all");
    }
    if (output_dir.empty()) p.push_back("'output_dir' must not be empty");
    return p;
}

void RunConfig::validate() const {
    if (auto p = problems(); !p.empty()) {
        throw ConfigError(p);
    }
}

evoprompt::Algorithm RunConfig::algorithm_kind() const {
    return algorithm == "GA" ? evoprompt::Algorithm::GA : evoprompt::Algorithm::DE;
}

std::optional<strategies::MechanismKind> RunConfig::mechanism_kind() const {
    if (mechanism == "TS") return strategies::MechanismKind::TS;
    if (mechanism == "US") return strategies::MechanismKind::US;
    if (mechanism == "APET") return strategies::MechanismKind::APET;
    return std::nullopt;
}

}  // namespace opts::cli
