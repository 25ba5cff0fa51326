#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include "opts/cli.hpp"
#include "opts/errors.hpp"

namespace opts::cli {

namespace {

using nlohmann::json;

std::vector<json> read_records(const fs::path& path) {
    std::vector<json> records;
    std::ifstream in(path);
    if (!in) return records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            records.push_back(json::parse(line));
        } catch (const json::exception& e) {
            throw LoadError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw LoadError("cannot read " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw LoadError(path.string() + ": " + e.what());
    }
}

std::string method_label(const json& report) {
    const auto mechanism = report.value("mechanism", "none");
    std::string label = "EvoPrompt(" + report.value("algorithm", "?") + ")";
    if (mechanism != "none") label += "-OPTS(" + mechanism + ")";
    return label;
}

std::string fixed(double v, int digits) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(digits) << v;
    return ss.str();
}

// Settings that must agree before runs can be averaged together.
json comparable_config(json config) {
    for (const char* key : {"seed", "output_dir", "backend", "task_backend", "budget", "parallelism"}) {
        config.erase(key);
    }
    return config;
}

}  // namespace

std::string mean_std_cell(const std::vector<double>& values) {
    if (values.empty()) return "-";
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() == 1) return fixed(100.0 * mean, 2);
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return fixed(100.0 * mean, 2) + " (" + fixed(100.0 * std::sqrt(ss / n), 2) + ")";
}

json build_run_report(const fs::path& run_dir) {
    const RunPaths paths{run_dir};
    const json config = read_json(paths.config());

    // Later records for the same generation supersede earlier ones (a
    // resumed run rewrites what it redid).
    std::map<int, json> generations;
    json final_record;
    for (auto& r : read_records(paths.checkpoints())) {
        const auto kind = r.value("kind", "");
        if (kind == "generation") {
            const int g = r.at("generation").get<int>();
            generations[g] = std::move(r);
        } else if (kind == "final") {
            final_record = std::move(r);
        }
    }
    std::vector<evoprompt::HistoryRecord> history;
    for (const auto& r : read_records(paths.history())) {
        history.push_back(evoprompt::history_from_json(r));
    }

    const auto mechanism = config.value("mechanism", "none");
    const bool has_arms = mechanism == "TS" || mechanism == "US";

    json report = {{"algorithm", config.value("algorithm", "DE")},
                   {"mechanism", mechanism},
                   {"population_size", config.value("population_size", 0)},
                   {"generations", config.value("generations", 0)},
                   {"seed", config.value("seed", 0)}};
    report["status"] = final_record.is_null() ? json("incomplete") : final_record.at("status");
    report["generations_completed"] = generations.empty() ? 0 : generations.rbegin()->first;

    if (!final_record.is_null() && !final_record.at("best").is_null()) {
        report["best"] = final_record.at("best");
    } else if (!generations.empty()) {
        const auto& members = generations.rbegin()->second.at("population");
        const json* best = nullptr;
        for (const auto& m : members) {
            if (!best || m.at("dev_score").get<double>() > best->at("dev_score").get<double>()) best = &m;
        }
        report["best"] = best ? json{{"id", best->at("id")},
                                     {"description", best->at("description")},
                                     {"dev_score", best->at("dev_score")}}
                              : json();
    } else {
        report["best"] = nullptr;
    }
    report["test_accuracy"] = final_record.is_null() ? json() : final_record.at("test_accuracy");

    json trajectory = json::array();
    for (const auto& [g, rec] : generations) {
        double best = 0.0;
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& m : rec.at("population")) {
            const double s = m.at("dev_score").get<double>();
            best = n == 0 ? s : std::max(best, s);
            sum += s;
            ++n;
        }
        trajectory.push_back({{"generation", g}, {"best_dev", best}, {"mean_dev", n ? sum / n : 0.0}});
    }
    report["trajectory"] = std::move(trajectory);

    // Arm pulls come from the history log: the uniform policy keeps no
    // posterior, so its counts only live there.
    std::map<int, std::vector<long long>> pulls_by_generation;
    std::size_t arm_count = 0;
    for (const auto& [g, rec] : generations) {
        const auto& m = rec.at("mechanism");
        if (!m.is_null()) arm_count = std::max(arm_count, m.at("arms").size());
    }
    long long applied = 0;
    for (const auto& r : history) {
        if (r.strategy_applied) ++applied;
        if (r.arm && *r.arm >= arm_count) arm_count = *r.arm + 1;
    }
    std::vector<long long> cumulative(arm_count, 0);
    {
        auto it = history.begin();
        for (const auto& [g, rec] : generations) {
            for (; it != history.end() && it->generation <= g; ++it) {
                if (it->arm) ++cumulative[*it->arm];
            }
            pulls_by_generation[g] = cumulative;
        }
    }

    if (has_arms) {
        json arm_trajectory = json::array();
        for (const auto& [g, rec] : generations) {
            json arms = json::array();
            const auto& m = rec.at("mechanism");
            for (std::size_t a = 0; a < arm_count; ++a) {
                json entry = {{"arm", a}, {"pulls", pulls_by_generation[g][a]}};
                if (!m.is_null() && a < m.at("arms").size()) {
                    entry["alpha"] = m.at("arms")[a].at("alpha");
                    entry["beta"] = m.at("arms")[a].at("beta");
                }
                arms.push_back(std::move(entry));
            }
            arm_trajectory.push_back({{"generation", g}, {"arms", std::move(arms)}});
        }
        report["arm_trajectory"] = std::move(arm_trajectory);
        report["arm_pulls"] = cumulative;
    }
    report["strategy_applications"] = applied;
    report["children"] = history.size();
    return report;
}

int cmd_report(const std::vector<fs::path>& run_dirs, const std::optional<fs::path>& data_dir,
               CommandEnv& env) {
    if (run_dirs.empty()) {
        throw UsageError("no run directories given");
    }
    std::vector<json> reports;
    std::optional<json> reference;
    for (const auto& dir : run_dirs) {
        const json config = comparable_config(read_json(RunPaths{dir}.config()));
        if (!reference) {
            reference = config;
        } else if (config != *reference) {
            std::vector<std::string> differing;
            for (const auto& item : reference->items()) {
                if (!config.contains(item.key()) || config.at(item.key()) != item.value()) {
                    differing.push_back(item.key());
                }
            }
            for (const auto& item : config.items()) {
                if (!reference->contains(item.key())) differing.push_back(item.key());
            }
            std::string keys;
            for (const auto& k : differing) keys += (keys.empty() ? "" : ", ") + k;
            throw ConfigError("refusing to aggregate: " + dir.string() + " differs from " +
                              run_dirs.front().string() + " in " + keys);
        }
        auto report = build_run_report(dir);
        if (report.at("children").get<std::size_t>() == 0) {
            throw LoadError("empty history log in " + dir.string());
        }
        reports.push_back(std::move(report));
    }

    auto& out = env.out ? *env.out : std::cout;
    const auto label = method_label(reports.front());

    out << "Per-generation dev score (best / mean";
    out << (reports.size() > 1 ? ", averaged over runs)\n" : ")\n");
    out << std::left << std::setw(12) << "generation" << std::setw(18) << "best" << "mean\n";
    std::map<int, std::pair<std::vector<double>, std::vector<double>>> per_generation;
    for (const auto& r : reports) {
        for (const auto& t : r.at("trajectory")) {
            auto& cell = per_generation[t.at("generation").get<int>()];
            cell.first.push_back(t.at("best_dev").get<double>());
            cell.second.push_back(t.at("mean_dev").get<double>());
        }
    }
    for (const auto& [g, cell] : per_generation) {
        out << std::left << std::setw(12) << g << std::setw(18) << mean_std_cell(cell.first)
            << mean_std_cell(cell.second) << '\n';
    }

    if (reports.front().contains("arm_pulls")) {
        out << "\nArm selection frequency\n";
        std::vector<long long> totals;
        for (const auto& r : reports) {
            const auto pulls = r.at("arm_pulls").get<std::vector<long long>>();
            if (totals.size() < pulls.size()) totals.resize(pulls.size(), 0);
            for (std::size_t a = 0; a < pulls.size(); ++a) totals[a] += pulls[a];
        }
        const long long all = std::accumulate(totals.begin(), totals.end(), 0LL);
        for (std::size_t a = 0; a < totals.size(); ++a) {
            out << "arm " << std::setw(4) << a << std::setw(8) << totals[a]
                << (all ? fixed(100.0 * static_cast<double>(totals[a]) / static_cast<double>(all), 1) : "0.0")
                << "%" << (a + 1 == totals.size() ? "  (inaction)" : "") << '\n';
        }
    }

    std::vector<double> dev;
    std::vector<double> test;
    for (const auto& r : reports) {
        if (!r.at("best").is_null()) dev.push_back(r.at("best").at("dev_score").get<double>());
        if (!r.at("test_accuracy").is_null()) test.push_back(r.at("test_accuracy").get<double>());
    }
    out << "\n" << std::left << std::setw(28) << "Method" << std::setw(18) << "Dev" << "Test\n";
    out << std::left << std::setw(28) << label << std::setw(18) << mean_std_cell(dev) << mean_std_cell(test)
        << '\n';
    out << "(" << reports.size() << (reports.size() == 1 ? " run" : " runs; std in parentheses") << ")\n";

    if (data_dir) {
        fs::create_directories(*data_dir);
        std::ofstream gen(*data_dir / "generations.csv");
        gen << "run,generation,best_dev,mean_dev\n";
        std::ofstream arms(*data_dir / "arms.csv");
        arms << "run,generation,arm,pulls,alpha,beta\n";
        std::ofstream summary(*data_dir / "summary.csv");
        summary << "run,status,best_id,best_dev,test_accuracy\n";
        for (std::size_t i = 0; i < reports.size(); ++i) {
            const auto& r = reports[i];
            const auto run = run_dirs[i].filename().string().empty() ? run_dirs[i].parent_path().filename().string()
                                                                       : run_dirs[i].filename().string();
            for (const auto& t : r.at("trajectory")) {
                gen << run << ',' << t.at("generation").get<int>() << ',' << t.at("best_dev").dump() << ','
                    << t.at("mean_dev").dump() << '\n';
            }
            if (r.contains("arm_trajectory")) {
                for (const auto& t : r.at("arm_trajectory")) {
                    for (const auto& a : t.at("arms")) {
                        arms << run << ',' << t.at("generation").get<int>() << ',' << a.at("arm").get<int>() << ','
                             << a.at("pulls").get<long long>() << ','
                             << (a.contains("alpha") ? a.at("alpha").dump() : "") << ','
                             << (a.contains("beta") ? a.at("beta").dump() : "") << '\n';
                    }
                }
            }
            summary << run << ',' << r.at("status").get<std::string>() << ','
                    << (r.at("best").is_null() ? "" : r.at("best").at("id").dump()) << ','
                    << (r.at("best").is_null() ? "" : r.at("best").at("dev_score").dump()) << ','
                    << (r.at("test_accuracy").is_null() ? "" : r.at("test_accuracy").dump()) << '\n';
        }
        out << "data files written to " << data_dir->string() << '\n';
    }
    return kExitOk;
}

}  // namespace opts::cli
