#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cosim/runner.hpp"
#include "cosim/scenario.hpp"
#include "cosim/trace.hpp"

#include <fstream>
#include <iostream>

namespace {

enum ExitCode : int { kOk = 0, kScenarioError = 1, kBudgetExhausted = 2, kDivergence = 3 };

using nlohmann::ordered_json;

ordered_json optional_time(const std::optional<cosim::SimTime>& t) {
    return t ? ordered_json(t->ticks) : ordered_json(nullptr);
}

ordered_json to_json(const cosim::RunReport& r) {
    ordered_json j;
    j["scenario"] = r.scenario;
    j["protocol"] = std::string(cosim::to_string(r.protocol));
    j["seed"] = r.seed;
    j["outcome"] = r.outcome == cosim::RunOutcome::Completed ? "completed" : "budget-exhausted";
    j["ok"] = r.ok;
    if (!r.ok) j["error"] = r.error;
    j["completion"] = optional_time(r.completion);
    j["final_time"] = r.stats.final_time.ticks;
    j["events"] = {{"scheduled", r.stats.events_scheduled},
                   {"executed", r.stats.events_executed},
                   {"cancelled", r.stats.events_cancelled}};
    j["trace"] = {{"records", r.trace_records}, {"digest", r.digest}};
    auto& queues = j["queues"] = ordered_json::array();
    for (const auto& q : r.queues) {
        queues.push_back({{"node", q.node}, {"iface", q.iface}, {"prio", q.prio}, {"max_depth", q.depth}});
    }
    auto& done = j["completions"] = ordered_json::array();
    for (const auto& c : r.completions) done.push_back({{"name", c.name}, {"finished", optional_time(c.finished)}});
    if (r.checksum) j["checksum"] = *r.checksum;
    if (r.rip) {
        j["rip"] = {{"converged_at", optional_time(r.rip->converged_at)},
                    {"matches_oracle", r.rip->matches_oracle},
                    {"routes", r.rip->routes},
                    {"periodic_updates", r.rip->periodic_updates},
                    {"triggered_updates", r.rip->triggered_updates}};
    }
    return j;
}

int run_command(const std::string& path, std::optional<std::uint64_t> seed, const std::string& until,
                const std::string& trace_out, const std::string& metrics_out) {
    cosim::Scenario scenario;
    try {
        scenario = cosim::load_scenario(path);
    } catch (const cosim::ScenarioError& e) {
        std::cerr << path << ": " << e.what() << " [" << cosim::to_string(e.kind()) << "]\n";
        return kScenarioError;
    }

    cosim::RunOptions opts;
    opts.seed = seed;
    if (!until.empty()) {
        const auto d = cosim::parse_duration(until);
        if (!d || d->negative()) {
            std::cerr << "--until: expected a non-negative tick count or duration, got '" << until << "'\n";
            return kScenarioError;
        }
        opts.until = cosim::SimTime{0} + *d;
    }
    std::ofstream trace;
    if (!trace_out.empty()) {
        trace.open(trace_out, std::ios::binary | std::ios::trunc);
        if (!trace) {
            std::cerr << "cannot write " << trace_out << "\n";
            return kScenarioError;
        }
        opts.trace = &trace;
    }

    const cosim::RunReport report = cosim::run_scenario(scenario, opts);
    const ordered_json metrics = to_json(report);
    if (!metrics_out.empty()) {
        std::ofstream out(metrics_out, std::ios::binary | std::ios::trunc);
        if (!out) {
            std::cerr << "cannot write " << metrics_out << "\n";
            return kScenarioError;
        }
        out << metrics.dump(2) << "\n";
    }

    std::cout << report.scenario << ": " << metrics["outcome"].get<std::string>() << ", "
              << report.stats.events_executed << " events, final time " << report.stats.final_time.ticks
              << ", completion " << (report.completion ? std::to_string(report.completion->ticks) : "-")
              << ", digest " << report.digest << "\n";
    if (!report.ok) std::cerr << "protocol failure: " << report.error << "\n";

    if (report.outcome == cosim::RunOutcome::BudgetExhausted) return kBudgetExhausted;
    return report.ok ? kOk : kScenarioError;
}

int diff_command(const std::string& a, const std::string& b) {
    std::vector<cosim::TraceRecord> left, right;
    for (auto [path, out] : {std::pair{&a, &left}, std::pair{&b, &right}}) {
        std::ifstream in(*path, std::ios::binary);
        if (!in) {
            std::cerr << "cannot read " << *path << "\n";
            return kScenarioError;
        }
        try {
            *out = cosim::read_trace(in);
        } catch (const std::exception& e) {
            std::cerr << *path << ": " << e.what() << "\n";
            return kScenarioError;
        }
    }
    const auto divergence = cosim::diff_traces(left, right);
    if (!divergence) {
        std::cout << "equal (" << left.size() << " records)\n";
        return kOk;
    }
    std::cout << "diverge at record " << divergence->index << "\n";
    std::cout << "< ";
    if (divergence->left) std::cout << *divergence->left; else std::cout << "(end of trace)";
    std::cout << "\n> ";
    if (divergence->right) std::cout << *divergence->right; else std::cout << "(end of trace)";
    std::cout << "\n";
    return kDivergence;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deterministic coroutine network simulator"};
    app.require_subcommand(1);

    std::string scenario, until, trace_out, metrics_out;
    std::optional<std::uint64_t> seed;
    auto* run = app.add_subcommand("run", "Run a scenario file");
    run->add_option("scenario", scenario, "Scenario file (YAML)")->required();
    run->add_option("--seed", seed, "Override the scenario seed");
    run->add_option("--until", until, "Stop at this instant (ticks, or e.g. 5ms)");
    run->add_option("--trace-out", trace_out, "Write the trace here, one record per line");
    run->add_option("--metrics-out", metrics_out, "Write metrics JSON here");

    std::string trace_a, trace_b;
    auto* diff = app.add_subcommand("diff", "Report the first differing record of two traces");
    diff->add_option("trace_a", trace_a)->required();
    diff->add_option("trace_b", trace_b)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kScenarioError;
    }
    if (*run) return run_command(scenario, seed, until, trace_out, metrics_out);
    return diff_command(trace_a, trace_b);
}
