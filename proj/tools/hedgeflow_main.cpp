#include "hedgeflow/allocator.hpp"
#include "hedgeflow/engine.hpp"
#include "hedgeflow/errors.hpp"
#include "hedgeflow/market_data.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hedgeflow;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFindings = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDeterminism = 3;

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

int cmd_ingest(const std::string& dir, bool strict) {
    if (!fs::is_directory(dir)) {
        std::cerr << "error: no such directory: " << dir << "\n";
        return kExitUsage;
    }
    std::vector<std::string> csvs;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".csv") csvs.push_back(entry.path().string());
    }
    std::sort(csvs.begin(), csvs.end());
    if (csvs.empty()) {
        std::cout << "0 assets\n";
        std::cerr << "warning: no OHLCV files found in " << dir << "\n";
        return kExitFindings;
    }
    std::size_t violations = 0;
    for (const auto& path : csvs) {
        const OhlcvScan scan = scan_ohlcv(path);
        Date lo, hi;
        if (!scan.bars.empty()) {
            lo = scan.bars.front().date;
            hi = scan.bars.back().date;
        }
        std::cout << fs::path(path).filename().string() << ": " << scan.bars.size() << " bars";
        if (!scan.bars.empty()) std::cout << " [" << lo.to_string() << " .. " << hi.to_string() << "]";
        std::cout << ", " << scan.issues.size() << " violations\n";
        for (const auto& issue : scan.issues) std::cout << "  - " << issue << "\n";
        violations += scan.issues.size();
    }
    std::cout << csvs.size() << " assets, " << violations << " violations\n";
    if (violations > 0 && strict) return kExitFindings;
    return kExitOk;
}

int cmd_allocate(const std::string& returns_csv, double lambda1, double lambda2, double alpha,
                 int cycle_days) {
    std::ifstream in(returns_csv);
    if (!in) {
        std::cerr << "error: cannot open " << returns_csv << "\n";
        return kExitUsage;
    }
    std::string line;
    if (!std::getline(in, line)) {
        std::cerr << "error: empty returns file\n";
        return kExitUsage;
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) header.push_back(f);
    }
    std::size_t first_col = 0;
    if (!header.empty() && header[0] == "date") first_col = 1;
    const std::size_t n = header.size() - first_col;
    if (n == 0) {
        std::cerr << "error: returns file has no value columns\n";
        return kExitUsage;
    }
    std::vector<std::vector<double>> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string f;
        std::vector<std::string> fields;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        if (fields.size() != header.size()) {
            std::cerr << "error: line " << line_no << ": expected " << header.size()
                      << " fields\n";
            return kExitUsage;
        }
        std::vector<double> row;
        for (std::size_t i = first_col; i < fields.size(); ++i) row.push_back(std::stod(fields[i]));
        rows.push_back(std::move(row));
    }

    try {
        AllocationProblem problem;
        problem.lambda1 = lambda1;
        problem.lambda2 = lambda2;
        problem.alpha = alpha;
        problem.history = rows;
        problem.rho.assign(n, 0.0);
        for (const auto& row : rows) {
            for (std::size_t i = 0; i < n; ++i) problem.rho[i] += row[i];
        }
        for (double& r : problem.rho) r = r / static_cast<double>(rows.size()) * cycle_days;
        problem.cov.assign(n, std::vector<double>(n, 0.0));
        std::vector<double> mean(n, 0.0);
        for (const auto& row : rows) {
            for (std::size_t i = 0; i < n; ++i) mean[i] += row[i];
        }
        for (double& m : mean) m /= static_cast<double>(rows.size());
        for (const auto& row : rows) {
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    problem.cov[i][j] += (row[i] - mean[i]) * (row[j] - mean[j]);
                }
            }
        }
        for (auto& r : problem.cov) {
            for (double& v : r) v /= static_cast<double>(rows.size() - 1);
        }

        OptimizeDiagnostics diag;
        const Weights w = optimize(problem, &diag);
        std::vector<double> port(rows.size());
        for (std::size_t t = 0; t < rows.size(); ++t) {
            double r = 0;
            for (std::size_t i = 0; i < n; ++i) r += rows[t][i] * w.omega[i];
            port[t] = r;
        }
        json out = {
            {"weights", w.omega},
            {"objective", diag.objective},
            {"i_etr", expected_total_return(w.omega, problem.rho)},
            {"i_pr", portfolio_risk(w.omega, problem.cov)},
            {"i_cvar", cvar_historical(port, alpha)},
        };
        std::cout << out.dump(2) << "\n";
        return kExitOk;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}

void print_metrics_table(const json& m) {
    const char* rows[][2] = {
        {"TR", "tr"},   {"ARR", "arr"}, {"SR", "sr"},   {"CR", "cr"},   {"SoR", "sor"},
        {"MDD", "mdd"}, {"Vol", "vol"}, {"ENT", "ent"}, {"ENB", "enb"},
    };
    std::printf("%-6s %s\n", "metric", "value");
    for (const auto& [label, key] : rows) {
        std::printf("%-6s %s\n", label, fmt(m.value(key, 0.0)).c_str());
    }
    std::printf("%-6s %s\n", "span", (fmt(m.value("span_years", 0.0)) + " years").c_str());
    std::printf("%-6s %d\n", "days", m.value("n_days", 0));
}

int cmd_backtest(const std::string& config_path, const std::string& out_dir) {
    RunConfig cfg;
    try {
        cfg = RunConfig::from_json_file(config_path);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    try {
        const RunArtifacts art = run_backtest(cfg, out_dir);
        std::ifstream metrics(out_dir + "/metrics.json");
        json m;
        metrics >> m;
        print_metrics_table(m);
        if (art.network_calls > 0 || art.usage.in > 0) {
            std::printf("tokens in/out: %lld/%lld  cost: %s  network calls: %lld\n",
                        static_cast<long long>(art.usage.in),
                        static_cast<long long>(art.usage.out), fmt(art.cost).c_str(),
                        static_cast<long long>(art.network_calls));
        }
        return kExitOk;
    } catch (const DeterminismError& e) {
        std::cerr << "determinism violation: " << e.what() << "\n";
        return kExitDeterminism;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFindings;
    }
}

int cmd_report(const std::vector<std::string>& run_dirs, std::string out_csv) {
    struct RunData {
        std::string name;
        std::vector<std::pair<std::string, double>> cumret; // date -> cumulative return
    };
    std::vector<RunData> runs;
    for (const auto& dir : run_dirs) {
        const std::string equity_path = dir + "/equity.csv";
        const std::string metrics_path = dir + "/metrics.json";
        std::ifstream eq(equity_path);
        std::ifstream mt(metrics_path);
        if (!eq || !mt) {
            std::cerr << "error: missing artifacts in " << dir << "\n";
            return kExitUsage;
        }
        RunData run;
        run.name = fs::path(dir).filename().string();
        if (run.name.empty()) run.name = dir;
        std::string line;
        std::getline(eq, line); // header
        double first = 0;
        bool have_first = false;
        while (std::getline(eq, line)) {
            if (line.empty()) continue;
            const auto comma = line.find(',');
            const std::string date = line.substr(0, comma);
            const double value = std::stod(line.substr(comma + 1));
            if (!have_first) {
                first = value;
                have_first = true;
            }
            run.cumret.emplace_back(date, value / first - 1.0);
        }
        json m;
        mt >> m;
        std::printf("== %s ==\n", run.name.c_str());
        print_metrics_table(m);
        runs.push_back(std::move(run));
    }

    if (out_csv.empty()) {
        out_csv = run_dirs.size() == 1 ? run_dirs[0] + "/cumret.csv" : "cumret.csv";
    }
    std::set<std::string> all_dates;
    for (const auto& run : runs) {
        for (const auto& [date, v] : run.cumret) all_dates.insert(date);
    }
    std::ofstream out(out_csv);
    out << "date";
    for (const auto& run : runs) out << "," << run.name;
    out << "\n";
    std::vector<std::map<std::string, double>> lookup(runs.size());
    for (std::size_t i = 0; i < runs.size(); ++i) {
        for (const auto& [date, v] : runs[i].cumret) lookup[i][date] = v;
    }
    for (const auto& date : all_dates) {
        out << date;
        for (std::size_t i = 0; i < runs.size(); ++i) {
            out << ",";
            if (auto it = lookup[i].find(date); it != lookup[i].end()) {
                char buf[40];
                std::snprintf(buf, sizeof(buf), "%.17g", it->second);
                out << buf;
            }
        }
        out << "\n";
    }
    std::cout << "wrote " << out_csv << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"hedgeflow — multi-agent hedging backtests"};
    app.require_subcommand(1);

    std::string ingest_dir;
    bool strict = false;
    auto* ingest = app.add_subcommand("ingest", "validate an OHLCV data directory");
    ingest->add_option("dir", ingest_dir, "data directory")->required();
    ingest->add_flag("--strict", strict, "exit 1 on any violation");

    std::string returns_csv;
    double lambda1 = 1.0, lambda2 = 1.0, alpha = 0.95;
    int cycle_days = 30;
    auto* allocate = app.add_subcommand("allocate", "one-shot budget allocation from returns");
    allocate->add_option("--returns", returns_csv, "returns CSV (columns per asset class)")
        ->required();
    allocate->add_option("--lambda1", lambda1, "risk aversion on portfolio risk");
    allocate->add_option("--lambda2", lambda2, "risk aversion on CVaR");
    allocate->add_option("--alpha", alpha, "CVaR confidence level");
    allocate->add_option("--cycle-days", cycle_days, "cycle length for rho scaling");

    std::string config_path, out_dir = "hedgeflow_run";
    auto* backtest = app.add_subcommand("backtest", "run a full backtest from a config");
    backtest->add_option("--config", config_path, "run config JSON")->required();
    backtest->add_option("--out", out_dir, "output directory");

    std::vector<std::string> run_dirs;
    std::string report_out;
    auto* report = app.add_subcommand("report", "plot-ready CSV and metric table from run dirs");
    report->add_option("run_dirs", run_dirs, "one or more run directories")->required();
    report->add_option("--out", report_out, "merged cumret CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*ingest) return cmd_ingest(ingest_dir, strict);
        if (*allocate) return cmd_allocate(returns_csv, lambda1, lambda2, alpha, cycle_days);
        if (*backtest) return cmd_backtest(config_path, out_dir);
        if (*report) return cmd_report(run_dirs, report_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
