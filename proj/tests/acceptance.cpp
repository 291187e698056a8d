// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion. Exits nonzero if any fail.

#include "hedgeflow/allocator.hpp"
#include "hedgeflow/conferences.hpp"
#include "hedgeflow/engine.hpp"
#include "hedgeflow/errors.hpp"
#include "hedgeflow/memory.hpp"
#include "hedgeflow/metrics.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <unistd.h>

using namespace hedgeflow;
using nlohmann::json;

namespace {

const std::string kFixtures = HEDGEFLOW_FIXTURES_DIR;
const std::string kTestFixtures = HEDGEFLOW_TEST_FIXTURES_DIR;

int g_failures = 0;

void report(int number, const std::string& name, bool ok, const std::string& detail = "") {
    std::printf("[%s] %2d. %s%s%s\n", ok ? "PASS" : "FAIL", number, name.c_str(),
                detail.empty() ? "" : " — ", detail.c_str());
    if (!ok) ++g_failures;
}

struct Check {
    bool ok = true;
    std::string why;
    void expect(bool cond, const std::string& msg) {
        if (!cond && ok) {
            ok = false;
            why = msg;
        }
    }
};

std::string temp_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const auto dir = std::filesystem::temp_directory_path() /
                     ("hedgeflow_acc_" + tag + "_" + std::to_string(::getpid()) + "_" +
                      std::to_string(counter++));
    std::filesystem::create_directories(dir);
    return dir.string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// --------------------------------------------------------------------------
// 1. ARR <-> TR consistency on the published three-year rows

void criterion_arr_tr() {
    Check c;
    const double lead = annual_return_rate(4.0534, 3.0);
    const double finmem = annual_return_rate(2.2199, 3.0);
    c.expect(std::abs(lead - 0.7160) <= 0.0005,
             "annualized 4.0534 over 3y = " + std::to_string(lead));
    c.expect(std::abs(finmem - 0.4767) <= 0.0005,
             "annualized 2.2199 over 3y = " + std::to_string(finmem));
    report(1, "ARR-TR consistency (published three-year rows)", c.ok, c.why);
}

// --------------------------------------------------------------------------
// 2. Allocator vs exhaustive 0.01-grid search, 50 random problems

void criterion_allocator_oracle() {
    Check c;
    std::mt19937 rng(20240501);
    std::normal_distribution<double> z(0, 1);
    for (int trial = 0; trial < 50 && c.ok; ++trial) {
        AllocationProblem p;
        p.rho = {0.02 * z(rng), 0.02 * z(rng), 0.02 * z(rng)};
        std::vector<std::vector<double>> a(3, std::vector<double>(3));
        for (auto& row : a) {
            for (double& v : row) v = 0.01 * z(rng);
        }
        p.cov.assign(3, std::vector<double>(3, 0.0));
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                for (int k = 0; k < 3; ++k) p.cov[i][j] += a[i][k] * a[j][k];
            }
        }
        p.history.assign(252, std::vector<double>(3));
        for (auto& row : p.history) {
            for (double& v : row) v = 0.015 * z(rng);
        }
        OptimizeDiagnostics diag;
        const Weights w = optimize(p, &diag);
        validate_weights(w);
        double grid_best = -1e300;
        for (int i = 0; i <= 100; ++i) {
            for (int j = 0; j + i <= 100; ++j) {
                const std::vector<double> omega = {i / 100.0, j / 100.0, (100 - i - j) / 100.0};
                grid_best = std::max(grid_best, allocation_objective(p, omega));
            }
        }
        c.expect(diag.objective >= grid_best - 1e-6,
                 "trial " + std::to_string(trial) + ": gap " +
                     std::to_string(grid_best - diag.objective));
    }
    report(2, "allocator objective within 1e-6 of the 0.01-grid oracle (50 problems)", c.ok,
           c.why);
}

// --------------------------------------------------------------------------
// 3. CVaR oracle and CVaR >= VaR

void criterion_cvar_oracle() {
    Check c;
    std::mt19937 rng(7);
    std::normal_distribution<double> z(0, 0.02);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> sample(100);
        for (double& v : sample) v = z(rng);

        std::vector<double> losses(sample.size());
        for (std::size_t i = 0; i < sample.size(); ++i) losses[i] = -sample[i];
        std::sort(losses.begin(), losses.end());
        const std::size_t k = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::floor(0.05 * losses.size())));
        double tail = 0;
        for (std::size_t i = losses.size() - k; i < losses.size(); ++i) tail += losses[i];
        tail /= static_cast<double>(k);

        const double cvar = cvar_historical(sample, 0.95);
        const double var = var_historical(sample, 0.95);
        c.expect(cvar == tail, "trial " + std::to_string(trial) + ": oracle mismatch");
        c.expect(cvar >= var, "trial " + std::to_string(trial) + ": CVaR < VaR");
    }
    report(3, "historical CVaR equals the sort-and-tail-mean oracle; CVaR >= VaR (20x100)", c.ok,
           c.why);
}

// --------------------------------------------------------------------------
// 4. EMC trigger exactness on 500 days with 12 planted breaches

void criterion_trigger_exactness() {
    Check c;
    std::vector<Bar> bars;
    for (int i = 0; i < 500; ++i) {
        Bar b;
        b.date = Date(2020, 1, 1).plus_days(i);
        b.open = b.high = b.low = b.close = b.adj_close = 100.0;
        b.volume = 1000;
        bars.push_back(b);
    }
    const std::set<std::size_t> daily_plants = {15, 70, 130, 260, 350, 444};
    const std::set<std::size_t> three_day_plants = {40, 100, 180, 300, 390, 470};
    for (std::size_t d : daily_plants) {
        bars[d].high = 103.5;
        bars[d].low = 97.0; // 6.5% range over the flat prior close
    }
    for (std::size_t d : three_day_plants) {
        const double ramp[] = {111.0, 107.5, 104.0, 101.0};
        for (std::size_t k = 0; k < 4; ++k) {
            Bar& b = bars[d + k];
            b.open = b.high = b.low = b.close = b.adj_close = ramp[k];
        }
    }
    Dataset ds;
    ds.add_asset({"X", AssetClass::Crypto}, bars);

    std::set<std::size_t> fired_daily, fired_three;
    for (std::size_t i = 0; i < bars.size(); ++i) {
        for (const auto& [asset, kind] : detect_extreme(bars[i].date, ds)) {
            (kind == TriggerKind::Daily ? fired_daily : fired_three).insert(i);
        }
    }
    c.expect(fired_daily == daily_plants, "daily trigger set differs from plants");
    c.expect(fired_three == three_day_plants, "three-day trigger set differs from plants");
    report(4, "detect_extreme fires exactly on 12 planted breaches over 500 days", c.ok, c.why);
}

// --------------------------------------------------------------------------
// 5. Metric identities

void criterion_metric_identities() {
    Check c;
    {
        const double arr = 0.7160, mdd = 0.1421;
        c.expect(std::abs(calmar(arr, mdd) * mdd - arr) <= 1e-12, "CR x MDD != ARR");
    }
    {
        const std::vector<double> curve = {100, 120, 90, 110};
        c.expect(std::abs(max_drawdown(curve) - 0.25) <= 1e-12, "MDD of fixture != 0.25");
    }
    {
        WeightHistory single;
        single.symbols = {"A"};
        single.weights.assign(7, {0.9});
        c.expect(entropy(single) == 0.0, "single-asset ENT != 0");
    }
    {
        // exactly orthogonal equal-variance returns via Hadamard columns
        const double h[4][4] = {
            {1, 1, 1, 1}, {1, -1, 1, -1}, {1, 1, -1, -1}, {1, -1, -1, 1}};
        WeightHistory w;
        ReturnHistory r;
        for (int i = 0; i < 3; ++i) w.symbols.push_back("S" + std::to_string(i));
        r.symbols = w.symbols;
        for (int rep = 0; rep < 10; ++rep) {
            for (int row = 0; row < 4; ++row) {
                std::vector<double> rr(3);
                for (int i = 0; i < 3; ++i) rr[i] = 0.01 * h[row][i + 1];
                r.returns.push_back(rr);
                w.weights.push_back(std::vector<double>(3, 1.0 / 3));
            }
        }
        c.expect(std::abs(effective_bets(w, r) - 3.0) <= 1e-6, "ENB of 3 orthogonal assets != 3");
    }
    {
        // engine-level: compounded rewards equal the metrics module's TR
        std::mt19937 rng(5);
        std::uniform_real_distribution<double> u(-0.01, 0.013);
        std::vector<double> equity{1e6};
        std::vector<Date> dates{Date(2021, 1, 1)};
        for (int i = 1; i < 300; ++i) {
            equity.push_back(equity.back() * (1.0 + u(rng)));
            dates.push_back(Date(2021, 1, 1).plus_days(i));
        }
        double prod = 1.0;
        for (std::size_t i = 1; i < equity.size(); ++i) prod *= equity[i] / equity[i - 1];
        c.expect(std::abs((prod - 1.0) - total_return(equity)) <= 1e-9,
                 "compounded rewards != TR");
    }
    report(5, "metric identities (CR*MDD=ARR, reward compounding, MDD, ENT, ENB)", c.ok, c.why);
}

// --------------------------------------------------------------------------
// 6. Determinism: rule-mode byte-identical artifacts; cassette replay offline

class AcceptanceFakeLlm final : public Transport {
public:
    HttpResult post(const std::string& url, const std::string& body,
                    const std::string&) override {
        ++calls_;
        const auto req = json::parse(body);
        if (url.find("/embeddings") != std::string::npos) {
            // deterministic pseudo-embedding from the input text
            const std::string text = req.at("input").get<std::string>();
            std::vector<double> v(64, 0.0);
            std::uint64_t h = 1469598103934665603ull;
            for (char ch : text) {
                h = (h ^ static_cast<unsigned char>(ch)) * 1099511628211ull;
                v[h % 64] += (h >> 63) ? -1.0 : 1.0;
            }
            double n2 = 0;
            for (double x : v) n2 += x * x;
            if (n2 == 0) v[0] = 1.0, n2 = 1.0;
            for (double& x : v) x /= std::sqrt(n2);
            return {200, json{{"data", {{{"embedding", v}}}},
                              {"usage", {{"prompt_tokens", 2}, {"completion_tokens", 0}}}}
                             .dump()};
        }
        std::string prompt;
        for (const auto& m : req.at("messages")) prompt += m.at("content").get<std::string>();
        std::string reply;
        if (prompt.find("Budget Allocation Conference") != std::string::npos) {
            reply = R"({"dave":0.06,"bob":0.02,"emily":0.01})";
        } else if (prompt.find("Experience Sharing Conference") != std::string::npos) {
            reply = "Size positions against realized volatility, not conviction.";
        } else {
            std::uint64_t h = 1469598103934665603ull;
            for (char ch : prompt) h = (h ^ static_cast<unsigned char>(ch)) * 1099511628211ull;
            const char* kinds[] = {"BUY_QUARTER", "HOLD", "SELL_QUARTER", "BUY_HALF", "HOLD"};
            reply = std::string("{\"action\":\"") + kinds[h % 5] +
                    "\",\"rationale\":\"fake backbone\"}";
        }
        return {200, json{{"choices", {{{"message", {{"content", reply}}}}}},
                          {"usage", {{"prompt_tokens", 8}, {"completion_tokens", 4}}}}
                         .dump()};
    }
    int calls() const { return calls_; }

private:
    int calls_ = 0;
};

RunConfig fixture_config(const std::string& backend) {
    RunConfig cfg;
    cfg.data_dir = kFixtures;
    cfg.start = Date(2020, 1, 2);
    cfg.test_start = Date(2021, 1, 4);
    cfg.end = Date(2021, 6, 30);
    cfg.policy_backend = backend;
    return cfg;
}

void criterion_determinism() {
    Check c;
    try {
        // rule backend, run twice
        const auto out1 = temp_dir("det_rule_1");
        const auto out2 = temp_dir("det_rule_2");
        run_backtest(fixture_config("tsm"), out1);
        run_backtest(fixture_config("tsm"), out2);
        for (const char* name : {"/metrics.json", "/equity.csv", "/fills.csv"}) {
            c.expect(!slurp(out1 + name).empty(), std::string(name) + " is empty");
            c.expect(slurp(out1 + name) == slurp(out2 + name),
                     std::string(name) + " differs across identical runs");
        }

        // llm mode: record once, replay offline byte-identically
        const auto dir = temp_dir("det_llm");
        RunConfig cfg = fixture_config("llm");
        cfg.end = Date(2021, 3, 31); // keep the recorded run short
        cfg.cassette = dir + "/run.jsonl";
        cfg.cassette_mode = "record";
        const auto rec_out = dir + "/rec";
        {
            Engine::Deps deps;
            deps.transport = std::make_unique<AcceptanceFakeLlm>();
            run_backtest(cfg, rec_out, std::move(deps));
        }
        cfg.cassette_mode = "replay";
        const auto rep_out = dir + "/rep";
        {
            Engine::Deps deps; // no transport at all: replay must be offline
            const auto art = run_backtest(cfg, rep_out, std::move(deps));
            c.expect(art.network_calls == 0, "replay performed network calls");
        }
        for (const char* name : {"/metrics.json", "/equity.csv", "/fills.csv"}) {
            c.expect(slurp(rec_out + name) == slurp(rep_out + name),
                     std::string(name) + " differs between record and replay");
        }
    } catch (const std::exception& e) {
        c.expect(false, e.what());
    }
    report(6, "byte-identical artifacts: rule rerun and cassette replay with zero network", c.ok,
           c.why);
}

// --------------------------------------------------------------------------
// 7. Temporal gating of the planted sentinel headline

void criterion_temporal_gating() {
    Check c;
    try {
        const auto out = temp_dir("gating");
        RunConfig cfg = fixture_config("zmr");
        cfg.end = Date(2021, 12, 31); // span the sentinel date
        run_backtest(cfg, out);

        const Date sentinel_date(2021, 9, 15);
        std::ifstream in(out + "/logs/transcripts.jsonl");
        c.expect(in.good(), "transcripts missing");
        std::string line;
        int before = 0, after = 0;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto entry = json::parse(line);
            const Date date = Date::parse(entry.at("date").get<std::string>());
            const bool hit =
                entry.at("prompt").get<std::string>().find("SENTINEL-7f3c9a2d") !=
                std::string::npos;
            if (date < sentinel_date && hit) ++before;
            if (date >= sentinel_date && hit) ++after;
        }
        c.expect(before == 0, std::to_string(before) + " pre-date sentinel leaks");
        c.expect(after > 0, "sentinel never surfaced at all (test vacuous)");
    } catch (const std::exception& e) {
        c.expect(false, e.what());
    }
    report(7, "future-dated sentinel headline never appears in earlier prompts", c.ok, c.why);
}

// --------------------------------------------------------------------------
// 8. Baseline harness sanity: TSM beats ZMR on trend, flips on reversion

Dataset regime_dataset(bool trending) {
    Dataset ds;
    const AssetClass classes[] = {AssetClass::Crypto, AssetClass::Equity, AssetClass::Forex};
    const char* symbols[] = {"CA", "EA", "FA"};
    for (int a = 0; a < 3; ++a) {
        std::mt19937 rng(1000 + a + (trending ? 0 : 50));
        std::normal_distribution<double> z(0, 1);
        std::vector<Bar> bars;
        double price = 100.0;
        const double anchor = std::log(100.0);
        for (int i = 0; i < 365 + 730; ++i) { // one warmup year + two test years
            double ret;
            if (trending) {
                ret = 0.0015 + 0.01 * z(rng);
            } else {
                ret = 0.18 * (anchor - std::log(price)) + 0.02 * z(rng);
            }
            price *= std::exp(ret);
            Bar b;
            b.date = Date(2020, 1, 1).plus_days(i);
            b.open = b.high = b.low = b.close = b.adj_close = price;
            b.volume = 1000;
            bars.push_back(b);
        }
        ds.add_asset({symbols[a], classes[a]}, bars);
    }
    return ds;
}

double run_regime(const Dataset& ds, const std::string& backend, const std::string& tag) {
    RunConfig cfg;
    cfg.data_dir = "";
    cfg.start = Date(2020, 1, 1);
    cfg.test_start = Date(2021, 1, 1);
    cfg.end = Date(2022, 12, 30);
    cfg.policy_backend = backend;
    Engine engine(cfg, ds, temp_dir(tag), {});
    return engine.run().metrics.tr;
}

void criterion_baseline_ordering() {
    Check c;
    try {
        const Dataset trend = regime_dataset(true);
        const double tsm_trend = run_regime(trend, "tsm", "trend_tsm");
        const double zmr_trend = run_regime(trend, "zmr", "trend_zmr");
        c.expect(tsm_trend > zmr_trend,
                 "trend: tsm " + std::to_string(tsm_trend) + " vs zmr " +
                     std::to_string(zmr_trend));

        const Dataset revert = regime_dataset(false);
        const double tsm_revert = run_regime(revert, "tsm", "revert_tsm");
        const double zmr_revert = run_regime(revert, "zmr", "revert_zmr");
        c.expect(zmr_revert > tsm_revert,
                 "revert: zmr " + std::to_string(zmr_revert) + " vs tsm " +
                     std::to_string(tsm_revert));
    } catch (const std::exception& e) {
        c.expect(false, e.what());
    }
    report(8, "TSM beats ZMR on the trending fixture; ordering flips on mean reversion", c.ok,
           c.why);
}

// --------------------------------------------------------------------------
// 9. Memory retrieval vs brute force at k in {1, 5, 200}

void criterion_retrieval_oracle() {
    Check c;
    std::mt19937 rng(40);
    std::normal_distribution<double> z(0, 1);
    const std::size_t dim = 16;
    MemoryStore mi(MemoryKind::MarketInformation, dim);
    MemoryStore ir(MemoryKind::InvestmentReflection, dim);
    MemoryStore ge(MemoryKind::GeneralExperience, dim);
    MemoryStore* targets[] = {&mi, &ir, &ge};

    struct Entry {
        std::string id;
        std::vector<double> emb;
        Date ts;
    };
    std::vector<Entry> entries;
    for (int i = 0; i < 200; ++i) {
        std::vector<double> v(dim);
        for (double& x : v) x = z(rng);
        double n2 = 0;
        for (double x : v) n2 += x * x;
        for (double& x : v) x /= std::sqrt(n2);
        MemoryRecord r;
        r.timestamp = Date(2021, 1, 1).plus_days(i % 37);
        r.text = "rec";
        r.embedding = v;
        const auto id = targets[i % 3]->insert(std::move(r));
        entries.push_back({id, v, Date(2021, 1, 1).plus_days(i % 37)});
    }
    std::vector<double> qv(dim);
    for (double& x : qv) x = z(rng);

    std::vector<std::tuple<double, std::int64_t, std::string>> oracle;
    for (const auto& e : entries) {
        oracle.emplace_back(cosine_similarity(qv, e.emb), e.ts.serial(), e.id);
    }
    std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
        if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
        if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) > std::get<1>(b);
        return std::get<2>(a) < std::get<2>(b);
    });

    const MemoryStore* stores[] = {&mi, &ir, &ge};
    for (int k : {1, 5, 200}) {
        const auto hits = retrieve(stores, Query{"q", qv, k});
        c.expect(hits.size() == std::min<std::size_t>(k, entries.size()),
                 "k=" + std::to_string(k) + ": wrong result size");
        for (std::size_t i = 0; i < hits.size(); ++i) {
            if (hits[i].record->id != std::get<2>(oracle[i])) {
                c.expect(false, "k=" + std::to_string(k) + ": rank " + std::to_string(i) +
                                    " differs from brute force");
                break;
            }
        }
    }
    report(9, "top-k retrieval matches brute-force cosine sort on a 200-record store", c.ok,
           c.why);
}

// --------------------------------------------------------------------------
// 10. Ledger oracle: scripted 10-day run vs the committed hand-computed curve

class LedgerScriptBackend final : public DecisionBackend {
public:
    Action decide(const AgentProfile&, const DecisionContext& ctx) override {
        static const std::map<std::pair<std::string, std::string>, ActionKind> script = {
            {{"2021-01-05", "CA"}, ActionKind::BuyHalf},
            {{"2021-01-05", "EA"}, ActionKind::BuyAll},
            {{"2021-01-07", "CA"}, ActionKind::SellQuarter},
            {{"2021-01-07", "FA"}, ActionKind::BuyQuarter},
            {{"2021-01-11", "EA"}, ActionKind::SellHalf},
            {{"2021-01-11", "FA"}, ActionKind::BuyHalf},
            {{"2021-01-13", "CA"}, ActionKind::BuyQuarter},
            {{"2021-01-14", "CA"}, ActionKind::CloseAll},
            {{"2021-01-14", "EA"}, ActionKind::BuyQuarter},
            {{"2021-01-18", "CA"}, ActionKind::BuyAll},
            {{"2021-01-18", "FA"}, ActionKind::SellAll},
        };
        const auto it = script.find({ctx.date.to_string(), ctx.asset.symbol});
        if (it == script.end()) return make_action(ctx.asset, ActionKind::Hold, "hold");
        return make_action(ctx.asset, it->second, "scripted");
    }
    std::string name() const override { return "scripted"; }
};

void criterion_ledger_oracle() {
    Check c;
    try {
        RunConfig cfg;
        cfg.data_dir = kTestFixtures + "/ledger_data";
        cfg.start = Date(2021, 1, 4);
        cfg.test_start = Date(2021, 1, 5);
        cfg.end = Date(2021, 1, 18);
        Engine::Deps deps;
        deps.backend_factory = [](const AgentProfile&) {
            return std::make_unique<LedgerScriptBackend>();
        };
        const auto art = run_backtest(cfg, temp_dir("ledger"), std::move(deps));

        std::ifstream expected(kTestFixtures + "/ledger_expected.csv");
        c.expect(expected.good(), "committed ledger missing");
        std::string line;
        std::getline(expected, line);
        std::size_t i = 0;
        while (std::getline(expected, line)) {
            if (line.empty()) continue;
            const auto comma = line.find(',');
            const double want = std::stod(line.substr(comma + 1));
            c.expect(i < art.equity.size(), "run shorter than the ledger");
            if (i >= art.equity.size()) break;
            c.expect(std::abs(art.equity[i] - want) <= 1e-9 * std::abs(want),
                     line.substr(0, comma) + ": engine " + std::to_string(art.equity[i]) +
                         " vs ledger " + std::to_string(want));
            ++i;
        }
        c.expect(i == art.equity.size() && i == 10, "ledger row count mismatch");
    } catch (const std::exception& e) {
        c.expect(false, e.what());
    }
    report(10, "scripted 10-day equity curve matches the committed ledger within 1e-9", c.ok,
           c.why);
}

} // namespace

int main() {
    const auto t0 = std::chrono::steady_clock::now();
    criterion_arr_tr();
    criterion_allocator_oracle();
    criterion_cvar_oracle();
    criterion_trigger_exactness();
    criterion_metric_identities();
    criterion_determinism();
    criterion_temporal_gating();
    criterion_baseline_ordering();
    criterion_retrieval_oracle();
    criterion_ledger_oracle();
    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
    std::printf("%d/10 criteria passed in %lld ms\n", 10 - g_failures,
                static_cast<long long>(elapsed));
    return g_failures == 0 ? 0 : 1;
}
