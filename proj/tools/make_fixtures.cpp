// Regenerates the bundled fixtures/ dataset: three synthetic assets over
// two years of daily bars, plus news headlines (including one future-dated
// sentinel used by the leak tests) and a sample run config.
//
// Usage: make_fixtures <output_dir>

#include "hedgeflow/dates.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

using hedgeflow::Date;
using nlohmann::json;

namespace {

bool is_weekday(Date d) {
    // 1970-01-01 was a Thursday; serial 0 -> weekday 4 (Mon=0).
    const int wd = static_cast<int>(((d.serial() % 7) + 7 + 3) % 7);
    return wd < 5;
}

struct BarRow {
    Date date;
    double open, high, low, close, adj_close, volume;
};

std::vector<BarRow> synth_path(unsigned seed, Date start, Date end, bool weekdays_only,
                               double start_price, double drift, double vol, double adj_factor,
                               bool mean_revert) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    std::vector<BarRow> rows;
    double price = start_price;
    const double anchor = start_price;
    double prev_close = start_price;
    for (Date d = start; d <= end; d = d.plus_days(1)) {
        if (weekdays_only && !is_weekday(d)) continue;
        double ret;
        if (mean_revert) {
            ret = 0.05 * (std::log(anchor) - std::log(price)) + vol * z(rng);
        } else {
            ret = drift + vol * z(rng);
        }
        price *= std::exp(ret);
        BarRow row;
        row.date = d;
        row.close = price;
        row.open = prev_close * (1.0 + 0.2 * vol * z(rng));
        const double hi_pad = std::abs(0.4 * vol * z(rng));
        const double lo_pad = std::abs(0.4 * vol * z(rng));
        row.high = std::max(row.open, row.close) * (1.0 + hi_pad);
        row.low = std::min(row.open, row.close) * (1.0 - lo_pad);
        row.adj_close = row.close * adj_factor;
        row.volume = std::floor(1e6 * (0.5 + u(rng)));
        rows.push_back(row);
        prev_close = price;
    }
    return rows;
}

void write_csv(const std::string& path, const std::vector<BarRow>& rows) {
    std::ofstream out(path);
    out << "date,open,high,low,close,adj_close,volume\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.0f\n",
                      r.date.to_string().c_str(), r.open, r.high, r.low, r.close, r.adj_close,
                      r.volume);
        out << buf;
    }
}

} // namespace

int main(int argc, char** argv) {
    const std::string out_dir = argc > 1 ? argv[1] : "fixtures";
    std::filesystem::create_directories(out_dir);

    const Date start(2020, 1, 2);
    const Date end(2021, 12, 31);

    const auto btc = synth_path(11, start, end, false, 20000.0, 0.0012, 0.028, 1.0, false);
    const auto dji = synth_path(22, start, end, true, 30000.0, 0.0004, 0.011, 0.98, false);
    const auto fx = synth_path(33, start, end, true, 7.0, 0.0, 0.004, 1.0, true);
    write_csv(out_dir + "/BTC.csv", btc);
    write_csv(out_dir + "/DJI.csv", dji);
    write_csv(out_dir + "/FX.csv", fx);

    {
        std::ofstream out(out_dir + "/assets.json");
        out << json::array({{{"symbol", "BTC"}, {"class", "crypto"}},
                            {{"symbol", "DJI"}, {"class", "equity"}},
                            {{"symbol", "FX"}, {"class", "forex"}}})
                   .dump(2)
            << "\n";
    }

    {
        // Two headlines per asset per week, plus one future-dated sentinel
        // headline that temporal-gating tests assert never leaks early.
        const char* subjects[] = {"liquidity", "rate outlook", "supply data", "risk appetite",
                                  "positioning", "macro print"};
        const char* moods[] = {"improves", "deteriorates", "stabilizes", "surprises"};
        std::mt19937 rng(44);
        std::ofstream out(out_dir + "/news.jsonl");
        const char* symbols[] = {"BTC", "DJI", "FX"};
        for (Date d = start; d <= end; d = d.plus_days(1)) {
            for (const char* sym : symbols) {
                if ((d.serial() + sym[0]) % 3 != 0) continue;
                const json obj = {{"date", d.to_string()},
                                  {"symbol", sym},
                                  {"headline", std::string(sym) + " " +
                                                   subjects[rng() % 6] + " " + moods[rng() % 4]}};
                out << obj.dump() << "\n";
            }
        }
        const json sentinel = {{"date", "2021-09-15"},
                               {"symbol", "BTC"},
                               {"headline", "SENTINEL-7f3c9a2d planted future-dated headline"}};
        out << sentinel.dump() << "\n";
    }

    {
        const json cfg = {
            {"data_dir", out_dir},         {"start", "2020-01-02"},
            {"end", "2021-12-31"},         {"test_start", "2021-01-04"},
            {"policy_backend", "tsm"},     {"fee_bps", 0.0},
            {"lambda1", 1.0},              {"lambda2", 1.0},
            {"lambda3", 0.5},              {"alpha", 0.95},
            {"bac_cycle_days", 30},        {"reflection_horizon_days", 4},
            {"gamma", 1.0},                {"seed", 7},
        };
        std::ofstream out(out_dir + "/config.json");
        out << cfg.dump(2) << "\n";
    }

    std::cout << "wrote fixtures to " << out_dir << "\n";
    return 0;
}
