#include "hedgeflow/market_data.hpp"

#include "hedgeflow/errors.hpp"
#include "hedgeflow/indicators.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace hedgeflow {

using nlohmann::json;

void validate_bar(const Bar& bar) {
    const std::string at = " at " + bar.date.to_string();
    if (!(bar.open > 0 && bar.high > 0 && bar.low > 0 && bar.close > 0 && bar.adj_close > 0)) {
        throw ValidationError("non-positive price" + at);
    }
    if (bar.low > std::min(bar.open, bar.close)) {
        throw ValidationError("low above min(open, close)" + at);
    }
    if (bar.high < std::max(bar.open, bar.close)) {
        throw ValidationError("high below max(open, close)" + at);
    }
    if (bar.low > bar.high) {
        throw ValidationError("low above high" + at);
    }
    if (bar.volume < 0) {
        throw ValidationError("negative volume" + at);
    }
}

ReturnSeries returns_from_bars(const AssetId& asset, std::span<const Bar> bars) {
    ReturnSeries out;
    out.asset = asset;
    const bool use_adj = asset.asset_class == AssetClass::Equity;
    for (std::size_t i = 1; i < bars.size(); ++i) {
        const double p0 = use_adj ? bars[i - 1].adj_close : bars[i - 1].close;
        const double p1 = use_adj ? bars[i].adj_close : bars[i].close;
        out.dates.push_back(bars[i].date);
        out.returns.push_back(p1 / p0 - 1.0);
    }
    return out;
}

namespace {

constexpr const char* kOhlcvHeader = "date,open,high,low,close,adj_close,volume";

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

// Parses one data row; throws ParseError naming the line on bad fields.
Bar parse_row(const std::string& line, int line_no) {
    const auto fields = split_csv(line);
    if (fields.size() != 7) {
        throw ParseError("line " + std::to_string(line_no) + ": expected 7 fields, got " +
                         std::to_string(fields.size()));
    }
    Bar bar;
    try {
        bar.date = Date::parse(fields[0]);
        std::size_t pos = 0;
        const auto num = [&](const std::string& s, const char* what) {
            const double v = std::stod(s, &pos);
            if (pos != s.size()) throw ParseError(std::string("trailing characters in ") + what);
            if (!std::isfinite(v)) throw ParseError(std::string("non-finite ") + what);
            return v;
        };
        bar.open = num(fields[1], "open");
        bar.high = num(fields[2], "high");
        bar.low = num(fields[3], "low");
        bar.close = num(fields[4], "close");
        bar.adj_close = num(fields[5], "adj_close");
        bar.volume = num(fields[6], "volume");
    } catch (const ParseError& e) {
        throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const std::exception& e) {
        throw ParseError("line " + std::to_string(line_no) + ": malformed numeric field (" +
                         e.what() + ")");
    }
    return bar;
}

void sort_and_check_dates(std::vector<Bar>& bars, const std::string& path) {
    std::stable_sort(bars.begin(), bars.end(),
                     [](const Bar& a, const Bar& b) { return a.date < b.date; });
    for (std::size_t i = 1; i < bars.size(); ++i) {
        if (bars[i].date == bars[i - 1].date) {
            throw ValidationError("duplicate date " + bars[i].date.to_string() + " in " + path);
        }
    }
}

} // namespace

std::vector<Bar> load_ohlcv(const std::string& path, const AssetId& asset) {
    (void)asset;
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file");
    if (strip_cr(line) != kOhlcvHeader) {
        throw ParseError(path + ": header must be '" + kOhlcvHeader + "'");
    }

    std::vector<Bar> bars;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        Bar bar;
        try {
            bar = parse_row(line, line_no);
        } catch (const ParseError& e) {
            throw ParseError(path + ": " + e.what());
        }
        validate_bar(bar); // throws ValidationError naming the date
        bars.push_back(bar);
    }
    sort_and_check_dates(bars, path);
    return bars;
}

OhlcvScan scan_ohlcv(const std::string& path) {
    OhlcvScan out;
    std::ifstream in(path);
    if (!in) {
        out.issues.push_back("cannot open " + path);
        return out;
    }
    std::string line;
    if (!std::getline(in, line)) {
        out.issues.push_back(path + ": empty file");
        return out;
    }
    if (strip_cr(line) != kOhlcvHeader) {
        out.issues.push_back(path + ": header must be '" + kOhlcvHeader + "'");
        return out;
    }
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        try {
            Bar bar = parse_row(line, line_no);
            validate_bar(bar);
            out.bars.push_back(bar);
        } catch (const std::exception& e) {
            out.issues.push_back(path + ": " + e.what());
        }
    }
    std::stable_sort(out.bars.begin(), out.bars.end(),
                     [](const Bar& a, const Bar& b) { return a.date < b.date; });
    for (std::size_t i = 1; i < out.bars.size(); ++i) {
        if (out.bars[i].date == out.bars[i - 1].date) {
            out.issues.push_back(path + ": duplicate date " + out.bars[i].date.to_string());
        }
    }
    return out;
}

std::vector<NewsItem> load_news_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    std::vector<NewsItem> items;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const std::exception& e) {
            throw ParseError(path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
        NewsItem item;
        try {
            item.date = Date::parse(obj.at("date").get<std::string>());
            item.symbol = obj.at("symbol").get<std::string>();
            item.headline = obj.at("headline").get<std::string>();
        } catch (const std::exception& e) {
            throw ParseError(path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
        if (item.headline.empty()) {
            throw ValidationError(path + ": line " + std::to_string(line_no) + ": empty headline");
        }
        items.push_back(std::move(item));
    }
    std::stable_sort(items.begin(), items.end(),
                     [](const NewsItem& a, const NewsItem& b) { return a.date < b.date; });
    return items;
}

double daily_amplitude(std::span<const Bar> window) {
    if (window.size() < 2) {
        throw InsufficientHistoryError("daily_amplitude needs at least 2 bars");
    }
    const Bar& prev = window[window.size() - 2];
    const Bar& cur = window[window.size() - 1];
    return (cur.high - cur.low) / prev.close;
}

double daily_amplitude_close_to_close(std::span<const Bar> window) {
    if (window.size() < 2) {
        throw InsufficientHistoryError("daily_amplitude needs at least 2 bars");
    }
    const Bar& prev = window[window.size() - 2];
    const Bar& cur = window[window.size() - 1];
    return std::abs(cur.close / prev.close - 1.0);
}

double cumulative_amplitude_3d(std::span<const Bar> window) {
    if (window.size() < 4) {
        throw InsufficientHistoryError("cumulative_amplitude_3d needs at least 4 bars");
    }
    const double c0 = window[window.size() - 4].close;
    const double c3 = window[window.size() - 1].close;
    return std::abs(c3 / c0 - 1.0);
}

// ---------------------------------------------------------------------------
// Dataset

void Dataset::add_asset(const AssetId& asset, std::vector<Bar> bars) {
    if (asset.symbol.empty()) throw ValidationError("asset symbol must be non-empty");
    if (find_asset(asset.symbol)) throw ValidationError("duplicate asset " + asset.symbol);
    std::stable_sort(bars.begin(), bars.end(),
                     [](const Bar& a, const Bar& b) { return a.date < b.date; });
    assets_.push_back(asset);
    bars_[asset.symbol] = std::move(bars);
    rebuild_calendar();
}

void Dataset::add_news(std::vector<NewsItem> items) {
    news_.insert(news_.end(), items.begin(), items.end());
    std::stable_sort(news_.begin(), news_.end(),
                     [](const NewsItem& a, const NewsItem& b) { return a.date < b.date; });
}

const AssetId* Dataset::find_asset(const std::string& symbol) const {
    for (const auto& a : assets_) {
        if (a.symbol == symbol) return &a;
    }
    return nullptr;
}

std::span<const Bar> Dataset::bars(const std::string& symbol) const {
    auto it = bars_.find(symbol);
    if (it == bars_.end()) throw ValidationError("unknown asset " + symbol);
    return it->second;
}

std::span<const Bar> Dataset::bars_through(const std::string& symbol, Date d) const {
    auto all = bars(symbol);
    auto it = std::upper_bound(all.begin(), all.end(), d,
                               [](Date lhs, const Bar& b) { return lhs < b.date; });
    return all.subspan(0, static_cast<std::size_t>(it - all.begin()));
}

std::optional<double> Dataset::close_on_or_before(const std::string& symbol, Date d) const {
    auto gated = bars_through(symbol, d);
    if (gated.empty()) return std::nullopt;
    return gated.back().close;
}

void Dataset::rebuild_calendar() {
    std::set<Date> dates;
    for (const auto& [sym, bars] : bars_) {
        for (const auto& b : bars) dates.insert(b.date);
    }
    calendar_.assign(dates.begin(), dates.end());
}

MarketSnapshot Dataset::snapshot(Date date, const std::vector<std::string>& indicator_set) const {
    if (calendar_.empty()) throw ValidationError("dataset has no bars");
    if (date < calendar_.front()) {
        throw ValidationError("snapshot date " + date.to_string() + " precedes first bar " +
                              calendar_.front().to_string());
    }
    // Resolve a non-trading date to the most recent prior trading day.
    auto it = std::upper_bound(calendar_.begin(), calendar_.end(), date);
    const Date effective = *(it - 1);
    const Date prev_step = (it - 1 == calendar_.begin()) ? Date() : *(it - 2);
    const bool first_step = (it - 1 == calendar_.begin());

    MarketSnapshot snap;
    snap.date = effective;
    for (const auto& asset : assets_) {
        auto gated = bars_through(asset.symbol, effective);
        if (gated.empty()) continue;
        snap.bars[asset.symbol] = gated.back();
        snap.traded_today[asset.symbol] = gated.back().date == effective;
        // Indicators see at most the trailing 120 bars; values whose lookback
        // exceeds what is available are simply absent.
        const std::size_t take = std::min<std::size_t>(gated.size(), 120);
        snap.indicators[asset.symbol] =
            compute_indicators(gated.subspan(gated.size() - take), indicator_set);
    }
    for (const auto& item : news_) {
        if (item.date > effective) break;
        if (!first_step && item.date <= prev_step) continue;
        snap.news[item.symbol].push_back(item);
    }
    return snap;
}

Dataset Dataset::load(const std::string& data_dir) {
    const std::string manifest_path = data_dir + "/assets.json";
    std::ifstream manifest(manifest_path);
    if (!manifest) throw ParseError("cannot open " + manifest_path);
    json spec;
    try {
        manifest >> spec;
    } catch (const std::exception& e) {
        throw ParseError(manifest_path + ": " + e.what());
    }
    if (!spec.is_array() || spec.empty()) {
        throw ValidationError(manifest_path + ": expected a non-empty array of assets");
    }
    Dataset ds;
    for (const auto& entry : spec) {
        AssetId asset;
        asset.symbol = entry.at("symbol").get<std::string>();
        asset.asset_class = asset_class_from_string(entry.at("class").get<std::string>());
        ds.add_asset(asset, load_ohlcv(data_dir + "/" + asset.symbol + ".csv", asset));
    }
    std::ifstream news_probe(data_dir + "/news.jsonl");
    if (news_probe.good()) {
        ds.add_news(load_news_jsonl(data_dir + "/news.jsonl"));
    }
    return ds;
}

} // namespace hedgeflow
