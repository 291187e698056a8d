#pragma once

#include "hedgeflow/asset.hpp"
#include "hedgeflow/dates.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hedgeflow {

/// One daily OHLCV observation. Prices in quote currency, volume >= 0.
struct Bar {
    Date date;
    double open = 0;
    double high = 0;
    double low = 0;
    double close = 0;
    double adj_close = 0;
    double volume = 0;
};

/// Throws ValidationError naming the date when OHLC relations are broken.
void validate_bar(const Bar& bar);

struct NewsItem {
    Date date;
    std::string symbol;
    std::string headline;
};

/// Per-asset view assembled for one engine step. Everything inside is
/// dated <= `date` (temporal gating holds by construction).
struct MarketSnapshot {
    Date date;
    // Latest bar on or before `date` per symbol; absent if the asset has
    // no bar yet. `traded_today` marks symbols whose bar is dated exactly
    // `date` (only those accept fills).
    std::map<std::string, Bar> bars;
    std::map<std::string, bool> traded_today;
    std::map<std::string, std::map<std::string, double>> indicators;
    // Headlines since the previous union-calendar step (inclusive of `date`).
    std::map<std::string, std::vector<NewsItem>> news;
};

struct ReturnSeries {
    AssetId asset;
    std::vector<Date> dates;      // date of each return (the later bar)
    std::vector<double> returns;  // close[t]/close[t-1] - 1
};

/// Simple daily returns on adjacent bars. Equities use adjusted close,
/// crypto/forex raw close.
ReturnSeries returns_from_bars(const AssetId& asset, std::span<const Bar> bars);

/// Strict loader: header must match the CSV contract, every row must parse
/// and satisfy the bar invariants. Result is sorted ascending by date with
/// no duplicates.
std::vector<Bar> load_ohlcv(const std::string& path, const AssetId& asset);

/// Lenient scan used by `ingest`: collects every violation instead of
/// throwing on the first one. Valid bars are still returned sorted.
struct OhlcvScan {
    std::vector<Bar> bars;
    std::vector<std::string> issues;
};
OhlcvScan scan_ohlcv(const std::string& path);

std::vector<NewsItem> load_news_jsonl(const std::string& path);

/// (high_t - low_t) / close_{t-1} over the last two bars of `window`.
double daily_amplitude(std::span<const Bar> window);

/// |close_t / close_{t-1} - 1|: the alternative daily-amplitude reading,
/// selectable where the intraday-range definition is not wanted.
double daily_amplitude_close_to_close(std::span<const Bar> window);

/// |close_t / close_{t-3} - 1| over the last four bars of `window`.
double cumulative_amplitude_3d(std::span<const Bar> window);

enum class AmplitudeMode { HighLow, CloseToClose };

/// Immutable per-run market dataset: bars per asset, news, union calendar.
/// Read-only after load; safe to share across concurrent readers.
class Dataset {
public:
    /// Loads `assets.json`, one `<SYMBOL>.csv` per asset, and an optional
    /// `news.jsonl` from `data_dir`.
    static Dataset load(const std::string& data_dir);

    void add_asset(const AssetId& asset, std::vector<Bar> bars);
    void add_news(std::vector<NewsItem> items);

    const std::vector<AssetId>& assets() const { return assets_; }
    const AssetId* find_asset(const std::string& symbol) const;
    std::span<const Bar> bars(const std::string& symbol) const;

    /// Bars dated <= d (the gated view rule policies and indicators see).
    std::span<const Bar> bars_through(const std::string& symbol, Date d) const;

    /// Union of all per-asset trading calendars.
    const std::vector<Date>& union_calendar() const { return calendar_; }

    /// Last close on or before d (carry-forward valuation); nullopt before
    /// the asset's first bar.
    std::optional<double> close_on_or_before(const std::string& symbol, Date d) const;

    /// Assembles the gated snapshot for `date`. A non-trading date resolves
    /// to the most recent prior trading day on the union calendar; a date
    /// before the first bar is an error.
    MarketSnapshot snapshot(Date date, const std::vector<std::string>& indicator_set) const;

private:
    std::vector<AssetId> assets_;
    std::map<std::string, std::vector<Bar>> bars_;
    std::vector<NewsItem> news_;
    std::vector<Date> calendar_;

    void rebuild_calendar();
};

} // namespace hedgeflow
