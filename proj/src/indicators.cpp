#include "hedgeflow/indicators.hpp"

#include "hedgeflow/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace hedgeflow {

namespace {

std::vector<double> closes_of(std::span<const Bar> w) {
    std::vector<double> c;
    c.reserve(w.size());
    for (const auto& b : w) c.push_back(b.close);
    return c;
}

double sma(std::span<const double> x, std::size_t n) {
    double s = 0;
    for (std::size_t i = x.size() - n; i < x.size(); ++i) s += x[i];
    return s / static_cast<double>(n);
}

// EMA over the whole series, seeded with the first value, alpha = 2/(n+1).
std::vector<double> ema_series(std::span<const double> x, std::size_t n) {
    std::vector<double> out(x.size());
    const double alpha = 2.0 / (static_cast<double>(n) + 1.0);
    out[0] = x[0];
    for (std::size_t i = 1; i < x.size(); ++i) {
        out[i] = alpha * x[i] + (1.0 - alpha) * out[i - 1];
    }
    return out;
}

// Wilder's RSI; a series with no down-moves reports 100.
double rsi(std::span<const double> c, std::size_t n) {
    double avg_gain = 0, avg_loss = 0;
    for (std::size_t i = 1; i <= n; ++i) {
        const double d = c[i] - c[i - 1];
        avg_gain += std::max(d, 0.0);
        avg_loss += std::max(-d, 0.0);
    }
    avg_gain /= static_cast<double>(n);
    avg_loss /= static_cast<double>(n);
    for (std::size_t i = n + 1; i < c.size(); ++i) {
        const double d = c[i] - c[i - 1];
        avg_gain = (avg_gain * (n - 1) + std::max(d, 0.0)) / static_cast<double>(n);
        avg_loss = (avg_loss * (n - 1) + std::max(-d, 0.0)) / static_cast<double>(n);
    }
    if (avg_loss == 0.0) return 100.0;
    const double rs = avg_gain / avg_loss;
    return 100.0 - 100.0 / (1.0 + rs);
}

double macd_line(std::span<const double> c, std::size_t fast, std::size_t slow) {
    return ema_series(c, fast).back() - ema_series(c, slow).back();
}

double macd_signal(std::span<const double> c, std::size_t fast, std::size_t slow,
                   std::size_t smooth) {
    const auto f = ema_series(c, fast);
    const auto s = ema_series(c, slow);
    std::vector<double> line(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) line[i] = f[i] - s[i];
    return ema_series(line, smooth).back();
}

// Wilder-smoothed average true range.
double atr(std::span<const Bar> w, std::size_t n) {
    std::vector<double> tr(w.size());
    tr[0] = w[0].high - w[0].low;
    for (std::size_t i = 1; i < w.size(); ++i) {
        const double hl = w[i].high - w[i].low;
        const double hc = std::abs(w[i].high - w[i - 1].close);
        const double lc = std::abs(w[i].low - w[i - 1].close);
        tr[i] = std::max({hl, hc, lc});
    }
    double a = 0;
    for (std::size_t i = 0; i < n; ++i) a += tr[i];
    a /= static_cast<double>(n);
    for (std::size_t i = n; i < tr.size(); ++i) {
        a = (a * (n - 1) + tr[i]) / static_cast<double>(n);
    }
    return a;
}

double stdev_population(std::span<const double> x, std::size_t n) {
    const double m = sma(x, n);
    double s = 0;
    for (std::size_t i = x.size() - n; i < x.size(); ++i) s += (x[i] - m) * (x[i] - m);
    return std::sqrt(s / static_cast<double>(n));
}

// Sample standard deviation of the last n simple returns.
double rolling_vol(std::span<const double> c, std::size_t n) {
    std::vector<double> r;
    r.reserve(n);
    for (std::size_t i = c.size() - n; i < c.size(); ++i) r.push_back(c[i] / c[i - 1] - 1.0);
    double m = 0;
    for (double v : r) m += v;
    m /= static_cast<double>(n);
    double s = 0;
    for (double v : r) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(n - 1));
}

double obv(std::span<const Bar> w) {
    double v = 0;
    for (std::size_t i = 1; i < w.size(); ++i) {
        if (w[i].close > w[i - 1].close) v += w[i].volume;
        else if (w[i].close < w[i - 1].close) v -= w[i].volume;
    }
    return v;
}

// Indicator names are "<family>[_p1[_p2[_p3]]]"; a bare family name uses the
// conventional defaults below.
struct ParsedName {
    std::string family;
    std::vector<std::size_t> params;
};

const std::vector<std::string>& families() {
    static const std::vector<std::string> f = {
        "macd_signal", "boll_upper", "boll_lower", "macd", "sma",      "ema",
        "rsi",         "atr",        "momentum",   "roc",  "vol", "obv",
    };
    return f;
}

bool parse_params(const std::string& rest, std::vector<std::size_t>& out) {
    std::size_t i = 0;
    while (i < rest.size()) {
        if (rest[i] != '_') return false;
        std::size_t j = ++i;
        while (j < rest.size() && std::isdigit(static_cast<unsigned char>(rest[j]))) ++j;
        if (j == i) return false;
        out.push_back(static_cast<std::size_t>(std::stoul(rest.substr(i, j - i))));
        i = j;
    }
    return true;
}

std::string supported_list() {
    std::string s;
    for (const auto& n : supported_indicators()) {
        if (!s.empty()) s += ", ";
        s += n;
    }
    return s;
}

ParsedName parse_name(const std::string& name) {
    for (const auto& family : families()) {
        if (name.rfind(family, 0) != 0) continue;
        ParsedName parsed{family, {}};
        const std::string rest = name.substr(family.size());
        if (rest.empty()) return parsed;
        if (parse_params(rest, parsed.params)) return parsed;
    }
    throw ValidationError("unknown indicator '" + name + "'; supported: " + supported_list());
}

void fill_defaults(ParsedName& p) {
    const auto want = [&](std::vector<std::size_t> defaults) {
        if (p.params.empty()) p.params = std::move(defaults);
    };
    if (p.family == "sma" || p.family == "vol") want({20});
    else if (p.family == "ema") want({12});
    else if (p.family == "rsi" || p.family == "atr") want({14});
    else if (p.family == "macd" || p.family == "macd_signal") want({12, 26, 9});
    else if (p.family == "boll_upper" || p.family == "boll_lower") want({20, 2});
    else if (p.family == "momentum" || p.family == "roc") want({10});
}

std::size_t expected_arity(const std::string& family) {
    if (family == "macd" || family == "macd_signal") return 3;
    if (family == "boll_upper" || family == "boll_lower") return 2;
    if (family == "obv") return 0;
    return 1;
}

} // namespace

const std::vector<std::string>& supported_indicators() {
    static const std::vector<std::string> names = {
        "sma_20",        "ema_12",       "rsi_14", "macd_12_26_9", "macd_signal_12_26_9",
        "atr_14",        "boll_upper_20_2", "boll_lower_20_2", "momentum_10", "roc_10",
        "vol_20",        "obv",
    };
    return names;
}

const std::vector<std::string>& default_indicator_set() { return supported_indicators(); }

std::map<std::string, double> compute_indicators(std::span<const Bar> window,
                                                 const std::vector<std::string>& names) {
    const auto closes = closes_of(window);
    std::map<std::string, double> out;
    for (const auto& name : names) {
        ParsedName p = parse_name(name);
        fill_defaults(p);
        if (p.params.size() != expected_arity(p.family)) {
            throw ValidationError("indicator '" + name + "' has the wrong parameter count; " +
                                  "supported: " + supported_list());
        }
        for (std::size_t v : p.params) {
            if (v == 0) throw ValidationError("indicator '" + name + "' has a zero parameter");
        }
        const std::size_t n = window.size();
        double value = 0;
        bool have = false;
        if (p.family == "sma") {
            if (n >= p.params[0]) value = sma(closes, p.params[0]), have = true;
        } else if (p.family == "ema") {
            if (n >= p.params[0]) value = ema_series(closes, p.params[0]).back(), have = true;
        } else if (p.family == "rsi") {
            if (n >= p.params[0] + 1) value = rsi(closes, p.params[0]), have = true;
        } else if (p.family == "macd") {
            if (n >= p.params[1]) {
                value = macd_line(closes, p.params[0], p.params[1]);
                have = true;
            }
        } else if (p.family == "macd_signal") {
            if (n >= p.params[1] + p.params[2]) {
                value = macd_signal(closes, p.params[0], p.params[1], p.params[2]);
                have = true;
            }
        } else if (p.family == "atr") {
            if (n >= p.params[0] + 1) value = atr(window, p.params[0]), have = true;
        } else if (p.family == "boll_upper") {
            if (n >= p.params[0]) {
                value = sma(closes, p.params[0]) +
                        static_cast<double>(p.params[1]) * stdev_population(closes, p.params[0]);
                have = true;
            }
        } else if (p.family == "boll_lower") {
            if (n >= p.params[0]) {
                value = sma(closes, p.params[0]) -
                        static_cast<double>(p.params[1]) * stdev_population(closes, p.params[0]);
                have = true;
            }
        } else if (p.family == "momentum") {
            if (n >= p.params[0] + 1) {
                value = closes.back() - closes[closes.size() - 1 - p.params[0]];
                have = true;
            }
        } else if (p.family == "roc") {
            if (n >= p.params[0] + 1) {
                value = closes.back() / closes[closes.size() - 1 - p.params[0]] - 1.0;
                have = true;
            }
        } else if (p.family == "vol") {
            if (n >= p.params[0] + 1) value = rolling_vol(closes, p.params[0]), have = true;
        } else if (p.family == "obv") {
            if (n >= 2) value = obv(window), have = true;
        }
        if (have) out[name] = value; // otherwise absent, not zero
    }
    return out;
}

} // namespace hedgeflow
