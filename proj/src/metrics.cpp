#include "hedgeflow/metrics.hpp"

#include "hedgeflow/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace hedgeflow {

namespace {

constexpr double kTradingDaysPerYear = 252.0;

double mean_of(std::span<const double> x) {
    double s = 0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

bool all_equal(std::span<const double> x) {
    for (double v : x) {
        if (v != x.front()) return false;
    }
    return true;
}

double sample_std(std::span<const double> x) {
    if (all_equal(x)) return 0.0; // avoids mean-subtraction noise
    const double m = mean_of(x);
    double s = 0;
    for (double v : x) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(x.size() - 1));
}

} // namespace

double total_return(std::span<const double> equity) {
    if (equity.size() < 2) throw MetricError("total_return needs >= 2 equity points");
    for (double v : equity) {
        if (!(v > 0)) throw MetricError("total_return: non-positive equity value");
    }
    return equity.back() / equity.front() - 1.0;
}

double annual_return_rate(double tr, double span_years) {
    if (!(span_years > 0)) throw MetricError("annual_return_rate: span must be positive");
    if (!(tr > -1.0)) throw MetricError("annual_return_rate: total return must exceed -1");
    return std::pow(1.0 + tr, 1.0 / span_years) - 1.0;
}

double sharpe(std::span<const double> daily_returns, double risk_free_annual) {
    if (daily_returns.size() < 2) throw MetricError("sharpe needs >= 2 returns");
    const double sd = sample_std(daily_returns);
    if (sd == 0) throw MetricError("sharpe: zero variance in returns");
    const double rf_daily = risk_free_annual / kTradingDaysPerYear;
    return (mean_of(daily_returns) - rf_daily) / sd * std::sqrt(kTradingDaysPerYear);
}

double sortino(std::span<const double> daily_returns, double risk_free_annual) {
    if (daily_returns.size() < 2) throw MetricError("sortino needs >= 2 returns");
    const double rf_daily = risk_free_annual / kTradingDaysPerYear;
    double mean_excess = 0;
    double downside_sq = 0;
    std::size_t negatives = 0;
    for (double r : daily_returns) {
        const double ex = r - rf_daily;
        mean_excess += ex;
        if (ex < 0) {
            downside_sq += ex * ex;
            ++negatives;
        }
    }
    mean_excess /= static_cast<double>(daily_returns.size());
    if (negatives == 0) throw MetricError("sortino: no negative excess returns");
    // Root-mean-square over all samples, clamping positives to zero.
    const double downside = std::sqrt(downside_sq / static_cast<double>(daily_returns.size()));
    return mean_excess / downside * std::sqrt(kTradingDaysPerYear);
}

double max_drawdown(std::span<const double> equity) {
    double peak = equity.empty() ? 0.0 : equity.front();
    double mdd = 0;
    for (double v : equity) {
        peak = std::max(peak, v);
        if (peak > 0) mdd = std::max(mdd, (peak - v) / peak);
    }
    return mdd;
}

double calmar(double arr, double mdd) {
    if (mdd == 0) throw MetricError("calmar: max drawdown is zero");
    return arr / mdd;
}

double volatility(std::span<const double> daily_returns) {
    if (daily_returns.size() < 2) throw MetricError("volatility needs >= 2 returns");
    return sample_std(daily_returns);
}

double entropy(const WeightHistory& weights) {
    double acc = 0;
    std::size_t counted = 0;
    for (const auto& row : weights.weights) {
        double total = 0;
        for (double w : row) {
            if (w < 0) throw MetricError("entropy: negative weight");
            total += w;
        }
        if (total <= 0) continue; // no holdings that day
        double h = 0;
        for (double w : row) {
            const double p = w / total;
            if (p > 0) h -= p * std::log(p);
        }
        acc += h;
        ++counted;
    }
    return counted ? acc / static_cast<double>(counted) : 0.0;
}

namespace {

double enb_for_cycle(const std::vector<std::vector<double>>& weight_rows,
                     const std::vector<std::vector<double>>& return_rows, std::size_t n_assets) {
    // Average weights over the cycle, renormalized ex-cash.
    std::vector<double> avg(n_assets, 0.0);
    for (const auto& row : weight_rows) {
        for (std::size_t i = 0; i < n_assets; ++i) avg[i] += row[i];
    }
    double total = 0;
    for (double v : avg) total += v;
    if (total <= 0) return 1.0; // nothing held: one trivial bet
    for (double& v : avg) v /= total;

    if (n_assets == 1) return 1.0;

    // Sample covariance of asset returns within the cycle.
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(n_assets, n_assets);
    if (return_rows.size() >= 2) {
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(n_assets);
        for (const auto& row : return_rows) {
            for (std::size_t i = 0; i < n_assets; ++i) mean(i) += row[i];
        }
        mean /= static_cast<double>(return_rows.size());
        for (const auto& row : return_rows) {
            Eigen::VectorXd d(n_assets);
            for (std::size_t i = 0; i < n_assets; ++i) d(i) = row[i] - mean(i);
            cov += d * d.transpose();
        }
        cov /= static_cast<double>(return_rows.size() - 1);
    }

    Eigen::VectorXd w(n_assets);
    for (std::size_t i = 0; i < n_assets; ++i) w(i) = avg[i];

    bool diagonal = true;
    for (std::size_t i = 0; i < n_assets && diagonal; ++i) {
        for (std::size_t j = 0; j < n_assets; ++j) {
            if (i != j && cov(i, j) != 0.0) {
                diagonal = false;
                break;
            }
        }
    }

    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXd basis;
    if (diagonal) {
        // Degenerate eigenbasis of a diagonal matrix is the identity; skip
        // the solver so equal variances keep the natural axes.
        eigenvalues = cov.diagonal();
        basis = Eigen::MatrixXd::Identity(n_assets, n_assets);
    } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
        eigenvalues = es.eigenvalues();
        basis = es.eigenvectors();
    }

    // Variance contribution of each principal portfolio, floored so a
    // singular covariance stays computable.
    Eigen::VectorXd y = basis.transpose() * w;
    std::vector<double> contrib(n_assets);
    double sum = 0;
    for (std::size_t k = 0; k < n_assets; ++k) {
        const double lambda = std::max(eigenvalues(k), 1e-12);
        contrib[k] = y(k) * y(k) * lambda;
        sum += contrib[k];
    }
    if (sum <= 0) return 1.0;
    double h = 0;
    for (double c : contrib) {
        const double p = c / sum;
        if (p > 0) h -= p * std::log(p);
    }
    return std::exp(h);
}

} // namespace

double effective_bets(const WeightHistory& weights, const ReturnHistory& returns,
                      const std::vector<std::size_t>& cycle_starts) {
    const std::size_t n_assets = weights.symbols.size();
    if (n_assets == 0 || weights.weights.empty()) return 1.0;
    const std::size_t n_days = weights.weights.size();

    std::vector<std::size_t> starts = cycle_starts;
    if (starts.empty() || starts.front() != 0) starts.insert(starts.begin(), 0);
    starts.push_back(n_days);

    double acc = 0;
    std::size_t cycles = 0;
    for (std::size_t c = 0; c + 1 < starts.size(); ++c) {
        const std::size_t lo = starts[c];
        const std::size_t hi = std::min(starts[c + 1], n_days);
        if (lo >= hi) continue;
        std::vector<std::vector<double>> w_rows(weights.weights.begin() + lo,
                                                weights.weights.begin() + hi);
        std::vector<std::vector<double>> r_rows;
        if (!returns.returns.empty()) {
            const std::size_t rhi = std::min(hi, returns.returns.size());
            if (lo < rhi) {
                r_rows.assign(returns.returns.begin() + lo, returns.returns.begin() + rhi);
            }
        }
        acc += enb_for_cycle(w_rows, r_rows, n_assets);
        ++cycles;
    }
    return cycles ? acc / static_cast<double>(cycles) : 1.0;
}

MetricsReport compute_metrics(std::span<const Date> dates, std::span<const double> equity,
                              const WeightHistory& weights, const ReturnHistory& returns,
                              const std::vector<std::size_t>& cycle_starts,
                              double risk_free_annual) {
    if (dates.size() != equity.size()) {
        throw MetricError("compute_metrics: dates/equity length mismatch");
    }
    MetricsReport r;
    r.n_days = static_cast<int>(equity.size());
    r.tr = total_return(equity);
    r.span_years =
        static_cast<double>(days_between(dates.front(), dates.back())) / 365.0;
    if (r.span_years <= 0) r.span_years = static_cast<double>(equity.size()) / 365.0;
    r.arr = annual_return_rate(r.tr, r.span_years);

    std::vector<double> daily;
    daily.reserve(equity.size() - 1);
    for (std::size_t i = 1; i < equity.size(); ++i) {
        daily.push_back(equity[i] / equity[i - 1] - 1.0);
    }
    r.mdd = max_drawdown(equity);
    try {
        r.sr = sharpe(daily, risk_free_annual);
    } catch (const MetricError&) {
        r.sr = 0;
    }
    try {
        r.sor = sortino(daily, risk_free_annual);
    } catch (const MetricError&) {
        r.sor = 0;
    }
    try {
        r.vol = volatility(daily);
    } catch (const MetricError&) {
        r.vol = 0;
    }
    r.cr = r.mdd > 0 ? calmar(r.arr, r.mdd) : 0.0;
    r.ent = entropy(weights);
    r.enb = effective_bets(weights, returns, cycle_starts);
    return r;
}

nlohmann::json metrics_to_json(const MetricsReport& m) {
    return nlohmann::json{
        {"tr", m.tr},
        {"arr", m.arr},
        {"sr", m.sr},
        {"cr", m.cr},
        {"sor", m.sor},
        {"mdd", m.mdd},
        {"vol", m.vol},
        {"ent", m.ent},
        {"enb", m.enb},
        {"span_years", m.span_years},
        {"n_days", m.n_days},
        {"conventions",
         {{"trading_days_per_year", 252},
          {"arr_span", "calendar_days_over_365"},
          {"vol", "daily_sample_std"},
          {"cr", "arr_over_mdd"},
          {"ent", "per_asset_value_weights_ex_cash"},
          {"enb", "principal_portfolio_variance_contributions_per_cycle"}}},
    };
}

} // namespace hedgeflow
