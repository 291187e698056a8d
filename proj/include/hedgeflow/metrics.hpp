#pragma once

#include "hedgeflow/dates.hpp"

#include <nlohmann/json.hpp>

#include <span>
#include <string>
#include <vector>

namespace hedgeflow {

/// The nine evaluation metrics over an equity curve and weight history.
/// Conventions: 252 trading days/year for SR/SoR annualization, Vol
/// reported daily, ARR span in calendar days / 365, CR = ARR / MDD.
struct MetricsReport {
    double tr = 0;
    double arr = 0;
    double sr = 0;
    double cr = 0;
    double sor = 0;
    double mdd = 0;
    double vol = 0;
    double ent = 0;
    double enb = 0;
    double span_years = 0;
    int n_days = 0;
};

/// Per-day portfolio value weights over individual assets (cash excluded).
struct WeightHistory {
    std::vector<std::string> symbols;
    std::vector<Date> dates;
    std::vector<std::vector<double>> weights; // rows parallel to dates
};

/// Joint daily asset returns aligned with the weight history dates.
struct ReturnHistory {
    std::vector<std::string> symbols;
    std::vector<Date> dates;
    std::vector<std::vector<double>> returns;
};

double total_return(std::span<const double> equity);
double annual_return_rate(double tr, double span_years);
double sharpe(std::span<const double> daily_returns, double risk_free_annual = 0.0);
double sortino(std::span<const double> daily_returns, double risk_free_annual = 0.0);
double max_drawdown(std::span<const double> equity);
double calmar(double arr, double mdd);
double volatility(std::span<const double> daily_returns);

/// Time-average of -sum_i w_i ln w_i over per-asset value weights. Weights
/// are renormalized ex-cash by the caller; rows summing to zero (no
/// holdings) are skipped.
double entropy(const WeightHistory& weights);

/// Effective number of bets: exp of the entropy of the normalized variance
/// contributions of principal portfolios (eigenvectors of the asset
/// covariance) under average weights. Computed per cycle and averaged;
/// `cycle_starts` are indices into the shared date axis (empty = one cycle).
double effective_bets(const WeightHistory& weights, const ReturnHistory& returns,
                      const std::vector<std::size_t>& cycle_starts = {});

MetricsReport compute_metrics(std::span<const Date> dates, std::span<const double> equity,
                              const WeightHistory& weights, const ReturnHistory& returns,
                              const std::vector<std::size_t>& cycle_starts = {},
                              double risk_free_annual = 0.0);

nlohmann::json metrics_to_json(const MetricsReport& report);

} // namespace hedgeflow
