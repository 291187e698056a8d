#pragma once

#include "hedgeflow/market_data.hpp"

#include <span>
#include <vector>

namespace hedgeflow {

/// Budget weights on the simplex: components >= 0, sum to 1 within 1e-9.
struct Weights {
    std::vector<double> omega;
};

void validate_weights(const Weights& w);

/// Inputs to the budget optimization: expected returns per asset class,
/// covariance of class returns, and joint daily return history (rows =
/// days) for the CVaR term.
struct AllocationProblem {
    std::vector<double> rho;
    std::vector<std::vector<double>> cov;
    std::vector<std::vector<double>> history;
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double alpha = 0.95;
};

void validate_problem(const AllocationProblem& p);

/// Sum_i omega_i * rho_i.
double expected_total_return(std::span<const double> omega, std::span<const double> rho);

/// sqrt(omega' Cov omega). Quadratic form below -1e-10 is a PSD violation.
double portfolio_risk(std::span<const double> omega, const std::vector<std::vector<double>>& cov);

/// Historical-simulation VaR at confidence alpha: the lower empirical
/// alpha-quantile of losses (order statistic ceil(alpha*n), 1-based,
/// ascending). Losses are -returns, so a gain tail yields VaR <= 0.
double var_historical(std::span<const double> returns, double alpha);

/// Mean of the floor((1-alpha)*n) largest losses (at least one sample).
double cvar_historical(std::span<const double> returns, double alpha);

/// The concave objective: etr - lambda1 * risk - lambda2 * cvar(history*omega).
double allocation_objective(const AllocationProblem& p, std::span<const double> omega);

struct OptimizeDiagnostics {
    double objective = 0;
    std::vector<double> trace; // objective per accepted iterate
    bool grid_certified = false;
};

/// Maximizes the objective over the simplex: projected (sub)gradient ascent
/// with diminishing steps, plus an exhaustive 0.01-grid pass when the
/// dimension is <= 4 which certifies the result against the grid oracle.
Weights optimize(const AllocationProblem& p, OptimizeDiagnostics* diag = nullptr);

/// Euclidean projection onto the probability simplex.
std::vector<double> project_to_simplex(std::vector<double> v);

struct AllocatorInputs {
    std::vector<double> rho; // trailing mean daily return x cycle length
    std::vector<std::vector<double>> cov;
    std::vector<std::vector<double>> history;
};

/// Rule-mode estimation over the trailing `window_days` of joint history
/// (dates where every series has a return).
AllocatorInputs estimate_inputs(const std::vector<ReturnSeries>& series, int window_days,
                                int cycle_days);

} // namespace hedgeflow
