#include "hedgeflow/allocator.hpp"

#include "hedgeflow/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>

namespace hedgeflow {

void validate_weights(const Weights& w) {
    double sum = 0;
    for (double x : w.omega) {
        if (x < 0) throw ValidationError("weights must be non-negative");
        sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ValidationError("weights must sum to 1 (got " + std::to_string(sum) + ")");
    }
}

void validate_problem(const AllocationProblem& p) {
    const std::size_t n = p.rho.size();
    if (n == 0) throw ValidationError("allocation problem: empty rho");
    if (p.cov.size() != n) throw ValidationError("allocation problem: cov dimension mismatch");
    for (const auto& row : p.cov) {
        if (row.size() != n) throw ValidationError("allocation problem: cov is not square");
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (std::abs(p.cov[i][j] - p.cov[j][i]) > 1e-8) {
                throw ValidationError("allocation problem: cov not symmetric");
            }
        }
    }
    Eigen::MatrixXd m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) m(i, j) = 0.5 * (p.cov[i][j] + p.cov[j][i]);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-8) {
        throw ValidationError("allocation problem: cov not positive semidefinite");
    }
    for (const auto& row : p.history) {
        if (row.size() != n) {
            throw ValidationError("allocation problem: history column count mismatch");
        }
    }
    if (p.lambda1 < 0 || p.lambda2 < 0) {
        throw ValidationError("allocation problem: lambdas must be non-negative");
    }
    if (!(p.alpha > 0 && p.alpha < 1)) {
        throw ValidationError("allocation problem: alpha must lie in (0, 1)");
    }
    if (p.lambda2 > 0 && p.history.size() < 20) {
        throw InsufficientHistoryError(
            "allocation problem: CVaR term needs >= 20 history rows, got " +
            std::to_string(p.history.size()));
    }
}

double expected_total_return(std::span<const double> omega, std::span<const double> rho) {
    if (omega.size() != rho.size()) {
        throw ValidationError("expected_total_return: dimension mismatch");
    }
    double s = 0;
    for (std::size_t i = 0; i < omega.size(); ++i) s += omega[i] * rho[i];
    return s;
}

double portfolio_risk(std::span<const double> omega,
                      const std::vector<std::vector<double>>& cov) {
    if (cov.size() != omega.size()) throw ValidationError("portfolio_risk: dimension mismatch");
    double q = 0;
    for (std::size_t i = 0; i < omega.size(); ++i) {
        if (cov[i].size() != omega.size()) {
            throw ValidationError("portfolio_risk: cov is not square");
        }
        for (std::size_t j = 0; j < omega.size(); ++j) q += omega[i] * omega[j] * cov[i][j];
    }
    if (q < -1e-10) throw ValidationError("portfolio_risk: negative quadratic form (not PSD)");
    return std::sqrt(std::max(q, 0.0));
}

namespace {

std::vector<double> sorted_losses(std::span<const double> returns) {
    std::vector<double> losses(returns.begin(), returns.end());
    for (double& x : losses) x = -x;
    std::sort(losses.begin(), losses.end());
    return losses;
}

void require_samples(std::span<const double> returns, const char* op) {
    if (returns.size() < 20) {
        throw InsufficientHistoryError(std::string(op) + " needs >= 20 samples, got " +
                                       std::to_string(returns.size()));
    }
}

std::size_t tail_count(std::size_t n, double alpha) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor((1.0 - alpha) * n)));
}

} // namespace

double var_historical(std::span<const double> returns, double alpha) {
    require_samples(returns, "var_historical");
    const auto losses = sorted_losses(returns);
    const std::size_t n = losses.size();
    std::size_t idx = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(n)));
    idx = std::clamp<std::size_t>(idx, 1, n);
    return losses[idx - 1];
}

double cvar_historical(std::span<const double> returns, double alpha) {
    require_samples(returns, "cvar_historical");
    const auto losses = sorted_losses(returns);
    const std::size_t k = tail_count(losses.size(), alpha);
    double s = 0;
    for (std::size_t i = losses.size() - k; i < losses.size(); ++i) s += losses[i];
    return s / static_cast<double>(k);
}

double allocation_objective(const AllocationProblem& p, std::span<const double> omega) {
    double obj = expected_total_return(omega, p.rho);
    if (p.lambda1 > 0) obj -= p.lambda1 * portfolio_risk(omega, p.cov);
    if (p.lambda2 > 0) {
        std::vector<double> port(p.history.size());
        for (std::size_t t = 0; t < p.history.size(); ++t) {
            double r = 0;
            for (std::size_t i = 0; i < omega.size(); ++i) r += p.history[t][i] * omega[i];
            port[t] = r;
        }
        obj -= p.lambda2 * cvar_historical(port, p.alpha);
    }
    return obj;
}

std::vector<double> project_to_simplex(std::vector<double> v) {
    // Sort-based Euclidean projection (Held/Duchi).
    std::vector<double> u = v;
    std::sort(u.begin(), u.end(), std::greater<>());
    double css = 0;
    double theta = 0;
    std::size_t rho_idx = 0;
    double running = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        running += u[i];
        const double t = (running - 1.0) / static_cast<double>(i + 1);
        if (u[i] - t > 0) {
            rho_idx = i;
            css = running;
        }
    }
    theta = (css - 1.0) / static_cast<double>(rho_idx + 1);
    for (double& x : v) x = std::max(x - theta, 0.0);
    // Exact renormalization kills the accumulated float drift.
    const double s = std::accumulate(v.begin(), v.end(), 0.0);
    if (s > 0) {
        for (double& x : v) x /= s;
    }
    return v;
}

namespace {

// Subgradient of the objective at omega. CVaR ties are handled by averaging
// the tied tail rows, which removes oscillation at the kinks.
std::vector<double> subgradient(const AllocationProblem& p, const std::vector<double>& omega) {
    const std::size_t n = omega.size();
    std::vector<double> g = p.rho;
    if (p.lambda1 > 0) {
        const double risk = portfolio_risk(omega, p.cov);
        if (risk > 1e-12) {
            for (std::size_t i = 0; i < n; ++i) {
                double row = 0;
                for (std::size_t j = 0; j < n; ++j) row += p.cov[i][j] * omega[j];
                g[i] -= p.lambda1 * row / risk;
            }
        }
    }
    if (p.lambda2 > 0 && !p.history.empty()) {
        const std::size_t rows = p.history.size();
        std::vector<std::pair<double, std::size_t>> losses(rows);
        for (std::size_t t = 0; t < rows; ++t) {
            double r = 0;
            for (std::size_t i = 0; i < n; ++i) r += p.history[t][i] * omega[i];
            losses[t] = {-r, t};
        }
        std::sort(losses.begin(), losses.end());
        const std::size_t k = tail_count(rows, p.alpha);
        const double cutoff = losses[rows - k].first;
        std::vector<std::size_t> tail;
        for (std::size_t t = 0; t < rows; ++t) {
            if (losses[t].first >= cutoff - 1e-15) tail.push_back(losses[t].second);
        }
        for (std::size_t i = 0; i < n; ++i) {
            double d = 0;
            for (std::size_t t : tail) d += -p.history[t][i];
            g[i] -= p.lambda2 * d / static_cast<double>(tail.size());
        }
    }
    return g;
}

// Recursive enumeration of the resolution-0.01 simplex grid.
void for_each_grid_point(std::size_t dim, int units,
                         const std::function<void(const std::vector<double>&)>& fn) {
    std::vector<int> counts(dim, 0);
    std::vector<double> w(dim, 0.0);
    std::function<void(std::size_t, int)> rec = [&](std::size_t i, int left) {
        if (i + 1 == dim) {
            counts[i] = left;
            for (std::size_t j = 0; j < dim; ++j) w[j] = counts[j] / 100.0;
            fn(w);
            return;
        }
        for (int c = 0; c <= left; ++c) {
            counts[i] = c;
            rec(i + 1, left - c);
        }
    };
    rec(0, units);
}

} // namespace

Weights optimize(const AllocationProblem& p, OptimizeDiagnostics* diag) {
    validate_problem(p);
    const std::size_t n = p.rho.size();

    std::vector<double> best(n, 1.0 / static_cast<double>(n));
    double best_obj = allocation_objective(p, best);
    std::vector<double> trace{best_obj};

    // Projected subgradient ascent from the uniform start.
    std::vector<double> x = best;
    double scale = 0;
    for (double r : p.rho) scale = std::max(scale, std::abs(r));
    scale = std::max(scale, 1e-3);
    const int iters = 2000;
    for (int t = 1; t <= iters; ++t) {
        const auto g = subgradient(p, x);
        double gnorm = 0;
        for (double v : g) gnorm += v * v;
        gnorm = std::sqrt(gnorm);
        if (gnorm < 1e-15) break;
        const double step = scale / (gnorm * std::sqrt(static_cast<double>(t)));
        for (std::size_t i = 0; i < n; ++i) x[i] += step * g[i];
        x = project_to_simplex(std::move(x));
        const double obj = allocation_objective(p, x);
        if (!std::isfinite(obj)) {
            std::string msg = "optimizer diverged at iteration " + std::to_string(t) +
                              "; last iterate:";
            for (double v : x) msg += " " + std::to_string(v);
            msg += "; objective trace:";
            for (double v : trace) msg += " " + std::to_string(v);
            throw Error(msg);
        }
        if (obj > best_obj) {
            best_obj = obj;
            best = x;
            trace.push_back(obj);
        }
    }

    bool certified = false;
    if (n <= 4) {
        // Exhaustive 0.01-resolution grid pass. The objective is concave, so
        // this both certifies and (if needed) replaces the ascent result.
        for_each_grid_point(n, 100, [&](const std::vector<double>& w) {
            const double obj = allocation_objective(p, w);
            if (obj > best_obj) {
                best_obj = obj;
                best = w;
            }
        });
        certified = true;
        trace.push_back(best_obj);
    }

    Weights w{std::move(best)};
    // Defensive exact renormalization before the invariant check.
    double sum = std::accumulate(w.omega.begin(), w.omega.end(), 0.0);
    for (double& v : w.omega) v /= sum;
    validate_weights(w);
    if (diag) {
        diag->objective = best_obj;
        diag->trace = std::move(trace);
        diag->grid_certified = certified;
    }
    return w;
}

AllocatorInputs estimate_inputs(const std::vector<ReturnSeries>& series, int window_days,
                                int cycle_days) {
    if (series.empty()) throw ValidationError("estimate_inputs: no return series");
    // Join on dates present in every series.
    std::map<Date, std::vector<double>> joint;
    for (std::size_t s = 0; s < series.size(); ++s) {
        for (std::size_t i = 0; i < series[s].dates.size(); ++i) {
            auto& row = joint[series[s].dates[i]];
            row.resize(series.size(), std::numeric_limits<double>::quiet_NaN());
            row[s] = series[s].returns[i];
        }
    }
    std::vector<std::vector<double>> rows;
    for (const auto& [date, row] : joint) {
        bool complete = true;
        for (double v : row) {
            if (std::isnan(v)) {
                complete = false;
                break;
            }
        }
        if (complete) rows.push_back(row);
    }
    if (rows.size() < 20) {
        throw InsufficientHistoryError("estimate_inputs: need >= 20 days of joint history, got " +
                                       std::to_string(rows.size()));
    }
    if (rows.size() > static_cast<std::size_t>(window_days)) {
        rows.erase(rows.begin(), rows.end() - window_days);
    }

    const std::size_t n = series.size();
    const std::size_t t = rows.size();
    std::vector<double> mean(n, 0.0);
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < n; ++i) mean[i] += row[i];
    }
    for (double& m : mean) m /= static_cast<double>(t);

    std::vector<std::vector<double>> cov(n, std::vector<double>(n, 0.0));
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                cov[i][j] += (row[i] - mean[i]) * (row[j] - mean[j]);
            }
        }
    }
    for (auto& r : cov) {
        for (double& v : r) v /= static_cast<double>(t - 1);
    }

    AllocatorInputs out;
    out.rho.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.rho[i] = mean[i] * static_cast<double>(cycle_days);
    out.cov = std::move(cov);
    out.history = std::move(rows);
    return out;
}

} // namespace hedgeflow
