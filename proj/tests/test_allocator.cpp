#include "hedgeflow/allocator.hpp"

#include "hedgeflow/errors.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace hedgeflow;
using namespace hedgeflow::testing;

namespace {

// Independent exhaustive search over the 0.01-resolution 3-simplex.
double grid_best_objective(const AllocationProblem& p) {
    double best = -1e300;
    for (int i = 0; i <= 100; ++i) {
        for (int j = 0; j + i <= 100; ++j) {
            const std::vector<double> w = {i / 100.0, j / 100.0, (100 - i - j) / 100.0};
            best = std::max(best, allocation_objective(p, w));
        }
    }
    return best;
}

AllocationProblem random_problem(std::mt19937& rng, int days = 252) {
    std::normal_distribution<double> z(0, 1);
    std::uniform_real_distribution<double> u(0, 1);
    AllocationProblem p;
    p.rho = {0.02 * z(rng), 0.02 * z(rng), 0.02 * z(rng)};
    // random PSD covariance via A A^T
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
    p.history.assign(days, std::vector<double>(3));
    for (auto& row : p.history) {
        for (double& v : row) v = 0.015 * z(rng);
    }
    p.lambda1 = 1.0;
    p.lambda2 = 1.0;
    p.alpha = 0.95;
    return p;
}

} // namespace

TEST_CASE("expected_total_return: unit vector, mean, and loop oracle") {
    const std::vector<double> rho = {0.1, 0.2, 0.3};
    CHECK(expected_total_return(std::vector<double>{1, 0, 0}, rho) == doctest::Approx(0.1));
    const std::vector<double> uniform = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    CHECK(expected_total_return(uniform, rho) == doctest::Approx(0.2));

    std::mt19937 rng(4);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> omega = {u(rng), u(rng), u(rng)};
    std::vector<double> r = {u(rng), u(rng), u(rng)};
    double oracle = 0;
    for (int i = 0; i < 3; ++i) oracle += omega[i] * r[i];
    CHECK(expected_total_return(omega, r) == doctest::Approx(oracle).epsilon(1e-12));

    CHECK_THROWS_AS(expected_total_return(std::vector<double>{1.0}, rho), ValidationError);
}

TEST_CASE("portfolio_risk: diagonal case, zero matrix, and double-loop oracle") {
    const std::vector<std::vector<double>> diag = {{0.04, 0}, {0, 0.01}};
    CHECK(portfolio_risk(std::vector<double>{1, 0}, diag) == doctest::Approx(0.2));
    const std::vector<std::vector<double>> zero = {{0, 0}, {0, 0}};
    CHECK(portfolio_risk(std::vector<double>{0.5, 0.5}, zero) == 0.0);

    std::mt19937 rng(11);
    const auto p = random_problem(rng);
    const std::vector<double> omega = {0.2, 0.5, 0.3};
    double q = 0;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) q += omega[i] * omega[j] * p.cov[i][j];
    }
    CHECK(portfolio_risk(omega, p.cov) == doctest::Approx(std::sqrt(q)).epsilon(1e-12));
}

TEST_CASE("var_historical: order-statistic oracle") {
    std::vector<double> returns;
    for (int loss = 1; loss <= 100; ++loss) returns.push_back(-loss / 100.0);
    std::mt19937 rng(2);
    std::shuffle(returns.begin(), returns.end(), rng);
    CHECK(var_historical(returns, 0.95) == doctest::Approx(0.95).epsilon(1e-12));

    SUBCASE("degenerate distribution") {
        const std::vector<double> constant(30, -0.01);
        CHECK(var_historical(constant, 0.95) == doctest::Approx(0.01));
    }
    SUBCASE("all positive returns give a negative loss quantile") {
        std::vector<double> gains;
        for (int i = 1; i <= 40; ++i) gains.push_back(i / 1000.0);
        CHECK(var_historical(gains, 0.95) <= 0.0);
    }
    SUBCASE("too few samples") {
        const std::vector<double> few(10, 0.0);
        CHECK_THROWS_AS(var_historical(few, 0.95), InsufficientHistoryError);
    }
}

TEST_CASE("cvar_historical: tail-mean oracle and CVaR >= VaR") {
    std::vector<double> returns;
    for (int loss = 1; loss <= 100; ++loss) returns.push_back(-loss / 100.0);
    CHECK(cvar_historical(returns, 0.95) == doctest::Approx(0.98).epsilon(1e-12));

    const std::vector<double> constant(25, -0.01);
    CHECK(cvar_historical(constant, 0.95) == doctest::Approx(0.01));

    std::mt19937 rng(8);
    std::normal_distribution<double> z(0, 0.02);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> sample(50);
        for (double& v : sample) v = z(rng);

        // sort-and-average oracle
        std::vector<double> losses(sample.size());
        std::transform(sample.begin(), sample.end(), losses.begin(),
                       [](double r) { return -r; });
        std::sort(losses.begin(), losses.end());
        const std::size_t k = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::floor(0.05 * losses.size())));
        double tail = 0;
        for (std::size_t i = losses.size() - k; i < losses.size(); ++i) tail += losses[i];
        tail /= static_cast<double>(k);

        CHECK(cvar_historical(sample, 0.95) == tail); // exact, same arithmetic path not shared
        CHECK(cvar_historical(sample, 0.95) >= var_historical(sample, 0.95));
    }
}

TEST_CASE("optimize: linear objective picks the best vertex") {
    AllocationProblem p;
    p.rho = {0.10, 0.05, 0.02};
    p.cov.assign(3, std::vector<double>(3, 0.0));
    p.lambda1 = 0;
    p.lambda2 = 0;
    const Weights w = optimize(p);
    CHECK(w.omega[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(w.omega[1] == doctest::Approx(0.0));
    CHECK(w.omega[2] == doctest::Approx(0.0));
}

TEST_CASE("optimize: symmetric problem returns uniform weights") {
    std::mt19937 rng(21);
    std::normal_distribution<double> z(0, 0.01);
    AllocationProblem p;
    p.rho = {0.05, 0.05, 0.05};
    p.cov = {{0.0004, 0, 0}, {0, 0.0004, 0}, {0, 0, 0.0004}};
    // i.i.d. symmetric history across assets
    p.history.assign(252, std::vector<double>(3));
    for (auto& row : p.history) {
        const double v = z(rng);
        row = {v, v, v};
    }
    const Weights w = optimize(p);
    for (double x : w.omega) CHECK(x == doctest::Approx(1.0 / 3).epsilon(1e-3));
}

TEST_CASE("optimize matches the exhaustive grid within 1e-6") {
    std::mt19937 rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        const auto p = random_problem(rng);
        OptimizeDiagnostics diag;
        const Weights w = optimize(p, &diag);
        validate_weights(w);
        CHECK(diag.grid_certified);
        CHECK(diag.objective >= grid_best_objective(p) - 1e-6);
    }
}

TEST_CASE("optimize output always lies on the simplex") {
    std::mt19937 rng(41);
    for (int trial = 0; trial < 25; ++trial) {
        const auto p = random_problem(rng, 40);
        const Weights w = optimize(p);
        double sum = 0;
        for (double x : w.omega) {
            CHECK(x >= 0.0);
            sum += x;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("increasing lambda1 never increases portfolio risk at the optimum") {
    std::mt19937 rng(51);
    for (int trial = 0; trial < 20; ++trial) {
        auto p = random_problem(rng, 60);
        p.lambda2 = 0;
        p.lambda1 = 0.2;
        const Weights w_low = optimize(p);
        p.lambda1 = 3.0;
        const Weights w_high = optimize(p);
        const double risk_low = portfolio_risk(w_low.omega, p.cov);
        const double risk_high = portfolio_risk(w_high.omega, p.cov);
        CHECK(risk_high <= risk_low + 1e-9); // ties allowed
    }
}

TEST_CASE("vertex selection ignores uniform rescaling of cov and history") {
    std::mt19937 rng(61);
    auto p = random_problem(rng, 40);
    p.lambda1 = 0;
    p.lambda2 = 0;
    p.rho = {0.01, 0.07, 0.03};
    const Weights base = optimize(p);
    const double c = 5.0;
    for (auto& row : p.cov) {
        for (double& v : row) v *= c * c;
    }
    for (auto& row : p.history) {
        for (double& v : row) v *= c;
    }
    const Weights scaled = optimize(p);
    for (int i = 0; i < 3; ++i) {
        CHECK(scaled.omega[i] == doctest::Approx(base.omega[i]).epsilon(1e-9));
    }
}

TEST_CASE("degenerate symmetric input returns uniform weights") {
    AllocationProblem p;
    p.rho = {0.01, 0.01, 0.01};
    p.cov.assign(3, std::vector<double>(3, 0.0));
    p.lambda1 = 1.0;
    p.lambda2 = 0.0;
    const Weights w = optimize(p);
    for (double x : w.omega) CHECK(x == doctest::Approx(1.0 / 3).epsilon(1e-9));
}

TEST_CASE("optimize validates the problem") {
    AllocationProblem p;
    p.rho = {0.1, 0.2};
    p.cov = {{0.01, 0.5}, {-0.5, 0.01}}; // asymmetric
    CHECK_THROWS_AS(optimize(p), ValidationError);

    AllocationProblem psd;
    psd.rho = {0.1, 0.2};
    psd.cov = {{0.01, 0.09}, {0.09, 0.01}}; // negative eigenvalue
    psd.lambda2 = 0;
    CHECK_THROWS_AS(optimize(psd), ValidationError);
}

TEST_CASE("estimate_inputs: correlated pairs, constant series, and windowing") {
    SUBCASE("perfectly correlated series have off-diagonal = product of stds") {
        std::mt19937 rng(71);
        std::normal_distribution<double> z(0, 0.02);
        ReturnSeries a, b;
        a.asset = {"A", AssetClass::Crypto};
        b.asset = {"B", AssetClass::Equity};
        for (int i = 0; i < 60; ++i) {
            const double v = z(rng);
            const Date d = Date(2021, 1, 1).plus_days(i);
            a.dates.push_back(d);
            a.returns.push_back(v);
            b.dates.push_back(d);
            b.returns.push_back(2.0 * v); // correlation exactly 1
        }
        const auto inputs = estimate_inputs({a, b}, 60, 30);
        const double sd_a = std::sqrt(inputs.cov[0][0]);
        const double sd_b = std::sqrt(inputs.cov[1][1]);
        CHECK(inputs.cov[0][1] == doctest::Approx(sd_a * sd_b).epsilon(1e-10));
    }
    SUBCASE("constant series produce a zero covariance row") {
        ReturnSeries a, b;
        a.asset = {"A", AssetClass::Crypto};
        b.asset = {"B", AssetClass::Equity};
        std::mt19937 rng(81);
        std::normal_distribution<double> z(0, 0.01);
        for (int i = 0; i < 40; ++i) {
            const Date d = Date(2021, 1, 1).plus_days(i);
            a.dates.push_back(d);
            a.returns.push_back(0.001); // constant
            b.dates.push_back(d);
            b.returns.push_back(z(rng));
        }
        const auto inputs = estimate_inputs({a, b}, 40, 30);
        CHECK(inputs.cov[0][0] == doctest::Approx(0.0));
        CHECK(inputs.cov[0][1] == doctest::Approx(0.0));
    }
    SUBCASE("window keeps exactly the trailing rows") {
        ReturnSeries a;
        a.asset = {"A", AssetClass::Crypto};
        for (int i = 0; i < 300; ++i) {
            a.dates.push_back(Date(2020, 1, 1).plus_days(i));
            a.returns.push_back(i < 240 ? 1.0 : 0.001); // old rows are loud
        }
        const auto inputs = estimate_inputs({a}, 60, 30);
        CHECK(inputs.history.size() == 60);
        for (const auto& row : inputs.history) CHECK(row[0] == doctest::Approx(0.001));
        CHECK(inputs.rho[0] == doctest::Approx(0.001 * 30).epsilon(1e-12));
    }
    SUBCASE("insufficient joint history errors") {
        ReturnSeries a;
        a.asset = {"A", AssetClass::Crypto};
        for (int i = 0; i < 10; ++i) {
            a.dates.push_back(Date(2021, 1, 1).plus_days(i));
            a.returns.push_back(0.0);
        }
        CHECK_THROWS_AS(estimate_inputs({a}, 60, 30), InsufficientHistoryError);
    }
}
