#include <doctest.h>

#include <cmath>

#include "riskctx/portfolio.hpp"
#include "riskctx/stats.hpp"

using namespace riskctx;
using portfolio::PortfolioGenConfig;

TEST_CASE("generator mean structure") {
    PortfolioGenConfig cfg;
    cfg.seed = 11;
    const auto data = portfolio::gen_portfolio(cfg, 10, 10);

    // p = 1 at x = 0: mean return 0.1 for every asset.
    const Eigen::VectorXd m = data.model.mean_return(Eigen::VectorXd::Zero(5), 1);
    CHECK(m.minCoeff() == doctest::Approx(0.1));
    CHECK(m.maxCoeff() == doctest::Approx(0.1));

    // noise-free check: with L = 0 and no idiosyncratic term, y matches the
    // mean formula exactly.
    portfolio::TrueModel clean = data.model;
    clean.L.setZero();
    Eigen::VectorXd x(5);
    x << 0.3, -1.0, 0.4, 2.0, -0.2;
    const Eigen::VectorXd y = clean.mean_return(x, 1) + clean.L * Eigen::VectorXd::Zero(4);
    CHECK((y - clean.mean_return(x, 1)).norm() == doctest::Approx(0.0));

    // B entries are 0/1; L entries bounded by 0.0025 tau.
    CHECK(data.model.B.minCoeff() >= 0.0);
    CHECK(data.model.B.maxCoeff() <= 1.0);
    CHECK(data.model.L.cwiseAbs().maxCoeff() <= 0.0025 * cfg.tau);
}

TEST_CASE("generator covariance matches LL' + (0.01 tau)^2 I") {
    PortfolioGenConfig cfg;
    cfg.seed = 21;
    cfg.tau = 1.5;
    const int n = 100000;
    const auto data = portfolio::gen_portfolio(cfg, n, 1);

    // Empirical covariance of y - mean(x) over the training draws.
    Eigen::MatrixXd resid(n, cfg.d_y);
    for (int i = 0; i < n; ++i)
        resid.row(i) = (data.train.outcomes[static_cast<std::size_t>(i)] -
                        data.model.mean_return(data.train.covariates[static_cast<std::size_t>(i)],
                                               cfg.p_power))
                           .transpose();
    const Eigen::MatrixXd cov = resid.transpose() * resid / static_cast<double>(n);
    const Eigen::MatrixXd target =
        data.model.L * data.model.L.transpose() +
        std::pow(0.01 * cfg.tau, 2) * Eigen::MatrixXd::Identity(cfg.d_y, cfg.d_y);
    CHECK((cov - target).norm() < 5e-4);  // Frobenius
}

TEST_CASE("neg return cost") {
    const auto cost = portfolio::neg_return_cost(50);
    Eigen::VectorXd z = Eigen::VectorXd::Zero(50);
    Eigen::VectorXd y = Eigen::VectorXd::Constant(50, 0.07);
    Eigen::VectorXd g(50);
    CHECK(cost.eval(z, y, &g) == doctest::Approx(0.0));  // all cash
    z.setConstant(0.02);                                 // fully invested
    CHECK(cost.eval(z, y, &g) == doctest::Approx(-0.07));
    CHECK((g + y).norm() == doctest::Approx(0.0));

    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        z(i) = rng.uniform(0.0, 0.04);
        y(i) = rng.uniform(-0.1, 0.2);
    }
    CHECK(cost.eval(z, y, nullptr) == doctest::Approx(-y.dot(z)).epsilon(1e-12));
    CHECK_THROWS(cost.eval(Eigen::VectorXd::Zero(3), y, nullptr));
}

TEST_CASE("EW weights and metric identities") {
    PortfolioGenConfig cfg;
    cfg.seed = 31;
    const auto data = portfolio::gen_portfolio(cfg, 40, 500);
    portfolio::ModelOptions opt;
    const auto ew = portfolio::solve_model(portfolio::Model::EW, data.train, opt);
    REQUIRE(ew.policy.constant.has_value());
    CHECK(ew.policy.constant->minCoeff() == doctest::Approx(0.02));
    CHECK(ew.policy.constant->maxCoeff() == doctest::Approx(0.02));

    const auto metrics = portfolio::evaluate_metrics(ew.policy, data.test, 1.0 / 3.0);
    CHECK(metrics.tradeoff ==
          metrics.expected_return / 3.0 - metrics.cvar_of_negated_return);  // exact

    // constant-returns test set: E = r, CVaR = -r, regret = 0 for any fully
    // invested policy.
    objectives::EmpiricalSample flat;
    for (int i = 0; i < 10; ++i) {
        flat.covariates.push_back(Eigen::VectorXd::Zero(5));
        flat.outcomes.push_back(Eigen::VectorXd::Constant(50, 0.05));
    }
    const auto m2 = portfolio::evaluate_metrics(ew.policy, flat, 1.0);
    CHECK(m2.expected_return == doctest::Approx(0.05));
    CHECK(m2.cvar_of_negated_return == doctest::Approx(-0.05));
    CHECK(m2.relative_regret == doctest::Approx(0.0));
}

TEST_CASE("three-point hand-computed metrics") {
    // d_y = 2 for hand arithmetic; policy holds asset 1 fully.
    portfolio::DeployablePolicy pol;
    pol.constant = Eigen::VectorXd::Zero(2);
    (*pol.constant)(0) = 1.0;
    objectives::EmpiricalSample test;
    for (double r : {0.10, -0.05, 0.02}) {
        test.covariates.push_back(Eigen::VectorXd::Zero(1));
        Eigen::VectorXd y(2);
        y << r, 0.01;
        test.outcomes.push_back(y);
    }
    const auto m = portfolio::evaluate_metrics(pol, test, 0.5, 0.5);
    CHECK(m.expected_return == doctest::Approx((0.10 - 0.05 + 0.02) / 3.0));
    // negated returns {-0.10, 0.05, -0.02}; CVaR_{0.5} averages the top half
    // mass: t = -0.02, tail excess 0.07 * (1/3) / 0.5
    CHECK(m.cvar_of_negated_return ==
          doctest::Approx(-0.02 + (0.05 + 0.02) / 3.0 * 2.0).epsilon(1e-12));
    // regret: best asset per point is max(r, 0.01)
    const double expected_regret =
        ((0.10 - 0.10) / 0.10 + (0.01 + 0.05) / 0.01 + (0.02 - 0.02) / 0.02) / 3.0;
    CHECK(m.relative_regret == doctest::Approx(expected_regret));
}

TEST_CASE("MC picks a dominant asset") {
    // Asset 0 stochastically dominates: higher return in every scenario,
    // no scenario where it loses.
    objectives::EmpiricalSample train;
    Rng rng(47);
    for (int i = 0; i < 60; ++i) {
        train.covariates.push_back(Eigen::VectorXd::Zero(2));
        Eigen::VectorXd y(3);
        y << 0.10 + 0.01 * rng.uniform01(), 0.02 * rng.uniform01(), -0.01 * rng.uniform01();
        train.outcomes.push_back(y);
    }
    portfolio::ModelOptions opt;
    opt.eta = 1.0;
    opt.max_iters = 6000;
    const auto mc = portfolio::solve_model(portfolio::Model::MC, train, opt);
    REQUIRE(mc.policy.constant.has_value());
    const Eigen::VectorXd z =
        policy::project(policy::CappedSimplex{1.0}, *mc.policy.constant);
    CHECK(z(0) > 0.95);
    CHECK(z(1) < 0.05);
    CHECK(z(2) < 0.01);
}

TEST_CASE("CMEC on context-free data matches MC objective value") {
    // With a constant covariate the RKHS maps collapse to constants.
    PortfolioGenConfig cfg;
    cfg.seed = 53;
    auto data = portfolio::gen_portfolio(cfg, 30, 1);
    for (auto& x : data.train.covariates) x = Eigen::VectorXd::Zero(5);

    portfolio::ModelOptions opt;
    opt.max_iters = 40000;
    opt.lambda0 = 0.0;  // exact comparability of the two objectives
    const auto mc = portfolio::solve_model(portfolio::Model::MC, data.train, opt);
    const auto cmec = portfolio::solve_model(portfolio::Model::CMEC, data.train, opt);
    CHECK(std::abs(cmec.objective_value - mc.objective_value) < 2e-3);
}

TEST_CASE("deployed decisions are always feasible") {
    PortfolioGenConfig cfg;
    cfg.seed = 61;
    const auto data = portfolio::gen_portfolio(cfg, 50, 200);
    portfolio::ModelOptions opt;
    opt.max_iters = 2000;
    for (auto model : {portfolio::Model::EW, portfolio::Model::MC, portfolio::Model::CMEAC,
                       portfolio::Model::CMEC}) {
        const auto trained = portfolio::solve_model(model, data.train, opt);
        for (const auto& x : data.test.covariates) {
            const Eigen::VectorXd z =
                policy::project(policy::CappedSimplex{1.0}, trained.policy.decide(x));
            CHECK(z.minCoeff() >= -1e-12);
            CHECK(z.sum() <= 1.0 + 1e-12);
        }
    }
}
