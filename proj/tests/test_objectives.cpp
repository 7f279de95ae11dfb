#include <doctest.h>

#include <cmath>

#include "riskctx/newsvendor.hpp"
#include "riskctx/objectives.hpp"
#include "riskctx/solve.hpp"
#include "riskctx/stats.hpp"

using namespace riskctx;
using objectives::EmpiricalSample;

namespace {

Eigen::VectorXd v1(double a) { return Eigen::VectorXd::Constant(1, a); }

EmpiricalSample tiny_sample(Rng& rng, int n) {
    EmpiricalSample s;
    for (int i = 0; i < n; ++i) {
        s.covariates.push_back(v1(rng.uniform(0.5, 3.0)));
        s.outcomes.push_back(v1(rng.uniform(90.0, 130.0)));
    }
    return s;
}

policy::PolicySpec ldr_shape(bool aux) {
    auto p = policy::make_ldr(v1(0.0), Eigen::MatrixXd::Zero(1, 1));
    if (aux) std::get<policy::ParametricPolicy>(p).aux_coef = Eigen::VectorXd::Zero(2);
    return p;
}

// Central finite differences at points where the objective is differentiable
// (one-sided slopes agree); collects `count` of them.
void fd_check(const objectives::AssembledObjective& asm_obj, Rng& rng, int count,
              double scale = 1.0) {
    const int dim = asm_obj.objective.dimension;
    Eigen::VectorXd g(dim), gtmp(dim);
    int done = 0;
    int attempts = 0;
    while (done < count && attempts < count * 20) {
        ++attempts;
        Eigen::VectorXd x(dim);
        for (int i = 0; i < dim; ++i) x(i) = scale * rng.uniform(-1.0, 1.0);
        const double f0 = asm_obj.objective.value_and_subgrad(x, g);
        CHECK(std::isfinite(f0));
        bool differentiable = true;
        Eigen::VectorXd fd(dim);
        for (int i = 0; i < dim && differentiable; ++i) {
            const double h = 1e-6 * std::max(1.0, std::abs(x(i)));
            Eigen::VectorXd xp = x, xm = x;
            xp(i) += h;
            xm(i) -= h;
            const double fp = asm_obj.objective.value_and_subgrad(xp, gtmp);
            const double fm = asm_obj.objective.value_and_subgrad(xm, gtmp);
            fd(i) = (fp - fm) / (2.0 * h);
            const double fwd = (fp - f0) / h;
            const double bwd = (f0 - fm) / h;
            if (std::abs(fwd - bwd) > 1e-3 * std::max(1.0, std::abs(fd(i))))
                differentiable = false;  // straddling a kink; skip the point
        }
        if (!differentiable) continue;
        ++done;
        for (int i = 0; i < dim; ++i) {
            const double tol = 1e-4 * std::max(1.0, std::abs(fd(i)));
            CHECK_MESSAGE(std::abs(g(i) - fd(i)) <= tol,
                          "coordinate " << i << ": analytic " << g(i) << " vs fd " << fd(i));
        }
    }
    CHECK(done == count);
}

}  // namespace

TEST_CASE("exante objective examples") {
    const auto cost = newsvendor::nv_cost_fn(newsvendor::NvParams{});
    objectives::ObjectiveOptions opt;

    // Mean risk, single pair, lambda = 0: value is the single cost.
    EmpiricalSample one;
    one.covariates.push_back(v1(2.0));
    one.outcomes.push_back(v1(110.0));
    auto mean_obj = objectives::exante_objective(risk::Mean{}, cost, one, ldr_shape(false), opt);
    Eigen::VectorXd params(2);
    params << 100.0, 5.0;  // z(2) = 110 -> zero cost
    Eigen::VectorXd g(2);
    CHECK(mean_obj.objective.value_and_subgrad(params, g) == doctest::Approx(0.0));
    params << 90.0, 5.0;  // z = 100, backorder 10
    CHECK(mean_obj.objective.value_and_subgrad(params, g) == doctest::Approx(10.0));

    // CVaR with constant cost: min over t equals the constant.
    Rng rng(17);
    auto data = tiny_sample(rng, 6);
    for (auto& y : data.outcomes) y = v1(100.0);
    auto cvar_obj = objectives::exante_objective(risk::CVaR{0.9}, cost, data, ldr_shape(false), opt);
    Eigen::VectorXd p3(3);
    p3 << 120.0, 0.0, 4.0;  // z = 120 everywhere: cost = 0.2*20 = 4; t = 4
    Eigen::VectorXd g3(3);
    CHECK(cvar_obj.objective.value_and_subgrad(p3, g3) == doctest::Approx(4.0));

    // Entropic code path agrees with risk::entropic by delegation.
    auto ent_obj =
        objectives::exante_objective(risk::Entropic{0.5}, cost, data, ldr_shape(false), opt);
    Eigen::VectorXd p2(2);
    p2 << 95.0, 2.0;
    Eigen::VectorXd g2(2);
    std::vector<double> costs;
    for (std::size_t i = 0; i < data.size(); ++i)
        costs.push_back(newsvendor::nv_cost(95.0 + 2.0 * data.covariates[i](0),
                                            data.outcomes[i](0), newsvendor::NvParams{}));
    CHECK(ent_obj.objective.value_and_subgrad(p2, g2) ==
          doctest::Approx(risk::entropic(risk::LossSample::uniform(costs), 0.5)).epsilon(1e-12));

    CHECK_THROWS_WITH_AS(
        objectives::exante_objective(risk::MeanUpperSemidev{0.5}, cost, data, ldr_shape(false), opt),
        "risk-not-ex-ante-solvable", std::invalid_argument);
    CHECK_THROWS_WITH_AS(
        objectives::exante_objective(risk::Oce{risk::PiecewiseLinearCVaR{0.5}}, cost, data,
                                     ldr_shape(false), opt),
        "risk-not-ex-ante-solvable", std::invalid_argument);
}

TEST_CASE("delegation identity: ex-ante objectives equal risk.evaluate on realized costs") {
    Rng rng(23);
    const auto cost = newsvendor::nv_cost_fn(newsvendor::NvParams{});
    const auto data = tiny_sample(rng, 10);
    objectives::ObjectiveOptions opt;

    std::vector<double> costs;
    Eigen::VectorXd params(2);
    params << 104.0, 3.0;
    for (std::size_t i = 0; i < data.size(); ++i)
        costs.push_back(newsvendor::nv_cost(104.0 + 3.0 * data.covariates[i](0),
                                            data.outcomes[i](0), newsvendor::NvParams{}));
    const auto sample = risk::LossSample::uniform(costs);

    // Mean and entropic: direct equality.
    auto mean_obj = objectives::exante_objective(risk::Mean{}, cost, data, ldr_shape(false), opt);
    Eigen::VectorXd g2(2);
    CHECK(mean_obj.objective.value_and_subgrad(params, g2) ==
          doctest::Approx(risk::mean(sample)).epsilon(1e-12));

    // Variational kinds: equality after minimizing the appended scalar. The
    // objective is piecewise linear in t with kinks at the realized costs,
    // so scanning those candidates minimizes it exactly.
    auto cvar_obj = objectives::exante_objective(risk::CVaR{0.7}, cost, data, ldr_shape(false), opt);
    Eigen::VectorXd p3(3), g3(3);
    p3.head(2) = params;
    double best = std::numeric_limits<double>::infinity();
    for (double t : costs) {
        p3(2) = t;
        best = std::min(best, cvar_obj.objective.value_and_subgrad(p3, g3));
    }
    CHECK(best == doctest::Approx(risk::cvar(sample, 0.7)).epsilon(1e-12));

    auto qdev_obj = objectives::exante_objective(risk::QuantileDeviation{1.0, 2.0}, cost, data,
                                                 ldr_shape(false), opt);
    best = std::numeric_limits<double>::infinity();
    for (double t : costs) {
        p3(2) = t;
        best = std::min(best, qdev_obj.objective.value_and_subgrad(p3, g3));
    }
    CHECK(best == doctest::Approx(risk::quantile_deviation(sample, 1.0, 2.0)).epsilon(1e-12));
}

TEST_CASE("expected-cvar with a frozen constant auxiliary equals ex-ante cvar") {
    Rng rng(31);
    const auto cost = newsvendor::nv_cost_fn(newsvendor::NvParams{});
    const auto data = tiny_sample(rng, 8);
    objectives::ObjectiveOptions opt;  // lambda = 0 so the regularizers vanish

    auto expected =
        objectives::expected_oce_objective(risk::PiecewiseLinearCVaR{0.8}, cost, data,
                                           ldr_shape(true), opt);
    auto exante = objectives::exante_objective(risk::CVaR{0.8}, cost, data, ldr_shape(false), opt);

    for (double t : {-1.0, 3.0, 7.5}) {
        Eigen::VectorXd pe(4);  // [intercept, slope, aux_intercept, aux_slope]
        pe << 100.0, 4.0, -t, 0.0;  // s(x) = -t frozen to a shared constant
        Eigen::VectorXd pa(3);
        pa << 100.0, 4.0, t;
        Eigen::VectorXd ge(4), ga(3);
        CHECK(expected.objective.value_and_subgrad(pe, ge) ==
              doctest::Approx(exante.objective.value_and_subgrad(pa, ga)).epsilon(1e-14));
    }

    CHECK_THROWS_WITH_AS(objectives::expected_oce_objective(risk::PiecewiseLinearCVaR{0.8}, cost,
                                                            data, ldr_shape(false), opt),
                         "auxiliary-required", std::invalid_argument);
}

TEST_CASE("expected-oce examples") {
    const auto cost = newsvendor::nv_cost_fn(newsvendor::NvParams{});
    objectives::ObjectiveOptions opt;

    // Constant cost k with t(x) = k gives exactly k (CVaR of a constant).
    EmpiricalSample flat;
    for (int i = 0; i < 4; ++i) {
        flat.covariates.push_back(v1(1.0 + i));
        flat.outcomes.push_back(v1(100.0));
    }
    auto obj = objectives::expected_oce_objective(risk::PiecewiseLinearCVaR{0.9}, cost, flat,
                                                  ldr_shape(true), opt);
    Eigen::VectorXd p(4), g(4);
    p << 110.0, 0.0, -2.0, 0.0;  // z = 110: cost = 2; s = -2 i.e. t = 2
    CHECK(obj.objective.value_and_subgrad(p, g) == doctest::Approx(2.0));

    // N=1 exponential utility: at s = -entropic certainty equivalent the
    // objective equals the entropic risk of the single cost.
    EmpiricalSample one;
    one.covariates.push_back(v1(1.0));
    one.outcomes.push_back(v1(105.0));
    const double gamma = 0.5;
    auto ent = objectives::expected_oce_objective(risk::ExponentialUtility{gamma}, cost, one,
                                                  ldr_shape(true), opt);
    const double c = newsvendor::nv_cost(100.0, 105.0, newsvendor::NvParams{});
    Eigen::VectorXd p1(4), g1(4);
    p1 << 100.0, 0.0, -c, 0.0;  // s = -c = -entropic({c})
    CHECK(ent.objective.value_and_subgrad(p1, g1) == doctest::Approx(c).epsilon(1e-10));

    // lambda > 0 at all-zero parameters: regularizer vanishes.
    objectives::ObjectiveOptions lopt;
    lopt.lambda = 0.7;
    auto reg = objectives::expected_oce_objective(risk::PiecewiseLinearCVaR{0.5}, cost, flat,
                                                  ldr_shape(true), lopt);
    Eigen::VectorXd z4 = Eigen::VectorXd::Zero(4), gz(4);
    double expected_value = 0.0;
    for (std::size_t i = 0; i < flat.size(); ++i)
        expected_value +=
            2.0 * newsvendor::nv_cost(0.0, flat.outcomes[i](0), newsvendor::NvParams{}) / 4.0;
    CHECK(reg.objective.value_and_subgrad(z4, gz) == doctest::Approx(expected_value));
}

TEST_CASE("entropic objective equals the delegating ex-ante path to 1e-10") {
    Rng rng(37);
    const auto cost = newsvendor::nv_cost_fn(newsvendor::NvParams{});
    const auto data = tiny_sample(rng, 12);
    objectives::ObjectiveOptions opt;
    opt.lambda = 0.01;

    auto specialized = objectives::entropic_objective(0.5, cost, data, ldr_shape(false), opt);
    auto delegating =
        objectives::exante_objective(risk::Entropic{0.5}, cost, data, ldr_shape(false), opt);
    for (int k = 0; k < 10; ++k) {
        Eigen::VectorXd p(2);
        p << rng.uniform(80.0, 120.0), rng.uniform(-2.0, 6.0);
        Eigen::VectorXd g1(2), g2(2);
        const double v1_ = specialized.objective.value_and_subgrad(p, g1);
        const double v2_ = delegating.objective.value_and_subgrad(p, g2);
        CHECK(v1_ == doctest::Approx(v2_).epsilon(1e-10));
        CHECK((g1 - g2).cwiseAbs().maxCoeff() < 1e-10);
    }

    // constant cost k -> value k + lambda * regularizer
    EmpiricalSample flat;
    for (int i = 0; i < 3; ++i) {
        flat.covariates.push_back(v1(1.0));
        flat.outcomes.push_back(v1(100.0));
    }
    auto obj = objectives::entropic_objective(1.0, cost, flat, ldr_shape(false), opt);
    Eigen::VectorXd p(2), g(2);
    p << 110.0, 0.0;
    CHECK(obj.objective.value_and_subgrad(p, g) ==
          doctest::Approx(2.0 + opt.lambda * 110.0 * 110.0));
}

TEST_CASE("solved expected-entropic matches solved entropic (shared-context dataset)") {
    // The tower identity makes the two SAA problems coincide when the
    // auxiliary map contributes one effective degree of freedom per context;
    // a single-context dataset realizes that exactly. Solve both, compare
    // optimal values.
    const double gamma = 0.5;
    const auto cost = newsvendor::nv_cost_fn(newsvendor::NvParams{});
    objectives::EmpiricalSample data;
    Rng rng(909);
    for (int i = 0; i < 40; ++i) {
        data.covariates.push_back(v1(2.0));
        data.outcomes.push_back(v1(rng.uniform(95.0, 125.0)));
    }
    objectives::ObjectiveOptions opt;

    auto ent = objectives::entropic_objective(gamma, cost, data, ldr_shape(false), opt);
    auto eent = objectives::expected_oce_objective(risk::ExponentialUtility{gamma}, cost, data,
                                                   ldr_shape(true), opt);

    solve::SolveConfig cfg;
    cfg.schedule = solve::StepSchedule::ArmijoBacktracking;
    cfg.max_iters = 6000;
    cfg.tolerance = 1e-13;
    Eigen::VectorXd e0(2);
    e0 << 110.0, 0.0;
    const auto rent = solve::minimize(ent.objective, e0, cfg);
    Eigen::VectorXd ee0(4);
    ee0 << 110.0, 0.0, -10.0, 0.0;
    const auto reent = solve::minimize(eent.objective, ee0, cfg);
    CHECK(reent.best_value == doctest::Approx(rent.best_value).epsilon(1e-4));
}

TEST_CASE("expected mean-semideviation objective") {
    const auto cost = newsvendor::nv_cost_fn(newsvendor::NvParams{});
    objectives::ObjectiveOptions opt;
    Rng rng(41);
    const auto data = tiny_sample(rng, 9);

    // eta = 0 reduces to the mean objective.
    auto msd0 = objectives::expected_mean_semidev_objective(0.0, cost, data, ldr_shape(true), opt);
    auto mean_obj = objectives::exante_objective(risk::Mean{}, cost, data, ldr_shape(false), opt);
    Eigen::VectorXd p4(4), g4(4), p2(2), g2(2);
    p4 << 102.0, 2.0, 3.0, 0.5;
    p2 << 102.0, 2.0;
    CHECK(msd0.objective.value_and_subgrad(p4, g4) ==
          doctest::Approx(mean_obj.objective.value_and_subgrad(p2, g2)).epsilon(1e-12));

    // constant cost with t tracking the cost: value equals the cost.
    EmpiricalSample flat;
    for (int i = 0; i < 5; ++i) {
        flat.covariates.push_back(v1(2.0 + i));
        flat.outcomes.push_back(v1(100.0));
    }
    auto msd = objectives::expected_mean_semidev_objective(0.8, cost, flat, ldr_shape(true), opt);
    Eigen::VectorXd pc(4), gc(4);
    pc << 110.0, 0.0, 2.0, 0.0;  // cost = 2 everywhere, t = 2
    CHECK(msd.objective.value_and_subgrad(pc, gc) == doctest::Approx(2.0));

    // Degenerate single-context dataset: the trained objective minimum over
    // a shared (t) equals the per-context mean-upper-semideviation.
    EmpiricalSample degenerate;
    degenerate.covariates = {v1(1.0), v1(1.0)};
    degenerate.outcomes = {v1(100.0), v1(110.0)};
    const double eta = 0.6;
    auto msd2 =
        objectives::expected_mean_semidev_objective(eta, cost, degenerate, ldr_shape(true), opt);
    // fixed decision z = 104; conditional costs {0.8, 6.0}
    std::vector<double> cc = {newsvendor::nv_cost(104.0, 100.0, newsvendor::NvParams{}),
                              newsvendor::nv_cost(104.0, 110.0, newsvendor::NvParams{})};
    double best = std::numeric_limits<double>::infinity();
    Eigen::VectorXd pt(4), gt(4);
    for (double t = -2.0; t < 10.0; t += 1e-5) {
        pt << 104.0, 0.0, t, 0.0;
        best = std::min(best, msd2.objective.value_and_subgrad(pt, gt));
    }
    CHECK(best ==
          doctest::Approx(risk::mean_upper_semidev(risk::LossSample::uniform(cc), eta))
              .epsilon(1e-5));

    CHECK_THROWS_WITH_AS(
        objectives::expected_mean_semidev_objective(1.5, cost, data, ldr_shape(true), opt),
        "eta-out-of-range", std::invalid_argument);
}

TEST_CASE("finite differences validate the subgradients at differentiable points") {
    Rng rng(53);
    const auto cost = newsvendor::nv_cost_fn(newsvendor::NvParams{});
    auto data = tiny_sample(rng, 7);
    // Decision scale ~ O(1) so random parameter points exercise both cost branches.
    for (auto& y : data.outcomes) y = v1(y(0) / 100.0);
    objectives::ObjectiveOptions opt;
    opt.lambda = 0.05;

    Rng fd_rng(1000);
    fd_check(objectives::exante_objective(risk::Mean{}, cost, data, ldr_shape(false), opt), fd_rng,
             20);
    fd_check(objectives::exante_objective(risk::CVaR{0.6}, cost, data, ldr_shape(false), opt),
             fd_rng, 20);
    fd_check(objectives::exante_objective(risk::SpectralDiscrete{{{0.4, 0.0}, {0.6, 0.5}}}, cost,
                                          data, ldr_shape(false), opt),
             fd_rng, 20);
    fd_check(objectives::exante_objective(risk::QuantileDeviation{1.0, 2.0}, cost, data,
                                          ldr_shape(false), opt),
             fd_rng, 20);
    fd_check(objectives::entropic_objective(0.7, cost, data, ldr_shape(false), opt), fd_rng, 20);
    fd_check(objectives::expected_oce_objective(risk::PiecewiseLinearCVaR{0.6}, cost, data,
                                                ldr_shape(true), opt),
             fd_rng, 20);
    fd_check(objectives::expected_oce_objective(risk::ExponentialUtility{0.7}, cost, data,
                                                ldr_shape(true), opt),
             fd_rng, 20);
    fd_check(objectives::expected_mean_semidev_objective(0.8, cost, data, ldr_shape(true), opt),
             fd_rng, 20);
}

TEST_CASE("objective value is nondecreasing in lambda at fixed parameters") {
    Rng rng(61);
    const auto cost = newsvendor::nv_cost_fn(newsvendor::NvParams{});
    const auto data = tiny_sample(rng, 6);
    Eigen::VectorXd p(2), g(2);
    p << 104.0, 1.0;
    double prev = -std::numeric_limits<double>::infinity();
    for (double lambda : {0.0, 0.01, 0.1, 1.0}) {
        objectives::ObjectiveOptions opt;
        opt.lambda = lambda;
        auto obj = objectives::exante_objective(risk::Mean{}, cost, data, ldr_shape(false), opt);
        const double v = obj.objective.value_and_subgrad(p, g);
        CHECK(v >= prev);
        prev = v;
    }
}

TEST_CASE("constraint penalty pushes decisions toward the feasible set") {
    const auto cost = newsvendor::nv_cost_fn(newsvendor::NvParams{});
    EmpiricalSample one;
    one.covariates.push_back(v1(1.0));
    one.outcomes.push_back(v1(0.5));
    objectives::ObjectiveOptions opt;
    opt.constraint = policy::Box{v1(0.0), v1(1.0)};
    opt.penalty_weight = 50.0;
    auto obj = objectives::exante_objective(risk::Mean{}, cost, one, ldr_shape(false), opt);
    Eigen::VectorXd p(2), g(2);
    p << 3.0, 0.0;  // z = 3, distance to box = 2
    const double with_pen = obj.objective.value_and_subgrad(p, g);
    const double cost_only = newsvendor::nv_cost(3.0, 0.5, newsvendor::NvParams{});
    CHECK(with_pen == doctest::Approx(cost_only + 50.0 * 4.0));
}

TEST_CASE("regret cost wrapper") {
    const auto base = newsvendor::nv_cost_fn(newsvendor::NvParams{});
    auto hindsight = [](const Eigen::VectorXd& y) { return y; };  // z*(y) = y has zero cost
    const auto regret = objectives::regret_cost(base, hindsight);
    Eigen::VectorXd g(1);
    CHECK(regret.eval(v1(105.0), v1(100.0), &g) ==
          doctest::Approx(newsvendor::nv_cost(105.0, 100.0, newsvendor::NvParams{})));
    CHECK(g(0) == doctest::Approx(0.2));
}
