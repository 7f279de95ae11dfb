#include <doctest.h>

#include <cmath>

#include "riskctx/newsvendor.hpp"
#include "riskctx/risk.hpp"
#include "riskctx/solve.hpp"
#include "riskctx/stats.hpp"

using namespace riskctx;
using newsvendor::NvParams;
using newsvendor::TruncNormal;

TEST_CASE("nv_cost examples") {
    const NvParams p;
    double slope = 0.0;
    CHECK(newsvendor::nv_cost(5.0, 5.0, p, &slope) == doctest::Approx(0.0));
    CHECK(newsvendor::nv_cost(6.0, 5.0, p, &slope) == doctest::Approx(0.2));
    CHECK(slope == doctest::Approx(0.2));
    CHECK(newsvendor::nv_cost(5.0, 6.0, p, &slope) == doctest::Approx(1.0));
    CHECK(slope == doctest::Approx(-1.0));
}

TEST_CASE("nv_cost is convex in z") {
    Rng rng(11);
    const NvParams p;
    for (int k = 0; k < 100; ++k) {
        const double z1 = rng.uniform(-5.0, 15.0);
        const double z2 = rng.uniform(-5.0, 15.0);
        const double y = rng.uniform(-5.0, 15.0);
        const double mid = newsvendor::nv_cost(0.5 * (z1 + z2), y, p);
        CHECK(mid <= 0.5 * newsvendor::nv_cost(z1, y, p) + 0.5 * newsvendor::nv_cost(z2, y, p) +
                         1e-12);
    }
}

TEST_CASE("truncated normal quantile") {
    const TruncNormal d{3.0, 2.0, 2.0};
    CHECK(newsvendor::trunc_normal_quantile(d, 0.5) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(newsvendor::trunc_normal_quantile(d, 1.0 - 1e-12) ==
          doctest::Approx(3.0 + 2.0 * 2.0).epsilon(1e-5));
    CHECK_THROWS(newsvendor::trunc_normal_quantile(d, 0.0));
    CHECK_THROWS(newsvendor::trunc_normal_quantile(d, 1.0));

    // Bisection oracle on the truncated CDF.
    const TruncNormal std_d{0.0, 1.0, 2.0};
    auto bisect = [&](double p) {
        double lo = -2.0, hi = 2.0;
        for (int i = 0; i < 200; ++i) {
            const double mid = 0.5 * (lo + hi);
            (newsvendor::trunc_normal_cdf(std_d, mid) < p ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    };
    CHECK(std::abs(newsvendor::trunc_normal_quantile(std_d, 0.75) - bisect(0.75)) < 1e-8);
    for (double p : {0.01, 0.2, 0.33, 0.9, 0.99})
        CHECK(std::abs(newsvendor::trunc_normal_quantile(std_d, p) - bisect(p)) < 1e-8);
}

TEST_CASE("quantile and cdf are inverse on a 99-point grid") {
    const TruncNormal d{-1.0, 3.5, 2.0};
    for (int i = 1; i <= 99; ++i) {
        const double p = static_cast<double>(i) / 100.0;
        CHECK(newsvendor::trunc_normal_cdf(d, newsvendor::trunc_normal_quantile(d, p)) ==
              doctest::Approx(p).epsilon(1e-7));
    }
}

TEST_CASE("truncated normal sampling") {
    const TruncNormal d{0.0, 1.0, 2.0};
    Rng rng(1234);
    const int n = 100000;
    double total = 0.0;
    std::vector<double> draws(n);
    for (int i = 0; i < n; ++i) {
        draws[i] = newsvendor::trunc_normal_sample(d, rng);
        CHECK(draws[i] >= -2.0);
        CHECK(draws[i] <= 2.0);
        total += draws[i];
    }
    CHECK(std::abs(total / n) < 0.01);
    std::sort(draws.begin(), draws.end());
    const double q75 = draws[static_cast<std::size_t>(0.75 * n)];
    CHECK(std::abs(q75 - newsvendor::trunc_normal_quantile(d, 0.75)) < 0.02);
}

TEST_CASE("linear generator") {
    const auto sample = newsvendor::gen_linear(20000, 77);
    double xsum = 0.0, ysum = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double x = sample.covariates[i](0);
        CHECK(x >= std::exp(0.0) - 1e-12);
        CHECK(x <= std::exp(2.0) + 1e-12);
        CHECK(sample.outcomes[i](0) >= 0.0);
        xsum += x;
        ysum += sample.outcomes[i](0);
    }
    // Monte Carlo oracle for E[X] = E[exp(T)], T truncated N(1, 0.5^2).
    Rng rng(424243);
    double ex = 0.0;
    const int m = 1000000;
    for (int i = 0; i < m; ++i)
        ex += std::exp(newsvendor::trunc_normal_sample(TruncNormal{1.0, 0.5, 2.0}, rng));
    ex /= m;
    CHECK(std::abs(ysum / 20000.0 - (100.0 + 5.0 * ex)) < 0.5);

    // determinism
    const auto again = newsvendor::gen_linear(20000, 77);
    CHECK(again.covariates[123](0) == sample.covariates[123](0));
    CHECK(again.outcomes[19999](0) == sample.outcomes[19999](0));
}

TEST_CASE("nonlinear generator") {
    const auto sample = newsvendor::gen_nonlinear(50000, 99);
    for (std::size_t i = 0; i < sample.size(); ++i) {
        CHECK(sample.covariates[i](0) >= 0.0);
        CHECK(sample.covariates[i](0) <= 2.0);
        CHECK(sample.covariates[i](1) >= 0.0);
        CHECK(sample.covariates[i](1) <= 2.0);
        CHECK(sample.outcomes[i](0) >= 0.0);
    }
    // conditional mean at x = (1,1): average outcomes in a small ball
    double target = 5.0 * std::exp(1.5) + 20.0 * std::cos(2.0) + 100.0;
    CHECK(target == doctest::Approx(114.0855).epsilon(1e-4));
    double acc = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        if (std::abs(sample.covariates[i](0) - 1.0) < 0.1 &&
            std::abs(sample.covariates[i](1) - 1.0) < 0.1) {
            acc += sample.outcomes[i](0);
            ++count;
        }
    }
    REQUIRE(count > 200);
    CHECK(std::abs(acc / count - target) < 0.5);
}

TEST_CASE("risk-neutral oracle") {
    const NvParams p;
    // symmetric cost -> conditional mean
    const TruncNormal cond{50.0, 4.0, 2.0};
    CHECK(newsvendor::oracle_rn(cond, NvParams{1.0, 1.0}) == doctest::Approx(50.0).epsilon(1e-10));
    // degenerate sigma -> conditional mean
    CHECK(newsvendor::oracle_rn(TruncNormal{50.0, 1e-9, 2.0}, p) ==
          doctest::Approx(50.0).epsilon(1e-6));
    // critical ratio 5/6
    const double z = newsvendor::oracle_rn(cond, p);
    const double pprime = (2.0 * normal_cdf(2.0) - 1.0) * (5.0 / 6.0) + normal_cdf(-2.0);
    CHECK(z == doctest::Approx(50.0 + 4.0 * normal_quantile(pprime)).epsilon(1e-10));
}

TEST_CASE("cvar oracle") {
    const NvParams p;
    const TruncNormal cond = newsvendor::conditional_law_linear(3.0);

    // beta = 0 reduces to the risk-neutral quantile.
    Rng rng(31415);
    for (int k = 0; k < 20; ++k) {
        const double x = rng.uniform(1.0, 7.0);
        const auto law = newsvendor::conditional_law_linear(x);
        CHECK(newsvendor::oracle_cvar(law, 0.0, p).z_star ==
              doctest::Approx(newsvendor::oracle_rn(law, p)).epsilon(1e-9));
    }

    // symmetric h = b: z* is the midpoint of two symmetric quantiles.
    const NvParams sym{1.0, 1.0};
    const auto o = newsvendor::oracle_cvar(cond, 0.8, sym);
    CHECK(o.z_star == doctest::Approx(cond.mu).epsilon(1e-9));

    // cross-check against the empirical conditional CVaR problem.
    const double beta = 0.9;
    const auto oracle = newsvendor::oracle_cvar(cond, beta, p);
    Rng crn(271828);
    std::vector<double> ys(100000);
    for (auto& y : ys) y = newsvendor::trunc_normal_sample(cond, crn);
    auto empirical = [&](double z) {
        std::vector<double> costs(ys.size());
        for (std::size_t i = 0; i < ys.size(); ++i) costs[i] = newsvendor::nv_cost(z, ys[i], p);
        return risk::cvar(risk::LossSample::uniform(std::move(costs)), beta);
    };
    const double z_emp = solve::golden_section(empirical, cond.mu - 2.0 * cond.sigma,
                                               cond.mu + 2.0 * cond.sigma, 1e-6);
    CHECK(std::abs(z_emp - oracle.z_star) < 0.5);
}

TEST_CASE("entropic oracle") {
    const NvParams p;
    // small gamma approaches the risk-neutral solution
    const auto cond = newsvendor::conditional_law_linear(3.0);
    const double z_small = newsvendor::oracle_entropic(cond, 1e-3, p, 40000, 5);
    CHECK(std::abs(z_small - newsvendor::oracle_rn(cond, p)) < 0.5);

    // degenerate conditional: z* = y0
    const double z_degen = newsvendor::oracle_entropic(TruncNormal{77.0, 1e-9, 2.0}, 0.5, p, 100, 5);
    CHECK(z_degen == doctest::Approx(77.0).epsilon(1e-4));

    // gamma = 0.5 at x = 3 matches a dense grid search on the same draws
    const double gamma = 0.5;
    Rng crn(1001);
    std::vector<double> ys(20000);
    for (auto& y : ys) y = newsvendor::trunc_normal_sample(cond, crn);
    auto mc_obj = [&](double z) {
        std::vector<double> costs(ys.size());
        for (std::size_t i = 0; i < ys.size(); ++i) costs[i] = newsvendor::nv_cost(z, ys[i], p);
        return risk::entropic(risk::LossSample::uniform(std::move(costs)), gamma);
    };
    double best_z = 0.0, best_v = 1e300;
    for (double z = cond.mu - 2.0 * cond.sigma; z <= cond.mu + 2.0 * cond.sigma; z += 1e-3) {
        const double v = mc_obj(z);
        if (v < best_v) {
            best_v = v;
            best_z = z;
        }
    }
    const double z_gs = newsvendor::oracle_entropic(cond, gamma, p, 20000, 1001);
    CHECK(std::abs(z_gs - best_z) < 1e-3);
}

TEST_CASE("csv round trip") {
    const auto sample = newsvendor::gen_nonlinear(25, 3);
    const auto text = newsvendor::to_csv(sample);
    CHECK(text.substr(0, 10) == "x_1,x_2,y\n");
    const auto parsed = newsvendor::from_csv(text);
    REQUIRE(parsed.size() == sample.size());
    for (std::size_t i = 0; i < sample.size(); ++i) {
        CHECK(parsed.covariates[i](0) == sample.covariates[i](0));
        CHECK(parsed.covariates[i](1) == sample.covariates[i](1));
        CHECK(parsed.outcomes[i](0) == sample.outcomes[i](0));
    }
}
