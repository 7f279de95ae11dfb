#include <doctest.h>

#include <cmath>

#include "riskctx/policy.hpp"
#include "riskctx/stats.hpp"

using namespace riskctx;

namespace {

Eigen::VectorXd v1(double a) { return Eigen::VectorXd::Constant(1, a); }

Eigen::VectorXd random_vec(Rng& rng, int d, double lo = -2.0, double hi = 2.0) {
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) v(i) = rng.uniform(lo, hi);
    return v;
}

// Brute-force projection oracle: grid search over the feasible set.
Eigen::VectorXd grid_project_capped_simplex(const Eigen::VectorXd& v, double res) {
    const int steps = static_cast<int>(1.0 / res);
    Eigen::VectorXd best = Eigen::VectorXd::Zero(v.size());
    double best_d = (v - best).squaredNorm();
    if (v.size() == 2) {
        for (int i = 0; i <= steps; ++i)
            for (int j = 0; i + j <= steps; ++j) {
                Eigen::VectorXd z(2);
                z << i * res, j * res;
                const double d = (v - z).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best = z;
                }
            }
    } else {
        for (int i = 0; i <= steps; ++i)
            for (int j = 0; i + j <= steps; ++j)
                for (int k = 0; i + j + k <= steps; ++k) {
                    Eigen::VectorXd z(3);
                    z << i * res, j * res, k * res;
                    const double d = (v - z).squaredNorm();
                    if (d < best_d) {
                        best_d = d;
                        best = z;
                    }
                }
    }
    return best;
}

}  // namespace

TEST_CASE("policy evaluation examples") {
    // LDR(intercept=100, slope=5) at x=2 -> 110
    const auto ldr = policy::make_ldr(v1(100.0), Eigen::MatrixXd::Constant(1, 1, 5.0));
    CHECK(policy::evaluate(ldr, v1(2.0)).z(0) == doctest::Approx(110.0));

    auto rkhs = policy::make_rkhs(kernel::GaussianKernel{1.0}, {v1(0.0), v1(1.0)}, 2, false);
    CHECK(policy::evaluate(rkhs, v1(0.3)).z.norm() == doctest::Approx(0.0));

    auto single = policy::make_rkhs(kernel::GaussianKernel{0.7}, {v1(1.5)}, 1, false);
    std::get<policy::RkhsPolicy>(single).alpha_z(0, 0) = 3.25;
    CHECK(policy::evaluate(single, v1(1.5)).z(0) == doctest::Approx(3.25));

    Rng rng(1);
    CHECK_THROWS(policy::evaluate(ldr, random_vec(rng, 2)));
}

TEST_CASE("qdr uses the full degree-2 monomial basis") {
    auto qdr = policy::make_qdr(2, 1);
    auto& par = std::get<policy::ParametricPolicy>(qdr);
    // features: 1, x1, x2, x1^2, x2^2, x1 x2
    CHECK(par.coef.cols() == 6);
    par.coef << 1, 0, 0, 2, 0, 3;
    Eigen::VectorXd x(2);
    x << 2.0, 5.0;
    CHECK(policy::evaluate(qdr, x).z(0) == doctest::Approx(1.0 + 2.0 * 4.0 + 3.0 * 10.0));
}

TEST_CASE("projection examples") {
    const policy::FeasibleSet simplex = policy::CappedSimplex{1.0};
    Eigen::VectorXd a(2), b(2), c(2);
    a << 0.2, 0.3;
    b << 0.8, 0.8;
    c << -1.0, 0.5;
    CHECK((policy::project(simplex, a) - a).norm() == doctest::Approx(0.0));
    Eigen::VectorXd pb = policy::project(simplex, b);
    CHECK(pb(0) == doctest::Approx(0.5));
    CHECK(pb(1) == doctest::Approx(0.5));
    Eigen::VectorXd pc = policy::project(simplex, c);
    CHECK(pc(0) == doctest::Approx(0.0));
    CHECK(pc(1) == doctest::Approx(0.5));

    const policy::FeasibleSet box = policy::Box{v1(-1.0), v1(2.0)};
    CHECK(policy::project(box, v1(5.0))(0) == doctest::Approx(2.0));
    CHECK(policy::project(box, v1(-7.0))(0) == doctest::Approx(-1.0));
}

TEST_CASE("projection idempotence and nonexpansiveness") {
    Rng rng(8080);
    const policy::FeasibleSet simplex = policy::CappedSimplex{1.0};
    for (int k = 0; k < 100; ++k) {
        const int d = 2 + static_cast<int>(rng.uniform01() * 5);
        const Eigen::VectorXd u = random_vec(rng, d);
        const Eigen::VectorXd v = random_vec(rng, d);
        const Eigen::VectorXd pu = policy::project(simplex, u);
        const Eigen::VectorXd pv = policy::project(simplex, v);
        CHECK((policy::project(simplex, pu) - pu).norm() == doctest::Approx(0.0));
        CHECK((pu - pv).norm() <= (u - v).norm() + 1e-12);
    }
}

TEST_CASE("projection optimality vs grid oracle in low dimension") {
    Rng rng(100);
    const policy::FeasibleSet simplex = policy::CappedSimplex{1.0};
    for (int k = 0; k < 5; ++k) {
        for (int d : {2, 3}) {
            const Eigen::VectorXd v = random_vec(rng, d, -0.5, 1.5);
            const Eigen::VectorXd p = policy::project(simplex, v);
            const Eigen::VectorXd g = grid_project_capped_simplex(v, 1e-3);
            CHECK((v - p).norm() <= (v - g).norm() + 1e-6);
            CHECK((p - g).cwiseAbs().maxCoeff() < 5e-3);
        }
    }
}

TEST_CASE("rkhs evaluation is linear in alpha") {
    Rng rng(4711);
    auto base = policy::make_rkhs(kernel::GaussianKernel{1.2}, {v1(0.0), v1(1.0), v1(2.5)}, 2, false);
    auto p1 = base, p2 = base, sum = base;
    auto& a1 = std::get<policy::RkhsPolicy>(p1).alpha_z;
    auto& a2 = std::get<policy::RkhsPolicy>(p2).alpha_z;
    for (int i = 0; i < a1.rows(); ++i)
        for (int j = 0; j < a1.cols(); ++j) {
            a1(i, j) = rng.uniform(-1.0, 1.0);
            a2(i, j) = rng.uniform(-1.0, 1.0);
        }
    std::get<policy::RkhsPolicy>(sum).alpha_z = a1 + a2;
    for (int k = 0; k < 10; ++k) {
        const auto x = v1(rng.uniform(-1.0, 3.0));
        const Eigen::VectorXd lhs = policy::evaluate(sum, x).z;
        const Eigen::VectorXd rhs = policy::evaluate(p1, x).z + policy::evaluate(p2, x).z;
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("flatten round trips") {
    // LDR(100, 5) -> (100, 5) -> LDR(100, 5)
    const auto ldr = policy::make_ldr(v1(100.0), Eigen::MatrixXd::Constant(1, 1, 5.0));
    const Eigen::VectorXd flat = policy::flatten(ldr);
    REQUIRE(flat.size() == 2);
    CHECK(flat(0) == 100.0);
    CHECK(flat(1) == 5.0);
    const auto back = policy::unflatten(ldr, flat);
    CHECK((policy::flatten(back) - flat).norm() == 0.0);

    // Rkhs n=2, d_z=1 with alpha_s -> length 4
    auto rkhs = policy::make_rkhs(kernel::GaussianKernel{1.0}, {v1(0.0), v1(1.0)}, 1, true);
    CHECK(policy::param_count(rkhs) == 4);

    // zero policy round trip
    const auto qdr = policy::make_qdr(2, 2);
    CHECK(policy::flatten(qdr).norm() == 0.0);
    CHECK(policy::flatten(policy::unflatten(qdr, policy::flatten(qdr))).norm() == 0.0);

    CHECK_THROWS(policy::unflatten(ldr, Eigen::VectorXd::Zero(5)));
}

TEST_CASE("json round trip is exact") {
    Rng rng(2222);
    auto rkhs = policy::make_rkhs(kernel::GaussianKernel{1.618}, {v1(0.1), v1(0.9)}, 2, true);
    auto& rp = std::get<policy::RkhsPolicy>(rkhs);
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) rp.alpha_z(i, j) = rng.uniform(-1.0, 1.0) / 3.0;
        (*rp.alpha_s)(i) = rng.uniform(-1.0, 1.0) / 7.0;
    }
    const auto text = policy::to_json(rkhs);
    const auto parsed = policy::from_json(text);
    CHECK((policy::flatten(parsed) - policy::flatten(rkhs)).norm() == 0.0);  // bitwise
    const auto& pp = std::get<policy::RkhsPolicy>(parsed);
    CHECK(std::get<kernel::GaussianKernel>(pp.kernel).lengthscale == 1.618);

    const auto ldr = policy::make_ldr(v1(1.0 / 3.0), Eigen::MatrixXd::Constant(1, 1, M_PI));
    CHECK((policy::flatten(policy::from_json(policy::to_json(ldr))) - policy::flatten(ldr)).norm() ==
          0.0);
}
