#include "riskctx/portfolio.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "riskctx/risk.hpp"
#include "riskctx/stats.hpp"

namespace riskctx::portfolio {

Eigen::VectorXd TrueModel::mean_return(const Eigen::VectorXd& x, int p_power) const {
    const double scale = 0.05 / std::sqrt(static_cast<double>(B.cols()));
    const double base = std::pow(0.1, 1.0 / static_cast<double>(p_power));
    Eigen::VectorXd m = (scale * (B * x)).array() + base;
    for (Eigen::Index j = 0; j < m.size(); ++j)
        m(j) = std::pow(m(j), static_cast<double>(p_power));
    return m;
}

GeneratedData gen_portfolio(const PortfolioGenConfig& cfg, int n_train, int n_test) {
    if (n_train < 1 || n_test < 1) throw std::invalid_argument("gen_portfolio: sizes must be >= 1");
    if (!(cfg.tau > 0.0)) throw std::invalid_argument("gen_portfolio: tau must be positive");
    if (cfg.p_power < 1) throw std::invalid_argument("gen_portfolio: p_power must be >= 1");
    Rng rng(cfg.seed);

    GeneratedData out;
    out.model.B.resize(cfg.d_y, cfg.d_x);
    for (Eigen::Index i = 0; i < cfg.d_y; ++i)
        for (Eigen::Index j = 0; j < cfg.d_x; ++j)
            out.model.B(i, j) = rng.bernoulli(0.5) ? 1.0 : 0.0;
    out.model.L.resize(cfg.d_y, 4);
    for (Eigen::Index i = 0; i < cfg.d_y; ++i)
        for (Eigen::Index j = 0; j < 4; ++j)
            out.model.L(i, j) = rng.uniform(-0.0025 * cfg.tau, 0.0025 * cfg.tau);

    auto draw = [&](int n, objectives::EmpiricalSample& sample) {
        sample.covariates.reserve(static_cast<std::size_t>(n));
        sample.outcomes.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            Eigen::VectorXd x(cfg.d_x);
            for (Eigen::Index j = 0; j < cfg.d_x; ++j) x(j) = rng.normal();
            Eigen::VectorXd eps1(4);
            for (Eigen::Index j = 0; j < 4; ++j) eps1(j) = rng.normal();
            Eigen::VectorXd eps2(cfg.d_y);
            for (Eigen::Index j = 0; j < cfg.d_y; ++j) eps2(j) = rng.normal();
            Eigen::VectorXd y = out.model.mean_return(x, cfg.p_power) + out.model.L * eps1 +
                                0.01 * cfg.tau * eps2;
            sample.covariates.push_back(std::move(x));
            sample.outcomes.push_back(std::move(y));
        }
    };
    draw(n_train, out.train);
    draw(n_test, out.test);
    return out;
}

objectives::CostFn neg_return_cost(int d_y) {
    objectives::CostFn fn;
    fn.d_z = d_y;
    fn.eval = [d_y](const Eigen::VectorXd& z, const Eigen::VectorXd& y,
                    Eigen::VectorXd* grad) -> double {
        if (z.size() != d_y || y.size() != d_y)
            throw std::invalid_argument("neg_return_cost: dimension mismatch");
        if (grad) *grad = -y;
        return -y.dot(z);
    };
    return fn;
}

std::string model_name(Model m) {
    switch (m) {
        case Model::EW: return "EW";
        case Model::MC: return "MC";
        case Model::CMEAC: return "CMEAC";
        case Model::CMEC: return "CMEC";
    }
    return "?";
}

Eigen::VectorXd DeployablePolicy::decide(const Eigen::VectorXd& x) const {
    if (constant) return *constant;
    const auto value = policy::evaluate(*contextual, x);
    return value.z;
}

namespace {

// Ridge fit of constant targets through the kernel sections so the RKHS
// policy starts at z(x_i) ~ target.
Eigen::VectorXd ridge_constant_fit(const Eigen::MatrixXd& K, double target) {
    Eigen::MatrixXd A = K;
    A.diagonal().array() += 1e-6 * std::max(1.0, K.diagonal().maxCoeff());
    return A.llt().solve(Eigen::VectorXd::Constant(K.rows(), target));
}

}  // namespace

TrainedModel solve_model(Model model, const objectives::EmpiricalSample& train,
                         const ModelOptions& opt) {
    const int d_y = train.d_y();
    const Eigen::Index n = static_cast<Eigen::Index>(train.size());
    TrainedModel out;
    out.model = model;

    if (model == Model::EW) {
        out.policy.constant = Eigen::VectorXd::Constant(d_y, 1.0 / static_cast<double>(d_y));
        return out;
    }

    const auto cost = neg_return_cost(d_y);
    objectives::ObjectiveOptions oo;
    oo.mean_term = opt.eta;  // eta * mean(-y'z) = -(eta/N) sum y'z
    oo.constraint = policy::CappedSimplex{1.0};
    oo.penalty_weight = opt.penalty_weight;

    // beta-quantile of the initial cost sample, the natural start for the
    // CVaR auxiliary.
    auto initial_t = [&](const Eigen::VectorXd& z0) {
        std::vector<double> costs(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i)
            costs[static_cast<std::size_t>(i)] = -train.outcomes[static_cast<std::size_t>(i)].dot(z0);
        return risk::cvar(risk::LossSample::uniform(std::move(costs)), opt.beta);
    };

    if (model == Model::MC) {
        // Context-free mean-CVaR: a constant rule trained on empty covariates.
        objectives::EmpiricalSample flat;
        flat.covariates.assign(train.size(), Eigen::VectorXd(0));
        flat.outcomes = train.outcomes;
        const auto shape = policy::make_ldr(
            Eigen::VectorXd::Constant(d_y, 1.0 / static_cast<double>(d_y)),
            Eigen::MatrixXd(d_y, 0));
        const auto assembled =
            objectives::exante_objective(risk::CVaR{opt.beta}, cost, flat, shape, oo);
        Eigen::VectorXd init(assembled.objective.dimension);
        init.head(d_y) = Eigen::VectorXd::Constant(d_y, 1.0 / static_cast<double>(d_y));
        init(init.size() - 1) = initial_t(init.head(d_y));
        const auto result = solve::staged_minimize(assembled.objective, init, opt.max_iters, 5, 0.3);
        out.policy.constant = result.best_params.head(d_y);
        out.objective_value = result.best_value;
        return out;
    }

    // CMEAC / CMEC: Gaussian-kernel RKHS policies.
    const double ls = opt.lengthscale.value_or(kernel::median_heuristic(train.covariates));
    const kernel::KernelSpec kern = kernel::GaussianKernel{ls};
    const double lambda = opt.lambda0 / std::sqrt(static_cast<double>(n));
    oo.lambda = lambda;
    out.lambda = lambda;
    out.lengthscale = ls;

    const bool with_aux = (model == Model::CMEC);
    auto shape = policy::make_rkhs(kern, train.covariates, d_y, with_aux);
    const Eigen::MatrixXd K = kernel::gram(kern, train.covariates).entries;
    const Eigen::VectorXd alpha_ew = ridge_constant_fit(K, 1.0 / static_cast<double>(d_y));

    auto& rk = std::get<policy::RkhsPolicy>(shape);
    for (Eigen::Index t = 0; t < rk.alpha_z.cols(); ++t) rk.alpha_z.col(t) = alpha_ew;
    const double t0 = initial_t(Eigen::VectorXd::Constant(d_y, 1.0 / static_cast<double>(d_y)));

    objectives::AssembledObjective assembled;
    Eigen::VectorXd init;
    if (model == Model::CMEAC) {
        assembled = objectives::exante_objective(risk::CVaR{opt.beta}, cost, train, shape, oo);
        init.resize(assembled.objective.dimension);
        init.head(assembled.policy_params) = policy::flatten(shape);
        init(init.size() - 1) = t0;
    } else {
        // expected-OCE uses the s-map convention s(x) = -t(x)
        rk.alpha_s = ridge_constant_fit(K, -t0);
        assembled = objectives::expected_oce_objective(risk::PiecewiseLinearCVaR{opt.beta}, cost,
                                                       train, shape, oo);
        init = policy::flatten(shape);
    }

    const auto result = solve::staged_minimize(assembled.objective, init, opt.max_iters, 5, 0.3);
    out.objective_value = result.best_value;
    out.policy.contextual =
        policy::unflatten(shape, assembled.policy_part(result.best_params));
    return out;
}

PortfolioMetrics evaluate_metrics(const DeployablePolicy& policy,
                                  const objectives::EmpiricalSample& test, double eta,
                                  double beta) {
    if (test.size() == 0) throw std::invalid_argument("evaluate_metrics: empty test set");
    const policy::FeasibleSet feasible = policy::CappedSimplex{1.0};

    std::vector<double> neg_returns(test.size());
    double mean_return = 0.0;
    double regret_sum = 0.0;
    int regret_count = 0;
    int skipped = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const Eigen::VectorXd z = policy::project(feasible, policy.decide(test.covariates[i]));
        const double r = test.outcomes[i].dot(z);
        neg_returns[i] = -r;
        mean_return += r;
        const double best = std::max(0.0, test.outcomes[i].maxCoeff());
        if (best > 0.0) {
            regret_sum += (best - r) / best;
            ++regret_count;
        } else {
            ++skipped;
        }
    }
    mean_return /= static_cast<double>(test.size());

    PortfolioMetrics m;
    m.expected_return = mean_return;
    m.cvar_of_negated_return = risk::cvar(risk::LossSample::uniform(std::move(neg_returns)), beta);
    m.tradeoff = eta * m.expected_return - m.cvar_of_negated_return;
    m.relative_regret = regret_count > 0 ? regret_sum / static_cast<double>(regret_count) : 0.0;
    m.regret_skipped = skipped;
    return m;
}

}  // namespace riskctx::portfolio
