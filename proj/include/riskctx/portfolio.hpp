#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>

#include "riskctx/kernel.hpp"
#include "riskctx/objectives.hpp"
#include "riskctx/policy.hpp"
#include "riskctx/solve.hpp"

namespace riskctx::portfolio {

struct PortfolioGenConfig {
    int d_x = 5;
    int d_y = 50;
    double tau = 1.0;  // noise level
    int p_power = 1;   // linearity parameter
    std::uint64_t seed = 0;
};

struct TrueModel {
    Eigen::MatrixXd B;  // d_y x d_x, Bernoulli(0.5) entries
    Eigen::MatrixXd L;  // d_y x 4 factor loadings

    /// Noise-free mean return ((0.05/sqrt(d_x)) B x + 0.1^{1/p})^p.
    Eigen::VectorXd mean_return(const Eigen::VectorXd& x, int p_power) const;
};

struct GeneratedData {
    objectives::EmpiricalSample train;
    objectives::EmpiricalSample test;
    TrueModel model;
};

/// B and L are drawn once per call and shared by train and test.
GeneratedData gen_portfolio(const PortfolioGenConfig& cfg, int n_train, int n_test);

/// cost(z, y) = -y'z with gradient -y; d_z = d_y decision coordinates, the
/// implicit 51st cash coordinate earns the risk-free rate 0.
objectives::CostFn neg_return_cost(int d_y);

enum class Model { EW, MC, CMEAC, CMEC };

std::string model_name(Model m);

struct ModelOptions {
    double beta = 0.9;         // fixed across the experiment
    double eta = 1.0 / 3.0;    // return/risk tradeoff weight
    double lambda0 = 0.1;      // lambda = lambda0 / sqrt(N)
    double penalty_weight = 100.0;
    std::optional<double> lengthscale;  // default: median heuristic
    int max_iters = 4000;
};

/// Deployable decision rule; EW/MC are context-free.
struct DeployablePolicy {
    std::optional<Eigen::VectorXd> constant;
    std::optional<policy::PolicySpec> contextual;

    Eigen::VectorXd decide(const Eigen::VectorXd& x) const;
};

struct TrainedModel {
    Model model = Model::EW;
    DeployablePolicy policy;
    double objective_value = 0.0;
    double lambda = 0.0;
    double lengthscale = 0.0;
};

TrainedModel solve_model(Model model, const objectives::EmpiricalSample& train,
                         const ModelOptions& opt);

struct PortfolioMetrics {
    double expected_return = 0.0;
    double cvar_of_negated_return = 0.0;
    double tradeoff = 0.0;  // eta * E - CVaR, exact by construction
    double relative_regret = 0.0;
    int regret_skipped = 0;  // test points with zero regret denominator
};

/// Deploys with an exact projection onto the capped simplex per test point.
PortfolioMetrics evaluate_metrics(const DeployablePolicy& policy,
                                  const objectives::EmpiricalSample& test, double eta,
                                  double beta = 0.9);

}  // namespace riskctx::portfolio
