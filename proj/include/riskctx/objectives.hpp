#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "riskctx/policy.hpp"
#include "riskctx/risk.hpp"
#include "riskctx/solve.hpp"

namespace riskctx::objectives {

/// Paired covariate/outcome observations carrying the empirical measure
/// P^N with uniform weight 1/N.
struct EmpiricalSample {
    std::vector<Eigen::VectorXd> covariates;
    std::vector<Eigen::VectorXd> outcomes;

    std::size_t size() const { return covariates.size(); }
    int d_x() const { return covariates.empty() ? 0 : static_cast<int>(covariates[0].size()); }
    int d_y() const { return outcomes.empty() ? 0 : static_cast<int>(outcomes[0].size()); }
};

/// Cost c(z, y), convex in z for every y (caller's contract), with a
/// subgradient in z.
struct CostFn {
    int d_z = 1;
    std::function<double(const Eigen::VectorXd& z, const Eigen::VectorXd& y,
                         Eigen::VectorXd* grad_z)>
        eval;
};

/// Regret wrapper R(z,y) = c(z,y) - c(z*(y),y) for a hindsight oracle z*.
CostFn regret_cost(CostFn base, std::function<Eigen::VectorXd(const Eigen::VectorXd&)> hindsight);

/// Training-time view of a policy: decisions at the sample covariates are
/// linear in the flat parameter vector for every supported policy kind
/// (monomial features for LDR/QDR, kernel sections at the centers for RKHS).
class TrainingPolicy {
public:
    TrainingPolicy(const policy::PolicySpec& shape, const std::vector<Eigen::VectorXd>& covariates);

    int n_params() const { return n_params_; }
    int d_z() const { return d_z_; }
    bool has_aux() const { return has_aux_; }
    Eigen::Index n_points() const { return features_.rows(); }

    /// Z(i, t) = decision output t at covariate i; s(i) = auxiliary map value.
    void eval_all(const Eigen::VectorXd& params, Eigen::MatrixXd& Z, Eigen::VectorXd& s) const;

    /// grad += d(objective)/d(params) given dZ = d(objective)/dZ and ds.
    void backprop(const Eigen::MatrixXd& dZ, const Eigen::VectorXd& ds,
                  Eigen::VectorXd& grad) const;

    /// Tikhonov term: squared parameter norm for parametric rules, squared
    /// RKHS norm (alpha' K alpha per output plus auxiliary) for RKHS rules.
    /// Appended variational scalars are never part of it.
    double regularizer(const Eigen::VectorXd& params, double lambda, Eigen::VectorXd& grad) const;

    const policy::PolicySpec& shape() const { return shape_; }

private:
    policy::PolicySpec shape_;
    Eigen::MatrixXd features_;  // N x m, shared by decision and auxiliary maps
    Eigen::MatrixXd reg_metric_;  // m x m Gram for RKHS; empty -> identity
    int n_params_ = 0;
    int d_z_ = 0;
    int m_ = 0;
    bool has_aux_ = false;
};

struct ObjectiveOptions {
    double lambda = 0.0;
    /// Adds mean_term * (1/N) sum_i c_i; the mean-CVaR tradeoff objectives
    /// use this for their -eta * mean-return term.
    double mean_term = 0.0;
    std::optional<policy::FeasibleSet> constraint;  // quadratic penalty on z(x_i)
    double penalty_weight = 100.0;
    /// Parameter indices pinned at their initialization (subgradient zeroed);
    /// restricts the hypothesis class to the corresponding subspace.
    std::vector<int> frozen;
};

/// An assembled SAA objective over [policy parameters..., appended scalars].
struct AssembledObjective {
    solve::Objective objective;
    std::shared_ptr<const TrainingPolicy> structure;
    int policy_params = 0;
    int extra_scalars = 0;  // variational scalars appended after the policy block

    Eigen::VectorXd policy_part(const Eigen::VectorXd& params) const {
        return params.head(policy_params);
    }
};

/// rho(c(g(x_i), y_i)) + lambda * regularizer over the empirical measure.
/// Supported: Mean, CVaR, Entropic, SpectralDiscrete, QuantileDeviation;
/// CVaR/QDEV/Spectral realize their variational forms by appending scalar
/// decision variables after the policy block.
AssembledObjective exante_objective(const risk::RiskSpec& spec, const CostFn& cost,
                                    const EmpiricalSample& data, const policy::PolicySpec& shape,
                                    const ObjectiveOptions& opt);

/// (1/N) sum_i [ -s(x_i) - u(-c_i - s(x_i)) ] + lambda * regularizer;
/// requires a policy with the auxiliary map.
AssembledObjective expected_oce_objective(const risk::UtilitySpec& utility, const CostFn& cost,
                                          const EmpiricalSample& data,
                                          const policy::PolicySpec& shape,
                                          const ObjectiveOptions& opt);

/// (1/gamma) ln((1/N) sum_i e^{gamma c_i}) + lambda * regularizer, max-shifted.
AssembledObjective entropic_objective(double gamma, const CostFn& cost,
                                      const EmpiricalSample& data, const policy::PolicySpec& shape,
                                      const ObjectiveOptions& opt);

/// Saddle evaluation of the expected mean-upper-semideviation: the inner sup
/// over s(x_i) in [0,1] is closed-form per distinct covariate (samples that
/// share a covariate share the supremum variable).
AssembledObjective expected_mean_semidev_objective(double eta, const CostFn& cost,
                                                   const EmpiricalSample& data,
                                                   const policy::PolicySpec& shape,
                                                   const ObjectiveOptions& opt);

}  // namespace riskctx::objectives
