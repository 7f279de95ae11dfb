#pragma once

#include <cstdint>
#include <string>

#include "riskctx/objectives.hpp"
#include "riskctx/stats.hpp"

namespace riskctx::newsvendor {

struct NvParams {
    double h = 0.2;  // unit holding cost
    double b = 1.0;  // unit backorder cost

    double critical_ratio() const { return b / (h + b); }
};

/// Normal(mu, sigma^2) truncated to +-clip standard deviations.
struct TruncNormal {
    double mu = 0.0;
    double sigma = 1.0;
    double clip = 2.0;
};

/// c(z,y) = h (z-y)_+ + b (y-z)_+ and a subgradient in z (0 at the kink).
double nv_cost(double z, double y, const NvParams& p, double* dcost_dz = nullptr);

/// CostFn wrapper over scalar decisions/outcomes.
objectives::CostFn nv_cost_fn(const NvParams& p);

double trunc_normal_quantile(const TruncNormal& d, double p);
double trunc_normal_cdf(const TruncNormal& d, double v);
double trunc_normal_sample(const TruncNormal& d, Rng& rng);

/// Linear demand process: X = exp(T), T ~ truncated N(1, 0.5^2);
/// Y = max{5 X + eps + 100, 0} with eps ~ truncated N(0, (20-x)^2).
objectives::EmpiricalSample gen_linear(int n, std::uint64_t seed);

/// Nonlinear demand process on d_x = 2:
/// Y = max{5 e^{1+0.5 X1} + 20 cos(2 X2) + (X1+X2+12) eps + 100, 0},
/// X1, X2 ~ truncated N(1, 0.5^2), eps ~ truncated N(0, 0.5^2).
objectives::EmpiricalSample gen_nonlinear(int n, std::uint64_t seed);

/// Conditional demand law of the linear process, truncated
/// N(5x+100, (20-x)^2) within +-2 sd; the max-clamp never binds on the
/// covariate support (asserted).
TruncNormal conditional_law_linear(double x);

/// Conditional demand law of the nonlinear process, truncated
/// N(5 e^{1+0.5 x1} + 20 cos(2 x2) + 100, (0.5 (x1+x2+12))^2) within +-2 sd.
TruncNormal conditional_law_nonlinear(double x1, double x2);

/// Risk-neutral conditional optimum z*(x) = F^{-1}(b/(h+b)).
double oracle_rn(const TruncNormal& cond, const NvParams& p);

/// CVaR conditional optimum (Gotoh-Takano two-quantile mix) and its t*.
struct CvarOracle {
    double z_star;
    double t_star;
};
CvarOracle oracle_cvar(const TruncNormal& cond, double beta, const NvParams& p);

/// Entropic conditional optimum by golden-section over the Monte Carlo
/// conditional objective with common random numbers.
double oracle_entropic(const TruncNormal& cond, double gamma, const NvParams& p, int mc_n,
                       std::uint64_t seed);

/// Conditional entropic risk of ordering z, via an n-point quantile
/// quadrature of the conditional law.
double conditional_entropic_risk(const TruncNormal& cond, double z, double gamma,
                                 const NvParams& p, int quad_n = 2000);

/// Conditional CVaR of ordering z via quantile quadrature.
double conditional_cvar_risk(const TruncNormal& cond, double z, double beta, const NvParams& p,
                             int quad_n = 2000);

/// CSV with header x_1,...,x_dx,y at 17 significant digits.
std::string to_csv(const objectives::EmpiricalSample& sample);
objectives::EmpiricalSample from_csv(const std::string& text);

}  // namespace riskctx::newsvendor
