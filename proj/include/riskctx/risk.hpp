#pragma once

#include <variant>
#include <vector>

namespace riskctx::risk {

/// Finite weighted sample of scalar losses; weights are probabilities.
struct LossSample {
    std::vector<double> values;
    std::vector<double> weights;

    /// Uniform weights 1/n.
    static LossSample uniform(std::vector<double> v);
    /// Validates sizes, nonnegativity and normalization (1e-12).
    static LossSample weighted(std::vector<double> v, std::vector<double> w);

    std::size_t size() const { return values.size(); }
};

// ---- Utility functions for the optimized certainty equivalent ----

/// u(x) = x/(1-beta) for x <= 0, 0 otherwise; OCE specializes to CVaR_beta.
struct PiecewiseLinearCVaR {
    double beta;
};

/// u(x) = (1 - e^{-gamma x})/gamma; OCE specializes to the entropic risk.
struct ExponentialUtility {
    double gamma;
};

/// General concave piecewise-linear utility through u(0)=0.
/// slopes[j] applies on (breakpoints[j-1], breakpoints[j]); slopes has one
/// more entry than breakpoints, must be nonnegative and nonincreasing.
struct CustomPwl {
    std::vector<double> breakpoints;
    std::vector<double> slopes;

    double value(double x) const;
    /// Derivative from the right (any subgradient choice works for the
    /// convex OCE objective).
    double slope_at(double x) const;
};

using UtilitySpec = std::variant<PiecewiseLinearCVaR, ExponentialUtility, CustomPwl>;

// ---- Risk measure descriptions ----

struct Mean {};
struct CVaR {
    double beta;
};
struct Entropic {
    double gamma;
};
struct Oce {
    UtilitySpec utility;
};
struct MeanUpperSemidev {
    double eta;
};
struct QuantileDeviation {
    double eps1;
    double eps2;
};
struct SpectralAtom {
    double weight;
    double beta;
};
struct SpectralDiscrete {
    std::vector<SpectralAtom> atoms;
};

using RiskSpec =
    std::variant<Mean, CVaR, Entropic, Oce, MeanUpperSemidev, QuantileDeviation, SpectralDiscrete>;

// ---- Evaluation ----

double mean(const LossSample& sample);

/// CVaR_beta = min_t { t + E[(xi - t)_+]/(1-beta) }, evaluated in closed form
/// on sorted order statistics (the exact variational minimum for discrete laws).
double cvar(const LossSample& sample, double beta);

/// (1/gamma) ln E[e^{gamma xi}], max-shifted log-sum-exp.
double entropic(const LossSample& sample, double gamma);

/// inf_s { -s - E[u(-xi - s)] }; solved by golden-section over s.
double oce(const LossSample& sample, const UtilitySpec& utility);

/// E[xi] + eta E[(xi - E[xi])_+], eta in [0,1].
double mean_upper_semidev(const LossSample& sample, double eta);

/// min_t E[max{eps1 (t - xi), eps2 (xi - t)}]; the convex piecewise-linear
/// objective attains its minimum at a sample point, so the minimum over the
/// observed values is exact.
double quantile_deviation(const LossSample& sample, double eps1, double eps2);

/// sum_j w_j CVaR_{beta_j}; atom weights positive and summing to 1.
double spectral_discrete(const LossSample& sample, const std::vector<SpectralAtom>& atoms);

double evaluate(const RiskSpec& spec, const LossSample& sample);

}  // namespace riskctx::risk
