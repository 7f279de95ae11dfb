#include "riskctx/newsvendor.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "riskctx/risk.hpp"
#include "riskctx/solve.hpp"

namespace riskctx::newsvendor {

double nv_cost(double z, double y, const NvParams& p, double* dcost_dz) {
    const double diff = z - y;
    if (dcost_dz) *dcost_dz = diff > 0.0 ? p.h : (diff < 0.0 ? -p.b : 0.0);
    return p.h * std::max(diff, 0.0) + p.b * std::max(-diff, 0.0);
}

objectives::CostFn nv_cost_fn(const NvParams& p) {
    objectives::CostFn fn;
    fn.d_z = 1;
    fn.eval = [p](const Eigen::VectorXd& z, const Eigen::VectorXd& y,
                  Eigen::VectorXd* grad) -> double {
        double dz = 0.0;
        const double c = nv_cost(z(0), y(0), p, &dz);
        if (grad) {
            grad->resize(1);
            (*grad)(0) = dz;
        }
        return c;
    };
    return fn;
}

double trunc_normal_quantile(const TruncNormal& d, double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("trunc_normal_quantile: p outside (0,1)");
    if (!(d.sigma > 0.0)) throw std::invalid_argument("trunc_normal: sigma must be positive");
    const double hi = normal_cdf(d.clip);
    const double lo = normal_cdf(-d.clip);
    const double pp = (hi - lo) * p + lo;
    return d.mu + d.sigma * normal_quantile(pp);
}

double trunc_normal_cdf(const TruncNormal& d, double v) {
    const double hi = normal_cdf(d.clip);
    const double lo = normal_cdf(-d.clip);
    const double u = normal_cdf((v - d.mu) / d.sigma);
    return std::clamp((u - lo) / (hi - lo), 0.0, 1.0);
}

double trunc_normal_sample(const TruncNormal& d, Rng& rng) {
    return trunc_normal_quantile(d, rng.uniform01());
}

objectives::EmpiricalSample gen_linear(int n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("gen_linear: n must be >= 1");
    Rng rng(seed);
    const TruncNormal log_component{1.0, 0.5, 2.0};
    objectives::EmpiricalSample out;
    out.covariates.reserve(static_cast<std::size_t>(n));
    out.outcomes.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double x = std::exp(trunc_normal_sample(log_component, rng));
        const double sigma_eps = 20.0 - x;
        assert(sigma_eps > 0.0);  // max x = e^2 < 20
        const double eps = trunc_normal_sample(TruncNormal{0.0, sigma_eps, 2.0}, rng);
        const double y = std::max(5.0 * x + eps + 100.0, 0.0);
        out.covariates.push_back(Eigen::VectorXd::Constant(1, x));
        out.outcomes.push_back(Eigen::VectorXd::Constant(1, y));
    }
    return out;
}

objectives::EmpiricalSample gen_nonlinear(int n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("gen_nonlinear: n must be >= 1");
    Rng rng(seed);
    const TruncNormal x_law{1.0, 0.5, 2.0};
    const TruncNormal eps_law{0.0, 0.5, 2.0};
    objectives::EmpiricalSample out;
    out.covariates.reserve(static_cast<std::size_t>(n));
    out.outcomes.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double x1 = trunc_normal_sample(x_law, rng);
        const double x2 = trunc_normal_sample(x_law, rng);
        const double eps = trunc_normal_sample(eps_law, rng);
        const double scale = 0.5 * (2.0 * x1 + 2.0 * x2 + 24.0);
        const double y = std::max(
            5.0 * std::exp(1.0 + 0.5 * x1) + 20.0 * std::cos(2.0 * x2) + scale * eps + 100.0, 0.0);
        Eigen::VectorXd x(2);
        x << x1, x2;
        out.covariates.push_back(x);
        out.outcomes.push_back(Eigen::VectorXd::Constant(1, y));
    }
    return out;
}

TruncNormal conditional_law_linear(double x) {
    const double sigma = 20.0 - x;
    if (!(sigma > 0.0)) throw std::invalid_argument("conditional_law_linear: x must be < 20");
    return TruncNormal{5.0 * x + 100.0, sigma, 2.0};
}

TruncNormal conditional_law_nonlinear(double x1, double x2) {
    const double mu = 5.0 * std::exp(1.0 + 0.5 * x1) + 20.0 * std::cos(2.0 * x2) + 100.0;
    const double sigma = 0.5 * (x1 + x2 + 12.0);
    return TruncNormal{mu, sigma, 2.0};
}

double oracle_rn(const TruncNormal& cond, const NvParams& p) {
    return trunc_normal_quantile(cond, p.critical_ratio());
}

CvarOracle oracle_cvar(const TruncNormal& cond, double beta, const NvParams& p) {
    if (beta < 0.0 || beta >= 1.0) throw std::invalid_argument("beta-out-of-range");
    const double h = p.h, b = p.b;
    const double q_low = trunc_normal_quantile(cond, b * (1.0 - beta) / (h + b));
    const double q_high = trunc_normal_quantile(cond, (h * beta + b) / (h + b));
    CvarOracle out;
    out.z_star = h / (h + b) * q_low + b / (h + b) * q_high;
    out.t_star = h * b / (h + b) * q_high - b * h / (h + b) * q_low;
    return out;
}

double oracle_entropic(const TruncNormal& cond, double gamma, const NvParams& p, int mc_n,
                       std::uint64_t seed) {
    if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
    if (mc_n < 2) throw std::invalid_argument("oracle_entropic: mc_n must be >= 2");
    // Common random numbers across z: one fixed set of conditional draws.
    Rng rng(seed);
    std::vector<double> ys(static_cast<std::size_t>(mc_n));
    for (auto& y : ys) y = trunc_normal_sample(cond, rng);

    auto objective = [&](double z) {
        std::vector<double> costs(ys.size());
        for (std::size_t i = 0; i < ys.size(); ++i) costs[i] = nv_cost(z, ys[i], p);
        return risk::entropic(risk::LossSample::uniform(std::move(costs)), gamma);
    };
    const double lo = cond.mu - cond.clip * cond.sigma;
    const double hi = cond.mu + cond.clip * cond.sigma;
    return solve::golden_section(objective, lo, hi, 1e-8);
}

namespace {

// Midpoint quantile quadrature of the conditional law.
std::vector<double> quadrature_points(const TruncNormal& cond, int n) {
    std::vector<double> ys(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        ys[static_cast<std::size_t>(i)] =
            trunc_normal_quantile(cond, (static_cast<double>(i) + 0.5) / static_cast<double>(n));
    return ys;
}

}  // namespace

double conditional_entropic_risk(const TruncNormal& cond, double z, double gamma,
                                 const NvParams& p, int quad_n) {
    const auto ys = quadrature_points(cond, quad_n);
    std::vector<double> costs(ys.size());
    for (std::size_t i = 0; i < ys.size(); ++i) costs[i] = nv_cost(z, ys[i], p);
    return risk::entropic(risk::LossSample::uniform(std::move(costs)), gamma);
}

double conditional_cvar_risk(const TruncNormal& cond, double z, double beta, const NvParams& p,
                             int quad_n) {
    const auto ys = quadrature_points(cond, quad_n);
    std::vector<double> costs(ys.size());
    for (std::size_t i = 0; i < ys.size(); ++i) costs[i] = nv_cost(z, ys[i], p);
    return risk::cvar(risk::LossSample::uniform(std::move(costs)), beta);
}

std::string to_csv(const objectives::EmpiricalSample& sample) {
    std::ostringstream os;
    const int dx = sample.d_x();
    for (int j = 1; j <= dx; ++j) os << "x_" << j << ",";
    os << "y\n";
    char buf[64];
    for (std::size_t i = 0; i < sample.size(); ++i) {
        for (int j = 0; j < dx; ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", sample.covariates[i](j));
            os << buf << ",";
        }
        std::snprintf(buf, sizeof(buf), "%.17g", sample.outcomes[i](0));
        os << buf << "\n";
    }
    return os.str();
}

objectives::EmpiricalSample from_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line)) throw std::invalid_argument("from_csv: empty input");
    const int cols = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
    const int dx = cols - 1;
    objectives::EmpiricalSample out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        Eigen::VectorXd x(dx);
        for (int j = 0; j < dx; ++j) {
            if (!std::getline(ls, cell, ',')) throw std::invalid_argument("from_csv: short row");
            x(j) = std::stod(cell);
        }
        if (!std::getline(ls, cell, ',')) throw std::invalid_argument("from_csv: short row");
        out.covariates.push_back(x);
        out.outcomes.push_back(Eigen::VectorXd::Constant(1, std::stod(cell)));
    }
    return out;
}

}  // namespace riskctx::newsvendor
