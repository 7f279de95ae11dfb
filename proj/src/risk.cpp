#include "riskctx/risk.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "riskctx/solve.hpp"

namespace riskctx::risk {

namespace {

void check_sample(const LossSample& s) {
    if (s.values.empty()) throw std::invalid_argument("empty-sample");
    if (s.values.size() != s.weights.size())
        throw std::invalid_argument("sample values/weights length mismatch");
}

}  // namespace

LossSample LossSample::uniform(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("empty-sample");
    std::vector<double> w(v.size(), 1.0 / static_cast<double>(v.size()));
    return LossSample{std::move(v), std::move(w)};
}

LossSample LossSample::weighted(std::vector<double> v, std::vector<double> w) {
    if (v.empty()) throw std::invalid_argument("empty-sample");
    if (v.size() != w.size())
        throw std::invalid_argument("sample values/weights length mismatch");
    double total = 0.0;
    for (double wi : w) {
        if (wi < 0.0) throw std::invalid_argument("negative weight");
        total += wi;
    }
    if (std::abs(total - 1.0) > 1e-12)
        throw std::invalid_argument("weights must sum to 1");
    return LossSample{std::move(v), std::move(w)};
}

double mean(const LossSample& sample) {
    check_sample(sample);
    double acc = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i)
        acc += sample.weights[i] * sample.values[i];
    return acc;
}

double cvar(const LossSample& sample, double beta) {
    check_sample(sample);
    if (beta < 0.0 || beta >= 1.0) throw std::invalid_argument("beta-out-of-range");
    if (beta == 0.0) return mean(sample);  // the full tail is the whole sample
    const std::size_t n = sample.size();

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return sample.values[a] < sample.values[b];
    });

    // t* = VaR_beta (leftmost beta-quantile); the minimum value of the
    // Rockafellar-Uryasev objective is t* + E[(xi - t*)_+]/(1-beta).
    double cum = 0.0;
    std::size_t k = n - 1;
    for (std::size_t j = 0; j < n; ++j) {
        cum += sample.weights[order[j]];
        if (cum >= beta - 1e-15) {
            k = j;
            break;
        }
    }
    const double t = sample.values[order[k]];
    double tail = 0.0;
    for (std::size_t j = k; j < n; ++j) {
        const double excess = sample.values[order[j]] - t;
        if (excess > 0.0) tail += sample.weights[order[j]] * excess;
    }
    return t + tail / (1.0 - beta);
}

double entropic(const LossSample& sample, double gamma) {
    check_sample(sample);
    if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
    const double shift = *std::max_element(sample.values.begin(), sample.values.end());
    double acc = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i)
        acc += sample.weights[i] * std::exp(gamma * (sample.values[i] - shift));
    return shift + std::log(acc) / gamma;
}

double CustomPwl::value(double x) const {
    if (slopes.size() != breakpoints.size() + 1)
        throw std::invalid_argument("custom-pwl shape mismatch");
    // Integrate the slope function from 0 to x.
    double v = 0.0;
    double pos = 0.0;
    if (x >= 0.0) {
        for (std::size_t j = 0; j <= breakpoints.size(); ++j) {
            const double hi = (j < breakpoints.size())
                                  ? breakpoints[j]
                                  : std::numeric_limits<double>::infinity();
            if (hi <= pos) continue;
            const double seg_hi = std::min(hi, x);
            if (seg_hi > pos) {
                v += slopes[j] * (seg_hi - pos);
                pos = seg_hi;
            }
            if (pos >= x) break;
        }
    } else {
        pos = 0.0;
        for (std::size_t jj = breakpoints.size() + 1; jj-- > 0;) {
            const double lo = (jj > 0) ? breakpoints[jj - 1]
                                       : -std::numeric_limits<double>::infinity();
            if (lo >= pos) continue;
            const double seg_lo = std::max(lo, x);
            if (seg_lo < pos) {
                v -= slopes[jj] * (pos - seg_lo);
                pos = seg_lo;
            }
            if (pos <= x) break;
        }
    }
    return v;
}

double CustomPwl::slope_at(double x) const {
    std::size_t j = 0;
    while (j < breakpoints.size() && x >= breakpoints[j]) ++j;
    return slopes[j];
}

namespace {

double oce_pwl(const LossSample& sample, const CustomPwl& u) {
    if (u.slopes.empty()) throw std::invalid_argument("custom-pwl empty slopes");
    for (std::size_t j = 0; j < u.slopes.size(); ++j) {
        if (u.slopes[j] < 0.0) throw std::invalid_argument("custom-pwl negative slope");
        if (j > 0 && u.slopes[j] > u.slopes[j - 1] + 1e-15)
            throw std::invalid_argument("custom-pwl slopes must be nonincreasing");
    }
    // phi(s) = -s - E[u(-xi - s)] drifts to -inf unless the slope at -inf is
    // at least 1 and the slope at +inf is at most 1.
    if (u.slopes.front() < 1.0 - 1e-12 || u.slopes.back() > 1.0 + 1e-12)
        throw std::invalid_argument("oce-unbounded");

    const auto [vmin, vmax] =
        std::minmax_element(sample.values.begin(), sample.values.end());
    double bmax = 0.0;
    for (double b : u.breakpoints) bmax = std::max(bmax, std::abs(b));
    const double lo = -*vmax - bmax - 1.0;
    const double hi = -*vmin + bmax + 1.0;

    auto objective = [&](double s) {
        double acc = 0.0;
        for (std::size_t i = 0; i < sample.size(); ++i)
            acc += sample.weights[i] * u.value(-sample.values[i] - s);
        return -s - acc;
    };
    const double s_star = solve::golden_section(objective, lo, hi, 1e-10);
    return objective(s_star);
}

double oce_exponential(const LossSample& sample, double gamma) {
    if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
    const double shift = *std::max_element(sample.values.begin(), sample.values.end());
    const auto vmin = *std::min_element(sample.values.begin(), sample.values.end());
    auto objective = [&](double s) {
        // -s - E[(1 - e^{gamma (xi + s)})/gamma], exponent kept shifted.
        double acc = 0.0;
        for (std::size_t i = 0; i < sample.size(); ++i)
            acc += sample.weights[i] * std::exp(gamma * (sample.values[i] - shift));
        return -s - 1.0 / gamma + std::exp(gamma * (s + shift)) * acc / gamma;
    };
    const double s_star =
        solve::golden_section(objective, -shift - 1.0, -vmin + 1.0, 1e-10);
    return objective(s_star);
}

}  // namespace

double oce(const LossSample& sample, const UtilitySpec& utility) {
    check_sample(sample);
    return std::visit(
        [&](const auto& u) -> double {
            using T = std::decay_t<decltype(u)>;
            if constexpr (std::is_same_v<T, PiecewiseLinearCVaR>) {
                if (u.beta < 0.0 || u.beta >= 1.0)
                    throw std::invalid_argument("beta-out-of-range");
                CustomPwl pwl{{0.0}, {1.0 / (1.0 - u.beta), 0.0}};
                return oce_pwl(sample, pwl);
            } else if constexpr (std::is_same_v<T, ExponentialUtility>) {
                return oce_exponential(sample, u.gamma);
            } else {
                return oce_pwl(sample, u);
            }
        },
        utility);
}

double mean_upper_semidev(const LossSample& sample, double eta) {
    check_sample(sample);
    if (eta < 0.0 || eta > 1.0) throw std::invalid_argument("eta-out-of-range");
    const double m = mean(sample);
    double dev = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i)
        dev += sample.weights[i] * std::max(sample.values[i] - m, 0.0);
    return m + eta * dev;
}

double quantile_deviation(const LossSample& sample, double eps1, double eps2) {
    check_sample(sample);
    if (!(eps1 > 0.0) || !(eps2 > 0.0))
        throw std::invalid_argument("quantile-deviation eps must be positive");
    double best = std::numeric_limits<double>::infinity();
    for (double t : sample.values) {
        double acc = 0.0;
        for (std::size_t j = 0; j < sample.size(); ++j)
            acc += sample.weights[j] * std::max(eps1 * (t - sample.values[j]),
                                                eps2 * (sample.values[j] - t));
        best = std::min(best, acc);
    }
    return best;
}

double spectral_discrete(const LossSample& sample, const std::vector<SpectralAtom>& atoms) {
    check_sample(sample);
    if (atoms.empty()) throw std::invalid_argument("spectral atoms empty");
    double total = 0.0;
    for (const auto& a : atoms) {
        if (!(a.weight > 0.0)) throw std::invalid_argument("spectral atom weight must be positive");
        total += a.weight;
    }
    if (std::abs(total - 1.0) > 1e-12)
        throw std::invalid_argument("spectral atom weights must sum to 1");
    double acc = 0.0;
    for (const auto& a : atoms) acc += a.weight * cvar(sample, a.beta);
    return acc;
}

double evaluate(const RiskSpec& spec, const LossSample& sample) {
    return std::visit(
        [&](const auto& r) -> double {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, Mean>) {
                return mean(sample);
            } else if constexpr (std::is_same_v<T, CVaR>) {
                return cvar(sample, r.beta);
            } else if constexpr (std::is_same_v<T, Entropic>) {
                return entropic(sample, r.gamma);
            } else if constexpr (std::is_same_v<T, Oce>) {
                return oce(sample, r.utility);
            } else if constexpr (std::is_same_v<T, MeanUpperSemidev>) {
                return mean_upper_semidev(sample, r.eta);
            } else if constexpr (std::is_same_v<T, QuantileDeviation>) {
                return quantile_deviation(sample, r.eps1, r.eps2);
            } else {
                return spectral_discrete(sample, r.atoms);
            }
        },
        spec);
}

}  // namespace riskctx::risk
