#include "riskctx/solve.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace riskctx::solve {

namespace {

bool finite(double v) { return std::isfinite(v); }

void check_finite(double value, const Eigen::VectorXd& grad, int iter) {
    bool ok = finite(value);
    if (ok) ok = grad.allFinite();
    if (!ok) {
        throw std::runtime_error("objective-nonfinite at iteration " + std::to_string(iter));
    }
}

}  // namespace

SolveResult minimize(const Objective& obj, const Eigen::VectorXd& init, const SolveConfig& cfg) {
    if (init.size() != obj.dimension)
        throw std::invalid_argument("minimize: init dimension mismatch");
    if (cfg.max_iters <= 0) throw std::invalid_argument("minimize: max_iters must be positive");

    Eigen::VectorXd x = init;
    Eigen::VectorXd g(obj.dimension);
    double fx = obj.value_and_subgrad(x, g);
    check_finite(fx, g, 0);

    double step0 = cfg.init_step;
    if (step0 <= 0.0) step0 = 0.1 * (1.0 + 0.05 * init.norm());

    SolveResult result;
    result.best_params = x;
    result.best_value = fx;
    result.trace.reserve(static_cast<std::size_t>(cfg.max_iters));

    constexpr int kStallWindow = 50;
    double window_ref = fx;
    int window_start = 0;

    double armijo_step = step0;
    for (int k = 1; k <= cfg.max_iters; ++k) {
        if (cfg.schedule == StepSchedule::ArmijoBacktracking) {
            // Gradient step with backtracking on the sufficient-decrease rule.
            const double gnorm2 = g.squaredNorm();
            double step = armijo_step;
            Eigen::VectorXd xn;
            double fn = fx;
            bool accepted = false;
            for (int back = 0; back < 40; ++back) {
                xn = x - step * g;
                Eigen::VectorXd gn(obj.dimension);
                fn = obj.value_and_subgrad(xn, gn);
                check_finite(fn, gn, k);
                if (fn <= fx - 1e-4 * step * gnorm2) {
                    x = xn;
                    fx = fn;
                    g = gn;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if (accepted) {
                armijo_step = step * 2.0;  // allow growth after a good step
            } else {
                armijo_step *= 0.5;
            }
        } else {
            // Movement of step_k along the normalized subgradient; raw
            // subgradient steps oscillate unstably against the quadratic
            // constraint penalties.
            const double step = (cfg.schedule == StepSchedule::Diminishing)
                                    ? step0 / std::sqrt(static_cast<double>(k))
                                    : step0;
            const double gnorm = g.norm();
            if (gnorm < 1e-300) {  // stationary
                result.converged = true;
                break;
            }
            x -= (step / gnorm) * g;
            fx = obj.value_and_subgrad(x, g);
            check_finite(fx, g, k);
        }

        if (fx < result.best_value) {
            result.best_value = fx;
            result.best_params = x;
        }
        result.trace.push_back(result.best_value);
        result.iterations = k;

        if (k - window_start >= kStallWindow) {
            if (window_ref - result.best_value < cfg.tolerance) {
                result.converged = true;
                break;
            }
            window_ref = result.best_value;
            window_start = k;
        }
    }
    return result;
}

SolveResult staged_minimize(const Objective& obj, const Eigen::VectorXd& init, int total_iters,
                            int stages, double shrink) {
    if (stages < 1) throw std::invalid_argument("staged_minimize: stages must be >= 1");
    SolveConfig cfg;
    cfg.schedule = StepSchedule::Diminishing;
    cfg.max_iters = std::max(50, total_iters / stages);
    cfg.tolerance = 1e-13;
    cfg.init_step = 0.1 * (1.0 + 0.05 * init.norm());

    SolveResult best = minimize(obj, init, cfg);
    for (int stage = 1; stage < stages; ++stage) {
        cfg.init_step *= shrink;
        SolveResult next = minimize(obj, best.best_params, cfg);
        if (next.best_value < best.best_value) best = next;
    }
    return best;
}

double golden_section(const std::function<double(double)>& f, double lo, double hi, double tol) {
    if (!(lo < hi)) throw std::invalid_argument("golden_section: lo must be < hi");
    constexpr double inv_phi = 0.6180339887498949;  // 1/phi
    double a = lo, b = hi;
    double x1 = b - inv_phi * (b - a);
    double x2 = a + inv_phi * (b - a);
    double f1 = f(x1);
    double f2 = f(x2);
    while (b - a > tol) {
        if (f1 <= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    return 0.5 * (a + b);
}

}  // namespace riskctx::solve
