#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <vector>

namespace riskctx::solve {

/// Convex (possibly nonsmooth) objective over a flat parameter vector.
/// The callback fills `subgrad` (already sized) and returns the value.
struct Objective {
    int dimension = 0;
    std::function<double(const Eigen::VectorXd& params, Eigen::VectorXd& subgrad)> value_and_subgrad;
    bool smooth = false;
};

enum class StepSchedule {
    // Diminishing and Constant move a/sqrt(k) (resp. a) along the normalized
    // subgradient direction.
    Diminishing,
    Constant,
    ArmijoBacktracking,  // line search; smooth objectives only
};

struct SolveConfig {
    int max_iters = 2000;
    double init_step = 0.0;  // 0 -> 1/(1 + ||subgradient at init||)
    StepSchedule schedule = StepSchedule::Diminishing;
    double tolerance = 1e-9;      // best-value stall over a 50-iteration window
    std::uint64_t seed = 0;       // recorded only; the method is deterministic
    double penalty_weight = 100;  // constraint penalty used by objective assembly
};

struct SolveResult {
    Eigen::VectorXd best_params;
    double best_value = 0.0;
    std::vector<double> trace;  // best-so-far value per iteration, nonincreasing
    int iterations = 0;
    bool converged = false;
};

/// Deterministic first-order minimization tracking the best-so-far iterate.
/// Throws std::runtime_error("objective-nonfinite") when the objective or a
/// subgradient entry turns non-finite, carrying the offending iterate index.
SolveResult minimize(const Objective& obj, const Eigen::VectorXd& init, const SolveConfig& cfg);

/// Multi-resolution wrapper for nonsmooth objectives: diminishing-step runs
/// with geometrically shrinking base steps, each warm-started from the
/// incumbent best. Deterministic.
SolveResult staged_minimize(const Objective& obj, const Eigen::VectorXd& init, int total_iters,
                            int stages = 3, double shrink = 0.25);

/// Golden-section search for a unimodal f on [lo, hi]; returns the argmin
/// within tol. Requires lo < hi.
double golden_section(const std::function<double(double)>& f, double lo, double hi, double tol);

}  // namespace riskctx::solve
