#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "riskctx/objectives.hpp"
#include "riskctx/risk.hpp"
#include "riskctx/stats.hpp"

namespace riskctx::nested {

/// Finite-support joint law of (X, Y) with explicit conditionals.
struct DiscreteJoint {
    struct Atom {
        Eigen::VectorXd y;
        double q;  // conditional probability
    };
    struct Context {
        Eigen::VectorXd x;
        double p;  // marginal probability
        std::vector<Atom> cond;
    };
    std::vector<Context> contexts;

    /// Marginal and every conditional must sum to 1 within 1e-12.
    void validate() const;

    std::string to_json() const;
    static DiscreteJoint from_json(const std::string& text);
};

/// Policy restricted to the finite context set: one decision per context,
/// optionally one auxiliary scalar per context.
struct TabularPolicy {
    std::vector<Eigen::VectorXd> z;
    std::optional<std::vector<double>> t;
};

/// rho2 of the conditional cost sample { c(z, y) : y ~ P_{Y|X=x_j} }.
double conditional_risk(const DiscreteJoint& joint, std::size_t x_index,
                        const risk::RiskSpec& rho2, const objectives::CostFn& cost,
                        const Eigen::VectorXd& z);

struct ConditionalSolution {
    TabularPolicy policy;
    std::vector<double> psi;  // optimal conditional risk per context
};

/// Per-context argmin over an explicit decision grid (first index wins ties).
ConditionalSolution solve_conditional(const DiscreteJoint& joint, const risk::RiskSpec& rho2,
                                      const objectives::CostFn& cost,
                                      const std::vector<std::vector<Eigen::VectorXd>>& grids);

/// Per-context argmin by golden-section over scalar decisions in [lo, hi].
ConditionalSolution solve_conditional_1d(const DiscreteJoint& joint, const risk::RiskSpec& rho2,
                                         const objectives::CostFn& cost, double lo, double hi,
                                         double tol);

/// Outer risk over the context-indexed sample of conditional risks.
double nested_risk(const DiscreteJoint& joint, const risk::RiskSpec& rho1,
                   const risk::RiskSpec& rho2, const objectives::CostFn& cost,
                   const TabularPolicy& policy);

/// Risk of the flattened joint cost sample (weights p_j * q_jk).
double exante_risk(const DiscreteJoint& joint, const risk::RiskSpec& rho,
                   const objectives::CostFn& cost, const TabularPolicy& policy);

/// Scalar decision grids, 201 points spanning each context's conditional
/// outcome range widened by 10%.
std::vector<std::vector<Eigen::VectorXd>> default_grids(const DiscreteJoint& joint,
                                                        int points = 201, double widen = 0.10);

struct EnumerationResult {
    TabularPolicy best;
    std::vector<std::size_t> best_index;  // grid index per context
    double value = 0.0;
    /// Number of grid points per context whose conditional value ties the
    /// per-context minimum exactly (reported, not hidden).
    std::vector<int> conditional_ties;
};

/// Exhaustive minimization of the nested composition over all tabular grid
/// policies (row-major enumeration; first strict improvement wins).
EnumerationResult enumerate_nested_optimum(const DiscreteJoint& joint, const risk::RiskSpec& rho1,
                                           const risk::RiskSpec& rho2,
                                           const objectives::CostFn& cost,
                                           const std::vector<std::vector<Eigen::VectorXd>>& grids);

/// Exhaustive minimization of an ex-ante risk over all tabular grid policies.
EnumerationResult enumerate_exante_optimum(const DiscreteJoint& joint, const risk::RiskSpec& rho,
                                           const objectives::CostFn& cost,
                                           const std::vector<std::vector<Eigen::VectorXd>>& grids);

struct ConsistencyReport {
    int pairs_checked = 0;
    int violations = 0;
    double worst_gap = 0.0;  // largest rho_ea(g1) - rho_ea(g2) among dominating pairs
};

/// Samples policy pairs with g1 conditionally dominating g2 (perturbation of
/// g2 toward the conditional optimum, dominance verified per context) and
/// checks rho_ea(g1) <= rho_ea(g2) + 1e-10. Extra caller-supplied pairs are
/// subjected to the same dominance filter and check.
ConsistencyReport check_contextual_consistency(
    const DiscreteJoint& joint, const std::function<double(const TabularPolicy&)>& rho_ea,
    const risk::RiskSpec& rho2, const objectives::CostFn& cost, int trials, std::uint64_t seed,
    const std::vector<std::pair<TabularPolicy, TabularPolicy>>& extra_pairs = {});

struct CounterexampleFindings {
    DiscreteJoint joint;
    double beta = 0.5;
    // (a) the ex-ante-CVaR grid optimizer is conditionally suboptimal.
    TabularPolicy exante_optimal;
    std::vector<double> exante_conditional_gap;
    double exante_margin = 0.0;
    // (b) a nested-CVaR grid optimizer that is conditionally suboptimal in a
    // positive-probability context while attaining the nested optimum.
    TabularPolicy nested_suboptimal_optimizer;
    double nested_optimum = 0.0;
    double nested_example_gap = 0.0;
    bool conditional_attains_nested = false;
    // Strictly monotone outer risk: every nested grid optimizer is
    // conditionally optimal in every context.
    bool entropic_nested_matches_conditional = false;
};

/// Built-in two-context newsvendor instance with unequal conditional spreads.
CounterexampleFindings counterexample_ex_ante_cvar();

/// Seeded random instance for property tests: scalar x and y, 2-5 contexts,
/// 2-6 conditional atoms.
DiscreteJoint random_joint(Rng& rng, int min_contexts = 2, int max_contexts = 5,
                           int min_atoms = 2, int max_atoms = 6);

}  // namespace riskctx::nested
