#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "riskctx/kernel.hpp"

namespace riskctx::policy {

/// Linear (LDR) or full degree-2 (QDR) decision rule, stored as a
/// coefficient matrix over the monomial feature basis. The optional
/// auxiliary row realizes the scalar map t(.)/s(.) in the same basis.
struct ParametricPolicy {
    enum class Basis { Linear, Quadratic };
    Basis basis = Basis::Linear;
    int d_x = 0;
    Eigen::MatrixXd coef;                     // d_z x n_features
    std::optional<Eigen::VectorXd> aux_coef;  // n_features

    Eigen::VectorXd intercept() const { return coef.col(0); }
    Eigen::MatrixXd slope() const { return coef.middleCols(1, d_x); }
};

/// Representer-form policy z^(t)(x) = sum_i k(x_i, x) alpha_z(i, t) with the
/// optional scalar map s(x) = sum_i k(x_i, x) alpha_s(i).
struct RkhsPolicy {
    kernel::KernelSpec kernel;
    std::vector<Eigen::VectorXd> centers;
    Eigen::MatrixXd alpha_z;                 // n_centers x d_z
    std::optional<Eigen::VectorXd> alpha_s;  // n_centers
};

using PolicySpec = std::variant<ParametricPolicy, RkhsPolicy>;

PolicySpec make_ldr(const Eigen::VectorXd& intercept, const Eigen::MatrixXd& slope);
PolicySpec make_qdr(int d_x, int d_z);  // zero-initialized quadratic rule
PolicySpec make_rkhs(kernel::KernelSpec k, std::vector<Eigen::VectorXd> centers, int d_z,
                     bool with_aux);

/// Monomial features for the parametric rules: LDR {1, x_j};
/// QDR {1, x_j, x_j^2, x_j x_k (j<k)}.
Eigen::VectorXd parametric_features(ParametricPolicy::Basis basis, const Eigen::VectorXd& x);
int parametric_feature_count(ParametricPolicy::Basis basis, int d_x);

struct PolicyValue {
    Eigen::VectorXd z;
    std::optional<double> s;
};

PolicyValue evaluate(const PolicySpec& policy, const Eigen::VectorXd& x);

int output_dim(const PolicySpec& policy);
bool has_aux(const PolicySpec& policy);

// ---- Feasible sets ----

struct Unconstrained {};
struct Box {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
};
struct CappedSimplex {
    double cap = 1.0;  // { z >= 0, sum z <= cap }
};

using FeasibleSet = std::variant<Unconstrained, Box, CappedSimplex>;

/// Euclidean projection. For the capped simplex: clip negatives; if the
/// clipped point still violates the cap, project onto {z >= 0, sum z = cap}
/// with the sorted-threshold rule.
Eigen::VectorXd project(const FeasibleSet& set, const Eigen::VectorXd& v);

/// Squared Euclidean distance to the set, ||v - project(v)||^2.
double distance_sq(const FeasibleSet& set, const Eigen::VectorXd& v);

// ---- Flat parameter view (solver interface) ----

int param_count(const PolicySpec& policy);

/// Deterministic ordering: decision outputs first, auxiliary last.
Eigen::VectorXd flatten(const PolicySpec& policy);

/// Rebuilds a policy with the shapes of `shape` and the given parameters.
PolicySpec unflatten(const PolicySpec& shape, const Eigen::VectorXd& params);

// ---- JSON round trip ----

std::string to_json(const PolicySpec& policy);
PolicySpec from_json(const std::string& text);

}  // namespace riskctx::policy
