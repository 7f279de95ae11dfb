#pragma once

#include <Eigen/Core>
#include <variant>
#include <vector>

namespace riskctx::kernel {

struct GaussianKernel {
    double lengthscale;  // k(x,x') = exp(-||x-x'||^2 / (2 l^2))
};
struct LinearKernel {
    double bias = 0.0;  // k(x,x') = x.x' + bias
};
struct PolynomialKernel {
    int degree;
    double bias = 0.0;  // k(x,x') = (x.x' + bias)^degree
};

using KernelSpec = std::variant<GaussianKernel, LinearKernel, PolynomialKernel>;

struct GramMatrix {
    Eigen::MatrixXd entries;
    std::vector<Eigen::VectorXd> centers;
};

double kernel_eval(const KernelSpec& spec, const Eigen::VectorXd& x1, const Eigen::VectorXd& x2);

GramMatrix gram(const KernelSpec& spec, const std::vector<Eigen::VectorXd>& centers);

/// Cross-kernel matrix C with C(i, j) = k(centers[i], points[j]).
Eigen::MatrixXd cross_gram(const KernelSpec& spec, const std::vector<Eigen::VectorXd>& centers,
                           const std::vector<Eigen::VectorXd>& points);

/// sum over columns t of alpha_t' K alpha_t.
double rkhs_norm_sq(const Eigen::MatrixXd& alpha, const GramMatrix& K);

/// Cholesky with diagonal jitter 1e-10 escalating x10 up to 1e-6 before
/// declaring failure; finite-precision Gaussian Gram matrices are routinely
/// near-singular.
bool is_positive_semidefinite(const GramMatrix& K);

/// Median pairwise distance of the points; the default Gaussian lengthscale.
double median_heuristic(const std::vector<Eigen::VectorXd>& points);

}  // namespace riskctx::kernel
