#include "riskctx/kernel.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace riskctx::kernel {

double kernel_eval(const KernelSpec& spec, const Eigen::VectorXd& x1, const Eigen::VectorXd& x2) {
    if (x1.size() != x2.size()) throw std::invalid_argument("kernel_eval: dimension mismatch");
    return std::visit(
        [&](const auto& k) -> double {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, GaussianKernel>) {
                if (!(k.lengthscale > 0.0))
                    throw std::invalid_argument("gaussian lengthscale must be positive");
                const double d2 = (x1 - x2).squaredNorm();
                return std::exp(-d2 / (2.0 * k.lengthscale * k.lengthscale));
            } else if constexpr (std::is_same_v<T, LinearKernel>) {
                if (k.bias < 0.0) throw std::invalid_argument("linear bias must be nonnegative");
                return x1.dot(x2) + k.bias;
            } else {
                if (k.degree < 1) throw std::invalid_argument("polynomial degree must be >= 1");
                if (k.bias < 0.0)
                    throw std::invalid_argument("polynomial bias must be nonnegative");
                return std::pow(x1.dot(x2) + k.bias, k.degree);
            }
        },
        spec);
}

GramMatrix gram(const KernelSpec& spec, const std::vector<Eigen::VectorXd>& centers) {
    if (centers.empty()) throw std::invalid_argument("gram: empty centers");
    const Eigen::Index n = static_cast<Eigen::Index>(centers.size());
    GramMatrix K;
    K.entries.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
            const double v = kernel_eval(spec, centers[i], centers[j]);
            K.entries(i, j) = v;
            K.entries(j, i) = v;
        }
    }
    K.centers = centers;
    return K;
}

Eigen::MatrixXd cross_gram(const KernelSpec& spec, const std::vector<Eigen::VectorXd>& centers,
                           const std::vector<Eigen::VectorXd>& points) {
    Eigen::MatrixXd C(centers.size(), points.size());
    for (Eigen::Index i = 0; i < C.rows(); ++i)
        for (Eigen::Index j = 0; j < C.cols(); ++j)
            C(i, j) = kernel_eval(spec, centers[static_cast<std::size_t>(i)],
                                  points[static_cast<std::size_t>(j)]);
    return C;
}

double rkhs_norm_sq(const Eigen::MatrixXd& alpha, const GramMatrix& K) {
    if (alpha.rows() != K.entries.rows())
        throw std::invalid_argument("rkhs_norm_sq: alpha rows must match Gram dimension");
    double acc = 0.0;
    for (Eigen::Index t = 0; t < alpha.cols(); ++t)
        acc += alpha.col(t).dot(K.entries * alpha.col(t));
    return acc;
}

bool is_positive_semidefinite(const GramMatrix& K) {
    const Eigen::Index n = K.entries.rows();
    if ((K.entries - K.entries.transpose()).cwiseAbs().maxCoeff() > 1e-12) return false;
    for (double jitter = 1e-10; jitter <= 1e-6 + 1e-18; jitter *= 10.0) {
        Eigen::MatrixXd shifted = K.entries;
        shifted.diagonal().array() += jitter * std::max(1.0, K.entries.diagonal().maxCoeff());
        Eigen::LLT<Eigen::MatrixXd> llt(shifted);
        if (llt.info() == Eigen::Success) return true;
    }
    (void)n;
    return false;
}

double median_heuristic(const std::vector<Eigen::VectorXd>& points) {
    std::vector<double> dists;
    dists.reserve(points.size() * (points.size() - 1) / 2);
    for (std::size_t i = 0; i < points.size(); ++i)
        for (std::size_t j = i + 1; j < points.size(); ++j)
            dists.push_back((points[i] - points[j]).norm());
    if (dists.empty()) return 1.0;
    const std::size_t mid = dists.size() / 2;
    std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid), dists.end());
    double m = dists[mid];
    if (m <= 0.0) m = 1.0;
    return m;
}

}  // namespace riskctx::kernel
