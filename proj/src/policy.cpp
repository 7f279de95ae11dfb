#include "riskctx/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace riskctx::policy {

using nlohmann::json;

PolicySpec make_ldr(const Eigen::VectorXd& intercept, const Eigen::MatrixXd& slope) {
    if (intercept.size() != slope.rows())
        throw std::invalid_argument("make_ldr: intercept/slope shape mismatch");
    ParametricPolicy p;
    p.basis = ParametricPolicy::Basis::Linear;
    p.d_x = static_cast<int>(slope.cols());
    p.coef.resize(intercept.size(), 1 + slope.cols());
    p.coef.col(0) = intercept;
    p.coef.rightCols(slope.cols()) = slope;
    return p;
}

PolicySpec make_qdr(int d_x, int d_z) {
    ParametricPolicy p;
    p.basis = ParametricPolicy::Basis::Quadratic;
    p.d_x = d_x;
    p.coef = Eigen::MatrixXd::Zero(d_z, parametric_feature_count(p.basis, d_x));
    return p;
}

PolicySpec make_rkhs(kernel::KernelSpec k, std::vector<Eigen::VectorXd> centers, int d_z,
                     bool with_aux) {
    if (centers.empty()) throw std::invalid_argument("make_rkhs: centers must be nonempty");
    RkhsPolicy p;
    p.kernel = std::move(k);
    const Eigen::Index n = static_cast<Eigen::Index>(centers.size());
    p.centers = std::move(centers);
    p.alpha_z = Eigen::MatrixXd::Zero(n, d_z);
    if (with_aux) p.alpha_s = Eigen::VectorXd::Zero(n);
    return p;
}

int parametric_feature_count(ParametricPolicy::Basis basis, int d_x) {
    if (basis == ParametricPolicy::Basis::Linear) return 1 + d_x;
    return 1 + 2 * d_x + d_x * (d_x - 1) / 2;
}

Eigen::VectorXd parametric_features(ParametricPolicy::Basis basis, const Eigen::VectorXd& x) {
    const int d = static_cast<int>(x.size());
    Eigen::VectorXd f(parametric_feature_count(basis, d));
    f(0) = 1.0;
    f.segment(1, d) = x;
    if (basis == ParametricPolicy::Basis::Quadratic) {
        int pos = 1 + d;
        for (int j = 0; j < d; ++j) f(pos++) = x(j) * x(j);
        for (int j = 0; j < d; ++j)
            for (int k = j + 1; k < d; ++k) f(pos++) = x(j) * x(k);
    }
    return f;
}

PolicyValue evaluate(const PolicySpec& policy, const Eigen::VectorXd& x) {
    return std::visit(
        [&](const auto& p) -> PolicyValue {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, ParametricPolicy>) {
                if (x.size() != p.d_x)
                    throw std::invalid_argument("policy evaluate: covariate dimension mismatch");
                const Eigen::VectorXd f = parametric_features(p.basis, x);
                PolicyValue out;
                out.z = p.coef * f;
                if (p.aux_coef) out.s = p.aux_coef->dot(f);
                return out;
            } else {
                if (x.size() != p.centers.front().size())
                    throw std::invalid_argument("policy evaluate: covariate dimension mismatch");
                Eigen::VectorXd kv(p.centers.size());
                for (std::size_t i = 0; i < p.centers.size(); ++i)
                    kv(static_cast<Eigen::Index>(i)) = kernel::kernel_eval(p.kernel, p.centers[i], x);
                PolicyValue out;
                out.z = p.alpha_z.transpose() * kv;
                if (p.alpha_s) out.s = p.alpha_s->dot(kv);
                return out;
            }
        },
        policy);
}

int output_dim(const PolicySpec& policy) {
    return std::visit(
        [](const auto& p) -> int {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, ParametricPolicy>)
                return static_cast<int>(p.coef.rows());
            else
                return static_cast<int>(p.alpha_z.cols());
        },
        policy);
}

bool has_aux(const PolicySpec& policy) {
    return std::visit(
        [](const auto& p) -> bool {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, ParametricPolicy>)
                return p.aux_coef.has_value();
            else
                return p.alpha_s.has_value();
        },
        policy);
}

Eigen::VectorXd project(const FeasibleSet& set, const Eigen::VectorXd& v) {
    return std::visit(
        [&](const auto& s) -> Eigen::VectorXd {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, Unconstrained>) {
                return v;
            } else if constexpr (std::is_same_v<T, Box>) {
                if (s.lower.size() != v.size() || s.upper.size() != v.size())
                    throw std::invalid_argument("project: box dimension mismatch");
                return v.cwiseMax(s.lower).cwiseMin(s.upper);
            } else {
                Eigen::VectorXd clipped = v.cwiseMax(0.0);
                if (clipped.sum() <= s.cap) return clipped;
                // Sorted-threshold projection onto { z >= 0, sum z = cap }.
                // u_j stays active iff sum_{r<=j} (u_r - u_j) < cap; the
                // left side accumulates neighbor differences, which keeps
                // the test exact at any magnitude.
                std::vector<double> u(v.data(), v.data() + v.size());
                std::sort(u.begin(), u.end(), std::greater<double>());
                double cumsum = u[0];
                double spread = 0.0;
                double theta = u[0] - s.cap;
                for (std::size_t j = 1; j < u.size(); ++j) {
                    spread += static_cast<double>(j) * (u[j - 1] - u[j]);
                    cumsum += u[j];
                    if (spread < s.cap) theta = (cumsum - s.cap) / static_cast<double>(j + 1);
                }
                return (v.array() - theta).cwiseMax(0.0);
            }
        },
        set);
}

double distance_sq(const FeasibleSet& set, const Eigen::VectorXd& v) {
    return (v - project(set, v)).squaredNorm();
}

int param_count(const PolicySpec& policy) {
    return std::visit(
        [](const auto& p) -> int {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, ParametricPolicy>) {
                int n = static_cast<int>(p.coef.size());
                if (p.aux_coef) n += static_cast<int>(p.aux_coef->size());
                return n;
            } else {
                int n = static_cast<int>(p.alpha_z.size());
                if (p.alpha_s) n += static_cast<int>(p.alpha_s->size());
                return n;
            }
        },
        policy);
}

Eigen::VectorXd flatten(const PolicySpec& policy) {
    Eigen::VectorXd out(param_count(policy));
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            Eigen::Index pos = 0;
            if constexpr (std::is_same_v<T, ParametricPolicy>) {
                for (Eigen::Index t = 0; t < p.coef.rows(); ++t) {
                    out.segment(pos, p.coef.cols()) = p.coef.row(t).transpose();
                    pos += p.coef.cols();
                }
                if (p.aux_coef) out.segment(pos, p.aux_coef->size()) = *p.aux_coef;
            } else {
                for (Eigen::Index t = 0; t < p.alpha_z.cols(); ++t) {
                    out.segment(pos, p.alpha_z.rows()) = p.alpha_z.col(t);
                    pos += p.alpha_z.rows();
                }
                if (p.alpha_s) out.segment(pos, p.alpha_s->size()) = *p.alpha_s;
            }
        },
        policy);
    return out;
}

PolicySpec unflatten(const PolicySpec& shape, const Eigen::VectorXd& params) {
    if (params.size() != param_count(shape))
        throw std::invalid_argument("unflatten: parameter length mismatch");
    PolicySpec out = shape;
    std::visit(
        [&](auto& p) {
            using T = std::decay_t<decltype(p)>;
            Eigen::Index pos = 0;
            if constexpr (std::is_same_v<T, ParametricPolicy>) {
                for (Eigen::Index t = 0; t < p.coef.rows(); ++t) {
                    p.coef.row(t) = params.segment(pos, p.coef.cols()).transpose();
                    pos += p.coef.cols();
                }
                if (p.aux_coef) *p.aux_coef = params.segment(pos, p.aux_coef->size());
            } else {
                for (Eigen::Index t = 0; t < p.alpha_z.cols(); ++t) {
                    p.alpha_z.col(t) = params.segment(pos, p.alpha_z.rows());
                    pos += p.alpha_z.rows();
                }
                if (p.alpha_s) *p.alpha_s = params.segment(pos, p.alpha_s->size());
            }
        },
        out);
    return out;
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    const auto rows = j.size();
    if (rows == 0) return Eigen::MatrixXd(0, 0);
    Eigen::MatrixXd m(rows, j.at(0).size());
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t c = 0; c < j.at(i).size(); ++c)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = j.at(i).at(c);
    return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

Eigen::VectorXd vector_from_json(const json& j) {
    Eigen::VectorXd v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j.at(i);
    return v;
}

json kernel_to_json(const kernel::KernelSpec& k) {
    return std::visit(
        [](const auto& kk) -> json {
            using T = std::decay_t<decltype(kk)>;
            if constexpr (std::is_same_v<T, kernel::GaussianKernel>)
                return {{"kind", "gaussian"}, {"lengthscale", kk.lengthscale}};
            else if constexpr (std::is_same_v<T, kernel::LinearKernel>)
                return {{"kind", "linear"}, {"bias", kk.bias}};
            else
                return {{"kind", "polynomial"}, {"degree", kk.degree}, {"bias", kk.bias}};
        },
        k);
}

kernel::KernelSpec kernel_from_json(const json& j) {
    const std::string kind = j.at("kind");
    if (kind == "gaussian") return kernel::GaussianKernel{j.at("lengthscale")};
    if (kind == "linear") return kernel::LinearKernel{j.at("bias")};
    if (kind == "polynomial") return kernel::PolynomialKernel{j.at("degree"), j.at("bias")};
    throw std::invalid_argument("unknown kernel kind: " + kind);
}

}  // namespace

std::string to_json(const PolicySpec& policy) {
    json j;
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, ParametricPolicy>) {
                j["kind"] = (p.basis == ParametricPolicy::Basis::Linear) ? "ldr" : "qdr";
                j["d_x"] = p.d_x;
                j["coef"] = matrix_to_json(p.coef);
                j["aux"] = p.aux_coef ? vector_to_json(*p.aux_coef) : json(nullptr);
            } else {
                j["kind"] = "rkhs";
                j["kernel"] = kernel_to_json(p.kernel);
                json centers = json::array();
                for (const auto& c : p.centers) centers.push_back(vector_to_json(c));
                j["centers"] = std::move(centers);
                j["alpha_z"] = matrix_to_json(p.alpha_z);
                j["alpha_s"] = p.alpha_s ? vector_to_json(*p.alpha_s) : json(nullptr);
            }
        },
        policy);
    return j.dump();
}

PolicySpec from_json(const std::string& text) {
    const json j = json::parse(text);
    const std::string kind = j.at("kind");
    if (kind == "ldr" || kind == "qdr") {
        ParametricPolicy p;
        p.basis = (kind == "ldr") ? ParametricPolicy::Basis::Linear
                                  : ParametricPolicy::Basis::Quadratic;
        p.d_x = j.at("d_x");
        p.coef = matrix_from_json(j.at("coef"));
        if (!j.at("aux").is_null()) p.aux_coef = vector_from_json(j.at("aux"));
        return p;
    }
    if (kind == "rkhs") {
        RkhsPolicy p;
        p.kernel = kernel_from_json(j.at("kernel"));
        for (const auto& c : j.at("centers")) p.centers.push_back(vector_from_json(c));
        p.alpha_z = matrix_from_json(j.at("alpha_z"));
        if (!j.at("alpha_s").is_null()) p.alpha_s = vector_from_json(j.at("alpha_s"));
        return p;
    }
    throw std::invalid_argument("unknown policy kind: " + kind);
}

}  // namespace riskctx::policy
