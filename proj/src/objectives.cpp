#include "riskctx/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace riskctx::objectives {

CostFn regret_cost(CostFn base, std::function<Eigen::VectorXd(const Eigen::VectorXd&)> hindsight) {
    CostFn out;
    out.d_z = base.d_z;
    out.eval = [base = std::move(base), hindsight = std::move(hindsight)](
                   const Eigen::VectorXd& z, const Eigen::VectorXd& y,
                   Eigen::VectorXd* grad) -> double {
        const double best = base.eval(hindsight(y), y, nullptr);
        return base.eval(z, y, grad) - best;
    };
    return out;
}

TrainingPolicy::TrainingPolicy(const policy::PolicySpec& shape,
                               const std::vector<Eigen::VectorXd>& covariates)
    : shape_(shape) {
    if (covariates.empty()) throw std::invalid_argument("TrainingPolicy: empty covariates");
    const Eigen::Index n = static_cast<Eigen::Index>(covariates.size());
    d_z_ = policy::output_dim(shape);
    has_aux_ = policy::has_aux(shape);
    n_params_ = policy::param_count(shape);

    if (const auto* par = std::get_if<policy::ParametricPolicy>(&shape)) {
        m_ = policy::parametric_feature_count(par->basis, par->d_x);
        features_.resize(n, m_);
        for (Eigen::Index i = 0; i < n; ++i)
            features_.row(i) =
                policy::parametric_features(par->basis, covariates[static_cast<std::size_t>(i)])
                    .transpose();
    } else {
        const auto& rk = std::get<policy::RkhsPolicy>(shape);
        m_ = static_cast<int>(rk.centers.size());
        features_ = kernel::cross_gram(rk.kernel, rk.centers, covariates).transpose();
        reg_metric_ = kernel::gram(rk.kernel, rk.centers).entries;
    }
}

void TrainingPolicy::eval_all(const Eigen::VectorXd& params, Eigen::MatrixXd& Z,
                              Eigen::VectorXd& s) const {
    if (params.size() != n_params_)
        throw std::invalid_argument("TrainingPolicy: parameter length mismatch");
    const Eigen::Map<const Eigen::MatrixXd> theta(params.data(), m_, d_z_);
    Z.resize(features_.rows(), d_z_);
    Z.noalias() = features_ * theta;
    if (has_aux_) {
        const Eigen::Map<const Eigen::VectorXd> theta_s(params.data() + m_ * d_z_, m_);
        s.resize(features_.rows());
        s.noalias() = features_ * theta_s;
    }
}

void TrainingPolicy::backprop(const Eigen::MatrixXd& dZ, const Eigen::VectorXd& ds,
                              Eigen::VectorXd& grad) const {
    Eigen::Map<Eigen::MatrixXd> dtheta(grad.data(), m_, d_z_);
    dtheta.noalias() += features_.transpose() * dZ;
    if (has_aux_) {
        Eigen::Map<Eigen::VectorXd> dtheta_s(grad.data() + m_ * d_z_, m_);
        dtheta_s.noalias() += features_.transpose() * ds;
    }
}

double TrainingPolicy::regularizer(const Eigen::VectorXd& params, double lambda,
                                   Eigen::VectorXd& grad) const {
    if (lambda == 0.0) return 0.0;
    const Eigen::Index blocks = d_z_ + (has_aux_ ? 1 : 0);
    double value = 0.0;
    for (Eigen::Index b = 0; b < blocks; ++b) {
        const Eigen::Map<const Eigen::VectorXd> theta(params.data() + b * m_, m_);
        Eigen::Map<Eigen::VectorXd> dtheta(grad.data() + b * m_, m_);
        if (reg_metric_.size() > 0) {
            const Eigen::VectorXd Kt = reg_metric_ * theta;
            value += theta.dot(Kt);
            dtheta.noalias() += (2.0 * lambda) * Kt;
        } else {
            value += theta.squaredNorm();
            dtheta.noalias() += (2.0 * lambda) * theta;
        }
    }
    return lambda * value;
}

namespace {

// Immutable per-objective data; scratch buffers are per evaluation so a
// single assembled objective can be evaluated from concurrent solvers.
struct SaaData {
    std::shared_ptr<const TrainingPolicy> pol;
    CostFn cost;
    std::vector<Eigen::VectorXd> outcomes;
    ObjectiveOptions opt;
    Eigen::Index n = 0;
};

struct Scratch {
    Eigen::MatrixXd Z;    // n x d_z
    Eigen::VectorXd s;    // n (aux map values)
    Eigen::VectorXd c;    // n costs
    Eigen::MatrixXd dc;   // n x d_z cost subgradients
    Eigen::MatrixXd dZ;   // accumulated d(objective)/dZ
    Eigen::VectorXd ds;   // accumulated d(objective)/ds
    Eigen::VectorXd zi;   // row buffer
    Eigen::VectorXd gz;   // cost gradient buffer
};

// Decisions, costs, penalty, regularizer and the optional mean term.
// Returns their value contribution with gradients seeded in scratch/grad.
double prepare(const SaaData& d, Scratch& sc, const Eigen::VectorXd& params,
               Eigen::VectorXd& grad) {
    const int dz = d.pol->d_z();
    d.pol->eval_all(params.head(d.pol->n_params()), sc.Z, sc.s);
    sc.c.resize(d.n);
    sc.dc.resize(d.n, dz);
    sc.zi.resize(dz);
    sc.gz.resize(dz);
    for (Eigen::Index i = 0; i < d.n; ++i) {
        sc.zi = sc.Z.row(i).transpose();
        sc.c(i) = d.cost.eval(sc.zi, d.outcomes[static_cast<std::size_t>(i)], &sc.gz);
        sc.dc.row(i) = sc.gz.transpose();
    }
    sc.dZ = Eigen::MatrixXd::Zero(d.n, dz);
    sc.ds = Eigen::VectorXd::Zero(d.pol->has_aux() ? d.n : 0);
    grad.setZero();

    double value = 0.0;
    if (d.opt.mean_term != 0.0) {
        const double w = d.opt.mean_term / static_cast<double>(d.n);
        value += w * sc.c.sum();
        sc.dZ += w * sc.dc;
    }
    if (d.opt.constraint) {
        const double mu = d.opt.penalty_weight;
        for (Eigen::Index i = 0; i < d.n; ++i) {
            sc.zi = sc.Z.row(i).transpose();
            const Eigen::VectorXd proj = policy::project(*d.opt.constraint, sc.zi);
            value += mu * (sc.zi - proj).squaredNorm();
            sc.dZ.row(i) += (2.0 * mu) * (sc.zi - proj).transpose();
        }
    }
    value += d.pol->regularizer(params.head(d.pol->n_params()), d.opt.lambda, grad);
    return value;
}

void finish(const SaaData& d, Scratch& sc, const Eigen::VectorXd& w, Eigen::VectorXd& grad) {
    sc.dZ += w.asDiagonal() * sc.dc;
    d.pol->backprop(sc.dZ, sc.ds, grad);
}

// exp with a C^1 convex linear extension above the threshold; keeps the
// entropic-family objectives finite under wild line-search iterates.
constexpr double kExpCap = 40.0;
double guarded_exp(double t) {
    if (t <= kExpCap) return std::exp(t);
    return std::exp(kExpCap) * (1.0 + (t - kExpCap));
}
double guarded_exp_deriv(double t) {
    if (t <= kExpCap) return std::exp(t);
    return std::exp(kExpCap);
}

using Body = std::function<double(const SaaData&, Scratch&, const Eigen::VectorXd&,
                                  Eigen::VectorXd&)>;

AssembledObjective make_assembled(std::shared_ptr<SaaData> data, int extra, bool smooth,
                                  Body body) {
    AssembledObjective out;
    out.structure = data->pol;
    out.policy_params = data->pol->n_params();
    out.extra_scalars = extra;
    out.objective.dimension = out.policy_params + extra;
    out.objective.smooth = smooth;
    out.objective.value_and_subgrad = [data, body](const Eigen::VectorXd& params,
                                                   Eigen::VectorXd& grad) -> double {
        Scratch sc;
        const double value = body(*data, sc, params, grad);
        for (const int idx : data->opt.frozen) grad(idx) = 0.0;
        return value;
    };
    return out;
}

std::shared_ptr<SaaData> make_data(const CostFn& cost, const EmpiricalSample& data,
                                   const policy::PolicySpec& shape, const ObjectiveOptions& opt) {
    if (data.size() == 0) throw std::invalid_argument("objective: empty sample");
    auto d = std::make_shared<SaaData>();
    d->pol = std::make_shared<const TrainingPolicy>(shape, data.covariates);
    d->cost = cost;
    d->outcomes = data.outcomes;
    d->opt = opt;
    d->n = static_cast<Eigen::Index>(data.size());
    return d;
}

}  // namespace

AssembledObjective exante_objective(const risk::RiskSpec& spec, const CostFn& cost,
                                    const EmpiricalSample& data, const policy::PolicySpec& shape,
                                    const ObjectiveOptions& opt) {
    auto d = make_data(cost, data, shape, opt);
    const double n = static_cast<double>(d->n);

    if (std::holds_alternative<risk::Mean>(spec)) {
        auto body = [n](const SaaData& dd, Scratch& sc, const Eigen::VectorXd& params,
                        Eigen::VectorXd& grad) {
            double value = prepare(dd, sc, params, grad);
            value += sc.c.sum() / n;
            finish(dd, sc, Eigen::VectorXd::Constant(dd.n, 1.0 / n), grad);
            return value;
        };
        return make_assembled(d, 0, false, body);
    }
    if (const auto* cv = std::get_if<risk::CVaR>(&spec)) {
        if (cv->beta < 0.0 || cv->beta >= 1.0) throw std::invalid_argument("beta-out-of-range");
        const double inv = 1.0 / ((1.0 - cv->beta) * n);
        auto body = [inv](const SaaData& dd, Scratch& sc, const Eigen::VectorXd& params,
                          Eigen::VectorXd& grad) {
            double value = prepare(dd, sc, params, grad);
            const double t = params(params.size() - 1);
            Eigen::VectorXd w = Eigen::VectorXd::Zero(dd.n);
            double tail = 0.0;
            for (Eigen::Index i = 0; i < dd.n; ++i) {
                const double excess = sc.c(i) - t;
                if (excess > 0.0) {
                    tail += excess;
                    w(i) = inv;
                }
            }
            value += t + inv * tail;
            grad(grad.size() - 1) += 1.0 - w.sum();
            finish(dd, sc, w, grad);
            return value;
        };
        return make_assembled(d, 1, false, body);
    }
    if (const auto* en = std::get_if<risk::Entropic>(&spec)) {
        // Delegating code path; the specialized assembler in
        // entropic_objective must agree with this one to 1e-10.
        const double gamma = en->gamma;
        if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
        auto body = [gamma](const SaaData& dd, Scratch& sc, const Eigen::VectorXd& params,
                            Eigen::VectorXd& grad) {
            double value = prepare(dd, sc, params, grad);
            value += risk::entropic(
                risk::LossSample::uniform(std::vector<double>(sc.c.data(), sc.c.data() + dd.n)),
                gamma);
            const double shift = sc.c.maxCoeff();
            Eigen::VectorXd w = (gamma * (sc.c.array() - shift)).exp();
            w /= w.sum();
            finish(dd, sc, w, grad);
            return value;
        };
        return make_assembled(d, 0, false, body);
    }
    if (const auto* sp = std::get_if<risk::SpectralDiscrete>(&spec)) {
        const auto atoms = sp->atoms;
        double total = 0.0;
        for (const auto& a : atoms) {
            if (!(a.weight > 0.0) || a.beta < 0.0 || a.beta >= 1.0)
                throw std::invalid_argument("spectral atoms invalid");
            total += a.weight;
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw std::invalid_argument("spectral atom weights must sum to 1");
        auto body = [atoms, n](const SaaData& dd, Scratch& sc, const Eigen::VectorXd& params,
                               Eigen::VectorXd& grad) {
            double value = prepare(dd, sc, params, grad);
            Eigen::VectorXd w = Eigen::VectorXd::Zero(dd.n);
            const Eigen::Index base =
                params.size() - static_cast<Eigen::Index>(atoms.size());
            for (std::size_t j = 0; j < atoms.size(); ++j) {
                const double t = params(base + static_cast<Eigen::Index>(j));
                const double inv = 1.0 / ((1.0 - atoms[j].beta) * n);
                double tail = 0.0;
                double mass = 0.0;
                for (Eigen::Index i = 0; i < dd.n; ++i) {
                    const double excess = sc.c(i) - t;
                    if (excess > 0.0) {
                        tail += excess;
                        w(i) += atoms[j].weight * inv;
                        mass += inv;
                    }
                }
                value += atoms[j].weight * (t + inv * tail);
                grad(base + static_cast<Eigen::Index>(j)) += atoms[j].weight * (1.0 - mass);
            }
            finish(dd, sc, w, grad);
            return value;
        };
        return make_assembled(d, static_cast<int>(atoms.size()), false, body);
    }
    if (const auto* qd = std::get_if<risk::QuantileDeviation>(&spec)) {
        const double e1 = qd->eps1, e2 = qd->eps2;
        if (!(e1 > 0.0) || !(e2 > 0.0))
            throw std::invalid_argument("quantile-deviation eps must be positive");
        auto body = [e1, e2, n](const SaaData& dd, Scratch& sc, const Eigen::VectorXd& params,
                                Eigen::VectorXd& grad) {
            double value = prepare(dd, sc, params, grad);
            const double t = params(params.size() - 1);
            Eigen::VectorXd w(dd.n);
            double dt = 0.0;
            for (Eigen::Index i = 0; i < dd.n; ++i) {
                const double lo = e1 * (t - sc.c(i));
                const double hi = e2 * (sc.c(i) - t);
                if (lo >= hi) {
                    value += lo / n;
                    dt += e1 / n;
                    w(i) = -e1 / n;
                } else {
                    value += hi / n;
                    dt -= e2 / n;
                    w(i) = e2 / n;
                }
            }
            grad(grad.size() - 1) += dt;
            finish(dd, sc, w, grad);
            return value;
        };
        return make_assembled(d, 1, false, body);
    }
    throw std::invalid_argument("risk-not-ex-ante-solvable");
}

AssembledObjective expected_oce_objective(const risk::UtilitySpec& utility, const CostFn& cost,
                                          const EmpiricalSample& data,
                                          const policy::PolicySpec& shape,
                                          const ObjectiveOptions& opt) {
    if (!policy::has_aux(shape)) throw std::invalid_argument("auxiliary-required");
    auto d = make_data(cost, data, shape, opt);
    const double n = static_cast<double>(d->n);

    std::function<double(double)> uval, uder;
    bool smooth = false;
    if (const auto* pw = std::get_if<risk::PiecewiseLinearCVaR>(&utility)) {
        if (pw->beta < 0.0 || pw->beta >= 1.0) throw std::invalid_argument("beta-out-of-range");
        const double slope = 1.0 / (1.0 - pw->beta);
        uval = [slope](double v) { return v <= 0.0 ? slope * v : 0.0; };
        uder = [slope](double v) { return v < 0.0 ? slope : 0.0; };
    } else if (const auto* ex = std::get_if<risk::ExponentialUtility>(&utility)) {
        if (!(ex->gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
        const double g = ex->gamma;
        smooth = true;  // smooth except at cost kinks
        uval = [g](double v) { return (1.0 - guarded_exp(-g * v)) / g; };
        uder = [g](double v) { return guarded_exp_deriv(-g * v); };
    } else {
        const auto pwl = std::get<risk::CustomPwl>(utility);
        if (pwl.slopes.empty()) throw std::invalid_argument("custom-pwl empty slopes");
        if (pwl.slopes.front() < 1.0 - 1e-12 || pwl.slopes.back() > 1.0 + 1e-12)
            throw std::invalid_argument("oce-unbounded");
        uval = [pwl](double v) { return pwl.value(v); };
        uder = [pwl](double v) { return pwl.slope_at(v); };
    }

    auto body = [uval, uder, n](const SaaData& dd, Scratch& sc, const Eigen::VectorXd& params,
                                Eigen::VectorXd& grad) {
        double value = prepare(dd, sc, params, grad);
        Eigen::VectorXd w(dd.n);
        for (Eigen::Index i = 0; i < dd.n; ++i) {
            const double si = sc.s(i);
            const double v = -sc.c(i) - si;
            value += (-si - uval(v)) / n;
            const double du = uder(v);
            w(i) = du / n;
            sc.ds(i) += (-1.0 + du) / n;
        }
        finish(dd, sc, w, grad);
        return value;
    };
    return make_assembled(d, 0, smooth, body);
}

AssembledObjective entropic_objective(double gamma, const CostFn& cost,
                                      const EmpiricalSample& data, const policy::PolicySpec& shape,
                                      const ObjectiveOptions& opt) {
    if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
    auto d = make_data(cost, data, shape, opt);
    const double n = static_cast<double>(d->n);

    auto body = [gamma, n](const SaaData& dd, Scratch& sc, const Eigen::VectorXd& params,
                           Eigen::VectorXd& grad) {
        double value = prepare(dd, sc, params, grad);
        const double shift = sc.c.maxCoeff();
        Eigen::VectorXd e(dd.n);
        for (Eigen::Index i = 0; i < dd.n; ++i) e(i) = std::exp(gamma * (sc.c(i) - shift));
        const double total = e.sum();
        value += shift + std::log(total / n) / gamma;
        finish(dd, sc, e / total, grad);
        return value;
    };
    return make_assembled(d, 0, true, body);
}

AssembledObjective expected_mean_semidev_objective(double eta, const CostFn& cost,
                                                   const EmpiricalSample& data,
                                                   const policy::PolicySpec& shape,
                                                   const ObjectiveOptions& opt) {
    if (eta < 0.0 || eta > 1.0) throw std::invalid_argument("eta-out-of-range");
    if (!policy::has_aux(shape)) throw std::invalid_argument("auxiliary-required");
    auto d = make_data(cost, data, shape, opt);
    const double n = static_cast<double>(d->n);

    // Samples sharing a covariate share the adversarial variable s(x).
    std::map<std::vector<double>, std::vector<Eigen::Index>> grouped;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& x = data.covariates[i];
        grouped[std::vector<double>(x.data(), x.data() + x.size())].push_back(
            static_cast<Eigen::Index>(i));
    }
    std::vector<std::vector<Eigen::Index>> groups;
    groups.reserve(grouped.size());
    for (auto& [key, idx] : grouped) groups.push_back(std::move(idx));

    auto body = [eta, n, groups](const SaaData& dd, Scratch& sc, const Eigen::VectorXd& params,
                                 Eigen::VectorXd& grad) {
        double value = prepare(dd, sc, params, grad);
        Eigen::VectorXd w(dd.n);
        for (const auto& group : groups) {
            double gap = 0.0;
            for (Eigen::Index i : group) gap += sc.s(i) - sc.c(i);
            const double s_star = gap > 0.0 ? 1.0 : 0.0;
            for (Eigen::Index i : group) {
                const double ci = sc.c(i);
                const double ti = sc.s(i);
                const double over = std::max(ci - ti, 0.0);
                value += (ci + eta * s_star * (ti - ci) + eta * over) / n;
                const double ind = ci > ti ? 1.0 : 0.0;
                w(i) = (1.0 - eta * s_star + eta * ind) / n;
                sc.ds(i) += eta * (s_star - ind) / n;
            }
        }
        finish(dd, sc, w, grad);
        return value;
    };
    return make_assembled(d, 0, false, body);
}

}  // namespace riskctx::objectives
