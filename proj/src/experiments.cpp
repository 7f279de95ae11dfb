#include "riskctx/experiments.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "riskctx/kernel.hpp"
#include "riskctx/nested.hpp"
#include "riskctx/newsvendor.hpp"
#include "riskctx/portfolio.hpp"
#include "riskctx/risk.hpp"
#include "riskctx/solve.hpp"
#include "riskctx/stats.hpp"

namespace riskctx::experiments {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kExperiments = {"NvLinearPolicies", "NvSaaLinear", "NvSaaRkhs",
                                               "NestedDemo", "Portfolio"};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return 0.0;
    const double h = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(h);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

struct Stats {
    double mean, min, q1, median, q3, max;
};

Stats summarize(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    double total = 0.0;
    for (double x : v) total += x;
    return {total / static_cast<double>(v.size()),
            v.front(),
            quantile_sorted(v, 0.25),
            quantile_sorted(v, 0.5),
            quantile_sorted(v, 0.75),
            v.back()};
}

// First-exception-wins worker pool over trial indices.
void parallel_trials(int n, int threads, const std::function<void(int)>& body) {
    threads = std::max(1, threads);
    if (threads == 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
        for (int i; (i = next.fetch_add(1)) < n;) {
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << content;
}

double sorted_quantile_of(std::vector<double> values, double q) {
    std::sort(values.begin(), values.end());
    const double h = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(h);
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

}  // namespace

std::string nv_model_name(NvModel m) {
    switch (m) {
        case NvModel::ExanteCvar: return "exante_cvar";
        case NvModel::ExpectedCvar: return "expected_cvar";
        case NvModel::Entropic: return "entropic";
        case NvModel::ExpectedEntropic: return "expected_entropic";
    }
    return "?";
}

std::string policy_class_name(PolicyClass c) {
    switch (c) {
        case PolicyClass::LDR: return "LDR";
        case PolicyClass::QDR: return "QDR";
        case PolicyClass::RKHS: return "RKHS";
    }
    return "?";
}

double relative_average_distance(const std::vector<double>& policy_values,
                                 const std::vector<double>& oracle_values) {
    if (policy_values.size() != oracle_values.size() || policy_values.empty())
        throw std::invalid_argument("relative_average_distance: length mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < policy_values.size(); ++i) {
        num += std::abs(policy_values[i] - oracle_values[i]);
        den += std::abs(oracle_values[i]);
    }
    return num / den;
}

double nv_decide(const policy::PolicySpec& policy, const Eigen::VectorXd& x) {
    return policy::evaluate(policy, x).z(0);
}

policy::PolicySpec train_nv_policy(const objectives::EmpiricalSample& data, NvModel model,
                                   PolicyClass cls, const NvTrainOptions& opt) {
    const Eigen::Index n = static_cast<Eigen::Index>(data.size());
    const int d_x = data.d_x();
    const bool expected = (model == NvModel::ExpectedCvar || model == NvModel::ExpectedEntropic);
    const bool cvar_family = (model == NvModel::ExanteCvar || model == NvModel::ExpectedCvar);
    const newsvendor::NvParams nv;
    const auto cost = newsvendor::nv_cost_fn(nv);

    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = data.outcomes[static_cast<std::size_t>(i)](0);

    // Warm start: least-squares fit of the demand, then a scalar shift chosen
    // by the trained risk measure (1-D convex search).
    policy::PolicySpec shape;
    Eigen::VectorXd fitted(n);
    Eigen::LLT<Eigen::MatrixXd> rkhs_llt;
    Eigen::MatrixXd F;  // parametric feature matrix

    if (cls == PolicyClass::RKHS) {
        const double ls =
            opt.lengthscale.value_or(kernel::median_heuristic(data.covariates));
        shape = policy::make_rkhs(kernel::GaussianKernel{ls}, data.covariates, 1, expected);
        const Eigen::MatrixXd K =
            kernel::gram(kernel::GaussianKernel{ls}, data.covariates).entries;
        Eigen::MatrixXd A = K;
        A.diagonal().array() += 0.1;
        rkhs_llt.compute(A);
        fitted = K * rkhs_llt.solve(y);
    } else {
        const auto basis = (cls == PolicyClass::LDR) ? policy::ParametricPolicy::Basis::Linear
                                                     : policy::ParametricPolicy::Basis::Quadratic;
        const int m = policy::parametric_feature_count(basis, d_x);
        F.resize(n, m);
        for (Eigen::Index i = 0; i < n; ++i)
            F.row(i) =
                policy::parametric_features(basis, data.covariates[static_cast<std::size_t>(i)])
                    .transpose();
        Eigen::MatrixXd G = F.transpose() * F;
        G.diagonal().array() += 1e-6 * static_cast<double>(n);
        const Eigen::VectorXd theta0 = G.ldlt().solve(F.transpose() * y);
        fitted = F * theta0;
        policy::ParametricPolicy par;
        par.basis = basis;
        par.d_x = d_x;
        par.coef = theta0.transpose();
        if (expected) par.aux_coef = Eigen::VectorXd::Zero(m);
        shape = par;
    }

    auto costs_at_shift = [&](double delta) {
        std::vector<double> costs(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i)
            costs[static_cast<std::size_t>(i)] = newsvendor::nv_cost(fitted(i) + delta, y(i), nv);
        return risk::LossSample::uniform(std::move(costs));
    };
    auto shift_objective = [&](double delta) {
        const auto sample = costs_at_shift(delta);
        return cvar_family ? risk::cvar(sample, opt.beta) : risk::entropic(sample, opt.gamma);
    };
    const double span = std::max(1.0, y.maxCoeff() - y.minCoeff());
    const double delta = solve::golden_section(shift_objective, -span, span, 1e-6);

    // Bake the shift into the initial parameters.
    if (cls == PolicyClass::RKHS) {
        auto& rk = std::get<policy::RkhsPolicy>(shape);
        const Eigen::VectorXd target = y.array() + delta;
        rk.alpha_z.col(0) = rkhs_llt.solve(target);
    } else {
        auto& par = std::get<policy::ParametricPolicy>(shape);
        par.coef(0, 0) += delta;
    }

    // Auxiliary initialization from the shifted initial costs.
    const auto init_costs = costs_at_shift(delta);
    if (expected) {
        double aux0;
        if (model == NvModel::ExpectedCvar) {
            // s(x) = -t(x); start t at the beta-quantile of the costs.
            std::vector<double> sorted = init_costs.values;
            std::sort(sorted.begin(), sorted.end());
            aux0 = -sorted_quantile_of(sorted, opt.beta);
        } else {
            aux0 = -risk::entropic(init_costs, opt.gamma);
        }
        if (cls == PolicyClass::RKHS) {
            std::get<policy::RkhsPolicy>(shape).alpha_s =
                rkhs_llt.solve(Eigen::VectorXd::Constant(n, aux0));
        } else {
            (*std::get<policy::ParametricPolicy>(shape).aux_coef)(0) = aux0;
        }
    }

    const double lambda0 =
        opt.lambda0.value_or(cls == PolicyClass::RKHS ? 1e-4 : 0.0);
    objectives::ObjectiveOptions oo;
    oo.lambda = lambda0 / std::sqrt(static_cast<double>(n));
    if (opt.constant_aux && expected && cls != PolicyClass::RKHS) {
        // pin every auxiliary coefficient except its intercept
        const int m = policy::parametric_feature_count(
            std::get<policy::ParametricPolicy>(shape).basis, d_x);
        for (int idx = m + 1; idx < 2 * m; ++idx) oo.frozen.push_back(idx);
    }

    objectives::AssembledObjective assembled;
    Eigen::VectorXd init;
    switch (model) {
        case NvModel::ExanteCvar: {
            assembled = objectives::exante_objective(risk::CVaR{opt.beta}, cost, data, shape, oo);
            init.resize(assembled.objective.dimension);
            init.head(assembled.policy_params) = policy::flatten(shape);
            std::vector<double> sorted = init_costs.values;
            std::sort(sorted.begin(), sorted.end());
            init(init.size() - 1) = sorted_quantile_of(sorted, opt.beta);
            break;
        }
        case NvModel::ExpectedCvar:
            assembled = objectives::expected_oce_objective(risk::PiecewiseLinearCVaR{opt.beta},
                                                           cost, data, shape, oo);
            init = policy::flatten(shape);
            break;
        case NvModel::Entropic:
            assembled = objectives::entropic_objective(opt.gamma, cost, data, shape, oo);
            init = policy::flatten(shape);
            break;
        case NvModel::ExpectedEntropic:
            assembled = objectives::expected_oce_objective(risk::ExponentialUtility{opt.gamma},
                                                           cost, data, shape, oo);
            init = policy::flatten(shape);
            break;
    }

    solve::SolveResult result;
    if (assembled.objective.smooth) {
        solve::SolveConfig cfg;
        cfg.schedule = solve::StepSchedule::ArmijoBacktracking;
        cfg.max_iters = opt.max_iters;
        cfg.tolerance = 1e-12;
        result = solve::minimize(assembled.objective, init, cfg);
    } else {
        result = solve::staged_minimize(assembled.objective, init, opt.max_iters, 5, 0.3);
    }
    return policy::unflatten(shape, assembled.policy_part(result.best_params));
}

// ---- configuration ----

ExperimentConfig parse_config(const std::string& json_text, std::vector<ValidationError>& errors) {
    ExperimentConfig cfg;
    json j;
    try {
        j = json::parse(json_text);
    } catch (const std::exception& e) {
        errors.push_back({"", std::string("not valid JSON: ") + e.what()});
        return cfg;
    }
    auto get = [&](const char* key, auto& slot) {
        if (!j.contains(key)) return;
        try {
            slot = j.at(key).get<std::decay_t<decltype(slot)>>();
        } catch (const std::exception&) {
            errors.push_back({key, "wrong type"});
        }
    };
    get("experiment", cfg.experiment);
    get("seed", cfg.seed);
    get("trials", cfg.trials);
    get("sample_sizes", cfg.sample_sizes);
    get("n_test", cfg.n_test);
    get("beta", cfg.beta);
    get("gamma", cfg.gamma);
    get("eta", cfg.eta);
    get("tau", cfg.tau);
    get("p", cfg.p);
    if (j.contains("lambda0") && !j.at("lambda0").is_null()) {
        try {
            cfg.lambda0 = j.at("lambda0").get<double>();
        } catch (const std::exception&) {
            errors.push_back({"lambda0", "wrong type"});
        }
    }
    get("max_iters", cfg.max_iters);
    get("grid_points", cfg.grid_points);
    get("mc_oracle_n", cfg.mc_oracle_n);
    get("objective", cfg.objective);
    get("out_dir", cfg.out_dir);
    if (j.contains("lengthscale") && !j.at("lengthscale").is_null()) {
        try {
            cfg.lengthscale = j.at("lengthscale").get<double>();
        } catch (const std::exception&) {
            errors.push_back({"lengthscale", "wrong type"});
        }
    }

    if (std::find(kExperiments.begin(), kExperiments.end(), cfg.experiment) ==
        kExperiments.end()) {
        std::string valid;
        for (const auto& name : kExperiments) valid += (valid.empty() ? "" : ", ") + name;
        errors.push_back({"experiment", "unknown experiment '" + cfg.experiment +
                                            "'; valid names: " + valid});
    }
    if (cfg.trials < 1) errors.push_back({"trials", "must be >= 1"});
    if (cfg.sample_sizes.empty()) errors.push_back({"sample_sizes", "must be nonempty"});
    for (std::size_t i = 0; i < cfg.sample_sizes.size(); ++i)
        if (cfg.sample_sizes[i] < 1)
            errors.push_back({"sample_sizes[" + std::to_string(i) + "]", "must be >= 1"});
    if (cfg.n_test < 1) errors.push_back({"n_test", "must be >= 1"});
    if (cfg.beta < 0.0 || cfg.beta >= 1.0) errors.push_back({"beta", "must lie in [0,1)"});
    if (!(cfg.gamma > 0.0)) errors.push_back({"gamma", "must be positive"});
    for (std::size_t i = 0; i < cfg.eta.size(); ++i)
        if (cfg.eta[i] < 0.0) errors.push_back({"eta[" + std::to_string(i) + "]", "must be >= 0"});
    if (cfg.eta.empty()) errors.push_back({"eta", "must be nonempty"});
    for (std::size_t i = 0; i < cfg.tau.size(); ++i)
        if (!(cfg.tau[i] > 0.0))
            errors.push_back({"tau[" + std::to_string(i) + "]", "must be positive"});
    if (cfg.tau.empty()) errors.push_back({"tau", "must be nonempty"});
    for (std::size_t i = 0; i < cfg.p.size(); ++i)
        if (cfg.p[i] < 1) errors.push_back({"p[" + std::to_string(i) + "]", "must be >= 1"});
    if (cfg.p.empty()) errors.push_back({"p", "must be nonempty"});
    if (cfg.lambda0 && *cfg.lambda0 < 0.0) errors.push_back({"lambda0", "must be >= 0"});
    if (cfg.lengthscale && !(*cfg.lengthscale > 0.0))
        errors.push_back({"lengthscale", "must be positive"});
    if (cfg.max_iters < 1) errors.push_back({"max_iters", "must be >= 1"});
    if (cfg.grid_points < 2) errors.push_back({"grid_points", "must be >= 2"});
    if (cfg.mc_oracle_n < 2) errors.push_back({"mc_oracle_n", "must be >= 2"});
    if (cfg.objective != "expected_cvar" && cfg.objective != "entropic")
        errors.push_back({"objective", "must be expected_cvar or entropic"});
    return cfg;
}

std::vector<ValidationError> validate_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) return {{"", "cannot read file: " + path}};
    std::stringstream buffer;
    buffer << is.rdbuf();
    std::vector<ValidationError> errors;
    parse_config(buffer.str(), errors);
    return errors;
}

// ---- experiment runners ----

namespace {

std::vector<double> linear_x_grid(int points) {
    const double lo = std::exp(0.0), hi = std::exp(2.0);
    std::vector<double> grid(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i)
        grid[static_cast<std::size_t>(i)] =
            lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    return grid;
}

std::vector<Eigen::VectorXd> nonlinear_x_grid(int points) {
    // ~points grid over [0,2]^2.
    const int side = std::max(2, static_cast<int>(std::round(std::sqrt(points))));
    std::vector<Eigen::VectorXd> grid;
    grid.reserve(static_cast<std::size_t>(side * side));
    for (int i = 0; i < side; ++i)
        for (int j = 0; j < side; ++j) {
            Eigen::VectorXd x(2);
            x << 2.0 * static_cast<double>(i) / static_cast<double>(side - 1),
                2.0 * static_cast<double>(j) / static_cast<double>(side - 1);
            grid.push_back(x);
        }
    return grid;
}

// Comparison oracle for each trained model on the linear problem.
std::vector<double> oracle_curve_linear(NvModel model, const std::vector<double>& grid,
                                        const ExperimentConfig& cfg) {
    const newsvendor::NvParams nv;
    std::vector<double> out(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto cond = newsvendor::conditional_law_linear(grid[i]);
        switch (model) {
            case NvModel::ExanteCvar:
            case NvModel::ExpectedCvar:
                out[i] = newsvendor::oracle_cvar(cond, cfg.beta, nv).z_star;
                break;
            case NvModel::Entropic:
            case NvModel::ExpectedEntropic:
                out[i] = newsvendor::oracle_entropic(cond, cfg.gamma, nv, cfg.mc_oracle_n,
                                                     cfg.seed);
                break;
        }
    }
    return out;
}

std::vector<double> oracle_curve_nonlinear(const std::string& objective,
                                           const std::vector<Eigen::VectorXd>& grid,
                                           const ExperimentConfig& cfg) {
    const newsvendor::NvParams nv;
    std::vector<double> out(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto cond = newsvendor::conditional_law_nonlinear(grid[i](0), grid[i](1));
        if (objective == "expected_cvar")
            out[i] = newsvendor::oracle_cvar(cond, cfg.beta, nv).z_star;
        else
            out[i] = newsvendor::oracle_entropic(cond, cfg.gamma, nv, cfg.mc_oracle_n, cfg.seed);
    }
    return out;
}

struct NvRow {
    int trial;
    std::string model;
    int n;
    double rel_distance;
    std::uint64_t seed;
    double lambda;
};

std::string nv_rows_to_csv(const std::vector<NvRow>& rows) {
    std::ostringstream os;
    os << "trial,model,N,rel_distance,seed,lambda\n";
    for (const auto& r : rows)
        os << r.trial << "," << r.model << "," << r.n << "," << fmt(r.rel_distance) << ","
           << r.seed << "," << fmt(r.lambda) << "\n";
    return os.str();
}

json nv_summary(const std::vector<NvRow>& rows) {
    std::map<std::string, std::map<int, std::vector<double>>> grouped;
    for (const auto& r : rows) grouped[r.model][r.n].push_back(r.rel_distance);
    json out;
    for (const auto& [model, by_n] : grouped) {
        json per_n;
        for (const auto& [n, vals] : by_n) {
            const Stats s = summarize(vals);
            per_n[std::to_string(n)] = {{"mean", s.mean},     {"min", s.min}, {"q1", s.q1},
                                        {"median", s.median}, {"q3", s.q3},   {"max", s.max},
                                        {"trials", vals.size()}};
        }
        out[model] = std::move(per_n);
    }
    return out;
}

std::string nv_boxplot_csv(const std::vector<NvRow>& rows) {
    std::map<std::string, std::map<int, std::vector<double>>> grouped;
    for (const auto& r : rows) grouped[r.model][r.n].push_back(r.rel_distance);
    std::ostringstream os;
    os << "model,N,min,q1,median,q3,max\n";
    for (const auto& [model, by_n] : grouped)
        for (const auto& [n, vals] : by_n) {
            const Stats s = summarize(vals);
            os << model << "," << n << "," << fmt(s.min) << "," << fmt(s.q1) << ","
               << fmt(s.median) << "," << fmt(s.q3) << "," << fmt(s.max) << "\n";
        }
    return os.str();
}

int run_nv_linear_policies(const ExperimentConfig& cfg, const fs::path& out, int threads) {
    const int n = cfg.sample_sizes.front();
    const auto data = newsvendor::gen_linear(n, cfg.seed);
    const auto grid = linear_x_grid(cfg.grid_points);
    const newsvendor::NvParams nv;

    NvTrainOptions topt;
    topt.beta = cfg.beta;
    topt.gamma = cfg.gamma;
    topt.lambda0 = cfg.lambda0;
    topt.lengthscale = cfg.lengthscale;
    topt.max_iters = cfg.max_iters;

    const std::vector<NvModel> models = {NvModel::ExanteCvar, NvModel::ExpectedCvar,
                                         NvModel::Entropic, NvModel::ExpectedEntropic};
    std::vector<policy::PolicySpec> trained(models.size());
    parallel_trials(static_cast<int>(models.size()), threads, [&](int i) {
        trained[static_cast<std::size_t>(i)] =
            train_nv_policy(data, models[static_cast<std::size_t>(i)], PolicyClass::LDR, topt);
    });

    std::vector<NvRow> rows;
    std::vector<std::vector<double>> curves(models.size());
    for (std::size_t m = 0; m < models.size(); ++m) {
        curves[m].resize(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i)
            curves[m][i] = nv_decide(trained[m], Eigen::VectorXd::Constant(1, grid[i]));
        const auto oracle = oracle_curve_linear(models[m], grid, cfg);
        rows.push_back({0, nv_model_name(models[m]), n,
                        relative_average_distance(curves[m], oracle), cfg.seed,
                        cfg.lambda0.value_or(0.0) / std::sqrt(static_cast<double>(n))});
    }

    // Policy curves with the reference oracles.
    std::ostringstream pc;
    pc << "x";
    for (const auto m : models) pc << "," << nv_model_name(m);
    pc << ",oracle_rn,oracle_cvar,oracle_entropic\n";
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto cond = newsvendor::conditional_law_linear(grid[i]);
        pc << fmt(grid[i]);
        for (std::size_t m = 0; m < models.size(); ++m) pc << "," << fmt(curves[m][i]);
        pc << "," << fmt(newsvendor::oracle_rn(cond, nv)) << ","
           << fmt(newsvendor::oracle_cvar(cond, cfg.beta, nv).z_star) << ","
           << fmt(newsvendor::oracle_entropic(cond, cfg.gamma, nv, cfg.mc_oracle_n, cfg.seed))
           << "\n";
    }

    write_file(out / "results.csv", nv_rows_to_csv(rows));
    write_file(out / "plotdata" / "policies.csv", pc.str());
    json summary;
    summary["experiment"] = cfg.experiment;
    summary["N"] = n;
    summary["models"] = nv_summary(rows);
    write_file(out / "summary.json", summary.dump(2));
    return 0;
}

int run_nv_saa(const ExperimentConfig& cfg, const fs::path& out, int threads, bool rkhs_variant) {
    NvTrainOptions topt;
    topt.beta = cfg.beta;
    topt.gamma = cfg.gamma;
    topt.lambda0 = cfg.lambda0;
    topt.lengthscale = cfg.lengthscale;
    topt.max_iters = cfg.max_iters;

    struct Task {
        int n;
        int trial;
        NvModel model;
        PolicyClass cls;
    };
    std::vector<Task> tasks;

    // Oracle curves are shared across trials.
    std::map<std::string, std::vector<double>> oracles;
    std::vector<double> grid_lin;
    std::vector<Eigen::VectorXd> grid_nl;
    std::vector<std::pair<NvModel, PolicyClass>> combos;
    if (rkhs_variant) {
        grid_nl = nonlinear_x_grid(cfg.grid_points);
        const NvModel model =
            (cfg.objective == "entropic") ? NvModel::Entropic : NvModel::ExpectedCvar;
        oracles["all"] = oracle_curve_nonlinear(cfg.objective, grid_nl, cfg);
        combos = {{model, PolicyClass::LDR}, {model, PolicyClass::QDR}, {model, PolicyClass::RKHS}};
    } else {
        grid_lin = linear_x_grid(cfg.grid_points);
        combos = {{NvModel::ExpectedCvar, PolicyClass::LDR},
                  {NvModel::Entropic, PolicyClass::LDR},
                  {NvModel::ExpectedEntropic, PolicyClass::LDR}};
        for (const auto& [m, c] : combos)
            oracles[nv_model_name(m)] = oracle_curve_linear(m, grid_lin, cfg);
    }

    for (std::size_t ni = 0; ni < cfg.sample_sizes.size(); ++ni)
        for (int t = 0; t < cfg.trials; ++t)
            for (const auto& [m, c] : combos) tasks.push_back({cfg.sample_sizes[ni], t, m, c});

    std::vector<NvRow> rows(tasks.size());
    parallel_trials(static_cast<int>(tasks.size()), threads, [&](int idx) {
        const Task& task = tasks[static_cast<std::size_t>(idx)];
        try {
        // One dataset per (N, trial); model variants share it.
        std::uint64_t data_seed = cfg.seed;
        for (std::size_t ni = 0; ni < cfg.sample_sizes.size(); ++ni)
            if (cfg.sample_sizes[ni] == task.n)
                data_seed = cfg.seed + ni * static_cast<std::size_t>(cfg.trials) +
                            static_cast<std::size_t>(task.trial);
        const auto data = rkhs_variant ? newsvendor::gen_nonlinear(task.n, data_seed)
                                       : newsvendor::gen_linear(task.n, data_seed);
        const auto trained = train_nv_policy(data, task.model, task.cls, topt);

        std::vector<double> curve;
        const std::vector<double>* oracle = nullptr;
        if (rkhs_variant) {
            curve.resize(grid_nl.size());
            for (std::size_t i = 0; i < grid_nl.size(); ++i)
                curve[i] = nv_decide(trained, grid_nl[i]);
            oracle = &oracles.at("all");
        } else {
            curve.resize(grid_lin.size());
            for (std::size_t i = 0; i < grid_lin.size(); ++i)
                curve[i] = nv_decide(trained, Eigen::VectorXd::Constant(1, grid_lin[i]));
            oracle = &oracles.at(nv_model_name(task.model));
        }
        const std::string label = rkhs_variant
                                      ? policy_class_name(task.cls)
                                      : nv_model_name(task.model);
        const double lambda0 = cfg.lambda0.value_or(task.cls == PolicyClass::RKHS ? 1e-4 : 0.0);
        rows[static_cast<std::size_t>(idx)] = {task.trial,
                                               label,
                                               task.n,
                                               relative_average_distance(curve, *oracle),
                                               data_seed,
                                               lambda0 / std::sqrt(static_cast<double>(task.n))};
        } catch (const std::exception& e) {
            throw std::runtime_error("trial " + std::to_string(task.trial) + " (N=" +
                                     std::to_string(task.n) + "): " + e.what());
        }
    });

    write_file(out / "results.csv", nv_rows_to_csv(rows));
    write_file(out / "plotdata" / "boxplot.csv", nv_boxplot_csv(rows));
    json summary;
    summary["experiment"] = cfg.experiment;
    summary["models"] = nv_summary(rows);
    write_file(out / "summary.json", summary.dump(2));
    return 0;
}

int run_nested_demo(const ExperimentConfig& cfg, const fs::path& out) {
    const auto findings = nested::counterexample_ex_ante_cvar();
    const auto cost = newsvendor::nv_cost_fn(newsvendor::NvParams{});
    const risk::RiskSpec cvar_spec = risk::CVaR{findings.beta};

    // Consistency of three ex-ante evaluators on the built-in instance.
    auto nested_mean = [&](const nested::TabularPolicy& g) {
        return nested::nested_risk(findings.joint, risk::Mean{}, cvar_spec, cost, g);
    };
    auto exante_entropic = [&](const nested::TabularPolicy& g) {
        return nested::exante_risk(findings.joint, risk::Entropic{0.5}, cost, g);
    };
    auto exante_cvar = [&](const nested::TabularPolicy& g) {
        return nested::exante_risk(findings.joint, cvar_spec, cost, g);
    };
    const auto grids = nested::default_grids(findings.joint);
    const auto conditional = nested::solve_conditional(findings.joint, cvar_spec, cost, grids);
    std::vector<std::pair<nested::TabularPolicy, nested::TabularPolicy>> pair = {
        {conditional.policy, findings.exante_optimal}};

    const auto rep_mean = nested::check_contextual_consistency(findings.joint, nested_mean,
                                                               cvar_spec, cost, 200, cfg.seed);
    const auto rep_ent = nested::check_contextual_consistency(
        findings.joint, exante_entropic, risk::Entropic{0.5}, cost, 200, cfg.seed);
    const auto rep_cvar = nested::check_contextual_consistency(findings.joint, exante_cvar,
                                                               cvar_spec, cost, 200, cfg.seed,
                                                               pair);

    std::ostringstream csv;
    csv << "finding,value\n";
    csv << "exante_cvar_conditional_margin," << fmt(findings.exante_margin) << "\n";
    csv << "nested_cvar_suboptimal_gap," << fmt(findings.nested_example_gap) << "\n";
    csv << "nested_optimum," << fmt(findings.nested_optimum) << "\n";
    csv << "conditional_attains_nested," << (findings.conditional_attains_nested ? 1 : 0) << "\n";
    csv << "entropic_nested_matches_conditional,"
        << (findings.entropic_nested_matches_conditional ? 1 : 0) << "\n";
    csv << "consistency_violations_nested_mean," << rep_mean.violations << "\n";
    csv << "consistency_violations_exante_entropic," << rep_ent.violations << "\n";
    csv << "consistency_violations_exante_cvar," << rep_cvar.violations << "\n";
    write_file(out / "results.csv", csv.str());

    json summary;
    summary["experiment"] = cfg.experiment;
    summary["beta"] = findings.beta;
    summary["exante_cvar"] = {{"conditional_gaps", findings.exante_conditional_gap},
                              {"margin", findings.exante_margin}};
    summary["nested_cvar"] = {{"optimum", findings.nested_optimum},
                              {"suboptimal_optimizer_gap", findings.nested_example_gap},
                              {"conditional_attains_nested", findings.conditional_attains_nested}};
    summary["entropic_outer"] = {
        {"nested_matches_conditional", findings.entropic_nested_matches_conditional}};
    summary["consistency"] = {
        {"nested_mean", {{"pairs", rep_mean.pairs_checked}, {"violations", rep_mean.violations}}},
        {"exante_entropic",
         {{"pairs", rep_ent.pairs_checked}, {"violations", rep_ent.violations}}},
        {"exante_cvar",
         {{"pairs", rep_cvar.pairs_checked},
          {"violations", rep_cvar.violations},
          {"worst_gap", rep_cvar.worst_gap}}}};
    summary["instance"] = json::parse(findings.joint.to_json());
    write_file(out / "summary.json", summary.dump(2));
    return 0;
}

struct PortfolioRow {
    int trial;
    std::string model;
    double eta, tau;
    int p, n;
    portfolio::PortfolioMetrics metrics;
    std::uint64_t seed;
    double lambda;
};

int run_portfolio(const ExperimentConfig& cfg, const fs::path& out, int threads) {
    struct Combo {
        double eta, tau;
        int p, n;
    };
    std::vector<Combo> combos;
    for (double eta : cfg.eta)
        for (double tau : cfg.tau)
            for (int p : cfg.p)
                for (int n : cfg.sample_sizes) combos.push_back({eta, tau, p, n});

    const std::vector<portfolio::Model> models = {portfolio::Model::EW, portfolio::Model::MC,
                                                  portfolio::Model::CMEAC,
                                                  portfolio::Model::CMEC};
    std::vector<PortfolioRow> rows(combos.size() * static_cast<std::size_t>(cfg.trials) *
                                   models.size());

    const int total = static_cast<int>(combos.size()) * cfg.trials;
    parallel_trials(total, threads, [&](int idx) {
        const int combo_idx = idx / cfg.trials;
        const int trial = idx % cfg.trials;
        const Combo combo = combos[static_cast<std::size_t>(combo_idx)];
        const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(idx);
        try {

        portfolio::PortfolioGenConfig gen;
        gen.tau = combo.tau;
        gen.p_power = combo.p;
        gen.seed = seed;
        const auto data = portfolio::gen_portfolio(gen, combo.n, cfg.n_test);

        portfolio::ModelOptions mo;
        mo.beta = cfg.beta;
        mo.eta = combo.eta;
        mo.lambda0 = cfg.lambda0.value_or(0.1);
        mo.lengthscale = cfg.lengthscale;
        mo.max_iters = cfg.max_iters;

        for (std::size_t m = 0; m < models.size(); ++m) {
            const auto trained = portfolio::solve_model(models[m], data.train, mo);
            const auto metrics =
                portfolio::evaluate_metrics(trained.policy, data.test, combo.eta, cfg.beta);
            rows[static_cast<std::size_t>(idx) * models.size() + m] = {
                trial,       portfolio::model_name(models[m]),
                combo.eta,   combo.tau,
                combo.p,     combo.n,
                metrics,     seed,
                trained.lambda};
        }
        } catch (const std::exception& e) {
            throw std::runtime_error("trial " + std::to_string(trial) + " (eta=" +
                                     std::to_string(combo.eta) + ", tau=" +
                                     std::to_string(combo.tau) + ", p=" +
                                     std::to_string(combo.p) + ", N=" + std::to_string(combo.n) +
                                     "): " + e.what());
        }
    });

    std::ostringstream csv;
    csv << "trial,model,eta,tau,p,N,E,CVaR,tradeoff,regret,seed,lambda\n";
    for (const auto& r : rows)
        csv << r.trial << "," << r.model << "," << fmt(r.eta) << "," << fmt(r.tau) << "," << r.p
            << "," << r.n << "," << fmt(r.metrics.expected_return) << ","
            << fmt(r.metrics.cvar_of_negated_return) << "," << fmt(r.metrics.tradeoff) << ","
            << fmt(r.metrics.relative_regret) << "," << r.seed << "," << fmt(r.lambda) << "\n";
    write_file(out / "results.csv", csv.str());

    json summary;
    summary["experiment"] = cfg.experiment;
    json combos_json = json::array();
    for (std::size_t c = 0; c < combos.size(); ++c) {
        json entry;
        entry["eta"] = combos[c].eta;
        entry["tau"] = combos[c].tau;
        entry["p"] = combos[c].p;
        entry["N"] = combos[c].n;
        json per_model;
        for (std::size_t m = 0; m < models.size(); ++m) {
            double e = 0, cv = 0, tr = 0, rg = 0;
            int count = 0;
            for (const auto& r : rows) {
                if (r.model != portfolio::model_name(models[m]) || r.eta != combos[c].eta ||
                    r.tau != combos[c].tau || r.p != combos[c].p || r.n != combos[c].n)
                    continue;
                e += r.metrics.expected_return;
                cv += r.metrics.cvar_of_negated_return;
                tr += r.metrics.tradeoff;
                rg += r.metrics.relative_regret;
                ++count;
            }
            per_model[portfolio::model_name(models[m])] = {
                {"E", e / count},        {"CVaR", cv / count}, {"tradeoff", tr / count},
                {"regret", rg / count},  {"trials", count}};
        }
        entry["models"] = std::move(per_model);
        combos_json.push_back(std::move(entry));
    }
    summary["combos"] = std::move(combos_json);
    write_file(out / "summary.json", summary.dump(2));
    return 0;
}

}  // namespace

int run(const ExperimentConfig& cfg, const std::string& out_dir, int threads) {
    const fs::path out(out_dir);
    fs::create_directories(out / "plotdata");
    try {
        if (cfg.experiment == "NvLinearPolicies") return run_nv_linear_policies(cfg, out, threads);
        if (cfg.experiment == "NvSaaLinear") return run_nv_saa(cfg, out, threads, false);
        if (cfg.experiment == "NvSaaRkhs") return run_nv_saa(cfg, out, threads, true);
        if (cfg.experiment == "NestedDemo") return run_nested_demo(cfg, out);
        if (cfg.experiment == "Portfolio") return run_portfolio(cfg, out, threads);
    } catch (const std::exception& e) {
        std::cerr << "solver failure in experiment " << cfg.experiment << ": " << e.what()
                  << "\n";
        return 3;
    }
    std::cerr << "unknown experiment: " << cfg.experiment << "\n";
    return 2;
}

}  // namespace riskctx::experiments
