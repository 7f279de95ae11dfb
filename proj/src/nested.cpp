#include "riskctx/nested.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "riskctx/solve.hpp"

namespace riskctx::nested {

using nlohmann::json;

void DiscreteJoint::validate() const {
    if (contexts.empty()) throw std::invalid_argument("DiscreteJoint: no contexts");
    double pm = 0.0;
    for (const auto& ctx : contexts) {
        if (!(ctx.p > 0.0)) throw std::invalid_argument("DiscreteJoint: context probability <= 0");
        pm += ctx.p;
        if (ctx.cond.empty()) throw std::invalid_argument("DiscreteJoint: empty conditional");
        double qm = 0.0;
        for (const auto& a : ctx.cond) {
            if (!(a.q > 0.0)) throw std::invalid_argument("DiscreteJoint: atom probability <= 0");
            qm += a.q;
        }
        if (std::abs(qm - 1.0) > 1e-12)
            throw std::invalid_argument("DiscreteJoint: conditional not normalized");
    }
    if (std::abs(pm - 1.0) > 1e-12)
        throw std::invalid_argument("DiscreteJoint: marginal not normalized");
}

namespace {

json num_or_array(const Eigen::VectorXd& v) {
    if (v.size() == 1) return v(0);
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

Eigen::VectorXd vec_from(const json& j) {
    if (j.is_number()) {
        Eigen::VectorXd v(1);
        v(0) = j.get<double>();
        return v;
    }
    Eigen::VectorXd v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j.at(i);
    return v;
}

}  // namespace

std::string DiscreteJoint::to_json() const {
    json j;
    json ctxs = json::array();
    for (const auto& ctx : contexts) {
        json c;
        c["x"] = num_or_array(ctx.x);
        c["p"] = ctx.p;
        json cond = json::array();
        for (const auto& a : ctx.cond) cond.push_back({{"y", num_or_array(a.y)}, {"q", a.q}});
        c["cond"] = std::move(cond);
        ctxs.push_back(std::move(c));
    }
    j["contexts"] = std::move(ctxs);
    return j.dump();
}

DiscreteJoint DiscreteJoint::from_json(const std::string& text) {
    const json j = json::parse(text);
    DiscreteJoint out;
    for (const auto& c : j.at("contexts")) {
        Context ctx;
        ctx.x = vec_from(c.at("x"));
        ctx.p = c.at("p");
        for (const auto& a : c.at("cond")) ctx.cond.push_back({vec_from(a.at("y")), a.at("q")});
        out.contexts.push_back(std::move(ctx));
    }
    out.validate();
    return out;
}

double conditional_risk(const DiscreteJoint& joint, std::size_t x_index,
                        const risk::RiskSpec& rho2, const objectives::CostFn& cost,
                        const Eigen::VectorXd& z) {
    if (x_index >= joint.contexts.size())
        throw std::out_of_range("conditional_risk: context index out of range");
    const auto& ctx = joint.contexts[x_index];
    risk::LossSample sample;
    sample.values.reserve(ctx.cond.size());
    sample.weights.reserve(ctx.cond.size());
    for (const auto& a : ctx.cond) {
        sample.values.push_back(cost.eval(z, a.y, nullptr));
        sample.weights.push_back(a.q);
    }
    return risk::evaluate(rho2, sample);
}

ConditionalSolution solve_conditional(const DiscreteJoint& joint, const risk::RiskSpec& rho2,
                                      const objectives::CostFn& cost,
                                      const std::vector<std::vector<Eigen::VectorXd>>& grids) {
    if (grids.size() != joint.contexts.size())
        throw std::invalid_argument("solve_conditional: one grid per context required");
    ConditionalSolution out;
    for (std::size_t j = 0; j < joint.contexts.size(); ++j) {
        if (grids[j].empty()) throw std::invalid_argument("solve_conditional: empty grid");
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_i = 0;
        for (std::size_t i = 0; i < grids[j].size(); ++i) {
            const double v = conditional_risk(joint, j, rho2, cost, grids[j][i]);
            if (v < best) {
                best = v;
                best_i = i;
            }
        }
        out.policy.z.push_back(grids[j][best_i]);
        out.psi.push_back(best);
    }
    return out;
}

ConditionalSolution solve_conditional_1d(const DiscreteJoint& joint, const risk::RiskSpec& rho2,
                                         const objectives::CostFn& cost, double lo, double hi,
                                         double tol) {
    ConditionalSolution out;
    for (std::size_t j = 0; j < joint.contexts.size(); ++j) {
        auto f = [&](double zv) {
            Eigen::VectorXd z(1);
            z(0) = zv;
            return conditional_risk(joint, j, rho2, cost, z);
        };
        const double z_star = solve::golden_section(f, lo, hi, tol);
        Eigen::VectorXd z(1);
        z(0) = z_star;
        out.policy.z.push_back(z);
        out.psi.push_back(f(z_star));
    }
    return out;
}

double nested_risk(const DiscreteJoint& joint, const risk::RiskSpec& rho1,
                   const risk::RiskSpec& rho2, const objectives::CostFn& cost,
                   const TabularPolicy& policy) {
    if (policy.z.size() != joint.contexts.size())
        throw std::invalid_argument("nested_risk: one decision per context required");
    risk::LossSample outer;
    outer.values.reserve(joint.contexts.size());
    outer.weights.reserve(joint.contexts.size());
    for (std::size_t j = 0; j < joint.contexts.size(); ++j) {
        outer.values.push_back(conditional_risk(joint, j, rho2, cost, policy.z[j]));
        outer.weights.push_back(joint.contexts[j].p);
    }
    return risk::evaluate(rho1, outer);
}

double exante_risk(const DiscreteJoint& joint, const risk::RiskSpec& rho,
                   const objectives::CostFn& cost, const TabularPolicy& policy) {
    if (policy.z.size() != joint.contexts.size())
        throw std::invalid_argument("exante_risk: one decision per context required");
    risk::LossSample joint_sample;
    for (std::size_t j = 0; j < joint.contexts.size(); ++j) {
        for (const auto& a : joint.contexts[j].cond) {
            joint_sample.values.push_back(cost.eval(policy.z[j], a.y, nullptr));
            joint_sample.weights.push_back(joint.contexts[j].p * a.q);
        }
    }
    return risk::evaluate(rho, joint_sample);
}

std::vector<std::vector<Eigen::VectorXd>> default_grids(const DiscreteJoint& joint, int points,
                                                        double widen) {
    std::vector<std::vector<Eigen::VectorXd>> grids;
    for (const auto& ctx : joint.contexts) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (const auto& a : ctx.cond) {
            if (a.y.size() != 1)
                throw std::invalid_argument("default_grids: scalar outcomes required");
            lo = std::min(lo, a.y(0));
            hi = std::max(hi, a.y(0));
        }
        double span = hi - lo;
        if (span <= 0.0) span = std::max(1.0, std::abs(hi));
        lo -= widen * span;
        hi += widen * span;
        std::vector<Eigen::VectorXd> grid;
        grid.reserve(static_cast<std::size_t>(points));
        for (int i = 0; i < points; ++i) {
            Eigen::VectorXd z(1);
            z(0) = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
            grid.push_back(z);
        }
        grids.push_back(std::move(grid));
    }
    return grids;
}

namespace {

// Conditional cost atoms per (context, grid point), reused by the
// exhaustive enumerations.
struct CostTables {
    // values[j][g][a]: cost at context j, grid point g, conditional atom a
    std::vector<std::vector<std::vector<double>>> values;
    // conditional risk per (context, grid point)
    std::vector<std::vector<double>> psi;
};

CostTables build_tables(const DiscreteJoint& joint, const risk::RiskSpec& rho2,
                        const objectives::CostFn& cost,
                        const std::vector<std::vector<Eigen::VectorXd>>& grids) {
    CostTables t;
    t.values.resize(joint.contexts.size());
    t.psi.resize(joint.contexts.size());
    for (std::size_t j = 0; j < joint.contexts.size(); ++j) {
        const auto& ctx = joint.contexts[j];
        t.values[j].resize(grids[j].size());
        t.psi[j].resize(grids[j].size());
        for (std::size_t g = 0; g < grids[j].size(); ++g) {
            auto& vals = t.values[j][g];
            vals.reserve(ctx.cond.size());
            risk::LossSample sample;
            for (const auto& a : ctx.cond) {
                vals.push_back(cost.eval(grids[j][g], a.y, nullptr));
                sample.values.push_back(vals.back());
                sample.weights.push_back(a.q);
            }
            t.psi[j][g] = risk::evaluate(rho2, sample);
        }
    }
    return t;
}

template <typename Eval>
EnumerationResult enumerate_policies(const DiscreteJoint& joint,
                                     const std::vector<std::vector<Eigen::VectorXd>>& grids,
                                     Eval eval) {
    const std::size_t k = joint.contexts.size();
    std::vector<std::size_t> idx(k, 0);
    EnumerationResult out;
    out.value = std::numeric_limits<double>::infinity();
    while (true) {
        const double v = eval(idx);
        if (v < out.value) {
            out.value = v;
            out.best_index = idx;
        }
        std::size_t pos = k;
        while (pos > 0) {
            --pos;
            if (++idx[pos] < grids[pos].size()) break;
            idx[pos] = 0;
            if (pos == 0) {
                for (std::size_t j = 0; j < k; ++j) out.best.z.push_back(grids[j][out.best_index[j]]);
                return out;
            }
        }
    }
}

std::vector<int> count_conditional_ties(const CostTables& tables) {
    std::vector<int> ties;
    for (const auto& psi : tables.psi) {
        const double m = *std::min_element(psi.begin(), psi.end());
        ties.push_back(static_cast<int>(std::count(psi.begin(), psi.end(), m)));
    }
    return ties;
}

}  // namespace

EnumerationResult enumerate_nested_optimum(const DiscreteJoint& joint, const risk::RiskSpec& rho1,
                                           const risk::RiskSpec& rho2,
                                           const objectives::CostFn& cost,
                                           const std::vector<std::vector<Eigen::VectorXd>>& grids) {
    const CostTables tables = build_tables(joint, rho2, cost, grids);
    risk::LossSample outer;
    outer.values.resize(joint.contexts.size());
    outer.weights.resize(joint.contexts.size());
    for (std::size_t j = 0; j < joint.contexts.size(); ++j)
        outer.weights[j] = joint.contexts[j].p;
    auto result = enumerate_policies(joint, grids, [&](const std::vector<std::size_t>& idx) {
        for (std::size_t j = 0; j < idx.size(); ++j) outer.values[j] = tables.psi[j][idx[j]];
        return risk::evaluate(rho1, outer);
    });
    result.conditional_ties = count_conditional_ties(tables);
    return result;
}

EnumerationResult enumerate_exante_optimum(const DiscreteJoint& joint, const risk::RiskSpec& rho,
                                           const objectives::CostFn& cost,
                                           const std::vector<std::vector<Eigen::VectorXd>>& grids) {
    const CostTables tables = build_tables(joint, risk::Mean{}, cost, grids);
    risk::LossSample flat;
    for (std::size_t j = 0; j < joint.contexts.size(); ++j)
        for (const auto& a : joint.contexts[j].cond)
            flat.weights.push_back(joint.contexts[j].p * a.q);
    flat.values.resize(flat.weights.size());
    return enumerate_policies(joint, grids, [&](const std::vector<std::size_t>& idx) {
        std::size_t pos = 0;
        for (std::size_t j = 0; j < idx.size(); ++j)
            for (const double v : tables.values[j][idx[j]]) flat.values[pos++] = v;
        return risk::evaluate(rho, flat);
    });
}

ConsistencyReport check_contextual_consistency(
    const DiscreteJoint& joint, const std::function<double(const TabularPolicy&)>& rho_ea,
    const risk::RiskSpec& rho2, const objectives::CostFn& cost, int trials, std::uint64_t seed,
    const std::vector<std::pair<TabularPolicy, TabularPolicy>>& extra_pairs) {
    if (trials < 1) throw std::invalid_argument("check_contextual_consistency: trials >= 1");
    const std::size_t k = joint.contexts.size();

    const auto grids = default_grids(joint);
    const auto conditional = solve_conditional(joint, rho2, cost, grids);

    ConsistencyReport report;
    auto check_pair = [&](const TabularPolicy& g1, const TabularPolicy& g2) {
        for (std::size_t j = 0; j < k; ++j) {
            const double r1 = conditional_risk(joint, j, rho2, cost, g1.z[j]);
            const double r2 = conditional_risk(joint, j, rho2, cost, g2.z[j]);
            if (r1 > r2 + 1e-12) return;  // not a dominating pair
        }
        ++report.pairs_checked;
        const double gap = rho_ea(g1) - rho_ea(g2);
        report.worst_gap = std::max(report.worst_gap, gap);
        if (gap > 1e-10) ++report.violations;
    };

    Rng rng(seed);
    for (int trial = 0; trial < trials; ++trial) {
        TabularPolicy g2, g1;
        const double lam = rng.uniform(0.1, 1.0);
        for (std::size_t j = 0; j < k; ++j) {
            const auto& grid = grids[j];
            Eigen::VectorXd z2 = grid[static_cast<std::size_t>(
                rng.uniform01() * static_cast<double>(grid.size() - 1))];
            g2.z.push_back(z2);
            g1.z.push_back(z2 + lam * (conditional.policy.z[j] - z2));
        }
        check_pair(g1, g2);
    }
    for (const auto& [g1, g2] : extra_pairs) check_pair(g1, g2);
    return report;
}

DiscreteJoint random_joint(Rng& rng, int min_contexts, int max_contexts, int min_atoms,
                           int max_atoms) {
    DiscreteJoint joint;
    const int k = min_contexts +
                  static_cast<int>(rng.uniform01() * static_cast<double>(max_contexts - min_contexts + 1));
    std::vector<double> pw(static_cast<std::size_t>(std::max(min_contexts, std::min(k, max_contexts))));
    double ptotal = 0.0;
    for (auto& w : pw) {
        w = rng.uniform(0.2, 1.0);
        ptotal += w;
    }
    for (std::size_t j = 0; j < pw.size(); ++j) {
        DiscreteJoint::Context ctx;
        ctx.x = Eigen::VectorXd::Constant(1, static_cast<double>(j) + rng.uniform01());
        ctx.p = pw[j] / ptotal;
        const int na = min_atoms +
                       static_cast<int>(rng.uniform01() * static_cast<double>(max_atoms - min_atoms + 1));
        std::vector<double> qw(static_cast<std::size_t>(std::max(min_atoms, std::min(na, max_atoms))));
        double qtotal = 0.0;
        for (auto& w : qw) {
            w = rng.uniform(0.2, 1.0);
            qtotal += w;
        }
        for (double w : qw) {
            DiscreteJoint::Atom atom;
            atom.y = Eigen::VectorXd::Constant(1, rng.uniform(-5.0, 15.0));
            atom.q = w / qtotal;
            ctx.cond.push_back(std::move(atom));
        }
        joint.contexts.push_back(std::move(ctx));
    }
    joint.validate();
    return joint;
}

CounterexampleFindings counterexample_ex_ante_cvar() {
    CounterexampleFindings out;
    out.beta = 0.5;

    // Two contexts with very different conditional spreads; newsvendor cost.
    auto scalar = [](double v) { return Eigen::VectorXd::Constant(1, v); };
    DiscreteJoint joint;
    joint.contexts.push_back({scalar(0.0), 0.5, {{scalar(90.0), 0.5}, {scalar(110.0), 0.5}}});
    joint.contexts.push_back({scalar(1.0), 0.5, {{scalar(99.0), 0.5}, {scalar(101.0), 0.5}}});
    joint.validate();
    out.joint = joint;

    const double h = 0.2, b = 1.0;
    objectives::CostFn cost;
    cost.d_z = 1;
    cost.eval = [h, b](const Eigen::VectorXd& z, const Eigen::VectorXd& y,
                       Eigen::VectorXd* grad) -> double {
        const double diff = z(0) - y(0);
        if (grad) {
            grad->resize(1);
            (*grad)(0) = diff > 0.0 ? h : (diff < 0.0 ? -b : 0.0);
        }
        return h * std::max(diff, 0.0) + b * std::max(-diff, 0.0);
    };

    const risk::RiskSpec cvar_spec = risk::CVaR{out.beta};
    const auto grids = default_grids(joint);
    const auto conditional = solve_conditional(joint, cvar_spec, cost, grids);

    // (a) the ex-ante CVaR grid optimizer vs the conditional optimum.
    const auto exante = enumerate_exante_optimum(joint, cvar_spec, cost, grids);
    out.exante_optimal = exante.best;
    out.exante_margin = 0.0;
    for (std::size_t j = 0; j < joint.contexts.size(); ++j) {
        const double r = conditional_risk(joint, j, cvar_spec, cost, exante.best.z[j]);
        out.exante_conditional_gap.push_back(r - conditional.psi[j]);
        out.exante_margin = std::max(out.exante_margin, r - conditional.psi[j]);
    }

    // (b) nested-CVaR optimizers: the conditional optimum attains the nested
    // optimum; look for another optimizer that is conditionally suboptimal.
    const auto nested_opt = enumerate_nested_optimum(joint, cvar_spec, cvar_spec, cost, grids);
    out.nested_optimum = nested_opt.value;
    const double nested_at_conditional =
        nested_risk(joint, cvar_spec, cvar_spec, cost, conditional.policy);
    out.conditional_attains_nested = nested_at_conditional <= nested_opt.value + 1e-9;

    out.nested_example_gap = 0.0;
    for (std::size_t j = 0; j < joint.contexts.size(); ++j) {
        for (const auto& zj : grids[j]) {
            TabularPolicy candidate = conditional.policy;
            candidate.z[j] = zj;
            const double nv = nested_risk(joint, cvar_spec, cvar_spec, cost, candidate);
            if (nv <= nested_opt.value + 1e-9) {
                const double gap =
                    conditional_risk(joint, j, cvar_spec, cost, zj) - conditional.psi[j];
                if (gap > out.nested_example_gap) {
                    out.nested_example_gap = gap;
                    out.nested_suboptimal_optimizer = candidate;
                }
            }
        }
    }

    // Strictly monotone outer risk: every nested grid optimizer must be
    // conditionally optimal in every context.
    const risk::RiskSpec entropic_spec = risk::Entropic{1.0};
    const auto ent_opt = enumerate_nested_optimum(joint, entropic_spec, cvar_spec, cost, grids);
    const auto cond_grid = solve_conditional(joint, cvar_spec, cost, grids);
    bool all_match = true;
    for (std::size_t j = 0; j < joint.contexts.size(); ++j) {
        for (const auto& zj : grids[j]) {
            TabularPolicy candidate = ent_opt.best;
            candidate.z[j] = zj;
            const double nv = nested_risk(joint, entropic_spec, cvar_spec, cost, candidate);
            if (nv <= ent_opt.value + 1e-12) {
                const double gap =
                    conditional_risk(joint, j, cvar_spec, cost, zj) - cond_grid.psi[j];
                if (gap > 1e-12) all_match = false;
            }
        }
    }
    out.entropic_nested_matches_conditional = all_match;
    return out;
}

}  // namespace riskctx::nested
