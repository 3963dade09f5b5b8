#include "lempart/dispatch.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lempart/error.hpp"

namespace lempart {

namespace {

using Terms = conic::Builder::Terms;

struct Owned {
    int index;
    int node;
};

// Variable and row bookkeeping of one posed problem.
struct Layout {
    int T = 0;
    std::vector<std::vector<int>> s_re, s_im, dv;  // node × step (S unused at the PCC)
    std::vector<int> e_re, e_im;
    std::vector<std::vector<int>> u_re, u_im;      // prosumer × step
    std::vector<std::vector<int>> x_re, x_im;      // meter, singleton blocks only

    std::vector<std::vector<int>> bal_re, bal_im;  // grid-side balance rows
    std::vector<std::vector<int>> link;            // voltage link rows
    std::vector<int> ref;
    std::vector<std::vector<int>> line_cone, v_up, v_dn;
    std::vector<std::vector<int>> box_cone;
    std::vector<int> neutral_row;

    std::vector<Owned> eq_owner, lp_owner, soc_owner;
};

bool is_singleton_member(const Partition& partition, int k) {
    for (const auto& block : partition)
        if (block.singleton() && block.members.front() == k) return true;
    return false;
}

struct Assembled {
    conic::Builder builder;
    Layout layout;
};

Assembled assemble(const ExAnteProblem& pb) {
    const Grid& g = *pb.grid;
    const CostParams& prm = pb.params;
    const int N = g.num_nodes();
    const int M = g.num_prosumers();
    const int T = pb.forecast.empty() ? 0 : static_cast<int>(pb.forecast.front().size());
    const double h = prm.step_hours;
    const int pcc = g.pcc();

    Assembled out;
    conic::Builder& b = out.builder;
    Layout& L = out.layout;
    L.T = T;
    auto grid2 = [&](int rows) { return std::vector<std::vector<int>>(rows, std::vector<int>(T, -1)); };
    L.s_re = grid2(N);
    L.s_im = grid2(N);
    L.dv = grid2(N);
    L.e_re.assign(T, -1);
    L.e_im.assign(T, -1);
    L.u_re = grid2(M);
    L.u_im = grid2(M);
    L.x_re = grid2(M);
    L.x_im = grid2(M);
    L.bal_re = grid2(N);
    L.bal_im = grid2(N);
    L.link = grid2(N);
    L.ref.assign(T, -1);
    L.line_cone = grid2(N);
    L.v_up = grid2(N);
    L.v_dn = grid2(N);
    L.box_cone = grid2(M);
    L.neutral_row.assign(M, -1);

    std::vector<bool> metered(M, false);
    for (int k = 0; k < M; ++k) metered[k] = is_singleton_member(pb.partition, k);

    auto eq = [&](const Terms& t, double rhs, int owner) {
        const int r = b.add_eq(t, rhs);
        L.eq_owner.push_back({r, owner});
        return r;
    };
    auto leq = [&](const Terms& t, double rhs, int owner) {
        const int r = b.add_leq(t, rhs);
        L.lp_owner.push_back({r, owner});
        return r;
    };
    auto soc = [&](const std::vector<std::pair<double, Terms>>& rows, int owner) {
        const int c = b.add_soc(rows);
        L.soc_owner.push_back({c, owner});
        return c;
    };

    for (int t = 0; t < T; ++t) {
        const Complex lam0 = prm.price(t);
        L.e_re[t] = b.add_var(-h * lam0.real());
        L.e_im[t] = b.add_var(-h * lam0.imag());
        for (int n = 0; n < N; ++n) {
            L.dv[n][t] = b.add_var();
            if (n != pcc) {
                L.s_re[n][t] = b.add_var();
                L.s_im[n][t] = b.add_var();
            }
        }
        for (int k = 0; k < M; ++k) {
            L.u_re[k][t] = b.add_var();
            L.u_im[k][t] = b.add_var();
            if (metered[k]) {
                L.x_re[k][t] = b.add_var();
                L.x_im[k][t] = b.add_var();
            }
        }
    }

    for (int t = 0; t < T; ++t) {
        // Nodal balance: outflow − Σ children − injection = forecast.
        for (int n = 0; n < N; ++n) {
            Terms re, im;
            if (n == pcc) {
                re.push_back({L.e_re[t], 1.0});
                im.push_back({L.e_im[t], 1.0});
            } else {
                re.push_back({L.s_re[n][t], 1.0});
                im.push_back({L.s_im[n][t], 1.0});
            }
            for (int c : g.children(n)) {
                re.push_back({L.s_re[c][t], -1.0});
                im.push_back({L.s_im[c][t], -1.0});
            }
            Complex rhs{};
            const int k = g.prosumer_at(n);
            if (k >= 0) {
                if (metered[k]) {
                    re.push_back({L.x_re[k][t], -1.0});
                    im.push_back({L.x_im[k][t], -1.0});
                    eq({{L.x_re[k][t], 1.0}, {L.u_re[k][t], -1.0}}, pb.forecast[k][t].real(), n);
                    eq({{L.x_im[k][t], 1.0}, {L.u_im[k][t], -1.0}}, pb.forecast[k][t].imag(), n);
                } else {
                    re.push_back({L.u_re[k][t], -1.0});
                    im.push_back({L.u_im[k][t], -1.0});
                    rhs = pb.forecast[k][t];
                }
            }
            L.bal_re[n][t] = eq(re, rhs.real(), n);
            L.bal_im[n][t] = eq(im, rhs.imag(), n);
        }

        // Linear DistFlow voltage links and limits.
        L.ref[t] = eq({{L.dv[pcc][t], 1.0}}, 0.0, pcc);
        for (int n = 0; n < N; ++n) {
            if (n == pcc) continue;
            const Complex z = g.impedance(n);
            L.link[n][t] = eq({{L.dv[g.parent(n)][t], 1.0},
                               {L.dv[n][t], -1.0},
                               {L.s_re[n][t], 2.0 * z.real()},
                               {L.s_im[n][t], 2.0 * z.imag()}},
                              0.0, n);
            if (std::isfinite(g.s_limit(n)))
                L.line_cone[n][t] =
                    soc({{g.s_limit(n), {}}, {0.0, {{L.s_re[n][t], 1.0}}}, {0.0, {{L.s_im[n][t], 1.0}}}}, n);
            if (std::isfinite(g.dv_limit(n))) {
                L.v_up[n][t] = leq({{L.dv[n][t], 1.0}}, g.dv_limit(n), n);
                L.v_dn[n][t] = leq({{L.dv[n][t], -1.0}}, g.dv_limit(n), n);
            }
        }
    }

    // Flexibility sets and costs.
    for (int k = 0; k < M; ++k) {
        const int n = g.prosumer_node(k);
        const ProsumerFlex& f = prm.flex[k];
        for (int t = 0; t < T; ++t) {
            const int ur = L.u_re[k][t], ui = L.u_im[k][t];
            if (std::isfinite(f.set.max_magnitude))
                L.box_cone[k][t] = soc({{f.set.max_magnitude, {}}, {0.0, {{ur, 1.0}}}, {0.0, {{ui, 1.0}}}}, n);

            const FlexCost& c = f.cost;
            double quad = pb.tiebreak;
            if (c.family == FlexCost::Family::PiecewiseLinear) {
                if (!c.pieces.empty()) {
                    const int w = b.add_var();
                    soc({{0.0, {{w, 1.0}}}, {0.0, {{ur, 1.0}}}, {0.0, {{ui, 1.0}}}}, n);
                    const int p = b.add_var(1.0);
                    for (auto [slope, intercept] : c.pieces) leq({{w, slope * h}, {p, -1.0}}, -intercept, n);
                }
            } else {
                if (c.linear != 0.0) {
                    const int w = b.add_var(c.linear * h);
                    soc({{0.0, {{w, 1.0}}}, {0.0, {{ur, 1.0}}}, {0.0, {{ui, 1.0}}}}, n);
                }
                if (c.family == FlexCost::Family::Quadratic) quad += c.quadratic * h * h;
            }
            if (quad > 0.0) {
                // |u|² ≤ q as ‖(2u, q − 1)‖ ≤ q + 1
                const int q = b.add_var(quad);
                soc({{1.0, {{q, 1.0}}}, {0.0, {{ur, 2.0}}}, {0.0, {{ui, 2.0}}}, {-1.0, {{q, 1.0}}}}, n);
            }
        }
        if (f.set.energy_neutral) {
            Terms row;
            for (int t = 0; t < T; ++t) row.push_back({L.u_re[k][t], 1.0});
            L.neutral_row[k] = eq(row, 0.0, n);
        }
    }

    // Boundary exchanges: κ-tax epigraphs, or zero exchange.
    for (const auto& block : pb.partition) {
        for (int nb : block.boundary) {
            for (int t = 0; t < T; ++t) {
                Terms re, im;
                if (block.singleton()) {
                    const int k = block.members.front();
                    re.push_back({L.x_re[k][t], 1.0});
                    im.push_back({L.x_im[k][t], 1.0});
                } else {
                    for (int c : g.children(nb)) {
                        if (!block.has_edge(c)) continue;
                        re.push_back({L.s_re[c][t], 1.0});
                        im.push_back({L.s_im[c][t], 1.0});
                    }
                }
                if (re.empty()) continue;
                if (prm.regime == ExchangeRegime::StrictSelfConsumption) {
                    eq(re, 0.0, nb);
                    eq(im, 0.0, nb);
                } else if (prm.tax(t) > 0.0) {
                    const int tau = b.add_var(prm.tax(t) * h);
                    soc({{0.0, {{tau, 1.0}}}, {0.0, re}, {0.0, im}}, nb);
                }
            }
        }
    }
    return out;
}

void check_inputs(const ExAnteProblem& pb) {
    if (pb.grid == nullptr) throw Error(ErrorCode::InvalidParameter, "ex-ante problem without a grid");
    const Grid& g = *pb.grid;
    if (static_cast<int>(pb.forecast.size()) != g.num_prosumers())
        throw Error(ErrorCode::MissingProsumerSeries, "forecast count does not match the grid's prosumers");
    const int T = pb.forecast.empty() ? 0 : static_cast<int>(pb.forecast.front().size());
    for (const auto& s : pb.forecast)
        if (static_cast<int>(s.size()) != T)
            throw Error(ErrorCode::MissingProsumerSeries, "forecast series have different lengths");
    validate_params(pb.params, g, T);
    if (!(pb.tiebreak >= 0.0) || !std::isfinite(pb.tiebreak))
        throw Error(ErrorCode::InvalidParameter, "tie-break weight must be finite and nonnegative");
    std::vector<int> seen(g.num_prosumers(), 0);
    for (const auto& block : pb.partition)
        for (int k : block.members) {
            if (k < 0 || k >= g.num_prosumers()) throw Error(ErrorCode::UnknownProsumer, "prosumer index out of range");
            ++seen[k];
        }
    for (int c : seen)
        if (c != 1) throw Error(ErrorCode::InvalidPartition, "partition must cover every prosumer exactly once");
}

}  // namespace

ExAnteProblem pose_exante(const Grid& grid, const Partition& partition, const ProsumptionSet& forecasts,
                          const CostParams& params) {
    ExAnteProblem pb;
    pb.grid = &grid;
    pb.partition = partition;
    pb.forecast = forecasts.forecast;
    pb.params = params;
    if (std::abs(params.step_hours - forecasts.step_hours) > 1e-12)
        throw Error(ErrorCode::InvalidParameter, "cost parameters and prosumption use different step lengths");
    check_inputs(pb);
    return pb;
}

ExAnteProblem tiebreak_regularize(ExAnteProblem problem) {
    const double eps = problem.params.tiebreak * problem.params.cost_scale();
    return tiebreak_regularize(std::move(problem), eps);
}

ExAnteProblem tiebreak_regularize(ExAnteProblem problem, double absolute_eps) {
    if (!(absolute_eps >= 0.0)) throw Error(ErrorCode::InvalidParameter, "tie-break weight must be nonnegative");
    problem.tiebreak = absolute_eps;
    return problem;
}

ExAnteCost exante_cost(const Grid& grid, const Partition& partition, const std::vector<Series>& u,
                       const std::vector<Series>& prosumption, const CostParams& params) {
    ExAnteCost cost;
    const double h = params.step_hours;
    const int M = grid.num_prosumers();
    const int T = prosumption.empty() ? 0 : static_cast<int>(prosumption.front().size());
    std::vector<Series> inj(M, Series(T));
    for (int k = 0; k < M; ++k)
        for (int t = 0; t < T; ++t) {
            inj[k][t] = prosumption[k][t] + u[k][t];
            cost.flex += params.flex[k].cost.step_cost(u[k][t], h);
        }
    const auto flows = branch_flows(grid, inj);
    for (int t = 0; t < T; ++t) {
        const Complex e = flows[grid.pcc()][t];
        const Complex lam = params.price(t);
        cost.export_revenue += h * (lam.real() * e.real() + lam.imag() * e.imag());
    }
    if (params.regime == ExchangeRegime::Taxed) {
        for (const auto& block : partition)
            for (const auto& series : boundary_exchange(grid, block, flows))
                for (int t = 0; t < T; ++t) cost.tax += params.tax(t) * h * std::abs(series[t]);
    }
    return cost;
}

namespace {
SolveStats g_stats;
}  // namespace

SolveStats exante_solve_stats() { return g_stats; }
void reset_exante_solve_stats() { g_stats = {}; }

DispatchSolution solve_posed(const ExAnteProblem& pb, const conic::Settings& settings) {
    check_inputs(pb);
    const Grid& g = *pb.grid;
    Assembled as = assemble(pb);
    const conic::Problem prob = as.builder.build();
    const conic::Result r = conic::solve(prob, settings);

    switch (r.status) {
        case conic::Status::Optimal:
        case conic::Status::OptimalInaccurate: break;
        case conic::Status::PrimalInfeasible:
            throw Error(ErrorCode::Infeasible, "ex-ante flexibility set is empty under the forecasts");
        case conic::Status::DualInfeasible: throw Error(ErrorCode::Unbounded, "ex-ante problem is unbounded");
        default:
            throw Error(ErrorCode::SolverFailure,
                        std::string("ex-ante solve failed: ") + conic::status_name(r.status));
    }

    const Layout& L = as.layout;
    const int N = g.num_nodes(), M = g.num_prosumers(), T = L.T;
    const double h = pb.params.step_hours;

    ++g_stats.solves;
    g_stats.worst_relative_gap = std::max(g_stats.worst_relative_gap, r.relative_gap);

    DispatchSolution sol;
    sol.status = r.status;
    sol.relative_gap = r.relative_gap;
    sol.primal_residual = r.primal_residual;
    sol.dual_residual = r.dual_residual;
    sol.iterations = r.iterations;
    sol.tiebreak = pb.tiebreak;

    sol.u.assign(M, Series(T));
    for (int k = 0; k < M; ++k)
        for (int t = 0; t < T; ++t) sol.u[k][t] = {r.x[L.u_re[k][t]], r.x[L.u_im[k][t]]};
    std::vector<Series> inj(M, Series(T));
    for (int k = 0; k < M; ++k)
        for (int t = 0; t < T; ++t) inj[k][t] = pb.forecast[k][t] + sol.u[k][t];
    sol.flows = evaluate_flows(g, inj);

    const ExAnteCost cost = exante_cost(g, pb.partition, sol.u, pb.forecast, pb.params);
    sol.flex_cost = cost.flex;
    sol.tax_cost = cost.tax;
    sol.export_revenue = cost.export_revenue;
    sol.objective = cost.total();

    DualBundle& d = sol.duals;
    auto zeros = [&](int rows) { return std::vector<std::vector<double>>(rows, std::vector<double>(T, 0.0)); };
    d.lambda.assign(N, Series(T));
    d.beta = zeros(N);
    d.beta0.assign(T, 0.0);
    d.mu = zeros(N);
    d.eta_upper = zeros(N);
    d.eta_lower = zeros(N);
    d.theta = zeros(M);
    d.theta_neutral.assign(M, 0.0);
    for (int t = 0; t < T; ++t) {
        d.beta0[t] = r.y[L.ref[t]];
        for (int n = 0; n < N; ++n) {
            d.lambda[n][t] = Complex{r.y[L.bal_re[n][t]], r.y[L.bal_im[n][t]]} / h;
            if (L.link[n][t] >= 0) d.beta[n][t] = r.y[L.link[n][t]];
            if (L.line_cone[n][t] >= 0)
                d.mu[n][t] = r.z[as.builder.soc_row(L.line_cone[n][t])] / (2.0 * g.s_limit(n));
            if (L.v_up[n][t] >= 0) d.eta_upper[n][t] = r.z[as.builder.lp_row(L.v_up[n][t])];
            if (L.v_dn[n][t] >= 0) d.eta_lower[n][t] = r.z[as.builder.lp_row(L.v_dn[n][t])];
        }
        for (int k = 0; k < M; ++k)
            if (L.box_cone[k][t] >= 0) d.theta[k][t] = r.z[as.builder.soc_row(L.box_cone[k][t])];
    }
    for (int k = 0; k < M; ++k)
        if (L.neutral_row[k] >= 0) d.theta_neutral[k] = r.y[L.neutral_row[k]];

    d.node_lagrangian.assign(N, 0.0);
    for (const auto& o : L.eq_owner) d.node_lagrangian[o.node] -= r.y[o.index] * prob.b[o.index];
    for (const auto& o : L.lp_owner) {
        const int row = as.builder.lp_row(o.index);
        d.node_lagrangian[o.node] -= r.z[row] * prob.h[row];
    }
    for (const auto& o : L.soc_owner) {
        const int row = as.builder.soc_row(o.index);
        for (int i = 0; i < as.builder.soc_dim(o.index); ++i)
            d.node_lagrangian[o.node] -= r.z[row + i] * prob.h[row + i];
    }
    d.complementarity = r.s.dot(r.z);
    return sol;
}

DispatchSolution solve_exante(const Grid& grid, const Partition& partition, const ProsumptionSet& forecasts,
                              const CostParams& params) {
    return solve_posed(tiebreak_regularize(pose_exante(grid, partition, forecasts, params)));
}

DecoupledDispatch solve_exante_decoupled(const Grid& grid, const Coalition& coalition, const ProsumptionSet& data,
                                         const CostParams& params, double absolute_eps) {
    if (coalition.members.empty()) throw Error(ErrorCode::EmptyMemberSet, "coalition has no members");
    if (!coalition.single_boundary())
        throw Error(ErrorCode::AssumptionViolated,
                    "coalition " + coalition_label(grid, coalition) + " has more than one boundary node");
    DecoupledDispatch out;
    out.sub = extract_subgrid(grid, coalition);
    out.params = restrict_params(params, out.sub);
    out.params.regime = ExchangeRegime::StrictSelfConsumption;
    out.data = restrict_data(data, out.sub);
    const double eps = absolute_eps >= 0.0 ? absolute_eps : params.tiebreak * params.cost_scale();
    const Partition whole{grand_coalition(out.sub.grid)};
    ExAnteProblem pb = tiebreak_regularize(pose_exante(out.sub.grid, whole, out.data, out.params), eps);
    out.solution = solve_posed(pb);
    return out;
}

}  // namespace lempart
