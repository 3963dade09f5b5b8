#include "lempart/costs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lempart/error.hpp"

namespace lempart {

namespace {

double pos(double v) { return v > 0.0 ? v : 0.0; }

double edge_violation(const Grid& grid, const CostParams& p, int e, Complex s) {
    const double limit = grid.s_limit(e);
    if (!std::isfinite(limit)) return 0.0;
    return p.overload_penalty[e] * p.step_hours * pos(std::abs(s) - limit);
}

double node_violation(const Grid& grid, const CostParams& p, int n, double dv) {
    const double limit = grid.dv_limit(n);
    if (!std::isfinite(limit)) return 0.0;
    return p.voltage_penalty[n] * pos(std::abs(dv) - limit);
}

std::vector<Series> injections(const std::vector<Series>& u, const std::vector<Series>& prosumption) {
    std::vector<Series> inj = prosumption;
    for (std::size_t k = 0; k < inj.size(); ++k)
        for (std::size_t t = 0; t < inj[k].size(); ++t) inj[k][t] += u[k][t];
    return inj;
}

Series imbalance_series(const Coalition& block, const ProsumptionSet& data) {
    Series s(data.steps());
    for (int k : block.members)
        for (int t = 0; t < data.steps(); ++t) s[t] += data.realized[k][t] - data.forecast[k][t];
    return s;
}

// Realized exchange across each boundary node. Under strict self-consumption
// the top node absorbs the block imbalance, which the edge sum does not see
// unless the block is a single leaf.
std::vector<Series> realized_exchange(const Grid& grid, const Coalition& block, const std::vector<Series>& flows,
                                      const ProsumptionSet& data, const CostParams& params) {
    auto x = boundary_exchange(grid, block, flows);
    if (params.regime != ExchangeRegime::StrictSelfConsumption || block.singleton()) return x;
    const Series imb = imbalance_series(block, data);
    for (std::size_t i = 0; i < block.boundary.size(); ++i)
        if (block.boundary[i] == block.top)
            for (std::size_t t = 0; t < imb.size(); ++t) x[i][t] -= imb[t];
    return x;
}

}  // namespace

std::vector<double> block_imbalance(const Coalition& block, const ProsumptionSet& data) {
    const Series s = imbalance_series(block, data);
    std::vector<double> out(s.size());
    for (std::size_t t = 0; t < s.size(); ++t) out[t] = std::abs(s[t]);
    return out;
}

FlowState realized_flows(const Grid& grid, const Partition& partition, const std::vector<Series>& u,
                         const ProsumptionSet& data, const CostParams& params) {
    const int T = data.steps();
    std::vector<Series> nodal(grid.num_nodes(), Series(T));
    const auto inj = injections(u, data.realized);
    for (int k = 0; k < grid.num_prosumers(); ++k) nodal[grid.prosumer_node(k)] = inj[k];
    if (params.regime == ExchangeRegime::StrictSelfConsumption) {
        for (const auto& block : partition) {
            const Series imb = imbalance_series(block, data);
            for (int t = 0; t < T; ++t) nodal[block.top][t] -= imb[t];
        }
    }
    FlowState s;
    s.flow = nodal_branch_flows(grid, nodal);
    s.dv = voltage_deviations(grid, s.flow);
    return s;
}

ViolationCosts expost_violation_costs(const Grid& grid, const Partition& partition, const FlowState& realized,
                                      const CostParams& params) {
    const int T = realized.flow.empty() ? 0 : static_cast<int>(realized.flow.front().size());
    const int N = grid.num_nodes();
    ViolationCosts out;
    out.block.assign(partition.size(), std::vector<double>(T, 0.0));
    out.external.assign(T, 0.0);

    std::vector<int> edge_block(N, -1), internal_block(N, -1);
    for (std::size_t l = 0; l < partition.size(); ++l) {
        for (int e : partition[l].edges) edge_block[e] = static_cast<int>(l);
        for (int n : partition[l].internal) internal_block[n] = static_cast<int>(l);
    }
    for (int n = 0; n < N; ++n) {
        for (int t = 0; t < T; ++t) {
            if (n != grid.pcc()) {
                const double c = edge_violation(grid, params, n, realized.flow[n][t]);
                out.overload += c;
                if (edge_block[n] >= 0)
                    out.block[edge_block[n]][t] += c;
                else
                    out.external[t] += c;
            }
            const double v = n == grid.pcc() ? 0.0 : node_violation(grid, params, n, realized.dv[n][t]);
            out.voltage += v;
            if (internal_block[n] >= 0)
                out.block[internal_block[n]][t] += v;
            else
                out.external[t] += v;
        }
    }
    return out;
}

std::vector<double> balancing_cost(const Grid&, const Partition& partition, const ProsumptionSet& data,
                                   const CostParams& params) {
    const int T = data.steps();
    const double h = params.step_hours;
    std::vector<double> out(T, 0.0);
    if (params.regime == ExchangeRegime::StrictSelfConsumption) {
        for (const auto& block : partition) {
            const double alpha = params.balancing_price(block.members);
            const auto imb = block_imbalance(block, data);
            for (int t = 0; t < T; ++t) out[t] += alpha * h * imb[t];
        }
        return out;
    }
    for (int t = 0; t < T; ++t) {
        Complex s{};
        for (int k = 0; k < data.num_prosumers(); ++k) s += data.realized[k][t] - data.forecast[k][t];
        out[t] = params.imbalance_penalty * h * std::abs(s);
    }
    return out;
}

double CostReport::decomposition() const {
    double v = exante_realized;
    for (double c : external) v += c;
    for (const auto& b : internal)
        for (double c : b) v += c;
    for (double c : balancing) v += c;
    return v;
}

CostReport evaluate_partition(const Grid& grid, const Partition& partition, const DispatchSolution& dispatch,
                              const ProsumptionSet& data, const CostParams& params) {
    CostReport r;
    r.partition = partition;
    r.dispatch = dispatch;
    r.realized = realized_flows(grid, partition, dispatch.u, data, params);
    const int T = data.steps();
    const double h = params.step_hours;

    for (int k = 0; k < grid.num_prosumers(); ++k)
        for (int t = 0; t < T; ++t) r.flex += params.flex[k].cost.step_cost(dispatch.u[k][t], h);
    for (int t = 0; t < T; ++t) {
        const Complex e = r.realized.flow[grid.pcc()][t];
        const Complex lam = params.price(t);
        r.export_cost -= h * (lam.real() * e.real() + lam.imag() * e.imag());
    }
    if (params.regime == ExchangeRegime::Taxed) {
        for (const auto& block : partition)
            for (const auto& x : boundary_exchange(grid, block, r.realized.flow))
                for (int t = 0; t < T; ++t) r.tax += params.tax(t) * h * std::abs(x[t]);
    }
    r.exante_realized = r.flex + r.tax + r.export_cost;

    const ViolationCosts v = expost_violation_costs(grid, partition, r.realized, params);
    r.internal = v.block;
    r.external = v.external;
    r.overload = v.overload;
    r.voltage = v.voltage;
    r.balancing = balancing_cost(grid, partition, data, params);
    r.imbalance = std::accumulate(r.balancing.begin(), r.balancing.end(), 0.0);
    for (const auto& block : partition) r.block_imbalance.push_back(block_imbalance(block, data));
    r.total = r.flex + r.imbalance + r.overload + r.voltage + r.tax + r.export_cost;
    return r;
}

CostReport partition_total_cost(const Grid& grid, const Partition& partition, const ProsumptionSet& data,
                                const CostParams& params) {
    const DispatchSolution d = solve_exante(grid, partition, data, params);
    return evaluate_partition(grid, partition, d, data, params);
}

CoalitionCost coalition_cost_externalities(const Grid& grid, const Partition& partition, int block_index,
                                           const DispatchSolution& dispatch, const ProsumptionSet& data,
                                           const CostParams& params) {
    if (block_index < 0 || block_index >= static_cast<int>(partition.size()))
        throw Error(ErrorCode::InvalidPartition, "block index out of range");
    const Coalition& F = partition[block_index];
    const int T = data.steps();
    const double h = params.step_hours;
    const CostReport rep = evaluate_partition(grid, partition, dispatch, data, params);

    CoalitionCost c;
    c.members = F.members;
    for (int k : F.members)
        for (int t = 0; t < T; ++t) c.flex += params.flex[k].cost.step_cost(dispatch.u[k][t], h);
    for (int t = 0; t < T; ++t) c.internal_violation += rep.internal[block_index][t];

    const auto exchange = realized_exchange(grid, F, rep.realized.flow, data, params);
    for (std::size_t i = 0; i < F.boundary.size(); ++i) {
        const int nb = F.boundary[i];
        for (int t = 0; t < T; ++t) {
            const Complex s = exchange[i][t];
            if (params.regime == ExchangeRegime::Taxed) c.tax += params.tax(t) * h * std::abs(s);
            const Complex lam = dispatch.duals.lambda[nb][t];
            c.dlmp_payment -= h * (lam.real() * s.real() + lam.imag() * s.imag());
        }
    }

    c.alpha.assign(T, 0.0);
    const int L = static_cast<int>(partition.size());
    for (int t = 0; t < T; ++t) {
        const double recover = rep.external[t] + rep.balancing[t];
        double denom = 0.0;
        for (int l = 0; l < L; ++l) denom += rep.block_imbalance[l][t];
        const double own = rep.block_imbalance[block_index][t];
        if (denom > 0.0) {
            c.alpha[t] = recover / (h * denom);
            c.imbalance_charge += c.alpha[t] * h * own;
        } else if (recover > 0.0) {
            c.uniform_recovery_steps.push_back(t);
            c.imbalance_charge += recover / L;
        }
    }
    c.phi_int = c.flex + c.internal_violation + c.tax;
    c.phi_ext = c.dlmp_payment + c.imbalance_charge;
    c.phi = c.phi_int + c.phi_ext;
    return c;
}

CoalitionCost coalition_cost_decoupled(const Grid& grid, const Coalition& coalition, const ProsumptionSet& data,
                                       const CostParams& params, double absolute_eps) {
    const DecoupledDispatch d = solve_exante_decoupled(grid, coalition, data, params, absolute_eps);
    const Grid& sg = d.sub.grid;
    const int T = data.steps();
    const double h = params.step_hours;

    CoalitionCost c;
    c.decoupled = true;
    c.members = coalition.members;
    c.exante0 = d.solution.flex_cost;
    c.flex = c.exante0;

    const FlowState local = evaluate_flows(sg, injections(d.solution.u, d.data.realized));
    for (int n = 0; n < sg.num_nodes(); ++n) {
        if (n == sg.pcc()) continue;
        for (int t = 0; t < T; ++t) {
            c.violation0 += edge_violation(sg, d.params, n, local.flow[n][t]);
            c.violation0 += node_violation(sg, d.params, n, local.dv[n][t]);
        }
    }
    const double alpha = params.balancing_price(coalition.members);
    for (double m : block_imbalance(coalition, data)) c.balancing0 += alpha * h * m;

    c.internal_violation = c.violation0;
    c.imbalance_charge = c.balancing0;
    c.phi_int = c.exante0 + c.violation0;
    c.phi_ext = c.balancing0;
    c.phi = c.exante0 + c.balancing0 + c.violation0;
    return c;
}

const CoalitionCost& DecoupledCache::get(const Grid& grid, const Coalition& coalition, const ProsumptionSet& data,
                                         const CostParams& params) {
    auto it = cache_.find(coalition.members);
    if (it != cache_.end()) return it->second;
    return cache_.emplace(coalition.members, coalition_cost_decoupled(grid, coalition, data, params)).first->second;
}

Partition deviation_partition(const Grid& grid, const Partition& partition, const Coalition& deviating) {
    int home = -1;
    for (std::size_t i = 0; i < partition.size(); ++i) {
        const auto& m = partition[i].members;
        if (std::includes(m.begin(), m.end(), deviating.members.begin(), deviating.members.end())) {
            home = static_cast<int>(i);
            break;
        }
    }
    if (home < 0) throw Error(ErrorCode::InvalidPartition, "deviating coalition is not inside one block");
    const Coalition& Fi = partition[home];
    if (Fi.members == deviating.members) return partition;

    // Components of the home block's remaining edges, seen from each residual prosumer.
    const int N = grid.num_nodes();
    std::vector<int> comp(N);
    std::iota(comp.begin(), comp.end(), 0);
    auto find = [&](int v) {
        while (comp[v] != v) v = comp[v] = comp[comp[v]];
        return v;
    };
    for (int e : Fi.edges)
        if (!deviating.has_edge(e)) comp[find(e)] = find(grid.parent(e));

    std::map<int, std::vector<int>> groups;
    for (int k : Fi.members)
        if (!std::binary_search(deviating.members.begin(), deviating.members.end(), k))
            groups[find(grid.prosumer_node(k))].push_back(k);

    std::vector<std::vector<int>> blocks;
    for (std::size_t i = 0; i < partition.size(); ++i)
        if (static_cast<int>(i) != home) blocks.push_back(partition[i].members);
    blocks.push_back(deviating.members);
    for (auto& [root, members] : groups) blocks.push_back(members);
    return make_partition(grid, blocks);
}

double deviation_cost(const Grid& grid, const Partition& partition, const Coalition& deviating, DeviationMode mode,
                      const ProsumptionSet& data, const CostParams& params, DecoupledCache* cache) {
    if (mode == DeviationMode::NoExternalities) {
        if (cache) return cache->get(grid, deviating, data, params).phi;
        return coalition_cost_decoupled(grid, deviating, data, params).phi;
    }
    const Partition alt = deviation_partition(grid, partition, deviating);
    const DispatchSolution d = solve_exante(grid, alt, data, params);
    for (std::size_t i = 0; i < alt.size(); ++i)
        if (alt[i].members == deviating.members)
            return coalition_cost_externalities(grid, alt, static_cast<int>(i), d, data, params).phi;
    throw Error(ErrorCode::InvalidPartition, "deviating coalition missing from its deviation partition");
}

}  // namespace lempart
