#include "lempart/stability.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lempart/conic.hpp"
#include "lempart/error.hpp"

namespace lempart {

namespace {

bool infeasible(const Error& e) { return e.code() == ErrorCode::Infeasible; }

}  // namespace

StabilityAnalyzer::StabilityAnalyzer(const Grid& grid, const ProsumptionSet& data, const CostParams& params,
                                     StabilityOptions options)
    : grid_(grid), data_(data), params_(params), options_(std::move(options)) {
    if (!(options_.tol >= 0.0)) throw Error(ErrorCode::InvalidParameter, "stability tolerance must be nonnegative");
}

double StabilityAnalyzer::deviation(const Partition& partition, const DispatchSolution& dispatch,
                                    const Coalition& deviating) {
    if (options_.mode == DeviationMode::NoExternalities) {
        if (auto it = decoupled_failures_.find(deviating.members); it != decoupled_failures_.end()) return it->second;
        try {
            return decoupled_.get(grid_, deviating, data_, params_).phi;
        } catch (const Error& e) {
            if (!infeasible(e)) throw;
            decoupled_failures_[deviating.members] = kInf;
            return kInf;
        }
    }
    for (std::size_t i = 0; i < partition.size(); ++i)
        if (partition[i].members == deviating.members)
            return coalition_cost_externalities(grid_, partition, static_cast<int>(i), dispatch, data_, params_).phi;

    const Partition alt = deviation_partition(grid_, partition, deviating);
    const auto key = std::make_pair(partition_label(grid_, alt), deviating.members);
    if (auto it = external_.find(key); it != external_.end()) return it->second;
    double cost = kInf;
    try {
        cost = deviation_cost(grid_, partition, deviating, DeviationMode::Externalities, data_, params_);
    } catch (const Error& e) {
        if (!infeasible(e)) throw;
    }
    external_.emplace(key, cost);
    return cost;
}

double StabilityAnalyzer::block_cost(const Partition& partition, const DispatchSolution& dispatch, int block_index) {
    const Coalition& block = partition.at(block_index);
    if (options_.mode == DeviationMode::NoExternalities) {
        if (!block.single_boundary())
            throw Error(ErrorCode::AssumptionViolated,
                        "block " + coalition_label(grid_, block) + " has several boundary nodes");
        return deviation(partition, dispatch, block);
    }
    return coalition_cost_externalities(grid_, partition, block_index, dispatch, data_, params_).phi;
}

CoreResult StabilityAnalyzer::core_check(const Partition& partition, const DispatchSolution& dispatch,
                                         int block_index, double block_cost) {
    const Coalition& Fi = partition.at(block_index);
    if (static_cast<int>(Fi.members.size()) > options_.max_subcoalition_members)
        throw Error(ErrorCode::ExponentialBlowup,
                    "block " + coalition_label(grid_, Fi) + " has more than 2^" +
                        std::to_string(options_.max_subcoalition_members) + " deviating coalitions");
    const double tol = options_.tol;

    CoreResult r;
    r.budget = block_cost;
    r.edges = Fi.edges;

    std::vector<Coalition> subs;
    for (auto& F : enumerate_connected_subcoalitions(grid_, Fi)) {
        // Without externalities only single-metering-point coalitions may form.
        if (options_.mode == DeviationMode::NoExternalities && !F.single_boundary()) continue;
        const double cost = F.members == Fi.members ? block_cost : deviation(partition, dispatch, F);
        r.deviations.push_back({F.members, cost, 0.0, 0.0});
        subs.push_back(std::move(F));
    }

    if (Fi.edges.empty()) {
        r.by_prosumer = true;
        r.edges = Fi.members;
        r.allocation = {block_cost};
        r.lp_value = kInf;
        r.nonempty = true;
        for (auto& d : r.deviations) {
            d.allocated = block_cost;
            r.lp_value = std::min(r.lp_value, d.cost);
            if (block_cost > d.cost + tol) {
                r.nonempty = false;
                d.dual = 1.0;
                r.blockers.push_back(d.members);
            }
        }
        return r;
    }

    // An infeasible block is blocked by anyone who can stand alone, and
    // otherwise has nowhere to go.
    if (!std::isfinite(block_cost)) {
        r.allocation.assign(Fi.edges.size(), kInf);
        r.lp_value = kInf;
        r.nonempty = true;
        for (auto& d : r.deviations)
            if (std::isfinite(d.cost)) {
                r.nonempty = false;
                d.dual = 1.0;
                r.lp_value = std::min(r.lp_value, d.cost);
                r.blockers.push_back(d.members);
            }
        return r;
    }

    // Coalitions without internal edges are bounded by an empty sum.
    std::vector<std::pair<double, std::vector<int>>> direct;
    for (auto& d : r.deviations)
        if (d.cost < -tol && std::find_if(subs.begin(), subs.end(), [&](const Coalition& c) {
                                 return c.members == d.members && c.edges.empty();
                             }) != subs.end()) {
            d.dual = kInf;
            direct.push_back({d.cost, d.members});
        }

    // max Σγ  s.t.  Σ_{E_F} γ ≤ φ̂(F),  Σ_{E_Fi} γ ≤ φ(F_i),  γ ≥ −B.
    // The cap makes budget balance exact at the optimum whenever the core is
    // nonempty; the floor keeps the optimal face bounded.
    const int E = static_cast<int>(Fi.edges.size());
    std::vector<int> pos(grid_.num_nodes(), -1);
    for (int i = 0; i < E; ++i) pos[Fi.edges[i]] = i;
    double scale = 1.0 + std::abs(block_cost);
    for (const auto& d : r.deviations)
        if (std::isfinite(d.cost)) scale += std::abs(d.cost);
    const double floor = -10.0 * scale;

    conic::Builder b;
    for (int i = 0; i < E; ++i) b.add_var(-1.0);
    std::vector<int> row_of(subs.size(), -1);
    for (std::size_t k = 0; k < subs.size(); ++k) {
        if (subs[k].edges.empty() || !std::isfinite(r.deviations[k].cost)) continue;
        conic::Builder::Terms terms;
        for (int e : subs[k].edges) terms.push_back({pos[e], 1.0});
        row_of[k] = b.add_leq(terms, r.deviations[k].cost);
    }
    conic::Builder::Terms all;
    for (int i = 0; i < E; ++i) all.push_back({i, 1.0});
    b.add_leq(all, block_cost);
    for (int i = 0; i < E; ++i) b.add_leq({{i, -1.0}}, -floor);

    const conic::Result sol = conic::solve(b.build());
    if (!sol.optimal())
        throw Error(ErrorCode::LPFailure, std::string("core LP for block ") + coalition_label(grid_, Fi) +
                                              " failed: " + conic::status_name(sol.status));

    r.allocation.assign(E, 0.0);
    for (int i = 0; i < E; ++i) r.allocation[i] = sol.x[i];
    r.lp_value = std::accumulate(r.allocation.begin(), r.allocation.end(), 0.0);
    r.nonempty = direct.empty() && r.lp_value >= block_cost - tol;

    std::vector<std::pair<double, std::vector<int>>> binding;
    for (std::size_t k = 0; k < subs.size(); ++k) {
        auto& d = r.deviations[k];
        for (int e : subs[k].edges) d.allocated += r.allocation[pos[e]];
        if (row_of[k] >= 0) {
            d.dual = sol.z[b.lp_row(row_of[k])];
            if (!r.nonempty && d.dual > 1e-6) binding.push_back({d.dual, d.members});
        }
    }
    if (!r.nonempty) {
        std::sort(direct.begin(), direct.end());
        for (auto& [cost, members] : direct) r.blockers.push_back(members);
        std::sort(binding.begin(), binding.end(), [](const auto& a, const auto& c) {
            if (std::abs(a.first - c.first) > 1e-6) return a.first > c.first;
            return a.second < c.second;
        });
        for (auto& [dual, members] : binding) r.blockers.push_back(members);
    }
    return r;
}

PartitionStability StabilityAnalyzer::analyze(const Partition& partition) {
    PartitionStability r;
    r.partition = partition;
    DispatchSolution d;
    try {
        d = solve_exante(grid_, partition, data_, params_);
    } catch (const Error& e) {
        if (!infeasible(e)) throw;
        r.feasible = false;
        r.total = kInf;
        r.note = "ex-ante dispatch infeasible";
        return r;
    }
    r.total = evaluate_partition(grid_, partition, d, data_, params_).total;
    r.stable = true;
    if (options_.mode == DeviationMode::NoExternalities)
        for (const auto& block : partition)
            if (!block.single_boundary()) {
                r.stable = false;
                r.note = "block " + coalition_label(grid_, block) + " has several boundary nodes";
                return r;
            }
    for (std::size_t l = 0; l < partition.size(); ++l) {
        const double phi = block_cost(partition, d, static_cast<int>(l));
        r.block_costs.push_back(phi);
        r.cores.push_back(core_check(partition, d, static_cast<int>(l), phi));
        if (!r.cores.back().nonempty) {
            if (r.stable && !r.cores.back().blockers.empty()) r.first_blocker = r.cores.back().blockers.front();
            r.stable = false;
        }
    }
    return r;
}

CoreResult core_check(const Grid& grid, const Partition& partition, int block_index, const ProsumptionSet& data,
                      const CostParams& params, const StabilityOptions& options) {
    if (block_index < 0 || block_index >= static_cast<int>(partition.size()))
        throw Error(ErrorCode::InvalidPartition, "block index out of range");
    StabilityAnalyzer an(grid, data, params, options);
    const DispatchSolution d = solve_exante(grid, partition, data, params);
    return an.core_check(partition, d, block_index, an.block_cost(partition, d, block_index));
}

PartitionStability is_stable_partition(const Grid& grid, const Partition& partition, const ProsumptionSet& data,
                                       const CostParams& params, const StabilityOptions& options) {
    StabilityAnalyzer an(grid, data, params, options);
    return an.analyze(partition);
}

int argmin_partition(const std::vector<Partition>& partitions, const std::vector<double>& totals,
                     const std::vector<bool>& ok) {
    double best = kInf;
    for (std::size_t i = 0; i < totals.size(); ++i)
        if (ok[i]) best = std::min(best, totals[i]);
    if (!std::isfinite(best)) return -1;
    const double slack = 1e-6 * std::max(1.0, std::abs(best));
    int pick = -1;
    for (std::size_t i = 0; i < totals.size(); ++i) {
        if (!ok[i] || totals[i] > best + slack) continue;
        if (pick < 0 || partition_less(partitions[i], partitions[pick])) pick = static_cast<int>(i);
    }
    return pick;
}

std::vector<Partition> candidate_partitions(const Grid& grid, const StabilityOptions& options) {
    if (options.active.empty()) return enumerate_partitions(grid, options.cap);
    return enumerate_partitions(grid, options.active, options.cap);
}

OptimalPartitionResult optimal_partition(const Grid& grid, const ProsumptionSet& data, const CostParams& params,
                                         const StabilityOptions& options) {
    OptimalPartitionResult out;
    std::vector<Partition> parts = candidate_partitions(grid, options);
    std::vector<double> totals;
    std::vector<bool> ok;
    for (auto& P : parts) {
        PartitionCost pc;
        pc.partition = P;
        try {
            pc.total = partition_total_cost(grid, P, data, params).total;
        } catch (const Error& e) {
            if (!infeasible(e)) throw;
            pc.feasible = false;
            pc.total = kInf;
        }
        totals.push_back(pc.total);
        ok.push_back(pc.feasible);
        out.partitions.push_back(std::move(pc));
    }
    out.best = argmin_partition(parts, totals, ok);
    out.total = out.best >= 0 ? totals[out.best] : kInf;
    return out;
}

StablePartitionResult optimal_stable_partition(const Grid& grid, const ProsumptionSet& data, const CostParams& params,
                                               const StabilityOptions& options) {
    StablePartitionResult out;
    StabilityAnalyzer an(grid, data, params, options);
    std::vector<Partition> parts = candidate_partitions(grid, options);
    std::vector<double> totals;
    std::vector<bool> feasible, stable;
    for (const auto& P : parts) {
        out.partitions.push_back(an.analyze(P));
        const auto& r = out.partitions.back();
        totals.push_back(r.total);
        feasible.push_back(r.feasible);
        stable.push_back(r.feasible && r.stable);
    }
    out.optimal = argmin_partition(parts, totals, feasible);
    out.best = argmin_partition(parts, totals, stable);
    out.gamma = out.best >= 0 ? totals[out.best] : kInf;
    return out;
}

double LagrangianAllocation::allocated(const Coalition& coalition) const {
    double s = 0.0;
    for (int e : coalition.edges) s += y[e];
    return s;
}

LagrangianAllocation lagrangian_core_allocation(const Grid& grid, const ProsumptionSet& data,
                                                const CostParams& params) {
    if (!data.perfect())
        throw Error(ErrorCode::RequiresPerfectForecasts, "the Lagrangian allocation needs realized = forecast");
    CostParams strict = params;
    strict.regime = ExchangeRegime::StrictSelfConsumption;
    const Coalition gc = grand_coalition(grid);
    if (!gc.single_boundary())
        throw Error(ErrorCode::AssumptionViolated, "the grand coalition has several boundary nodes");

    LagrangianAllocation out;
    out.dispatch = solve_posed(pose_exante(grid, {gc}, data, strict));
    if (out.dispatch.duals.node_lagrangian.size() != static_cast<std::size_t>(grid.num_nodes()))
        throw Error(ErrorCode::MissingDuals, "dispatch carries no per-node Lagrangian terms");
    out.y = out.dispatch.duals.node_lagrangian;
    out.budget = out.dispatch.objective;
    return out;
}

}  // namespace lempart
