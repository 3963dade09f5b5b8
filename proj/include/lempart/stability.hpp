#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lempart/costs.hpp"

namespace lempart {

struct StabilityOptions {
    DeviationMode mode = DeviationMode::Externalities;
    double tol = 1e-6;                   // CHF, on every core inequality
    int max_subcoalition_members = 12;   // |S(F_i)| ≤ 2^12
    int cap = kDefaultPartitionCap;
    std::vector<int> active;             // prosumers free to regroup; empty means all
};

struct DeviationBound {
    std::vector<int> members;
    double cost = 0.0;       // φ̂(F); +inf when the deviation is infeasible
    double allocated = 0.0;  // Σ_{e∈E_F} y_e under the returned allocation
    double dual = 0.0;       // LP multiplier, > 0 when binding
};

struct CoreResult {
    bool nonempty = false;
    double budget = 0.0;  // φ(F_i;P)
    double lp_value = 0.0;  // Y = max Σγ; +inf when no deviation bounds the total
    // Edge allocation indexed like `edges`. A block without internal edges
    // carries its cost on its single prosumer instead (`by_prosumer`); `edges`
    // then holds that prosumer index.
    std::vector<int> edges;
    std::vector<double> allocation;
    bool by_prosumer = false;
    std::vector<DeviationBound> deviations;
    std::vector<std::vector<int>> blockers;  // by binding strength, then members
};

struct PartitionStability {
    Partition partition;
    bool feasible = true;  // ex-ante dispatch exists
    double total = 0.0;    // Φ(P)
    std::vector<double> block_costs;  // φ(F_i;P)
    std::vector<CoreResult> cores;
    bool stable = false;
    std::optional<std::vector<int>> first_blocker;
    std::string note;
};

// Evaluates partitions while memoizing deviation costs, which repeat across
// partitions sharing the same deviation structure.
class StabilityAnalyzer {
public:
    StabilityAnalyzer(const Grid& grid, const ProsumptionSet& data, const CostParams& params,
                      StabilityOptions options = {});

    PartitionStability analyze(const Partition& partition);
    CoreResult core_check(const Partition& partition, const DispatchSolution& dispatch, int block_index,
                          double block_cost);
    double deviation(const Partition& partition, const DispatchSolution& dispatch, const Coalition& deviating);
    // φ(F_i;P): the coupled cost with externalities, the decoupled cost without.
    double block_cost(const Partition& partition, const DispatchSolution& dispatch, int block_index);

    const StabilityOptions& options() const { return options_; }
    std::size_t cached_deviations() const { return external_.size() + decoupled_.size(); }

private:
    const Grid& grid_;
    const ProsumptionSet& data_;
    const CostParams& params_;
    StabilityOptions options_;
    DecoupledCache decoupled_;
    std::map<std::pair<std::string, std::vector<int>>, double> external_;
    std::map<std::vector<int>, double> decoupled_failures_;
};

CoreResult core_check(const Grid& grid, const Partition& partition, int block_index, const ProsumptionSet& data,
                      const CostParams& params, const StabilityOptions& options = {});

PartitionStability is_stable_partition(const Grid& grid, const Partition& partition, const ProsumptionSet& data,
                                       const CostParams& params, const StabilityOptions& options = {});

// Partitions regrouping `options.active`, or all prosumers when it is empty.
std::vector<Partition> candidate_partitions(const Grid& grid, const StabilityOptions& options);

struct PartitionCost {
    Partition partition;
    bool feasible = true;
    double total = 0.0;
};

struct OptimalPartitionResult {
    std::vector<PartitionCost> partitions;  // enumeration order
    int best = -1;
    double total = 0.0;
};

// Exhaustive argmin of Φ. Values within 1e−6 relative tie; ties go to fewer
// blocks, then to the earlier partition under partition_less.
OptimalPartitionResult optimal_partition(const Grid& grid, const ProsumptionSet& data, const CostParams& params,
                                         const StabilityOptions& options = {});

struct StablePartitionResult {
    std::vector<PartitionStability> partitions;
    int best = -1;        // optimal stable partition, -1 when none is stable
    double gamma = 0.0;   // Γ*
    int optimal = -1;     // unconstrained argmin of Φ
};

StablePartitionResult optimal_stable_partition(const Grid& grid, const ProsumptionSet& data, const CostParams& params,
                                               const StabilityOptions& options = {});

// Index of the minimum under the tie rule above, among entries with ok[i].
int argmin_partition(const std::vector<Partition>& partitions, const std::vector<double>& totals,
                     const std::vector<bool>& ok);

struct LagrangianAllocation {
    std::vector<double> y;  // by node: y[n] is the allocation on edge n → parent(n); y[pcc] = L_PCC
    double budget = 0.0;    // φ(F_GC; P_GC)
    DispatchSolution dispatch;
    double allocated(const Coalition& coalition) const;
};

// Edge allocation y_e = L_n from the grand-coalition dispatch under strict
// self-consumption. Requires perfect forecasts.
LagrangianAllocation lagrangian_core_allocation(const Grid& grid, const ProsumptionSet& data,
                                                const CostParams& params);

}  // namespace lempart
