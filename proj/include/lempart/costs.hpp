#pragma once

#include <map>
#include <vector>

#include "lempart/dispatch.hpp"
#include "lempart/grid.hpp"
#include "lempart/powerflow.hpp"
#include "lempart/timeseries.hpp"

namespace lempart {

// Realized network state. Under strict self-consumption each block's realized
// imbalance is absorbed at its top node.
FlowState realized_flows(const Grid& grid, const Partition& partition, const std::vector<Series>& u,
                         const ProsumptionSet& data, const CostParams& params);

struct ViolationCosts {
    std::vector<std::vector<double>> block;  // Γ_{c,F_l}^t
    std::vector<double> external;            // Γ_{c,0}^t
    double overload = 0.0;
    double voltage = 0.0;
};

ViolationCosts expost_violation_costs(const Grid& grid, const Partition& partition, const FlowState& realized,
                                      const CostParams& params);

// Γ_b^t. Taxed grids net all imbalances at α₀; under strict self-consumption
// every block balances on its own at its coalition price.
std::vector<double> balancing_cost(const Grid& grid, const Partition& partition, const ProsumptionSet& data,
                                   const CostParams& params);

// ‖Σ_{m∈F} (U_m^t − Û_m^t)‖ per step.
std::vector<double> block_imbalance(const Coalition& block, const ProsumptionSet& data);

struct CostReport {
    Partition partition;
    DispatchSolution dispatch;
    FlowState realized;

    double flex = 0.0;
    double imbalance = 0.0;
    double overload = 0.0;
    double voltage = 0.0;
    double tax = 0.0;
    double export_cost = 0.0;  // −revenue from exports at the PCC
    double total = 0.0;

    double exante_realized = 0.0;                  // Γ_e^I(u^I; P, U)
    std::vector<std::vector<double>> internal;     // Γ_{c,F_l}^t
    std::vector<double> external;                  // Γ_{c,0}^t
    std::vector<double> balancing;                 // Γ_b^t
    std::vector<std::vector<double>> block_imbalance;  // ‖block imbalance‖ per block and step

    // Φ recomposed from the decomposition; equals `total` up to rounding.
    double decomposition() const;
};

CostReport evaluate_partition(const Grid& grid, const Partition& partition, const DispatchSolution& dispatch,
                              const ProsumptionSet& data, const CostParams& params);

CostReport partition_total_cost(const Grid& grid, const Partition& partition, const ProsumptionSet& data,
                                const CostParams& params);

struct CoalitionCost {
    std::vector<int> members;
    // with externalities
    double flex = 0.0;
    double internal_violation = 0.0;
    double tax = 0.0;
    double dlmp_payment = 0.0;      // −Σ ⟨λ_nb, S_nb⟩ h
    double imbalance_charge = 0.0;  // Σ α_t h ‖block imbalance‖
    std::vector<double> alpha;      // α_t^ΔE, CHF/MWh
    std::vector<int> uniform_recovery_steps;  // steps recovered uniformly (zero imbalance everywhere)
    // decoupled
    bool decoupled = false;
    double exante0 = 0.0;
    double balancing0 = 0.0;
    double violation0 = 0.0;

    double phi_int = 0.0;
    double phi_ext = 0.0;
    double phi = 0.0;
};

CoalitionCost coalition_cost_externalities(const Grid& grid, const Partition& partition, int block_index,
                                           const DispatchSolution& dispatch, const ProsumptionSet& data,
                                           const CostParams& params);

// absolute_eps < 0 derives the tie-break weight from `params`.
CoalitionCost coalition_cost_decoupled(const Grid& grid, const Coalition& coalition, const ProsumptionSet& data,
                                       const CostParams& params, double absolute_eps = -1.0);

enum class DeviationMode { NoExternalities, Externalities };

// Memo of decoupled coalition costs, keyed by member set.
class DecoupledCache {
public:
    const CoalitionCost& get(const Grid& grid, const Coalition& coalition, const ProsumptionSet& data,
                             const CostParams& params);
    std::size_t size() const { return cache_.size(); }

private:
    std::map<std::vector<int>, CoalitionCost> cache_;
};

// Partition seen by a coalition F breaking away from its block: F, the
// connected pieces of the remainder, and all other blocks unchanged.
Partition deviation_partition(const Grid& grid, const Partition& partition, const Coalition& deviating);

double deviation_cost(const Grid& grid, const Partition& partition, const Coalition& deviating, DeviationMode mode,
                      const ProsumptionSet& data, const CostParams& params, DecoupledCache* cache = nullptr);

}  // namespace lempart
