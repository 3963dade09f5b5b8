#pragma once

#include <vector>

#include "lempart/conic.hpp"
#include "lempart/grid.hpp"
#include "lempart/powerflow.hpp"
#include "lempart/timeseries.hpp"

namespace lempart {

// Multipliers of the ex-ante problem, per node (or prosumer) and step.
// λ is the marginal value of an injection at a node in CHF/MWh; at the PCC it
// equals the export price.
struct DualBundle {
    std::vector<Series> lambda;                     // nodal balance
    std::vector<std::vector<double>> beta;          // voltage link of edge n→parent(n)
    std::vector<double> beta0;                      // PCC reference voltage
    std::vector<std::vector<double>> mu;            // line limit, in the |S|² ≤ S̄² form
    std::vector<std::vector<double>> eta_upper;     // δv_n ≤ δv̄_n
    std::vector<std::vector<double>> eta_lower;     // −δv_n ≤ δv̄_n
    std::vector<std::vector<double>> theta;         // flexibility magnitude bound, by prosumer
    std::vector<double> theta_neutral;              // energy neutrality, by prosumer
    // −Σ (multiplier · right-hand side) over the rows attached to each node.
    // Sums to the dual objective.
    std::vector<double> node_lagrangian;
    double complementarity = 0.0;                   // s'z
};

struct DispatchSolution {
    std::vector<Series> u;      // by prosumer
    FlowState flows;            // under forecasts
    double objective = 0.0;     // Γ_e^I at forecasts, without the tie-break term
    double flex_cost = 0.0;
    double tax_cost = 0.0;
    double export_revenue = 0.0;
    double tiebreak = 0.0;      // absolute weight on Σ|u|² used in the solve
    conic::Status status = conic::Status::NumericalError;
    double relative_gap = 0.0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    int iterations = 0;
    DualBundle duals;
};

struct ExAnteProblem {
    const Grid* grid = nullptr;
    Partition partition;
    std::vector<Series> forecast;  // by prosumer
    CostParams params;
    double tiebreak = 0.0;         // absolute ε on Σ_n Σ_t |u_n^t|²
};

ExAnteProblem pose_exante(const Grid& grid, const Partition& partition, const ProsumptionSet& forecasts,
                          const CostParams& params);

// ε = params.tiebreak · params.cost_scale(); ε = 0 returns the problem unchanged.
ExAnteProblem tiebreak_regularize(ExAnteProblem problem);
ExAnteProblem tiebreak_regularize(ExAnteProblem problem, double absolute_eps);

DispatchSolution solve_posed(const ExAnteProblem& problem, const conic::Settings& settings = {});

DispatchSolution solve_exante(const Grid& grid, const Partition& partition, const ProsumptionSet& forecasts,
                              const CostParams& params);

// Zero boundary exchange on the coalition's own subtree. Indices of the
// result refer to `sub`.
struct DecoupledDispatch {
    SubGrid sub;
    CostParams params;  // restricted to the subtree
    ProsumptionSet data;
    DispatchSolution solution;
};

// absolute_eps < 0 derives the tie-break weight from `params`.
DecoupledDispatch solve_exante_decoupled(const Grid& grid, const Coalition& coalition,
                                         const ProsumptionSet& data, const CostParams& params,
                                         double absolute_eps = -1.0);

// Ex-ante objective Γ_e^I(u; P, V) for arbitrary injections V, e.g. realized prosumption.
struct ExAnteCost {
    double flex = 0.0;
    double tax = 0.0;
    double export_revenue = 0.0;
    double total() const { return flex + tax - export_revenue; }
};
ExAnteCost exante_cost(const Grid& grid, const Partition& partition, const std::vector<Series>& u,
                       const std::vector<Series>& prosumption, const CostParams& params);

// Running totals over every successful ex-ante solve in this process.
struct SolveStats {
    long solves = 0;
    double worst_relative_gap = 0.0;
};
SolveStats exante_solve_stats();
void reset_exante_solve_stats();

}  // namespace lempart
