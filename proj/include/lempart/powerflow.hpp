#pragma once

#include <vector>

#include "lempart/grid.hpp"
#include "lempart/timeseries.hpp"

namespace lempart {

// Linear DistFlow, lossless. flow[n][t] is the flow on edge n→parent(n);
// flow[pcc][t] holds the aggregate export through the PCC.
struct FlowState {
    std::vector<Series> flow;
    std::vector<std::vector<double>> dv;  // squared-voltage deviation, zero at the PCC
};

// Injections indexed by prosumer.
std::vector<Series> branch_flows(const Grid& grid, const std::vector<Series>& injections);
// Injections indexed by node; used when a boundary node absorbs a block's imbalance.
std::vector<Series> nodal_branch_flows(const Grid& grid, const std::vector<Series>& nodal);

std::vector<std::vector<double>> voltage_deviations(const Grid& grid, const std::vector<Series>& flows);

FlowState evaluate_flows(const Grid& grid, const std::vector<Series>& injections);

// Σ of flows on the coalition's edges entering each boundary node, in the
// order of coalition.boundary. A singleton returns its own injection.
std::vector<Series> boundary_exchange(const Grid& grid, const Coalition& coalition,
                                      const std::vector<Series>& flows);

}  // namespace lempart
