#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lempart/grid.hpp"
#include "lempart/timeseries.hpp"

namespace lempart {

// A complete, self-consistent input set.
struct Bundle {
    std::string name;
    Grid grid;
    ProsumptionSet data;
    CostParams params;
};

// Three batteries on a star, linear 19 CHF/MWh, κ = 100, penalties 200.
Bundle example1();
// Example 1 with 19|e| + 2e² battery costs and per-coalition balancing prices.
Bundle example2();

// Hub with a wind chain (8 edges), a PV chain (12 edges) and a single-edge
// flat branch; one prosumer at the end of each, 24 hourly steps, strict
// self-consumption. Forecasts are perfect; the sweep adds noise.
Bundle sweep_fixture();

// 43-node low-voltage feeder: 29 houses on five cabinets and a five-house
// neighbourhood (a..e) at the feeder end whose connected regroupings number 34.
// Synthetic household series with day-ahead forecast errors.
Bundle lausanne_like(std::uint64_t seed = 7);
// Prosumer indices of the neighbourhood houses.
std::vector<int> lausanne_neighbourhood(const Grid& grid);

}  // namespace lempart
