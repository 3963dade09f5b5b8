#pragma once

#include <complex>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "lempart/grid.hpp"

namespace lempart {

using Complex = std::complex<double>;
using Series = std::vector<Complex>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Net injections (generation minus load), indexed by grid prosumer index.
struct ProsumptionSet {
    double step_hours = 1.0;
    std::vector<Series> forecast;
    std::vector<Series> realized;

    int steps() const { return realized.empty() ? 0 : static_cast<int>(realized.front().size()); }
    int num_prosumers() const { return static_cast<int>(realized.size()); }
    bool perfect() const { return forecast == realized; }
};

void validate_prosumption(const ProsumptionSet& data, int num_prosumers);

// Cost of flexibility per step, as a function of energy e = |u|·h (MWh).
struct FlexCost {
    enum class Family { Linear, Quadratic, PiecewiseLinear };
    Family family = Family::Linear;
    double linear = 0.0;     // CHF/MWh
    double quadratic = 0.0;  // CHF/MWh²
    // max_k(slope_k·e + intercept_k); slopes must be nonnegative.
    std::vector<std::pair<double, double>> pieces;

    double step_cost(Complex u, double step_hours) const;
    double scale() const;
};

struct FlexSet {
    double max_magnitude = kInf;  // per-step |u| bound (MVA)
    bool energy_neutral = false;  // Σ_t Re(u_t) = 0
};

struct ProsumerFlex {
    FlexCost cost;
    FlexSet set;
};

enum class ExchangeRegime {
    Taxed,                  // κ-tax on boundary exchanges
    StrictSelfConsumption,  // zero exchange at every boundary node, both stages
};

struct CostParams {
    double step_hours = 1.0;
    ExchangeRegime regime = ExchangeRegime::Taxed;

    std::vector<ProsumerFlex> flex;        // by prosumer index
    Series export_price{Complex{}};        // CHF/MWh per step; one entry broadcasts
    std::vector<double> exchange_tax{0.0}; // CHF/MWh per step; one entry broadcasts
    std::vector<double> overload_penalty;  // CHF/MWh by edge (child node)
    std::vector<double> voltage_penalty;   // CHF per pu²·step by node
    double imbalance_penalty = 0.0;        // grid-level, CHF/MWh
    std::optional<double> coalition_balancing;                   // default per-coalition price
    std::map<std::vector<int>, double> coalition_balancing_overrides;  // by sorted prosumer indices
    double tiebreak = 1e-6;                // relative to cost_scale()

    Complex price(int t) const { return export_price.size() == 1 ? export_price[0] : export_price[t]; }
    double tax(int t) const { return exchange_tax.size() == 1 ? exchange_tax[0] : exchange_tax[t]; }
    double balancing_price(const std::vector<int>& members) const;
    double cost_scale() const;
};

void validate_params(const CostParams& params, const Grid& grid, int steps);

// Uniform defaults sized to the grid; flexibility defaults to a free-standing box.
CostParams default_params(const Grid& grid);

// Squared-voltage sensitivity of node n to active injection below it: 2·Σ r on the path.
double voltage_sensitivity(const Grid& grid, int node);
// Price of curtailing enough active power to remove one pu² of violation for one step.
std::vector<double> voltage_penalty_from_curtailment(const Grid& grid, double price_per_mwh, double step_hours);

// Restricts node/prosumer-indexed parameters to a coalition's own subtree.
CostParams restrict_params(const CostParams& params, const SubGrid& sub);
ProsumptionSet restrict_data(const ProsumptionSet& data, const SubGrid& sub);

struct NoiseSpec {
    double sigma = 0.0;         // forecast noise level
    double scale_bound = 0.25;  // per-step variant scaling
    int shift_bound = 1;        // circular shift in steps
    std::uint64_t seed = 0;
};

void validate_noise(const NoiseSpec& spec, int steps);

// Û = U·(1+ε), ε ~ U[−σ, σ] per prosumer and step. Draws depend only on the
// seed, so the same seed at different σ gives proportional errors.
ProsumptionSet apply_forecast_noise(const ProsumptionSet& data, const NoiseSpec& spec);

// Scaled and circularly shifted copies of the base profiles; forecast and
// realization of a prosumer receive the same transformation.
std::vector<ProsumptionSet> generate_profile_variants(const ProsumptionSet& base, const NoiseSpec& spec, int count);

// Independent child seed for stream `stream` of a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace lempart
