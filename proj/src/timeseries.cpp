#include "lempart/timeseries.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "lempart/error.hpp"

namespace lempart {

namespace {

// 53-bit mantissa from the engine, so draws match across standard libraries.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

void validate_prosumption(const ProsumptionSet& data, int num_prosumers) {
    if (data.num_prosumers() != num_prosumers || static_cast<int>(data.forecast.size()) != num_prosumers)
        throw Error(ErrorCode::MissingProsumerSeries,
                    "expected series for " + std::to_string(num_prosumers) + " prosumers, got " +
                        std::to_string(data.num_prosumers()));
    const int T = data.steps();
    for (int k = 0; k < num_prosumers; ++k) {
        if (static_cast<int>(data.realized[k].size()) != T || static_cast<int>(data.forecast[k].size()) != T)
            throw Error(ErrorCode::MissingProsumerSeries, "series lengths differ for prosumer " + std::to_string(k));
    }
    if (!(data.step_hours > 0.0)) throw Error(ErrorCode::InvalidParameter, "step_hours must be positive");
}

double FlexCost::step_cost(Complex u, double step_hours) const {
    const double e = std::abs(u) * step_hours;
    switch (family) {
        case Family::Linear: return linear * e;
        case Family::Quadratic: return linear * e + quadratic * e * e;
        case Family::PiecewiseLinear: {
            double best = -kInf;
            for (auto [slope, intercept] : pieces) best = std::max(best, slope * e + intercept);
            return best;
        }
    }
    return 0.0;
}

double FlexCost::scale() const {
    double s = std::abs(linear) + std::abs(quadratic);
    for (auto [slope, intercept] : pieces) s = std::max(s, std::abs(slope));
    return s;
}

double CostParams::balancing_price(const std::vector<int>& members) const {
    auto it = coalition_balancing_overrides.find(members);
    if (it != coalition_balancing_overrides.end()) return it->second;
    return coalition_balancing.value_or(imbalance_penalty);
}

double CostParams::cost_scale() const {
    double s = 0.0;
    for (const auto& f : flex) s = std::max(s, f.cost.scale());
    for (double k : exchange_tax) s = std::max(s, k);
    for (const auto& p : export_price) s = std::max(s, std::abs(p));
    return s > 0.0 ? s : 1.0;
}

void validate_params(const CostParams& params, const Grid& grid, int steps) {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidParameter, what); };
    if (!(params.step_hours > 0.0)) fail("step_hours must be positive");
    if (static_cast<int>(params.flex.size()) != grid.num_prosumers())
        fail("flexibility spec must cover every prosumer");
    if (static_cast<int>(params.overload_penalty.size()) != grid.num_nodes() ||
        static_cast<int>(params.voltage_penalty.size()) != grid.num_nodes())
        fail("penalty vectors must be sized to the grid");
    auto per_step = [&](std::size_t n, const char* name) {
        if (n != 1 && static_cast<int>(n) != steps)
            fail(std::string(name) + " must have one entry or one per step");
    };
    per_step(params.export_price.size(), "export_price");
    per_step(params.exchange_tax.size(), "exchange_tax");
    for (double k : params.exchange_tax)
        if (k < 0.0) fail("exchange_tax must be nonnegative");
    for (double a : params.overload_penalty)
        if (a < 0.0) fail("overload_penalty must be nonnegative");
    for (double a : params.voltage_penalty)
        if (a < 0.0) fail("voltage_penalty must be nonnegative");
    if (params.imbalance_penalty < 0.0) fail("imbalance_penalty must be nonnegative");
    if (params.coalition_balancing && *params.coalition_balancing < 0.0) fail("coalition_balancing must be nonnegative");
    for (auto& [members, price] : params.coalition_balancing_overrides)
        if (price < 0.0) fail("coalition balancing override must be nonnegative");
    if (params.tiebreak < 0.0) fail("tiebreak must be nonnegative");
    for (const auto& f : params.flex) {
        const FlexCost& c = f.cost;
        switch (c.family) {
            case FlexCost::Family::Linear:
                if (c.linear < 0.0) fail("linear flexibility cost must be nonnegative");
                break;
            case FlexCost::Family::Quadratic:
                if (c.linear < 0.0 || c.quadratic < 0.0) fail("quadratic flexibility cost needs nonnegative coefficients");
                break;
            case FlexCost::Family::PiecewiseLinear:
                if (c.pieces.empty()) fail("piecewise-linear cost needs at least one piece");
                for (auto [slope, intercept] : c.pieces)
                    if (slope < 0.0) fail("piecewise-linear slopes must be nonnegative");
                break;
        }
        if (!(f.set.max_magnitude > 0.0)) fail("flexibility bound must be positive");
    }
}

CostParams default_params(const Grid& grid) {
    CostParams p;
    p.flex.assign(grid.num_prosumers(), ProsumerFlex{});
    p.overload_penalty.assign(grid.num_nodes(), 0.0);
    p.voltage_penalty.assign(grid.num_nodes(), 0.0);
    return p;
}

double voltage_sensitivity(const Grid& grid, int node) {
    double r = 0.0;
    for (int e : grid.path_to_pcc(node)) r += grid.impedance(e).real();
    return 2.0 * r;
}

std::vector<double> voltage_penalty_from_curtailment(const Grid& grid, double price_per_mwh, double step_hours) {
    std::vector<double> alpha(grid.num_nodes(), 0.0);
    for (int n = 0; n < grid.num_nodes(); ++n) {
        const double s = voltage_sensitivity(grid, n);
        if (s > 0.0) alpha[n] = price_per_mwh * step_hours / s;
    }
    return alpha;
}

CostParams restrict_params(const CostParams& params, const SubGrid& sub) {
    CostParams out = params;
    out.flex.clear();
    for (int k : sub.prosumer_map) out.flex.push_back(params.flex[k]);
    const int n = sub.grid.num_nodes();
    out.overload_penalty.assign(n, 0.0);
    out.voltage_penalty.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
        out.overload_penalty[i] = params.overload_penalty[sub.node_map[i]];
        out.voltage_penalty[i] = params.voltage_penalty[sub.node_map[i]];
    }
    out.coalition_balancing_overrides.clear();
    std::vector<int> all;
    for (int k : sub.prosumer_map) all.push_back(k);
    std::sort(all.begin(), all.end());
    out.coalition_balancing = params.balancing_price(all);
    return out;
}

ProsumptionSet restrict_data(const ProsumptionSet& data, const SubGrid& sub) {
    ProsumptionSet out;
    out.step_hours = data.step_hours;
    for (int k : sub.prosumer_map) {
        out.forecast.push_back(data.forecast[k]);
        out.realized.push_back(data.realized[k]);
    }
    return out;
}

void validate_noise(const NoiseSpec& spec, int steps) {
    if (!(spec.sigma >= 0.0)) throw Error(ErrorCode::InvalidParameter, "noise sigma must be nonnegative");
    if (!(spec.scale_bound >= 0.0 && spec.scale_bound < 1.0))
        throw Error(ErrorCode::InvalidParameter, "scale bound must lie in [0,1)");
    if (spec.shift_bound < 0 || (steps > 0 && spec.shift_bound >= steps))
        throw Error(ErrorCode::InvalidParameter, "shift bound must lie in [0,T)");
}

ProsumptionSet apply_forecast_noise(const ProsumptionSet& data, const NoiseSpec& spec) {
    if (!(spec.sigma >= 0.0)) throw Error(ErrorCode::InvalidParameter, "noise sigma must be nonnegative");
    ProsumptionSet out = data;
    std::mt19937_64 rng(spec.seed);
    for (int k = 0; k < data.num_prosumers(); ++k) {
        for (int t = 0; t < data.steps(); ++t) {
            const double eps = spec.sigma * (2.0 * uniform01(rng) - 1.0);
            out.forecast[k][t] = data.realized[k][t] * (1.0 + eps);
        }
    }
    return out;
}

std::vector<ProsumptionSet> generate_profile_variants(const ProsumptionSet& base, const NoiseSpec& spec,
                                                      int count) {
    if (count < 1) throw Error(ErrorCode::InvalidParameter, "variant count must be at least 1");
    validate_noise(spec, base.steps());
    const int T = base.steps();
    std::vector<ProsumptionSet> out;
    out.reserve(count);
    for (int v = 0; v < count; ++v) {
        std::mt19937_64 rng(derive_seed(spec.seed, static_cast<std::uint64_t>(v)));
        ProsumptionSet var = base;
        for (int k = 0; k < base.num_prosumers(); ++k) {
            const int width = 2 * spec.shift_bound + 1;
            const int shift = std::min(width - 1, static_cast<int>(uniform01(rng) * width)) - spec.shift_bound;
            for (int t = 0; t < T; ++t) {
                const double factor = 1.0 + spec.scale_bound * (2.0 * uniform01(rng) - 1.0);
                const int src = ((t - shift) % T + T) % T;
                var.forecast[k][t] = base.forecast[k][src] * factor;
                var.realized[k][t] = base.realized[k][src] * factor;
            }
        }
        out.push_back(std::move(var));
    }
    return out;
}

}  // namespace lempart
