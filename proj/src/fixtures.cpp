#include "lempart/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "lempart/error.hpp"

namespace lempart {

namespace {

Bundle star_example(const std::string& name) {
    std::vector<NodeSpec> nodes{{"0", kInf, false}, {"1", kInf, true}, {"2", kInf, true}, {"3", kInf, true}};
    std::vector<EdgeSpec> edges;
    for (const char* leaf : {"1", "2", "3"}) edges.push_back({leaf, "0", 0.01, 0.01, 1.0});

    Bundle b;
    b.name = name;
    b.grid = build_grid(nodes, edges, "0");
    b.data.step_hours = 1.0;
    b.data.forecast = {{0.0, 1.0, -1.0}, {-1.0, 0.0, 1.0}, {1.0, -1.0, 0.0}};
    b.data.realized = {{0.0, 1.2, -1.2}, {-1.2, 0.0, 1.2}, {1.2, -1.2, 0.0}};

    b.params = default_params(b.grid);
    b.params.step_hours = 1.0;
    b.params.regime = ExchangeRegime::Taxed;
    b.params.export_price = {Complex{0.0, 0.0}};
    b.params.exchange_tax = {100.0};
    b.params.imbalance_penalty = 200.0;
    b.params.overload_penalty.assign(b.grid.num_nodes(), 200.0);
    b.params.voltage_penalty.assign(b.grid.num_nodes(), 0.0);
    ProsumerFlex battery;
    battery.cost.family = FlexCost::Family::Linear;
    battery.cost.linear = 19.0;
    battery.set.energy_neutral = true;
    b.params.flex.assign(3, battery);
    return b;
}

}  // namespace

Bundle example1() { return star_example("example1"); }

Bundle example2() {
    Bundle b = star_example("example2");
    b.params.regime = ExchangeRegime::StrictSelfConsumption;
    for (auto& f : b.params.flex) {
        f.cost.family = FlexCost::Family::Quadratic;
        f.cost.linear = 19.0;
        f.cost.quadratic = 2.0;
    }
    // Each coalition balances on its own; prices calibrated to the published
    // pair and singleton costs.
    for (std::vector<int> pair : {std::vector<int>{0, 1}, {0, 2}, {1, 2}})
        b.params.coalition_balancing_overrides[pair] = 92.5;
    for (int k = 0; k < 3; ++k) b.params.coalition_balancing_overrides[{k}] = 105.0;
    return b;
}

namespace {

constexpr double kPi = 3.14159265358979323846;

// Chain of `length` passive nodes from `from`, ending at the prosumer `leaf`.
void add_chain(std::vector<NodeSpec>& nodes, std::vector<EdgeSpec>& edges, const std::string& from,
               const std::string& prefix, int length, const std::string& leaf, double r, double x, double s_limit,
               double dv_limit) {
    std::string up = from;
    for (int i = 1; i <= length; ++i) {
        const std::string id = prefix + std::to_string(i);
        nodes.push_back({id, dv_limit, false});
        edges.push_back({id, up, r, x, s_limit});
        up = id;
    }
    nodes.push_back({leaf, dv_limit, true});
    edges.push_back({leaf, up, r, x, s_limit});
}

}  // namespace

Bundle sweep_fixture() {
    constexpr int T = 24;
    constexpr double kLimit = 0.6;
    std::vector<NodeSpec> nodes{{"0", kInf, false}};
    std::vector<EdgeSpec> edges;
    add_chain(nodes, edges, "0", "w", 7, "1", 0.004, 0.002, kLimit, 0.03);
    add_chain(nodes, edges, "0", "s", 11, "2", 0.004, 0.002, kLimit, 0.03);
    add_chain(nodes, edges, "0", "f", 0, "3", 0.004, 0.002, 2.0, 0.03);

    Bundle b;
    b.name = "sweep";
    b.grid = build_grid(nodes, edges, "0");
    b.data.step_hours = 1.0;
    b.data.realized.assign(3, Series(T));
    for (int t = 0; t < T; ++t) {
        const double hour = t + 0.5;
        // Wind branch: night-peaking load scaled 1.8x, steady wind.
        const double night = 0.5 * (1.0 + std::cos(2.0 * kPi * hour / 24.0));
        const double wind = 1.5 * (0.65 + 0.35 * std::sin(2.0 * kPi * (hour + 4.0) / 24.0));
        const double load1 = 1.8 * (0.25 + 0.45 * night);
        // PV branch: evening-peaking residential load scaled 1.2x, rooftop PV.
        const double evening = std::exp(-0.5 * std::pow((hour - 19.0) / 2.5, 2));
        const double pv = 1.6 * std::max(0.0, std::sin(kPi * (hour - 6.0) / 13.0));
        const double load2 = 1.2 * (0.3 + 0.6 * evening);
        // Flat branch: commercial load next to a steady generator.
        const double office = hour >= 8.0 && hour <= 18.0 ? 1.0 : 0.4;
        b.data.realized[0][t] = wind - load1;
        b.data.realized[1][t] = pv - load2;
        b.data.realized[2][t] = 0.7 - 0.9 * office;
    }
    b.data.forecast = b.data.realized;

    b.params = default_params(b.grid);
    b.params.step_hours = 1.0;
    b.params.regime = ExchangeRegime::StrictSelfConsumption;
    b.params.export_price = {Complex{0.0, 0.0}};
    b.params.exchange_tax = {0.0};
    b.params.imbalance_penalty = 300.0;
    b.params.coalition_balancing = 300.0;
    b.params.overload_penalty.assign(b.grid.num_nodes(), 300.0);
    b.params.voltage_penalty = voltage_penalty_from_curtailment(b.grid, 300.0, 1.0);
    const double ess[3] = {16.0, 24.0, 8.0};
    b.params.flex.clear();
    for (double c : ess) {
        ProsumerFlex f;
        f.cost.family = FlexCost::Family::Linear;
        f.cost.linear = c;
        f.set.max_magnitude = 3.0;
        b.params.flex.push_back(f);
    }
    return b;
}

Bundle lausanne_like(std::uint64_t seed) {
    constexpr int T = 24;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    // Transformer, five street cabinets along the feeder, and a three-node
    // neighbourhood at its end. Houses hang off the cabinets.
    std::vector<NodeSpec> nodes{{"tr", kInf, false}};
    std::vector<EdgeSpec> edges;
    const double dv = 0.04;
    std::string up = "tr";
    for (int c = 1; c <= 5; ++c) {
        const std::string id = "c" + std::to_string(c);
        nodes.push_back({id, dv, false});
        edges.push_back({id, up, 0.02, 0.01, 0.4});
        up = id;
    }
    nodes.push_back({"n0", dv, false});
    edges.push_back({"n0", "c5", 0.02, 0.01, 0.15});
    nodes.push_back({"n1", dv, false});
    edges.push_back({"n1", "n0", 0.03, 0.01, 0.08});
    nodes.push_back({"n2", dv, false});
    edges.push_back({"n2", "n1", 0.03, 0.01, 0.08});

    std::vector<std::pair<std::string, std::string>> houses;  // id, parent
    const int per_cabinet[5] = {6, 6, 6, 6, 5};
    int h = 1;
    for (int c = 0; c < 5; ++c)
        for (int i = 0; i < per_cabinet[c]; ++i) houses.emplace_back("h" + std::to_string(h++), "c" + std::to_string(c + 1));
    const std::vector<std::pair<std::string, std::string>> neighbourhood{
        {"a", "n0"}, {"b", "n0"}, {"c", "n1"}, {"d", "n2"}, {"e", "n2"}};
    for (const auto& [id, parent] : houses) {
        nodes.push_back({id, dv, true});
        edges.push_back({id, parent, 0.05, 0.02, 0.05});
    }
    for (const auto& [id, parent] : neighbourhood) {
        nodes.push_back({id, dv, true});
        edges.push_back({id, parent, 0.05, 0.02, 0.05});
    }

    Bundle b;
    b.name = "lausanne-like";
    b.grid = build_grid(nodes, edges, "tr");
    const int M = b.grid.num_prosumers();
    b.data.step_hours = 1.0;
    b.data.realized.assign(M, Series(T));
    b.data.forecast.assign(M, Series(T));
    for (int k = 0; k < M; ++k) {
        // Household load with morning and evening peaks, some rooftop PV.
        const double peak = 0.006 + 0.006 * unit(rng);
        const double pv = unit(rng) < 0.6 ? 0.004 + 0.008 * unit(rng) : 0.0;
        const double lag = 2.0 * unit(rng) - 1.0;
        for (int t = 0; t < T; ++t) {
            const double hour = t + 0.5 + lag;
            const double morning = std::exp(-0.5 * std::pow((hour - 7.5) / 1.5, 2));
            const double evening = std::exp(-0.5 * std::pow((hour - 19.0) / 2.0, 2));
            const double load = peak * (0.35 + 0.4 * morning + 0.65 * evening);
            const double gen = pv * std::max(0.0, std::sin(kPi * (t + 0.5 - 6.5) / 13.0));
            const double p = gen - load;
            b.data.realized[k][t] = Complex{p, 0.2 * std::min(p, 0.0)};
            // Day-ahead forecast error.
            const double err = 0.15 * (2.0 * unit(rng) - 1.0);
            b.data.forecast[k][t] = b.data.realized[k][t] * (1.0 + err);
        }
    }

    b.params = default_params(b.grid);
    b.params.step_hours = 1.0;
    b.params.regime = ExchangeRegime::Taxed;
    b.params.export_price = {Complex{60.0, 0.0}};
    b.params.exchange_tax = {45.0};
    b.params.imbalance_penalty = 300.0;
    b.params.coalition_balancing = 300.0;
    b.params.overload_penalty.assign(b.grid.num_nodes(), 300.0);
    b.params.voltage_penalty = voltage_penalty_from_curtailment(b.grid, 300.0, 1.0);
    b.params.flex.clear();
    for (int k = 0; k < M; ++k) {
        // Heat pump shifting within a comfort band.
        ProsumerFlex f;
        f.cost.family = FlexCost::Family::Quadratic;
        f.cost.linear = 20.0 + 10.0 * unit(rng);
        f.cost.quadratic = 2000.0;
        f.set.max_magnitude = 0.004;
        f.set.energy_neutral = true;
        b.params.flex.push_back(f);
    }
    return b;
}

std::vector<int> lausanne_neighbourhood(const Grid& grid) {
    std::vector<int> out;
    for (const char* id : {"a", "b", "c", "d", "e"}) out.push_back(grid.prosumer_index(id));
    return out;
}

}  // namespace lempart
