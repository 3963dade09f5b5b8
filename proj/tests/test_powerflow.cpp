#include <cmath>

#include "doctest.h"
#include "lempart/error.hpp"
#include "lempart/fixtures.hpp"
#include "lempart/powerflow.hpp"
#include "flow_oracle.hpp"
#include "test_util.hpp"

using namespace lempart;
using namespace lempart::test;

namespace {

std::vector<Series> random_injections(Rng& rng, int M, int T) {
    std::vector<Series> u(M, Series(T));
    for (auto& row : u)
        for (auto& v : row) v = Complex{rng.uniform(-3.0, 3.0), rng.uniform(-1.0, 1.0)};
    return u;
}

}  // namespace

TEST_SUITE("powerflow") {
    TEST_CASE("example 1 forecast flows in the first step") {
        const Bundle b = example1();
        const auto s = evaluate_flows(b.grid, b.data.forecast);
        const Grid& g = b.grid;
        CHECK(std::abs(s.flow[g.node_index("1")][0] - Complex{0.0, 0.0}) < 1e-15);
        CHECK(std::abs(s.flow[g.node_index("2")][0] - Complex{-1.0, 0.0}) < 1e-15);
        CHECK(std::abs(s.flow[g.node_index("3")][0] - Complex{1.0, 0.0}) < 1e-15);
        CHECK(std::abs(s.flow[g.pcc()][0]) < 1e-15);
        CHECK(s.dv[g.node_index("3")][0] == doctest::Approx(0.02));
        CHECK(s.dv[g.pcc()][0] == 0.0);
    }

    TEST_CASE("zero injections give zero flows and voltages") {
        Rng rng(1);
        const Instance inst = random_instance(rng, 5, 4);
        const auto s = evaluate_flows(inst.grid, std::vector<Series>(5, Series(4)));
        for (int n = 0; n < inst.grid.num_nodes(); ++n)
            for (int t = 0; t < 4; ++t) {
                CHECK(s.flow[n][t] == Complex{});
                CHECK(s.dv[n][t] == 0.0);
            }
    }

    TEST_CASE("single line voltage rise") {
        const Grid g = build_grid({{"0", kInf, false}, {"1", kInf, true}}, {{"1", "0", 0.01, 0.0, 1.0}}, "0");
        const auto s = evaluate_flows(g, {{Complex{1.0, 0.0}}});
        CHECK(s.dv[g.node_index("1")][0] == doctest::Approx(0.02).epsilon(1e-14));
        // Reactive flow against reactance contributes the same way.
        const Grid gx = build_grid({{"0", kInf, false}, {"1", kInf, true}}, {{"1", "0", 0.0, 0.03, 1.0}}, "0");
        CHECK(evaluate_flows(gx, {{Complex{0.0, -1.0}}}).dv[1][0] == doctest::Approx(-0.06));
    }

    TEST_CASE("tree recursion matches the dense incidence solve") {
        Rng rng(2);
        for (int trial = 0; trial < 30; ++trial) {
            const Instance inst = random_instance(rng, rng.integer(1, 8), 3);
            const auto u = random_injections(rng, inst.grid.num_prosumers(), 3);
            const auto s = evaluate_flows(inst.grid, u);
            const auto o = DenseOracle(inst.grid).solve(inst.grid, u);
            for (int n = 0; n < inst.grid.num_nodes(); ++n)
                for (int t = 0; t < 3; ++t) {
                    CHECK(std::abs(s.flow[n][t] - o.flow[n][t]) < 1e-9);
                    CHECK(std::abs(s.dv[n][t] - o.dv[n][t]) < 1e-9);
                }
        }
    }

    TEST_CASE("flows and voltages are linear in the injections") {
        Rng rng(3);
        for (int trial = 0; trial < 30; ++trial) {
            const Instance inst = random_instance(rng, rng.integer(1, 8), 2);
            const int M = inst.grid.num_prosumers();
            const auto u1 = random_injections(rng, M, 2), u2 = random_injections(rng, M, 2);
            const double a = rng.uniform(-2.0, 2.0), c = rng.uniform(-2.0, 2.0);
            std::vector<Series> mix(M, Series(2));
            for (int k = 0; k < M; ++k)
                for (int t = 0; t < 2; ++t) mix[k][t] = a * u1[k][t] + c * u2[k][t];
            const auto s1 = evaluate_flows(inst.grid, u1), s2 = evaluate_flows(inst.grid, u2);
            const auto sm = evaluate_flows(inst.grid, mix);
            for (int n = 0; n < inst.grid.num_nodes(); ++n)
                for (int t = 0; t < 2; ++t) {
                    CHECK(std::abs(sm.flow[n][t] - (a * s1.flow[n][t] + c * s2.flow[n][t])) < 1e-12);
                    CHECK(std::abs(sm.dv[n][t] - (a * s1.dv[n][t] + c * s2.dv[n][t])) < 1e-12);
                }
        }
    }

    TEST_CASE("flow is conserved at every node") {
        Rng rng(4);
        for (int trial = 0; trial < 30; ++trial) {
            const Instance inst = random_instance(rng, rng.integer(1, 8), 2);
            const Grid& g = inst.grid;
            const auto u = random_injections(rng, g.num_prosumers(), 2);
            const auto f = branch_flows(g, u);
            for (int n = 0; n < g.num_nodes(); ++n)
                for (int t = 0; t < 2; ++t) {
                    Complex in = g.prosumer_at(n) >= 0 ? u[g.prosumer_at(n)][t] : Complex{};
                    for (int ch : g.children(n)) in += f[ch][t];
                    CHECK(std::abs(in - f[n][t]) < 1e-9);
                }
            Complex total{};
            for (int k = 0; k < g.num_prosumers(); ++k) total += u[k][1];
            CHECK(std::abs(f[g.pcc()][1] - total) < 1e-9);
        }
    }

    TEST_CASE("boundary exchange") {
        const Bundle b = example1();
        const Grid& g = b.grid;
        const auto f = branch_flows(g, b.data.forecast);
        const auto gc = boundary_exchange(g, grand_coalition(g), f);
        REQUIRE(gc.size() == 1);
        for (const auto& x : gc[0]) CHECK(std::abs(x) < 1e-15);
        const auto single = boundary_exchange(g, coalition_from_prosumers(g, {2}), f);
        REQUIRE(single.size() == 1);
        CHECK(std::abs(single[0][0] - Complex{1.0, 0.0}) < 1e-15);
        const auto pair = boundary_exchange(g, coalition_from_prosumers(g, {0, 1}), f);
        CHECK(std::abs(pair[0][0] - Complex{-1.0, 0.0}) < 1e-15);
        CHECK(std::abs(pair[0][1] - Complex{1.0, 0.0}) < 1e-15);
    }

    TEST_CASE("mismatched injections are rejected") {
        const Bundle b = example1();
        CHECK_THROWS_AS(branch_flows(b.grid, {b.data.forecast[0]}), Error);
        auto u = b.data.forecast;
        u[2].pop_back();
        CHECK_THROWS_AS(branch_flows(b.grid, u), Error);
    }
}
