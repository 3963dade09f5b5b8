#include <cmath>
#include <random>

#include "doctest.h"
#include "lempart/dispatch.hpp"
#include "lempart/error.hpp"
#include "lempart/fixtures.hpp"
#include "test_util.hpp"

using namespace lempart;

namespace {

double total_abs(const std::vector<Series>& u, double h) {
    double s = 0.0;
    for (const auto& series : u)
        for (Complex v : series) s += std::abs(v) * h;
    return s;
}

// Two-branch tree: 1 → 0 with children 2, 3 (prosumers); 4 → 0 with child 5 (prosumer).
struct OracleCase {
    Grid grid;
    ProsumptionSet data;
    CostParams params;
    Partition partition;
};

OracleCase oracle_case() {
    const double inf = kInf;
    std::vector<NodeSpec> nodes{{"0", inf, false}, {"1", inf, false}, {"2", inf, true},
                                {"3", 0.05, true}, {"4", inf, false}, {"5", inf, true}};
    std::vector<EdgeSpec> edges{{"1", "0", 0.02, 0.01, 0.8},  {"2", "1", 0.03, 0.02, inf},
                                {"3", "1", 0.05, 0.03, 1.0},  {"4", "0", 0.01, 0.02, inf},
                                {"5", "4", 0.04, 0.02, 1.2}};
    OracleCase c;
    c.grid = build_grid(nodes, edges, "0");
    c.data.step_hours = 0.5;
    c.data.forecast = {{{0.9, 0.1}, {-0.4, 0.0}, {0.7, -0.2}},
                       {{0.6, 0.0}, {0.8, 0.1}, {-1.0, 0.0}},
                       {{-0.3, 0.05}, {0.5, 0.0}, {0.2, 0.1}}};
    c.data.realized = c.data.forecast;
    c.params = default_params(c.grid);
    c.params.step_hours = 0.5;
    c.params.export_price = {Complex{40.0, 5.0}};
    c.params.exchange_tax = {30.0};
    const double lin[] = {10.0, 12.0, 8.0}, quad[] = {3.0, 1.0, 5.0}, box[] = {1.5, 1.2, 2.0};
    for (int k = 0; k < 3; ++k) {
        c.params.flex[k].cost.family = FlexCost::Family::Quadratic;
        c.params.flex[k].cost.linear = lin[k];
        c.params.flex[k].cost.quadratic = quad[k];
        c.params.flex[k].set.max_magnitude = box[k];
    }
    c.params.flex[2].set.energy_neutral = true;
    c.partition = make_partition(c.grid, {{0, 1}, {2}});
    return c;
}

}  // namespace

TEST_SUITE("dispatch") {
    TEST_CASE("example 1 singletons offset their forecasts with batteries") {
        const Bundle b = example1();
        const auto P = make_partition(b.grid, {{0}, {1}, {2}});
        const auto sol = solve_exante(b.grid, P, b.data, b.params);
        for (int k = 0; k < 3; ++k)
            for (int t = 0; t < 3; ++t) CHECK(std::abs(sol.u[k][t] + b.data.forecast[k][t]) < 1e-6);
        CHECK(sol.flex_cost == doctest::Approx(114.0).epsilon(1e-8));
    }

    TEST_CASE("example 1 grand coalition trades internally") {
        const Bundle b = example1();
        const auto sol = solve_exante(b.grid, {grand_coalition(b.grid)}, b.data, b.params);
        CHECK(total_abs(sol.u, 1.0) < 1e-6);
        CHECK(std::abs(sol.flex_cost) < 1e-6);
        for (int t = 0; t < 3; ++t) CHECK(std::abs(sol.flows.flow[b.grid.pcc()][t]) < 1e-6);
    }

    TEST_CASE("tie-break selects the symmetric split in example 1") {
        const Bundle b = example1();
        const auto P = make_partition(b.grid, {{0, 1}, {2}});
        const auto sol = solve_exante(b.grid, P, b.data, b.params);
        const Series expected{{0.5, 0.0}, {-0.5, 0.0}, {0.0, 0.0}};
        for (int t = 0; t < 3; ++t) {
            CHECK(std::abs(sol.u[0][t] - expected[t]) < 1e-5);
            CHECK(std::abs(sol.u[1][t] - expected[t]) < 1e-5);
        }
        CHECK(sol.flex_cost == doctest::Approx(76.0).epsilon(1e-8));
        CHECK(sol.tiebreak == doctest::Approx(1e-6 * 100.0));
    }

    TEST_CASE("regularizer barely moves a strictly convex optimizer") {
        const Bundle b = example2();
        const auto P = make_partition(b.grid, {{0, 1}, {2}});
        const auto plain = solve_posed(pose_exante(b.grid, P, b.data, b.params));
        const auto reg = solve_exante(b.grid, P, b.data, b.params);
        for (int k = 0; k < 3; ++k)
            for (int t = 0; t < 3; ++t) CHECK(std::abs(plain.u[k][t] - reg.u[k][t]) < 1e-4);
        CHECK(reg.objective == doctest::Approx(plain.objective).epsilon(1e-6));
        const auto zero = tiebreak_regularize(pose_exante(b.grid, P, b.data, b.params), 0.0);
        CHECK(zero.tiebreak == 0.0);
    }

    TEST_CASE("perfect forecasts without prices give zero nodal prices") {
        // small feeder, slack limits
        std::vector<NodeSpec> nodes{{"0", kInf, false}, {"m", 0.5, false}, {"a", 0.5, true}, {"b", 0.5, true}};
        std::vector<EdgeSpec> edges{{"m", "0", 0.02, 0.01, 5.0}, {"a", "m", 0.02, 0.01, 5.0},
                                    {"b", "m", 0.02, 0.01, 5.0}};
        const Grid g = build_grid(nodes, edges, "0");
        ProsumptionSet data;
        data.forecast = {{{0.4, 0.1}, {-0.3, 0.0}}, {{-0.8, 0.0}, {0.5, -0.1}}};
        data.realized = data.forecast;
        CostParams p = default_params(g);
        for (auto& f : p.flex) f.cost.linear = 15.0;
        for (const auto& P : {Partition{grand_coalition(g)}, test::singletons(g)}) {
            const auto sol = solve_exante(g, P, data, p);
            for (const auto& series : sol.duals.lambda)
                for (Complex l : series) CHECK(std::abs(l) < 1e-6);
        }
    }

    TEST_CASE("ex-ante optimum matches an independent path-matrix formulation") {
        const OracleCase c = oracle_case();
        const auto sol = solve_posed(pose_exante(c.grid, c.partition, c.data, c.params));
        REQUIRE(sol.status == conic::Status::Optimal);
        // cvxpy with Clarabel (1e-11) and SCS (1e-10) agree on this value
        CHECK(sol.objective == doctest::Approx(4.367678254788356).epsilon(1e-7));
        CHECK(std::abs(sol.u[2][0] - Complex(0.3, -0.05)) < 1e-5);
        CHECK(std::abs(sol.u[0][0] - Complex(-0.28713545778640703, 0.0018145051752917649)) < 1e-5);
        CHECK(sol.relative_gap < 1e-8);
        double lag = 0.0;
        for (double l : sol.duals.node_lagrangian) lag += l;
        CHECK(lag == doctest::Approx(sol.objective).epsilon(1e-7));
    }

    TEST_CASE("nodal prices equal the sensitivity of the optimum to injections") {
        // central differences (step 1e-3) of the oracle problem, h = 0.5
        const OracleCase c = oracle_case();
        const auto sol = solve_posed(pose_exante(c.grid, c.partition, c.data, c.params));
        struct Fd {
            int k, t;
            Complex value;
        };
        const Fd fd[] = {{0, 0, {-10.861206482909225, 0.06863505158261063}},
                         {0, 2, {10.489872802189382, 3.503567041963862}},
                         {1, 0, {-12.38824382129522, -0.8475865401429417}},
                         {1, 1, {-11.692503578695224, -3.9486036539662095}},
                         {1, 2, {11.591696765799853, 4.164653809390018}}};
        for (const auto& f : fd) {
            const Complex lam = sol.duals.lambda[c.grid.prosumer_node(f.k)][f.t];
            CHECK(std::abs(lam - f.value) < 5e-4);
        }
        // the PCC price is the export price
        for (int t = 0; t < 3; ++t) CHECK(std::abs(sol.duals.lambda[c.grid.pcc()][t] - Complex(40.0, 5.0)) < 1e-6);
    }

    TEST_CASE("inequality multipliers are nonnegative and complementary") {
        const OracleCase c = oracle_case();
        const auto sol = solve_exante(c.grid, c.partition, c.data, c.params);
        for (int n = 0; n < c.grid.num_nodes(); ++n)
            for (int t = 0; t < 3; ++t) {
                CHECK(sol.duals.mu[n][t] >= -1e-9);
                CHECK(sol.duals.eta_upper[n][t] >= -1e-9);
                CHECK(sol.duals.eta_lower[n][t] >= -1e-9);
                if (n != c.grid.pcc() && std::isfinite(c.grid.s_limit(n))) {
                    const double slack = c.grid.s_limit(n) - std::abs(sol.flows.flow[n][t]);
                    CHECK(sol.duals.mu[n][t] * slack < 1e-6);
                }
            }
        CHECK(std::abs(sol.duals.complementarity) < 1e-6);
    }

    TEST_CASE("decoupled example 1 coalitions self-consume") {
        const Bundle b = example1();
        const auto pair = solve_exante_decoupled(b.grid, coalition_from_prosumers(b.grid, {0, 1}), b.data, b.params);
        CHECK(total_abs(pair.solution.u, 1.0) == doctest::Approx(2.0).epsilon(1e-6));
        CHECK(pair.solution.flex_cost == doctest::Approx(38.0).epsilon(1e-6));
        const auto single = solve_exante_decoupled(b.grid, coalition_from_prosumers(b.grid, {2}), b.data, b.params);
        const Series expected{{-1.0, 0.0}, {1.0, 0.0}, {0.0, 0.0}};
        for (int t = 0; t < 3; ++t) CHECK(std::abs(single.solution.u[0][t] - expected[t]) < 1e-6);
        CHECK(single.solution.flex_cost == doctest::Approx(38.0).epsilon(1e-6));
    }

    TEST_CASE("zero prosumption needs no flexibility") {
        Bundle b = example1();
        for (auto& s : b.data.forecast) std::fill(s.begin(), s.end(), Complex{});
        b.data.realized = b.data.forecast;
        const auto d = solve_exante_decoupled(b.grid, coalition_from_prosumers(b.grid, {0, 1}), b.data, b.params);
        CHECK(total_abs(d.solution.u, 1.0) < 1e-6);
        CHECK(std::abs(d.solution.flex_cost) < 1e-6);
    }

    TEST_CASE("decoupled solve rejects coalitions with several boundary nodes") {
        // path 0 - 1 - 2 - 3 with a prosumer below node 1 and one at 3: {a, c} spans 1..3,
        // node 1 touches the external edge to a and the upstream edge
        std::vector<NodeSpec> nodes{{"0", kInf, false}, {"1", kInf, false}, {"a", kInf, true},
                                    {"2", kInf, false}, {"c", kInf, true}, {"b", kInf, true}};
        std::vector<EdgeSpec> edges{{"1", "0", 0.01, 0.01, kInf}, {"a", "1", 0.01, 0.01, kInf},
                                    {"2", "1", 0.01, 0.01, kInf}, {"c", "2", 0.01, 0.01, kInf},
                                    {"b", "2", 0.01, 0.01, kInf}};
        const Grid g = build_grid(nodes, edges, "0");
        const auto bc = coalition_from_prosumers(g, {g.prosumer_index("b"), g.prosumer_index("c")});
        const auto ab = coalition_from_prosumers(g, {g.prosumer_index("a"), g.prosumer_index("b")});
        REQUIRE(bc.single_boundary());
        REQUIRE_FALSE(ab.single_boundary());
        ProsumptionSet data;
        data.forecast.assign(3, Series(2, Complex{}));
        data.realized = data.forecast;
        CostParams p = default_params(g);
        try {
            solve_exante_decoupled(g, ab, data, p);
            FAIL("expected AssumptionViolated");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::AssumptionViolated);
        }
    }

    TEST_CASE("infeasible line limits are reported") {
        Bundle b = example1();
        b.params.flex.assign(3, ProsumerFlex{});
        for (auto& f : b.params.flex) {
            f.cost.linear = 19.0;
            f.set.max_magnitude = 0.1;
        }
        b.data.forecast[0] = {{3.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}};
        try {
            solve_exante(b.grid, {grand_coalition(b.grid)}, b.data, b.params);
            FAIL("expected Infeasible");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::Infeasible);
        }
    }

    TEST_CASE("strict singletons exchange nothing and large taxes approach it") {
        test::Rng rng(11);
        for (int trial = 0; trial < 5; ++trial) {
            const auto inst = test::random_instance(rng, 3 + trial % 3, 4);
            const auto P = test::singletons(inst.grid);
            CostParams p = inst.params;
            p.regime = ExchangeRegime::StrictSelfConsumption;
            const auto strict = solve_exante(inst.grid, P, inst.data, p);
            for (int k = 0; k < inst.grid.num_prosumers(); ++k)
                for (int t = 0; t < 4; ++t)
                    CHECK(std::abs(strict.flows.flow[inst.grid.prosumer_node(k)][t]) < 1e-6);
            p.regime = ExchangeRegime::Taxed;
            p.exchange_tax = {1e5};
            const auto taxed = solve_exante(inst.grid, P, inst.data, p);
            for (int k = 0; k < inst.grid.num_prosumers(); ++k)
                for (int t = 0; t < 4; ++t)
                    CHECK(std::abs(taxed.flows.flow[inst.grid.prosumer_node(k)][t]) < 1e-6);
        }
    }

    TEST_CASE("objective is insensitive to the tie-break term") {
        test::Rng rng(5);
        for (int trial = 0; trial < 8; ++trial) {
            const auto inst = test::random_instance(rng, 3 + trial % 3, 3);
            const auto parts = enumerate_partitions(inst.grid);
            const auto& P = parts[rng.index(parts.size())];
            const auto plain = solve_posed(pose_exante(inst.grid, P, inst.data, inst.params));
            const auto reg = solve_exante(inst.grid, P, inst.data, inst.params);
            CHECK(reg.objective == doctest::Approx(plain.objective).epsilon(1e-6).scale(1.0));
            CHECK(plain.relative_gap < 1e-6);
            CHECK(reg.relative_gap < 1e-6);
        }
    }

    TEST_CASE("decoupled blocks reproduce the whole-grid strict dispatch") {
        test::Rng rng(23);
        int checked = 0;
        for (int trial = 0; trial < 20 && checked < 6; ++trial) {
            const auto inst = test::random_instance(rng, 3 + trial % 3, 3);
            CostParams p = inst.params;
            p.regime = ExchangeRegime::StrictSelfConsumption;
            for (const auto& P : enumerate_partitions(inst.grid)) {
                bool ok = true;
                for (const auto& blk : P) ok = ok && blk.single_boundary();
                if (!ok || P.size() < 2) continue;
                const auto whole = solve_exante(inst.grid, P, inst.data, p);
                const double eps = p.tiebreak * p.cost_scale();
                double sum = 0.0;
                for (const auto& blk : P) {
                    const auto d = solve_exante_decoupled(inst.grid, blk, inst.data, p, eps);
                    sum += d.solution.objective;
                }
                CHECK(sum == doctest::Approx(whole.objective).epsilon(1e-6).scale(1.0));
                ++checked;
                break;
            }
        }
        CHECK(checked >= 3);
    }

    TEST_CASE("unbalanceable energy-neutral coalitions are reported infeasible") {
        // Self-balancing with a neutral battery needs forecasts summing to zero.
        lempart::test::Rng rng(21);
        const Bundle base = example1();
        for (int trial = 0; trial < 40; ++trial) {
            ProsumptionSet d = base.data;
            for (auto& row : d.forecast)
                for (auto& v : row) v *= rng.uniform(0.75, 1.25);
            d.realized = d.forecast;
            const int k = rng.integer(0, 2);
            const Coalition c = coalition_from_prosumers(base.grid, {k});
            Complex sum{};
            for (auto v : d.forecast[k]) sum += v;
            if (std::abs(sum) < 1e-3) continue;
            try {
                solve_exante_decoupled(base.grid, c, d, base.params);
                FAIL("expected an infeasible dispatch");
            } catch (const Error& e) {
                CHECK(e.code() == ErrorCode::Infeasible);
            }
        }
    }
}
