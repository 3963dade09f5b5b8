#include <filesystem>
#include <string>

#include "doctest.h"
#include "lempart/costs.hpp"
#include "lempart/error.hpp"
#include "lempart/fixtures.hpp"
#include "lempart/io.hpp"
#include "nlohmann/json.hpp"
#include "test_util.hpp"

using namespace lempart;
using namespace lempart::test;
namespace fs = std::filesystem;

namespace {

const char* kGrid = R"({
  "pcc": "0",
  "nodes": [
    {"id": "0", "is_prosumer": false},
    {"id": "1", "dv_limit": 0.05, "is_prosumer": true},
    {"id": "2", "dv_limit": "inf", "is_prosumer": true}
  ],
  "edges": [
    {"from": "1", "to": "0", "r": 0.01, "x": 0.02, "s_limit": 1.5},
    {"from": "2", "to": "0", "r": 0.03, "x": 0.0, "s_limit": null}
  ]
})";

// Returns the error message, or "" if nothing was thrown.
template <class F>
std::string message_of(F&& f, ErrorCode expected) {
    try {
        f();
    } catch (const Error& e) {
        CHECK(e.code() == expected);
        return e.what();
    }
    return "";
}

std::string replace(std::string s, const std::string& from, const std::string& to) {
    const auto at = s.find(from);
    REQUIRE(at != std::string::npos);
    return s.replace(at, from.size(), to);
}

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("lempart_io_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_SUITE("io") {
    TEST_CASE("grid file parses with optional limits") {
        const Grid g = parse_grid_json(kGrid);
        CHECK(g.num_nodes() == 3);
        CHECK(g.num_prosumers() == 2);
        CHECK(g.pcc() == g.node_index("0"));
        CHECK(g.dv_limit(g.node_index("1")) == 0.05);
        CHECK(g.dv_limit(g.node_index("2")) == kInf);
        CHECK(g.s_limit(g.node_index("2")) == kInf);
        CHECK(g.impedance(g.node_index("1")) == Complex{0.01, 0.02});
    }

    TEST_CASE("grid round trip") {
        for (const Bundle& b : {example1(), sweep_fixture(), lausanne_like()}) {
            const std::string once = grid_to_json(b.grid);
            const Grid back = parse_grid_json(once);
            CHECK(grid_to_json(back) == once);
            CHECK(back.num_nodes() == b.grid.num_nodes());
            for (int n = 0; n < back.num_nodes(); ++n) {
                CHECK(back.node_id(n) == b.grid.node_id(n));
                CHECK(back.impedance(n) == b.grid.impedance(n));
                CHECK(back.s_limit(n) == b.grid.s_limit(n));
                CHECK(back.dv_limit(n) == b.grid.dv_limit(n));
            }
        }
    }

    TEST_CASE("grid errors name the line and field") {
        std::string msg = message_of([&] { parse_grid_json(replace(kGrid, "\"r\": 0.03", "\"r\": \"big\""), "g.json"); },
                                     ErrorCode::ParseError);
        CHECK(msg.find("g.json:10:") == 0);
        CHECK(msg.find("edges[1].r") != std::string::npos);

        msg = message_of([&] { parse_grid_json(replace(kGrid, "\"id\": \"2\", ", ""), "g.json"); }, ErrorCode::ParseError);
        CHECK(msg.find("g.json:6:") == 0);
        CHECK(msg.find("nodes[2].id") != std::string::npos);

        msg = message_of([&] { parse_grid_json(replace(kGrid, "\"is_prosumer\": true}\n", "\"is_prosumer\": 1}\n"), "g.json"); },
                         ErrorCode::ParseError);
        CHECK(msg.find("nodes[2].is_prosumer") != std::string::npos);
    }

    TEST_CASE("invalid JSON reports line and column") {
        const std::string msg = message_of([&] { parse_grid_json("{\n  \"pcc\": \"0\",\n  \"nodes\": [,]\n}", "bad.json"); },
                                           ErrorCode::ParseError);
        CHECK(msg.find("bad.json:3:") == 0);
        CHECK(msg.find("invalid JSON") != std::string::npos);
    }

    TEST_CASE("grid structure errors keep their codes") {
        message_of([&] { parse_grid_json(replace(kGrid, "\"to\": \"0\", \"r\": 0.03", "\"to\": \"7\", \"r\": 0.03")); },
                   ErrorCode::UnknownNode);
        message_of([&] { parse_grid_json(replace(kGrid, "\"s_limit\": 1.5", "\"s_limit\": 0")); }, ErrorCode::NonPositiveLimit);
    }

    TEST_CASE("series csv") {
        const Grid g = parse_grid_json(kGrid);
        const auto v = parse_series_csv("t,2,1\n0,1.5,-1\n1,2e-1,0\n", g);
        REQUIRE(v.size() == 2);
        CHECK(v[g.prosumer_index("1")] == std::vector<double>{-1.0, 0.0});
        CHECK(v[g.prosumer_index("2")] == std::vector<double>{1.5, 0.2});
        CHECK(parse_series_csv(series_to_csv(g, v), g) == v);

        std::string msg = message_of([&] { parse_series_csv("1,2,9\n0,0,0\n", g, "s.csv"); }, ErrorCode::UnknownProsumer);
        CHECK(msg.find("'9'") != std::string::npos);
        msg = message_of([&] { parse_series_csv("1,2\n0,0\n0,abc\n", g, "s.csv"); }, ErrorCode::ParseError);
        CHECK(msg.find("s.csv:3:") == 0);
        msg = message_of([&] { parse_series_csv("1,2\n0,0\n0\n", g, "s.csv"); }, ErrorCode::ParseError);
        CHECK(msg.find("s.csv:3:") == 0);
        msg = message_of([&] { parse_series_csv("1\n0\n", g, "s.csv"); }, ErrorCode::MissingProsumerSeries);
        CHECK(msg.find("'2'") != std::string::npos);
    }

    TEST_CASE("series round trip is exact") {
        Rng rng(1);
        const Bundle b = lausanne_like();
        std::vector<std::vector<double>> v(b.grid.num_prosumers(), std::vector<double>(5));
        for (auto& row : v)
            for (auto& x : row) x = rng.uniform(-1.0, 1.0) * std::pow(10.0, rng.integer(-8, 3));
        CHECK(parse_series_csv(series_to_csv(b.grid, v), b.grid) == v);
    }

    TEST_CASE("params round trip") {
        for (const Bundle& b : {example1(), example2(), sweep_fixture(), lausanne_like()}) {
            NoiseSpec n;
            n.sigma = 0.1;
            n.seed = 42;
            const std::string once = params_to_json(b.grid, b.params, n);
            const ParamsFile back = parse_params_json(once, b.grid);
            CHECK(params_to_json(b.grid, back.params, back.noise) == once);
            CHECK(back.noise.sigma == 0.1);
            CHECK(back.noise.seed == 42);
            CHECK(back.params.regime == b.params.regime);
            CHECK(back.params.coalition_balancing_overrides == b.params.coalition_balancing_overrides);
            CHECK(back.params.voltage_penalty == b.params.voltage_penalty);
        }
    }

    TEST_CASE("params shorthand forms") {
        const Grid g = parse_grid_json(kGrid);
        const auto p = parse_params_json(R"({
            "regime": "strict",
            "export_price": [[10, 1], [20, 2]],
            "exchange_tax": 5,
            "imbalance_penalty": 100,
            "overload_penalty": {"default": 50, "2": 70},
            "voltage_penalty": {"curtailment_price": 300},
            "coalition_balancing_overrides": [{"members": ["1", "2"], "price": 80}],
            "flex": {"default": {"family": "quadratic", "linear": 3, "quadratic": 1, "max_magnitude": 2},
                     "2": {"family": "piecewise", "pieces": [[1, 0], [4, -3]]}}
        })", g).params;
        CHECK(p.regime == ExchangeRegime::StrictSelfConsumption);
        CHECK(p.export_price == std::vector<Complex>{{10, 1}, {20, 2}});
        CHECK(p.overload_penalty[g.node_index("1")] == 50.0);
        CHECK(p.overload_penalty[g.node_index("2")] == 70.0);
        CHECK(p.voltage_penalty == voltage_penalty_from_curtailment(g, 300.0, 1.0));
        CHECK(p.balancing_price({0, 1}) == 80.0);
        CHECK(p.flex[0].cost.family == FlexCost::Family::Quadratic);
        CHECK(p.flex[0].set.max_magnitude == 2.0);
        CHECK(p.flex[1].cost.family == FlexCost::Family::PiecewiseLinear);

        const std::string msg = message_of([&] { parse_params_json("{\n\"imbalance_penalty\": -1\n}", g, "p.json"); },
                                           ErrorCode::InvalidParameter);
        CHECK(msg.find("p.json:") == 0);
        message_of([&] { parse_params_json(R"({"regime": "loose"})", g); }, ErrorCode::ParseError);
    }

    TEST_CASE("run config with files relative to the config") {
        const fs::path dir = scratch_dir("config");
        const Bundle b = example1();
        write_file((dir / "sub" / "grid.json").string(), grid_to_json(b.grid));
        write_file((dir / "params.json").string(), params_to_json(b.grid, b.params));
        std::vector<std::vector<double>> p(3), q(3);
        for (int k = 0; k < 3; ++k)
            for (const auto& c : b.data.realized[k]) {
                p[k].push_back(c.real());
                q[k].push_back(c.imag());
            }
        write_file((dir / "rp.csv").string(), series_to_csv(b.grid, p));
        write_file((dir / "config.json").string(), R"({
            "name": "from-files",
            "mode": "externalities",
            "seed": 9,
            "active": ["1", "3"],
            "grid": "sub/grid.json",
            "params": "params.json",
            "series": {"step_hours": 1.0, "realized_p": "rp.csv",
                       "forecast_p": {"1": [0, 1, -1], "2": [-1, 0, 1], "3": [1, -1, 0]}}
        })");
        const RunConfig c = load_run_config((dir / "config.json").string());
        CHECK(c.bundle.name == "from-files");
        CHECK(c.mode == DeviationMode::Externalities);
        CHECK(c.seed == 9);
        CHECK(c.active == std::vector<int>{0, 2});
        CHECK(c.bundle.data.realized == b.data.realized);
        CHECK(c.bundle.data.forecast == b.data.forecast);
        CHECK(c.bundle.grid.num_nodes() == 4);

        // Inline form reproduces the same configuration.
        const RunConfig again = parse_run_config(run_config_to_json(c));
        CHECK(run_config_to_json(again) == run_config_to_json(c));
        CHECK(again.bundle.data.forecast == c.bundle.data.forecast);
        fs::remove_all(dir);
    }

    TEST_CASE("run config defaults forecasts to realizations") {
        const Bundle b = example1();
        nlohmann::json j;
        j["grid"] = nlohmann::json::parse(grid_to_json(b.grid));
        j["params"] = nlohmann::json::parse(params_to_json(b.grid, b.params));
        j["series"] = {{"realized_p", {{"1", {1, 2}}, {"2", {0, 0}}, {"3", {-1, -2}}}}};
        const RunConfig c = parse_run_config(j.dump());
        CHECK(c.bundle.data.perfect());
        CHECK(c.mode == DeviationMode::NoExternalities);
        CHECK(c.bundle.data.realized[0][1] == Complex{2.0, 0.0});

        j["series"]["realized_p"].erase("3");
        message_of([&] { parse_run_config(j.dump()); }, ErrorCode::MissingProsumerSeries);
        message_of([&] { load_run_config("/nonexistent/config.json"); }, ErrorCode::ParseError);
    }

    TEST_CASE("error json") {
        const auto j = nlohmann::json::parse(error_json("UnknownProsumer", "no \"9\" here"));
        CHECK(j["error"] == "UnknownProsumer");
        CHECK(j["message"] == "no \"9\" here");
    }

    TEST_CASE("cost report csv") {
        const Bundle b = example1();
        const Partition gc{grand_coalition(b.grid)};
        const auto r = partition_total_cost(b.grid, gc, b.data, b.params);
        const std::string csv = cost_report_csv(b.grid, {r});
        CHECK(csv.rfind("Partition,Flex,Imb,Over,Volt,Tax,Export,Total\n", 0) == 0);
        CHECK(csv.find("240.000000") != std::string::npos);
        const auto j = nlohmann::json::parse(cost_report_json(b.grid, {r}, true));
        CHECK(j.dump().find("240") != std::string::npos);
    }
}
