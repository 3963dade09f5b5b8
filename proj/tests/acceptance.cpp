// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "flow_oracle.hpp"
#include "lempart/costs.hpp"
#include "lempart/dispatch.hpp"
#include "lempart/error.hpp"
#include "lempart/fixtures.hpp"
#include "lempart/io.hpp"
#include "lempart/stability.hpp"
#include "lempart/sweep.hpp"
#include "test_util.hpp"

using namespace lempart;
using namespace lempart::test;
namespace fs = std::filesystem;

namespace {

const std::string kData = std::string(LEMPART_SOURCE_DIR) + "/data";

struct Outcome {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            if (!detail.empty()) detail += "; ";
            detail += what;
        }
    }
};

struct Cli {
    int code = 0;
    std::string out, err;
};

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("lempart_acceptance_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Cli cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    Cli r;
    r.code = cli::run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string fmt(const char* f, double v) {
    char buf[96];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// Splits a report row whose first cell is a quoted label.
std::vector<std::string> csv_row(const std::string& row) {
    std::vector<std::string> cells;
    std::size_t at = 0;
    if (!row.empty() && row.front() == '"') {
        const std::size_t close = row.find('"', 1);
        cells.push_back(row.substr(1, close - 1));
        at = close + 2;
    }
    std::stringstream rest(row.substr(std::min(at, row.size())));
    for (std::string c; std::getline(rest, c, ',');) cells.push_back(c);
    return cells;
}

bool has_line(const std::string& text, const std::string& prefix, const std::string& contains = "") {
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);)
        if (l.rfind(prefix, 0) == 0 && l.find(contains) != std::string::npos) return true;
    return false;
}

Instance theorem_instance(Rng& rng, int trial) {
    InstanceOptions o;
    o.perfect = true;
    o.no_dead_ends = true;
    o.binding_limits = trial % 2 == 0;
    Instance inst = random_instance(rng, 3 + trial % 3, 3, o);
    inst.params.regime = ExchangeRegime::StrictSelfConsumption;
    return inst;
}

std::vector<Partition> single_boundary_partitions(const Grid& grid) {
    std::vector<Partition> out;
    for (auto& P : enumerate_partitions(grid, 8)) {
        bool ok = true;
        for (const auto& b : P) ok = ok && b.single_boundary();
        if (ok) out.push_back(std::move(P));
    }
    return out;
}

Outcome example1_costs() {
    Outcome o;
    const fs::path dir = scratch("c1");
    const Cli r = cli({"evaluate", kData + "/example1.json", "-p", "1,2,3", "-p", "1,2|3", "-p", "1|2|3", "--out",
                       dir.string()});
    o.require(r.code == 0, "evaluate exited " + std::to_string(r.code) + " " + r.err);
    if (!o.ok) return o;
    // Flex, Imb, Over, Tax, Total
    const double expected[3][5] = {{0, 0, 240, 0, 240}, {76, 0, 80, 80, 236}, {114, 0, 0, 120, 234}};
    const int column[5] = {1, 2, 3, 5, 7};
    std::istringstream in(r.out);
    std::string line;
    std::getline(in, line);
    o.require(line == "Partition,Flex,Imb,Over,Volt,Tax,Export,Total", "header " + line);
    for (int p = 0; p < 3; ++p) {
        std::getline(in, line);
        const auto cells = csv_row(line);
        if (cells.size() != 8) {
            o.require(false, "row " + line);
            continue;
        }
        for (int c = 0; c < 5; ++c) {
            const double v = std::stod(cells[column[c]]);
            const double tol = c == 4 ? 1e-3 : 0.5;
            o.require(std::abs(v - expected[p][c]) <= tol, cells[0] + " column " + std::to_string(column[c]) + " = " + cells[column[c]]);
        }
        o.require(std::abs(std::stod(cells[4])) <= 0.5 && std::abs(std::stod(cells[6])) <= 0.5, cells[0] + " volt/export");
    }
    if (o.ok) o.detail = "totals 240 / 236 / 234";
    fs::remove_all(dir);
    return o;
}

Outcome example1_optimum() {
    Outcome o;
    const fs::path dir = scratch("c2");
    const Cli r = cli({"optimal", kData + "/example1.json", "--out", dir.string()});
    o.require(r.code == 0, "optimal exited " + std::to_string(r.code));
    o.require(has_line(r.out, "P_opt = {1}|{2}|{3}"), "got " + r.out);
    if (o.ok) o.detail = "P_opt = {1}|{2}|{3}";
    fs::remove_all(dir);
    return o;
}

Outcome example2_stability() {
    Outcome o;
    const fs::path dir = scratch("c3");
    const Cli r = cli({"stable", kData + "/example2.json", "--out", dir.string()});
    o.require(r.code == 0, "stable exited " + std::to_string(r.code));
    o.require(has_line(r.out, "{1,2,3}  ", "unstable  blocker={1,2}"), "{123} not blocked by {1,2}");
    o.require(has_line(r.out, "{1,2}|{3}  ", "  stable"), "{12|3} not stable");
    o.require(has_line(r.out, "P* = {1,2}|{3}"), "P* differs");

    const RunConfig cfg = load_run_config(kData + "/example2.json");
    const Bundle& b = cfg.bundle;
    StabilityOptions so;
    so.mode = cfg.mode;
    const auto gc = is_stable_partition(b.grid, {grand_coalition(b.grid)}, b.data, b.params, so);
    const double phi_gc = gc.block_costs.empty() ? kInf : gc.block_costs[0];
    const double phi12 = coalition_cost_decoupled(b.grid, coalition_from_prosumers(b.grid, {0, 1}), b.data, b.params).phi;
    const double phi3 = coalition_cost_decoupled(b.grid, coalition_from_prosumers(b.grid, {2}), b.data, b.params).phi;
    o.require(std::abs(phi_gc - 240.0) <= 1e-3, "phi({123}) = " + fmt("%.6f", phi_gc));
    o.require(std::abs(phi12 - 157.0) <= 2.0, "phi0({1,2}) = " + fmt("%.4f", phi12));
    o.require(std::abs(phi3 - 84.0) <= 2.0, "phi0({3}) = " + fmt("%.4f", phi3));
    if (o.ok)
        o.detail = "P* = {1,2}|{3}, phi = " + fmt("%.3f", phi_gc) + ", phi0 = " + fmt("%.3f", phi12) + " / " +
                   fmt("%.3f", phi3);
    fs::remove_all(dir);
    return o;
}

Outcome theorem_suite() {
    Outcome o;
    Rng rng(20240917);
    StabilityOptions so;
    so.mode = DeviationMode::NoExternalities;
    int failures = 0, inequalities = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const Instance inst = theorem_instance(rng, trial);
        const Grid& g = inst.grid;
        const auto opt = optimal_partition(g, inst.data, inst.params, so);
        if (opt.best < 0 || opt.partitions[opt.best].partition.size() != 1) {
            ++failures;
            continue;
        }
        const auto al = lagrangian_core_allocation(g, inst.data, inst.params);
        const double scale = std::max(1.0, std::abs(al.budget));
        bool ok = std::abs(al.allocated(grand_coalition(g)) - al.budget) <= 1e-6 * scale;
        // Brute force over every member subset; the coalition is its minimal subtree.
        const int M = g.num_prosumers();
        for (int mask = 1; mask < (1 << M); ++mask) {
            std::vector<int> members;
            for (int k = 0; k < M; ++k)
                if (mask >> k & 1) members.push_back(k);
            const Coalition F = coalition_from_prosumers(g, members);
            if (!F.single_boundary()) continue;
            double phi0 = kInf;
            try {
                phi0 = coalition_cost_decoupled(g, F, inst.data, inst.params).phi;
            } catch (const Error& e) {
                if (e.code() != ErrorCode::Infeasible) throw;
            }
            ++inequalities;
            ok = ok && al.allocated(F) <= phi0 + 1e-6 * scale;
        }
        failures += !ok;
    }
    o.require(failures == 0, std::to_string(failures) + " of 50 trees failed");
    if (o.ok) o.detail = "50 trees, " + std::to_string(inequalities) + " blocking inequalities";
    return o;
}

Outcome decoupling_suite() {
    Outcome o;
    Rng rng(7);
    int failures = 0, blocks = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 25; ++trial) {
        Instance inst = random_instance(rng, 3 + trial % 3, 3);
        inst.params.regime = ExchangeRegime::StrictSelfConsumption;
        const auto parts = single_boundary_partitions(inst.grid);
        const Partition& P = parts[rng.index(parts.size())];
        const auto d = solve_exante(inst.grid, P, inst.data, inst.params);
        for (std::size_t l = 0; l < P.size(); ++l) {
            const auto ext = coalition_cost_externalities(inst.grid, P, static_cast<int>(l), d, inst.data, inst.params);
            const auto dec = coalition_cost_decoupled(inst.grid, P[l], inst.data, inst.params);
            const double rel = std::abs(ext.phi - dec.phi) / std::max(1.0, std::abs(dec.phi));
            worst = std::max(worst, rel);
            failures += rel > 1e-5;
            ++blocks;
        }
    }
    o.require(failures == 0, std::to_string(failures) + " blocks differ");
    o.detail += (o.detail.empty() ? "" : "; ") + std::to_string(blocks) + " blocks, worst rel " + fmt("%.2e", worst);
    return o;
}

Outcome sweep_trend() {
    Outcome o;
    const RunConfig cfg = load_run_config(kData + "/sweep.json");
    SweepOptions s;
    s.levels = {0.0, 0.05, 0.10, 0.20};
    s.variants = 1000;
    s.scale_bound = cfg.noise.scale_bound;
    s.shift_bound = cfg.noise.shift_bound;
    s.seed = cfg.seed;
    s.stability.mode = cfg.mode;
    s.stability.active = cfg.active;
    const SweepResult r = run_sweep(cfg.bundle, s);
    const double mono = r.monotone_fraction();
    const double gc = r.grand_coalition_fraction(0);
    o.require(mono >= 0.8, "monotone in " + fmt("%.3f", mono));
    o.require(gc == 1.0, "grand coalition at 0% in " + fmt("%.3f", gc));
    o.detail += (o.detail.empty() ? "" : "; ") + std::string("monotone ") + fmt("%.3f", mono) + ", GC at 0% " + fmt("%.3f", gc);
    return o;
}

Outcome numerics_suite() {
    Outcome o;
    Rng rng(77);
    double flow_err = 0.0, lin_err = 0.0, decomposition_err = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const Instance inst = random_instance(rng, rng.integer(1, 8), 3);
        const Grid& g = inst.grid;
        const int M = g.num_prosumers();
        auto draw = [&] {
            std::vector<Series> u(M, Series(3));
            for (auto& row : u)
                for (auto& v : row) v = Complex{rng.uniform(-3.0, 3.0), rng.uniform(-1.0, 1.0)};
            return u;
        };
        const auto u1 = draw(), u2 = draw();
        const auto s1 = evaluate_flows(g, u1), s2 = evaluate_flows(g, u2);
        const auto ref = DenseOracle(g).solve(g, u1);
        const double a = rng.uniform(-2.0, 2.0), c = rng.uniform(-2.0, 2.0);
        std::vector<Series> mix(M, Series(3));
        for (int k = 0; k < M; ++k)
            for (int t = 0; t < 3; ++t) mix[k][t] = a * u1[k][t] + c * u2[k][t];
        const auto sm = evaluate_flows(g, mix);
        for (int n = 0; n < g.num_nodes(); ++n)
            for (int t = 0; t < 3; ++t) {
                flow_err = std::max({flow_err, std::abs(s1.flow[n][t] - ref.flow[n][t]), std::abs(s1.dv[n][t] - ref.dv[n][t])});
                lin_err = std::max({lin_err, std::abs(sm.flow[n][t] - (a * s1.flow[n][t] + c * s2.flow[n][t])),
                                    std::abs(sm.dv[n][t] - (a * s1.dv[n][t] + c * s2.dv[n][t]))});
            }
    }
    int evaluations = 0;
    while (evaluations < 100) {
        InstanceOptions opt;
        opt.binding_limits = evaluations % 2 == 0;
        Instance inst = random_instance(rng, 3 + evaluations % 3, 2 + evaluations % 3, opt);
        if (evaluations % 3 == 0) inst.params.regime = ExchangeRegime::StrictSelfConsumption;
        const auto parts = enumerate_partitions(inst.grid, 8);
        const Partition& P = parts[rng.index(parts.size())];
        try {
            const CostReport r = partition_total_cost(inst.grid, P, inst.data, inst.params);
            decomposition_err = std::max(decomposition_err, std::abs(r.decomposition() - r.total));
            ++evaluations;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::Infeasible) throw;
        }
    }
    const SolveStats stats = exante_solve_stats();
    o.require(flow_err <= 1e-9, "dense oracle " + fmt("%.2e", flow_err));
    o.require(lin_err <= 1e-12, "linearity " + fmt("%.2e", lin_err));
    o.require(decomposition_err <= 1e-9, "decomposition " + fmt("%.2e", decomposition_err));
    o.require(stats.worst_relative_gap <= 1e-6, "duality gap " + fmt("%.2e", stats.worst_relative_gap));
    o.detail += (o.detail.empty() ? "" : "; ") + std::string("oracle ") + fmt("%.1e", flow_err) + ", linearity " +
                fmt("%.1e", lin_err) + ", decomposition " + fmt("%.1e", decomposition_err) + ", worst gap " +
                fmt("%.1e", stats.worst_relative_gap) + " over " + std::to_string(stats.solves) + " solves";
    return o;
}

Outcome lausanne_ingestion() {
    Outcome o;
    const std::string config = kData + "/lausanne/config.json";
    const RunConfig cfg = load_run_config(config);
    StabilityOptions so;
    so.active = cfg.active;
    const auto parts = candidate_partitions(cfg.bundle.grid, so);
    o.require(cfg.bundle.grid.num_nodes() == 43, std::to_string(cfg.bundle.grid.num_nodes()) + " nodes");
    o.require(cfg.active.size() == 5, std::to_string(cfg.active.size()) + " neighbourhood prosumers");
    o.require(parts.size() == 34, std::to_string(parts.size()) + " partitions");
    const fs::path dir = scratch("c8");
    const Cli r = cli({"stable", config, "--out", dir.string()});
    o.require(r.code == 0, "stable exited " + std::to_string(r.code) + " " + r.err);
    o.require(has_line(r.out, "P* = "), "no optimal stable partition line");
    int lines = 0;
    std::istringstream in(r.out);
    for (std::string l; std::getline(in, l);) lines += l.find("Phi=") != std::string::npos;
    o.require(lines == 34, std::to_string(lines) + " partitions reported");
    if (o.ok) {
        std::istringstream again(r.out);
        for (std::string l; std::getline(again, l);)
            if (l.rfind("P* = ", 0) == 0) o.detail = "43 nodes, 34 partitions, " + l;
    }
    fs::remove_all(dir);
    return o;
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double limit_seconds;  // 0 when untimed
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "Example 1 itemized costs", 5.0, example1_costs},
        {2, "Example 1 optimum", 0.0, example1_optimum},
        {3, "Example 2 stability", 10.0, example2_stability},
        {4, "grand coalition core on random trees", 300.0, theorem_suite},
        {5, "coupled and decoupled costs agree", 0.0, decoupling_suite},
        {6, "noise sweep trend", 1800.0, sweep_trend},
        {7, "numerical suites", 0.0, numerics_suite},
        {8, "Lausanne-like ingestion and stability", 600.0, lausanne_ingestion},
    };

    reset_exante_solve_stats();
    int failed = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.limit_seconds > 0.0 && secs > c.limit_seconds) o.require(false, "over " + fmt("%.0f s", c.limit_seconds));
        failed += !o.ok;
        std::printf("[%s] %d %s (%.2f s): %s\n", o.ok ? "PASS" : "FAIL", c.id, c.name, secs, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
