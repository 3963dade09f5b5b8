#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "lempart/error.hpp"
#include "lempart/fixtures.hpp"
#include "lempart/io.hpp"
#include "lempart/stability.hpp"
#include "lempart/sweep.hpp"

namespace lempart::cli {

namespace {

struct Options {
    std::string config;
    std::string mode;
    std::optional<std::uint64_t> seed;
    std::optional<int> cap;
    std::optional<double> tol;
    std::optional<double> sigma;
    std::string out = ".";
    bool dump_duals = false;
    std::vector<std::string> partitions;
    std::string block;
    std::string levels = "0,0.05,0.1,0.2";
    int variants = 1000;
};

std::string path_in(const Options& o, const std::string& name) { return (std::filesystem::path(o.out) / name).string(); }

std::string money(double v) {
    if (!std::isfinite(v)) return "inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

// Configuration with command-line overrides applied. A noise level, from the
// parameters or --sigma, regenerates the forecasts from the realizations.
RunConfig load(const Options& o) {
    RunConfig cfg = load_run_config(o.config);
    if (!o.mode.empty()) cfg.mode = o.mode == "externalities" ? DeviationMode::Externalities : DeviationMode::NoExternalities;
    if (o.seed) cfg.seed = *o.seed;
    if (o.sigma) cfg.noise.sigma = *o.sigma;
    if (o.sigma || cfg.noise.sigma > 0.0) {
        NoiseSpec n = cfg.noise;
        n.seed = derive_seed(cfg.seed, 0x6e6f697365);
        cfg.bundle.data = apply_forecast_noise(cfg.bundle.data, n);
    }
    return cfg;
}

StabilityOptions stability_options(const Options& o, const RunConfig& cfg) {
    StabilityOptions s;
    s.mode = cfg.mode;
    s.active = cfg.active;
    if (o.cap) s.cap = *o.cap;
    if (o.tol) s.tol = *o.tol;
    return s;
}

Partition partition_arg(const Grid& grid, const std::string& spec) {
    return make_partition(grid, parse_partition_spec(grid, spec));
}

int cmd_evaluate(const Options& o, std::ostream& out) {
    const RunConfig cfg = load(o);
    const Bundle& b = cfg.bundle;
    std::vector<Partition> parts;
    for (const auto& spec : o.partitions) parts.push_back(partition_arg(b.grid, spec));
    if (parts.empty()) parts = candidate_partitions(b.grid, stability_options(o, cfg));
    std::vector<CostReport> reports;
    for (const auto& p : parts) reports.push_back(partition_total_cost(b.grid, p, b.data, b.params));
    const std::string csv = cost_report_csv(b.grid, reports);
    write_file(path_in(o, "cost_report.csv"), csv);
    write_file(path_in(o, "cost_report.json"), cost_report_json(b.grid, reports, o.dump_duals));
    out << csv;
    return 0;
}

int cmd_enumerate(const Options& o, std::ostream& out) {
    const RunConfig cfg = load(o);
    const auto parts = candidate_partitions(cfg.bundle.grid, stability_options(o, cfg));
    const std::string json = partitions_json(cfg.bundle.grid, parts);
    write_file(path_in(o, "partitions.json"), json);
    out << json;
    return 0;
}

int cmd_optimal(const Options& o, std::ostream& out) {
    const RunConfig cfg = load(o);
    const Bundle& b = cfg.bundle;
    const auto r = optimal_partition(b.grid, b.data, b.params, stability_options(o, cfg));
    write_file(path_in(o, "optimal.json"), optimal_json(b.grid, r));
    if (r.best < 0) {
        out << "no feasible partition\n";
        return 0;
    }
    out << "P_opt = " << partition_label(b.grid, r.partitions[r.best].partition) << "\n";
    out << "Phi = " << money(r.total) << "\n";
    return 0;
}

int cmd_stable(const Options& o, std::ostream& out) {
    const RunConfig cfg = load(o);
    const Bundle& b = cfg.bundle;
    const auto r = optimal_stable_partition(b.grid, b.data, b.params, stability_options(o, cfg));
    write_file(path_in(o, "stability.json"), stability_json(b.grid, r));
    for (const auto& p : r.partitions) {
        out << partition_label(b.grid, p.partition) << "  Phi=" << money(p.total) << "  "
            << (p.stable ? "stable" : "unstable");
        if (p.first_blocker) out << "  blocker=" << coalition_label(b.grid, coalition_from_prosumers(b.grid, *p.first_blocker));
        if (!p.note.empty()) out << "  (" << p.note << ")";
        out << "\n";
    }
    if (r.best < 0) {
        out << "P* = none\n";
        return 0;
    }
    out << "P* = " << partition_label(b.grid, r.partitions[r.best].partition) << "\n";
    out << "Gamma* = " << money(r.gamma) << "\n";
    return 0;
}

int cmd_core_check(const Options& o, std::ostream& out) {
    const RunConfig cfg = load(o);
    const Bundle& b = cfg.bundle;
    if (o.partitions.size() != 1) throw Error(ErrorCode::InvalidPartition, "core-check needs exactly one --partition");
    const Partition p = partition_arg(b.grid, o.partitions.front());
    int block = 0;
    if (!o.block.empty()) {
        const int k = b.grid.prosumer_index(o.block);
        block = -1;
        for (std::size_t i = 0; i < p.size(); ++i)
            for (int m : p[i].members)
                if (m == k) block = static_cast<int>(i);
    }
    const CoreResult core = core_check(b.grid, p, block, b.data, b.params, stability_options(o, cfg));
    const std::string json = core_json(b.grid, p, block, core);
    write_file(path_in(o, "core.json"), json);
    out << json;
    return 0;
}

std::vector<double> parse_levels(const std::string& text) {
    std::vector<double> levels;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != item.size() || !(v >= 0.0))
            throw Error(ErrorCode::InvalidParameter, "bad noise level '" + item + "'");
        levels.push_back(v);
    }
    if (levels.empty()) throw Error(ErrorCode::InvalidParameter, "noise levels must not be empty");
    return levels;
}

int cmd_sweep(const Options& o, std::ostream& out) {
    Options plain = o;
    plain.sigma.reset();
    RunConfig cfg = load_run_config(o.config);
    if (!o.mode.empty()) cfg.mode = o.mode == "externalities" ? DeviationMode::Externalities : DeviationMode::NoExternalities;
    if (o.seed) cfg.seed = *o.seed;
    SweepOptions s;
    s.levels = parse_levels(o.levels);
    if (o.variants < 1) throw Error(ErrorCode::InvalidParameter, "variant count must be at least 1");
    s.variants = o.variants;
    s.scale_bound = cfg.noise.scale_bound;
    s.shift_bound = cfg.noise.shift_bound;
    s.seed = cfg.seed;
    s.stability = stability_options(plain, cfg);
    const SweepResult r = run_sweep(cfg.bundle, s);
    const std::string csv = sweep_csv(cfg.bundle.grid, r);
    write_file(path_in(o, "sweep.csv"), csv);
    write_file(path_in(o, "sweep_runs.csv"), sweep_runs_csv(cfg.bundle.grid, r));
    out << csv;
    out << "monotone_fraction = " << money(r.monotone_fraction()) << "\n";
    out << "grand_coalition_at_first_level = " << money(r.grand_coalition_fraction(0)) << "\n";
    return 0;
}

void write_lausanne(const std::string& dir) {
    const Bundle b = lausanne_like();
    auto column = [&](const std::vector<Series>& s, bool reactive) {
        std::vector<std::vector<double>> v(s.size());
        for (std::size_t k = 0; k < s.size(); ++k)
            for (const Complex& c : s[k]) v[k].push_back(reactive ? c.imag() : c.real());
        return series_to_csv(b.grid, v);
    };
    const auto dirp = std::filesystem::path(dir);
    write_file((dirp / "grid.json").string(), grid_to_json(b.grid));
    write_file((dirp / "params.json").string(), params_to_json(b.grid, b.params));
    write_file((dirp / "forecast_p.csv").string(), column(b.data.forecast, false));
    write_file((dirp / "forecast_q.csv").string(), column(b.data.forecast, true));
    write_file((dirp / "realized_p.csv").string(), column(b.data.realized, false));
    write_file((dirp / "realized_q.csv").string(), column(b.data.realized, true));
    std::string active;
    for (int k : lausanne_neighbourhood(b.grid)) active += std::string(active.empty() ? "" : ", ") + "\"" + b.grid.prosumer_id(k) + "\"";
    write_file((dirp / "config.json").string(),
               "{\n"
               "  \"name\": \"" + b.name + "\",\n"
               "  \"mode\": \"externalities\",\n"
               "  \"seed\": 7,\n"
               "  \"active\": [" + active + "],\n"
               "  \"grid\": \"grid.json\",\n"
               "  \"params\": \"params.json\",\n"
               "  \"series\": {\n"
               "    \"step_hours\": 1.0,\n"
               "    \"forecast_p\": \"forecast_p.csv\",\n"
               "    \"forecast_q\": \"forecast_q.csv\",\n"
               "    \"realized_p\": \"realized_p.csv\",\n"
               "    \"realized_q\": \"realized_q.csv\"\n"
               "  }\n"
               "}\n");
}

int cmd_fixtures(const Options& o, std::ostream& out) {
    auto emit = [&](const Bundle& b, DeviationMode mode, const std::string& file) {
        RunConfig cfg;
        cfg.bundle = b;
        cfg.mode = mode;
        write_file(path_in(o, file), run_config_to_json(cfg));
        out << path_in(o, file) << "\n";
    };
    emit(example1(), DeviationMode::NoExternalities, "example1.json");
    emit(example2(), DeviationMode::NoExternalities, "example2.json");
    emit(sweep_fixture(), DeviationMode::NoExternalities, "sweep.json");
    write_lausanne(path_in(o, "lausanne"));
    out << path_in(o, "lausanne/config.json") << "\n";
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Local energy market partitioning: costs, stability and optimal stable partitions"};
    app.name("lempart");
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub, bool needs_config) {
        if (needs_config) sub->add_option("config", o.config, "Run configuration (JSON)")->required();
        sub->add_option("--mode", o.mode, "Deviation model")->check(CLI::IsMember({"no-externalities", "externalities"}));
        sub->add_option("--seed", o.seed, "Seed for noise and variants");
        sub->add_option("--cap", o.cap, "Maximum number of regrouping prosumers");
        sub->add_option("--tol", o.tol, "Tolerance on core inequalities (CHF)");
        sub->add_option("--sigma", o.sigma, "Regenerate forecasts with this multiplicative noise level");
        sub->add_option("--out", o.out, "Output directory");
    };

    auto* evaluate = app.add_subcommand("evaluate", "Itemized costs of partitions");
    common(evaluate, true);
    evaluate->add_option("--partition,-p", o.partitions, "Partition such as \"1,2|3\"; all candidates when omitted");
    evaluate->add_flag("--dump-duals", o.dump_duals, "Include the ex-ante multipliers in the JSON report");

    auto* enumerate = app.add_subcommand("enumerate", "List candidate partitions");
    common(enumerate, true);

    auto* optimal = app.add_subcommand("optimal", "Partition with the lowest total cost");
    common(optimal, true);

    auto* stable = app.add_subcommand("stable", "Optimal stable partition");
    common(stable, true);

    auto* core = app.add_subcommand("core-check", "Core of one block of a partition");
    common(core, true);
    core->add_option("--partition,-p", o.partitions, "Partition such as \"1,2|3\"")->required();
    core->add_option("--block", o.block, "A prosumer id of the block to check (default: first block)");

    auto* sweep = app.add_subcommand("sweep", "Noise-level sweep over profile variants");
    common(sweep, true);
    sweep->add_option("--levels", o.levels, "Comma-separated noise levels");
    sweep->add_option("--variants", o.variants, "Number of profile variants");

    auto* fixtures = app.add_subcommand("fixtures", "Write the bundled configurations");
    fixtures->add_option("--out", o.out, "Output directory");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << error_json("UsageError", e.what());
        return 2;
    }

    try {
        if (*evaluate) return cmd_evaluate(o, out);
        if (*enumerate) return cmd_enumerate(o, out);
        if (*optimal) return cmd_optimal(o, out);
        if (*stable) return cmd_stable(o, out);
        if (*core) return cmd_core_check(o, out);
        if (*sweep) return cmd_sweep(o, out);
        if (*fixtures) return cmd_fixtures(o, out);
    } catch (const Error& e) {
        err << error_json(error_name(e.code()), e.what());
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        err << error_json("InternalError", e.what());
        return 4;
    }
    return 2;
}

}  // namespace lempart::cli
