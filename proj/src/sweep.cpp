#include "lempart/sweep.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "lempart/error.hpp"

namespace lempart {

namespace {

std::string fmt(double v) {
    if (!std::isfinite(v)) return "inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string level_name(double level) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g%%", level * 100.0);
    return buf;
}

std::string quoted(const std::string& s) { return "\"" + s + "\""; }

int most_frequent(const std::vector<std::vector<int>>& wins, int level) {
    int best = -1;
    for (std::size_t p = 0; p < wins.size(); ++p)
        if (wins[p][level] > 0 && (best < 0 || wins[p][level] > wins[best][level])) best = static_cast<int>(p);
    return best;
}

}  // namespace

int SweepResult::blocks(int variant, int level) const {
    const int b = run(variant, level).best;
    return b < 0 ? 0 : static_cast<int>(partitions[b].size());
}

double SweepResult::monotone_fraction() const {
    if (variants == 0) return 0.0;
    int ok = 0;
    for (int v = 0; v < variants; ++v) {
        bool mono = true;
        for (std::size_t l = 1; l < levels.size(); ++l)
            mono = mono && blocks(v, static_cast<int>(l)) >= blocks(v, static_cast<int>(l) - 1);
        ok += mono;
    }
    return static_cast<double>(ok) / variants;
}

double SweepResult::grand_coalition_fraction(int level) const {
    if (variants == 0) return 0.0;
    int ok = 0;
    for (int v = 0; v < variants; ++v) ok += blocks(v, level) == 1;
    return static_cast<double>(ok) / variants;
}

SweepResult run_sweep(const Bundle& bundle, const SweepOptions& options,
                      const std::function<void(int, int)>& progress) {
    if (options.levels.empty()) throw Error(ErrorCode::InvalidParameter, "noise levels must not be empty");
    for (double l : options.levels)
        if (!(l >= 0.0)) throw Error(ErrorCode::InvalidParameter, "noise levels must be nonnegative");

    NoiseSpec vspec;
    vspec.scale_bound = options.scale_bound;
    vspec.shift_bound = options.shift_bound;
    vspec.seed = derive_seed(options.seed, 0);
    const auto variants = generate_profile_variants(bundle.data, vspec, options.variants);

    SweepResult r;
    r.partitions = candidate_partitions(bundle.grid, options.stability);
    r.levels = options.levels;
    r.variants = options.variants;
    const std::size_t P = r.partitions.size();
    const std::size_t L = r.levels.size();
    r.mean_total.assign(P, std::vector<double>(L, 0.0));
    r.optimal_wins.assign(P, std::vector<int>(L, 0));
    r.stable_wins.assign(P, std::vector<int>(L, 0));
    std::vector<std::vector<int>> finite(P, std::vector<int>(L, 0));

    const int total = options.variants * static_cast<int>(L);
    for (int v = 0; v < options.variants; ++v) {
        for (std::size_t l = 0; l < L; ++l) {
            NoiseSpec noise;
            noise.sigma = r.levels[l];
            noise.seed = derive_seed(options.seed, 1 + static_cast<std::uint64_t>(v));
            const ProsumptionSet data = apply_forecast_noise(variants[v], noise);

            StabilityAnalyzer analyzer(bundle.grid, data, bundle.params, options.stability);
            SweepRun run;
            run.variant = v;
            run.level = static_cast<int>(l);
            std::vector<bool> stable(P, false);
            std::vector<bool> feasible(P, false);
            for (std::size_t p = 0; p < P; ++p) {
                const PartitionStability s = analyzer.analyze(r.partitions[p]);
                run.totals.push_back(s.total);
                feasible[p] = s.feasible && std::isfinite(s.total);
                stable[p] = s.stable && feasible[p];
                if (feasible[p]) {
                    r.mean_total[p][l] += s.total;
                    ++finite[p][l];
                }
            }
            run.optimal = argmin_partition(r.partitions, run.totals, feasible);
            run.best = argmin_partition(r.partitions, run.totals, stable);
            if (run.optimal >= 0) ++r.optimal_wins[run.optimal][l];
            if (run.best >= 0) ++r.stable_wins[run.best][l];
            r.runs.push_back(std::move(run));
            if (progress) progress(static_cast<int>(r.runs.size()), total);
        }
    }
    for (std::size_t p = 0; p < P; ++p)
        for (std::size_t l = 0; l < L; ++l)
            r.mean_total[p][l] = finite[p][l] > 0 ? r.mean_total[p][l] / finite[p][l] : kInf;
    for (std::size_t l = 0; l < L; ++l) {
        r.winner.push_back(most_frequent(r.stable_wins, static_cast<int>(l)));
        r.optimal_winner.push_back(most_frequent(r.optimal_wins, static_cast<int>(l)));
    }
    return r;
}

std::string sweep_csv(const Grid& grid, const SweepResult& r) {
    std::ostringstream out;
    out << "Partition";
    for (double l : r.levels) out << "," << level_name(l);
    out << "\n";
    for (std::size_t p = 0; p < r.partitions.size(); ++p) {
        out << quoted(partition_label(grid, r.partitions[p]));
        for (std::size_t l = 0; l < r.levels.size(); ++l) out << "," << fmt(r.mean_total[p][l]);
        out << "\n";
    }
    auto winners = [&](const char* name, const std::vector<int>& w) {
        out << name;
        for (int p : w) out << "," << (p < 0 ? std::string("none") : quoted(partition_label(grid, r.partitions[p])));
        out << "\n";
    };
    winners("Optimal", r.optimal_winner);
    winners("OptimalStable", r.winner);
    return out.str();
}

std::string sweep_runs_csv(const Grid& grid, const SweepResult& r) {
    std::ostringstream out;
    out << "variant,level";
    for (const auto& p : r.partitions) out << "," << quoted(partition_label(grid, p));
    out << ",optimal,optimal_stable\n";
    for (const auto& run : r.runs) {
        out << run.variant << "," << level_name(r.levels[run.level]);
        for (double t : run.totals) out << "," << fmt(t);
        out << "," << (run.optimal < 0 ? std::string("none") : quoted(partition_label(grid, r.partitions[run.optimal])));
        out << "," << (run.best < 0 ? std::string("none") : quoted(partition_label(grid, r.partitions[run.best])));
        out << "\n";
    }
    return out.str();
}

}  // namespace lempart
