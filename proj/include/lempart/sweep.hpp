#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lempart/fixtures.hpp"
#include "lempart/stability.hpp"

namespace lempart {

struct SweepOptions {
    std::vector<double> levels{0.0, 0.05, 0.10, 0.20};
    int variants = 1000;
    double scale_bound = 0.25;
    int shift_bound = 1;
    std::uint64_t seed = 0;
    StabilityOptions stability;
};

struct SweepRun {
    int variant = 0;
    int level = 0;               // index into levels
    std::vector<double> totals;  // Φ by partition
    int optimal = -1;
    int best = -1;               // optimal stable partition, -1 when none is stable
};

struct SweepResult {
    std::vector<Partition> partitions;
    std::vector<double> levels;
    int variants = 0;
    std::vector<SweepRun> runs;                  // variant-major
    std::vector<std::vector<double>> mean_total; // [partition][level], over variants with finite Φ
    std::vector<std::vector<int>> optimal_wins;  // [partition][level]
    std::vector<std::vector<int>> stable_wins;   // [partition][level]
    std::vector<int> winner;                     // per level: most frequent optimal stable partition
    std::vector<int> optimal_winner;             // per level: most frequent optimal partition

    const SweepRun& run(int variant, int level) const { return runs[variant * levels.size() + level]; }
    // Block count of the optimal stable partition; 0 when none is stable.
    int blocks(int variant, int level) const;
    // Share of variants whose block count never decreases with the noise level.
    double monotone_fraction() const;
    // Share of variants whose optimal stable partition at `level` is the grand coalition.
    double grand_coalition_fraction(int level = 0) const;
};

// Every variant scales and shifts the base profiles; at each level the forecast
// errors of a variant come from one seed, so they grow in proportion to σ.
SweepResult run_sweep(const Bundle& bundle, const SweepOptions& options,
                      const std::function<void(int done, int total)>& progress = {});

// Rows follow the partitions, columns the noise levels (mean Φ). Two trailing
// rows name the most frequent optimal and optimal stable partition per level.
std::string sweep_csv(const Grid& grid, const SweepResult& result);
// One row per variant and level with Φ of every partition and both winners.
std::string sweep_runs_csv(const Grid& grid, const SweepResult& result);

}  // namespace lempart
