#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lempart/costs.hpp"
#include "lempart/fixtures.hpp"
#include "lempart/grid.hpp"
#include "lempart/stability.hpp"
#include "lempart/timeseries.hpp"

namespace lempart {

// Grid file:
//   {"pcc": "0", "v_ref": 1.0,
//    "nodes": [{"id": "1", "dv_limit": 0.05, "is_prosumer": true}, ...],
//    "edges": [{"from": "1", "to": "0", "r": 0.01, "x": 0.01, "s_limit": 1.0}, ...]}
// A null or absent limit means unconstrained. Errors name the line and field.
Grid parse_grid_json(const std::string& text, const std::string& source = "grid");
Grid load_grid(const std::string& path);
std::string grid_to_json(const Grid& grid);

// One column per prosumer id, one row per step, header row first. An optional
// leading column named "t" is ignored. Returns values by prosumer index.
std::vector<std::vector<double>> parse_series_csv(const std::string& text, const Grid& grid,
                                                  const std::string& source = "series");
std::string series_to_csv(const Grid& grid, const std::vector<std::vector<double>>& values);

// Cost parameters and noise settings, keyed by grid ids.
struct ParamsFile {
    CostParams params;
    NoiseSpec noise;
};
ParamsFile parse_params_json(const std::string& text, const Grid& grid, const std::string& source = "params");
std::string params_to_json(const Grid& grid, const CostParams& params, const NoiseSpec& noise = {});

// A run configuration. `grid`, `params` and each series may be inline or a
// path relative to the configuration file.
struct RunConfig {
    Bundle bundle;
    DeviationMode mode = DeviationMode::NoExternalities;
    std::uint64_t seed = 0;
    NoiseSpec noise;
    std::vector<int> active;  // prosumer indices free to regroup; empty means all
};
RunConfig parse_run_config(const std::string& text, const std::string& base_dir = ".",
                           const std::string& source = "config");
RunConfig load_run_config(const std::string& path);
// Self-contained configuration with everything inline.
std::string run_config_to_json(const RunConfig& config);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

// Reports. CSV columns: Partition,Flex,Imb,Over,Volt,Tax,Export,Total.
std::string cost_report_csv(const Grid& grid, const std::vector<CostReport>& reports);
std::string cost_report_json(const Grid& grid, const std::vector<CostReport>& reports, bool with_duals = false);
std::string stability_json(const Grid& grid, const StablePartitionResult& result);
std::string core_json(const Grid& grid, const Partition& partition, int block_index, const CoreResult& core);
std::string partitions_json(const Grid& grid, const std::vector<Partition>& partitions);
std::string optimal_json(const Grid& grid, const OptimalPartitionResult& result);

// {"error": NAME, "message": ...}
std::string error_json(const std::string& name, const std::string& message);

}  // namespace lempart
