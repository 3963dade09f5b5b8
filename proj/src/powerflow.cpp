#include "lempart/powerflow.hpp"

#include "lempart/error.hpp"

namespace lempart {

std::vector<Series> nodal_branch_flows(const Grid& grid, const std::vector<Series>& nodal) {
    const int n = grid.num_nodes();
    if (static_cast<int>(nodal.size()) != n)
        throw Error(ErrorCode::MissingProsumerSeries, "nodal injections must cover every node");
    const std::size_t T = nodal.empty() ? 0 : nodal.front().size();
    std::vector<Series> flow = nodal;
    for (auto& f : flow)
        if (f.size() != T) throw Error(ErrorCode::MissingProsumerSeries, "nodal series lengths differ");
    const auto& order = grid.order();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const int v = *it;
        if (v == grid.pcc()) continue;
        Series& up = flow[grid.parent(v)];
        for (std::size_t t = 0; t < T; ++t) up[t] += flow[v][t];
    }
    return flow;
}

std::vector<Series> branch_flows(const Grid& grid, const std::vector<Series>& injections) {
    if (static_cast<int>(injections.size()) != grid.num_prosumers())
        throw Error(ErrorCode::MissingProsumerSeries, "injections must cover every prosumer");
    const std::size_t T = injections.empty() ? 0 : injections.front().size();
    std::vector<Series> nodal(grid.num_nodes(), Series(T));
    for (int k = 0; k < grid.num_prosumers(); ++k) {
        if (injections[k].size() != T) throw Error(ErrorCode::MissingProsumerSeries, "injection lengths differ");
        nodal[grid.prosumer_node(k)] = injections[k];
    }
    return nodal_branch_flows(grid, nodal);
}

std::vector<std::vector<double>> voltage_deviations(const Grid& grid, const std::vector<Series>& flows) {
    const std::size_t T = flows.empty() ? 0 : flows.front().size();
    std::vector<std::vector<double>> dv(grid.num_nodes(), std::vector<double>(T, 0.0));
    for (int v : grid.order()) {
        if (v == grid.pcc()) continue;
        const Complex z = grid.impedance(v);
        const auto& up = dv[grid.parent(v)];
        for (std::size_t t = 0; t < T; ++t) dv[v][t] = up[t] + 2.0 * std::real(std::conj(z) * flows[v][t]);
    }
    return dv;
}

FlowState evaluate_flows(const Grid& grid, const std::vector<Series>& injections) {
    FlowState s;
    s.flow = branch_flows(grid, injections);
    s.dv = voltage_deviations(grid, s.flow);
    return s;
}

std::vector<Series> boundary_exchange(const Grid& grid, const Coalition& coalition,
                                      const std::vector<Series>& flows) {
    const std::size_t T = flows.empty() ? 0 : flows.front().size();
    std::vector<Series> out;
    for (int nb : coalition.boundary) {
        Series x(T);
        if (coalition.singleton()) {
            x = flows[nb];
        } else {
            for (int ch : grid.children(nb))
                if (coalition.has_edge(ch))
                    for (std::size_t t = 0; t < T; ++t) x[t] += flows[ch][t];
        }
        out.push_back(std::move(x));
    }
    return out;
}

}  // namespace lempart
