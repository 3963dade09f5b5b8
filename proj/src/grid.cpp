#include "lempart/grid.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <sstream>
#include <unordered_map>

#include "lempart/error.hpp"

namespace lempart {

int Grid::node_index(const std::string& id) const {
    auto it = std::find(ids_.begin(), ids_.end(), id);
    if (it == ids_.end()) throw Error(ErrorCode::UnknownNode, "unknown node '" + id + "'");
    return static_cast<int>(it - ids_.begin());
}

int Grid::prosumer_index(const std::string& id) const {
    for (int k = 0; k < num_prosumers(); ++k)
        if (ids_[prosumers_[k]] == id) return k;
    throw Error(ErrorCode::UnknownProsumer, "unknown prosumer '" + id + "'");
}

std::vector<int> Grid::path_to_pcc(int n) const {
    std::vector<int> path;
    for (int v = n; v != pcc_; v = parent_[v]) path.push_back(v);
    return path;
}

Grid build_grid(const std::vector<NodeSpec>& nodes, const std::vector<EdgeSpec>& edges,
                const std::string& pcc, double v_ref) {
    Grid g;
    const int n = static_cast<int>(nodes.size());
    std::unordered_map<std::string, int> index;
    for (int i = 0; i < n; ++i) {
        if (!index.emplace(nodes[i].id, i).second)
            throw Error(ErrorCode::InvalidParameter, "duplicate node id '" + nodes[i].id + "'");
        g.ids_.push_back(nodes[i].id);
    }
    auto lookup = [&](const std::string& id) {
        auto it = index.find(id);
        if (it == index.end()) throw Error(ErrorCode::UnknownNode, "unknown node '" + id + "'");
        return it->second;
    };
    if (n == 0) throw Error(ErrorCode::UnknownNode, "grid has no nodes");
    g.pcc_ = lookup(pcc);
    if (!(v_ref > 0.0)) throw Error(ErrorCode::NonPositiveLimit, "v_ref must be positive");
    g.v_ref_ = v_ref;

    if (static_cast<int>(edges.size()) > n - 1)
        throw Error(ErrorCode::CycleDetected, "edge count exceeds node count minus one");

    std::vector<std::vector<std::pair<int, int>>> adj(n);  // (neighbour, edge index)
    for (int e = 0; e < static_cast<int>(edges.size()); ++e) {
        int a = lookup(edges[e].from);
        int b = lookup(edges[e].to);
        if (a == b) throw Error(ErrorCode::CycleDetected, "self-loop at node '" + edges[e].from + "'");
        adj[a].emplace_back(b, e);
        adj[b].emplace_back(a, e);
    }

    g.parent_.assign(n, -1);
    g.children_.assign(n, {});
    g.depth_.assign(n, 0);
    g.z_.assign(n, {0.0, 0.0});
    g.s_limit_.assign(n, std::numeric_limits<double>::infinity());
    g.dv_limit_.assign(n, std::numeric_limits<double>::infinity());

    std::vector<char> seen(n, 0);
    std::queue<int> queue;
    queue.push(g.pcc_);
    seen[g.pcc_] = 1;
    std::vector<int> via(n, -1);
    while (!queue.empty()) {
        int v = queue.front();
        queue.pop();
        g.order_.push_back(v);
        for (auto [w, e] : adj[v]) {
            if (e == via[v]) continue;
            if (seen[w]) throw Error(ErrorCode::CycleDetected, "cycle through node '" + g.ids_[w] + "'");
            seen[w] = 1;
            via[w] = e;
            g.parent_[w] = v;
            g.depth_[w] = g.depth_[v] + 1;
            g.children_[v].push_back(w);
            const EdgeSpec& spec = edges[e];
            if (spec.r < 0.0)
                throw Error(ErrorCode::InvalidParameter,
                            "negative resistance on edge " + spec.from + "-" + spec.to);
            if (!(spec.s_limit > 0.0))
                throw Error(ErrorCode::NonPositiveLimit,
                            "s_limit must be positive on edge " + spec.from + "-" + spec.to);
            g.z_[w] = {spec.r, spec.x};
            g.s_limit_[w] = spec.s_limit;
            queue.push(w);
        }
    }
    if (static_cast<int>(g.order_.size()) != n) {
        for (int i = 0; i < n; ++i)
            if (!seen[i]) throw Error(ErrorCode::DisconnectedGraph, "node '" + g.ids_[i] + "' is not reachable from the PCC");
    }

    g.prosumer_of_node_.assign(n, -1);
    for (int i = 0; i < n; ++i) {
        if (!(nodes[i].dv_limit > 0.0))
            throw Error(ErrorCode::NonPositiveLimit, "dv_limit must be positive at node '" + nodes[i].id + "'");
        g.dv_limit_[i] = nodes[i].dv_limit;
        if (nodes[i].is_prosumer) {
            if (!g.children_[i].empty())
                throw Error(ErrorCode::ProsumerNotLeaf, "prosumer node '" + nodes[i].id + "' is not a leaf");
            g.prosumer_of_node_[i] = static_cast<int>(g.prosumers_.size());
            g.prosumers_.push_back(i);
        }
    }
    return g;
}

bool Coalition::has_edge(int e) const { return std::binary_search(edges.begin(), edges.end(), e); }
bool Coalition::has_node(int n) const { return std::binary_search(nodes.begin(), nodes.end(), n); }

Coalition coalition_from_prosumers(const Grid& grid, std::vector<int> members) {
    if (members.empty()) throw Error(ErrorCode::EmptyMemberSet, "coalition needs at least one prosumer");
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
    for (int k : members)
        if (k < 0 || k >= grid.num_prosumers())
            throw Error(ErrorCode::UnknownProsumer, "prosumer index " + std::to_string(k) + " out of range");

    Coalition c;
    c.members = members;

    auto lca = [&](int a, int b) {
        while (grid.depth(a) > grid.depth(b)) a = grid.parent(a);
        while (grid.depth(b) > grid.depth(a)) b = grid.parent(b);
        while (a != b) {
            a = grid.parent(a);
            b = grid.parent(b);
        }
        return a;
    };
    int top = grid.prosumer_node(members[0]);
    for (int k : members) top = lca(top, grid.prosumer_node(k));
    c.top = top;

    std::vector<char> in_nodes(grid.num_nodes(), 0), in_edges(grid.num_nodes(), 0);
    in_nodes[top] = 1;
    for (int k : members) {
        for (int v = grid.prosumer_node(k); v != top; v = grid.parent(v)) {
            in_nodes[v] = 1;
            in_edges[v] = 1;
        }
    }
    for (int v = 0; v < grid.num_nodes(); ++v) {
        if (in_nodes[v]) c.nodes.push_back(v);
        if (in_edges[v]) c.edges.push_back(v);
    }
    // The PCC counts as touching the upstream tie, which no coalition owns.
    for (int v : c.nodes) {
        bool external = (v == grid.pcc()) || !in_edges[v];
        for (int ch : grid.children(v)) external = external || !in_edges[ch];
        (external ? c.boundary : c.internal).push_back(v);
    }
    return c;
}

Coalition grand_coalition(const Grid& grid) {
    std::vector<int> all(grid.num_prosumers());
    std::iota(all.begin(), all.end(), 0);
    return coalition_from_prosumers(grid, all);
}

std::vector<Coalition> enumerate_connected_subcoalitions(const Grid& grid, const Coalition& parent) {
    const int k = static_cast<int>(parent.members.size());
    if (k > 30) throw Error(ErrorCode::ExponentialBlowup, "too many members to enumerate sub-coalitions");
    std::vector<Coalition> out;
    for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << k); ++mask) {
        std::vector<int> members;
        for (int i = 0; i < k; ++i)
            if (mask >> i & 1) members.push_back(parent.members[i]);
        Coalition c = coalition_from_prosumers(grid, members);
        bool inside = std::includes(parent.nodes.begin(), parent.nodes.end(), c.nodes.begin(), c.nodes.end()) &&
                      std::includes(parent.edges.begin(), parent.edges.end(), c.edges.begin(), c.edges.end());
        if (inside) out.push_back(std::move(c));
    }
    std::sort(out.begin(), out.end(), [](const Coalition& a, const Coalition& b) { return a.members < b.members; });
    return out;
}

namespace {

using EdgeMask = std::vector<std::uint64_t>;

EdgeMask edge_mask(const Grid& grid, const Coalition& c) {
    EdgeMask m((grid.num_nodes() + 63) / 64, 0);
    for (int e : c.edges) m[e / 64] |= std::uint64_t{1} << (e % 64);
    return m;
}

bool overlaps(const EdgeMask& a, const EdgeMask& b) {
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] & b[i]) return true;
    return false;
}

void sort_blocks(Partition& p) {
    std::sort(p.begin(), p.end(), [](const Coalition& a, const Coalition& b) { return a.members < b.members; });
}

}  // namespace

namespace {

// Block index of every prosumer, blocks numbered by their smallest member.
std::vector<int> assignment(const Partition& p) {
    std::vector<int> label;
    for (std::size_t i = 0; i < p.size(); ++i)
        for (int k : p[i].members) {
            if (k >= static_cast<int>(label.size())) label.resize(k + 1, -1);
            label[k] = static_cast<int>(i);
        }
    return label;
}

}  // namespace

bool partition_less(const Partition& a, const Partition& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return assignment(a) < assignment(b);
}

bool same_partition(const Partition& a, const Partition& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].members != b[i].members) return false;
    return true;
}

std::vector<Partition> enumerate_partitions(const Grid& grid, int cap) {
    std::vector<int> all(grid.num_prosumers());
    std::iota(all.begin(), all.end(), 0);
    return enumerate_partitions(grid, all, cap);
}

std::vector<Partition> enumerate_partitions(const Grid& grid, std::vector<int> active, int cap) {
    std::sort(active.begin(), active.end());
    active.erase(std::unique(active.begin(), active.end()), active.end());
    for (int k : active)
        if (k < 0 || k >= grid.num_prosumers()) throw Error(ErrorCode::UnknownProsumer, "prosumer index out of range");
    const int m = static_cast<int>(active.size());
    if (m > cap)
        throw Error(ErrorCode::TooManyProsumers,
                    std::to_string(m) + " prosumers exceed the enumeration cap of " + std::to_string(cap));
    std::vector<Partition> out;
    if (grid.num_prosumers() == 0) return out;

    std::map<std::vector<int>, std::pair<Coalition, EdgeMask>> cache;
    auto block = [&](const std::vector<int>& members) -> const std::pair<Coalition, EdgeMask>& {
        auto it = cache.find(members);
        if (it == cache.end()) {
            Coalition c = coalition_from_prosumers(grid, members);
            EdgeMask mask = edge_mask(grid, c);
            it = cache.emplace(members, std::make_pair(std::move(c), std::move(mask))).first;
        }
        return it->second;
    };

    // Restricted growth strings: label[i] <= 1 + max(label[0..i-1]).
    std::vector<int> label(m, 0);
    std::function<void(int, int)> rec = [&](int i, int used) {
        if (i == m) {
            std::vector<std::vector<int>> groups(used);
            for (int k = 0; k < m; ++k) groups[label[k]].push_back(active[k]);
            std::vector<char> fixed(grid.num_prosumers(), 1);
            for (int k : active) fixed[k] = 0;
            for (int k = 0; k < grid.num_prosumers(); ++k)
                if (fixed[k]) groups.push_back({k});
            std::vector<const std::pair<Coalition, EdgeMask>*> blocks;
            for (auto& grp : groups) blocks.push_back(&block(grp));
            for (int a = 0; a < used; ++a)
                for (int b = a + 1; b < used; ++b)
                    if (overlaps(blocks[a]->second, blocks[b]->second)) return;
            Partition p;
            for (auto* b : blocks) p.push_back(b->first);
            sort_blocks(p);
            out.push_back(std::move(p));
            return;
        }
        for (int l = 0; l <= used && l < m; ++l) {
            label[i] = l;
            rec(i + 1, std::max(used, l + 1));
        }
    };
    rec(0, 0);
    std::sort(out.begin(), out.end(), partition_less);
    return out;
}

Partition make_partition(const Grid& grid, const std::vector<std::vector<int>>& groups) {
    Partition p;
    std::vector<int> cover(grid.num_prosumers(), 0);
    for (const auto& g : groups) {
        p.push_back(coalition_from_prosumers(grid, g));
        for (int k : p.back().members) ++cover[k];
    }
    for (int k = 0; k < grid.num_prosumers(); ++k) {
        if (cover[k] == 0)
            throw Error(ErrorCode::InvalidPartition, "prosumer '" + grid.prosumer_id(k) + "' is not covered");
        if (cover[k] > 1)
            throw Error(ErrorCode::InvalidPartition, "prosumer '" + grid.prosumer_id(k) + "' appears in several blocks");
    }
    for (std::size_t a = 0; a < p.size(); ++a)
        for (std::size_t b = a + 1; b < p.size(); ++b) {
            std::vector<int> common;
            std::set_intersection(p[a].edges.begin(), p[a].edges.end(), p[b].edges.begin(), p[b].edges.end(),
                                  std::back_inserter(common));
            if (!common.empty())
                throw Error(ErrorCode::InvalidPartition,
                            "blocks " + coalition_label(grid, p[a]) + " and " + coalition_label(grid, p[b]) +
                                " share edge " + grid.node_id(common[0]) + "-" + grid.node_id(grid.parent(common[0])));
        }
    sort_blocks(p);
    return p;
}

std::vector<int> shared_nodes(const Grid& grid, const Partition& partition) {
    std::vector<int> count(grid.num_nodes(), 0);
    for (const auto& c : partition)
        for (int n : c.nodes) ++count[n];
    std::vector<int> out;
    for (int n = 0; n < grid.num_nodes(); ++n)
        if (count[n] > 1) out.push_back(n);
    return out;
}

SubGrid extract_subgrid(const Grid& grid, const Coalition& coalition) {
    SubGrid sub;
    std::vector<NodeSpec> nodes;
    std::vector<EdgeSpec> edges;
    for (int n : coalition.nodes) {
        NodeSpec spec;
        spec.id = grid.node_id(n);
        spec.dv_limit = grid.dv_limit(n);
        spec.is_prosumer = grid.prosumer_at(n) >= 0 && std::binary_search(coalition.members.begin(),
                                                                            coalition.members.end(),
                                                                            grid.prosumer_at(n));
        nodes.push_back(spec);
        sub.node_map.push_back(n);
    }
    for (int e : coalition.edges) {
        EdgeSpec spec;
        spec.from = grid.node_id(e);
        spec.to = grid.node_id(grid.parent(e));
        spec.r = grid.impedance(e).real();
        spec.x = grid.impedance(e).imag();
        spec.s_limit = grid.s_limit(e);
        edges.push_back(spec);
    }
    sub.grid = build_grid(nodes, edges, grid.node_id(coalition.top), grid.v_ref());
    for (int k = 0; k < sub.grid.num_prosumers(); ++k)
        sub.prosumer_map.push_back(grid.prosumer_at(sub.node_map[sub.grid.prosumer_node(k)]));
    return sub;
}

std::string coalition_label(const Grid& grid, const Coalition& coalition) {
    std::string s = "{";
    for (std::size_t i = 0; i < coalition.members.size(); ++i) {
        if (i) s += ",";
        s += grid.prosumer_id(coalition.members[i]);
    }
    return s + "}";
}

std::string partition_label(const Grid& grid, const Partition& partition) {
    std::string s;
    for (std::size_t i = 0; i < partition.size(); ++i) {
        if (i) s += "|";
        s += coalition_label(grid, partition[i]);
    }
    return s;
}

std::vector<std::vector<int>> parse_partition_spec(const Grid& grid, const std::string& spec) {
    std::vector<std::vector<int>> groups;
    std::stringstream blocks(spec);
    std::string block;
    auto trim = [](std::string s) {
        const char* ws = " \t{}";
        s.erase(0, s.find_first_not_of(ws));
        auto end = s.find_last_not_of(ws);
        s.erase(end == std::string::npos ? 0 : end + 1);
        return s;
    };
    while (std::getline(blocks, block, '|')) {
        std::vector<int> group;
        std::stringstream ids(block);
        std::string id;
        while (std::getline(ids, id, ',')) {
            id = trim(id);
            if (id.empty()) continue;
            group.push_back(grid.prosumer_index(id));
        }
        if (group.empty()) throw Error(ErrorCode::EmptyMemberSet, "empty group in partition spec '" + spec + "'");
        groups.push_back(group);
    }
    if (groups.empty()) throw Error(ErrorCode::InvalidPartition, "empty partition spec");
    return groups;
}

}  // namespace lempart
