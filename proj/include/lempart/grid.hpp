#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace lempart {

struct NodeSpec {
    std::string id;
    double dv_limit = 0.0;   // per-unit squared; +inf means unconstrained
    bool is_prosumer = false;
};

struct EdgeSpec {
    std::string from;
    std::string to;
    double r = 0.0;
    double x = 0.0;
    double s_limit = 0.0;    // MVA; +inf means unconstrained
};

// Radial grid rooted at the PCC. Edges are identified by their child node:
// edge n runs from n to parent(n).
class Grid {
public:
    int num_nodes() const { return static_cast<int>(ids_.size()); }
    int pcc() const { return pcc_; }
    double v_ref() const { return v_ref_; }

    const std::string& node_id(int n) const { return ids_[n]; }
    int node_index(const std::string& id) const;

    int parent(int n) const { return parent_[n]; }
    const std::vector<int>& children(int n) const { return children_[n]; }
    int depth(int n) const { return depth_[n]; }
    // PCC first, every parent before its children.
    const std::vector<int>& order() const { return order_; }

    std::complex<double> impedance(int n) const { return z_[n]; }
    double s_limit(int n) const { return s_limit_[n]; }
    double dv_limit(int n) const { return dv_limit_[n]; }

    int num_prosumers() const { return static_cast<int>(prosumers_.size()); }
    int prosumer_node(int k) const { return prosumers_[k]; }
    // -1 when the node hosts no prosumer.
    int prosumer_at(int n) const { return prosumer_of_node_[n]; }
    const std::string& prosumer_id(int k) const { return ids_[prosumers_[k]]; }
    int prosumer_index(const std::string& id) const;

    // Edges and nodes on the path from n up to (excluding) the PCC.
    std::vector<int> path_to_pcc(int n) const;

private:
    friend Grid build_grid(const std::vector<NodeSpec>&, const std::vector<EdgeSpec>&,
                           const std::string&, double);
    friend class GridAccess;

    std::vector<std::string> ids_;
    std::vector<int> parent_;
    std::vector<std::vector<int>> children_;
    std::vector<int> depth_;
    std::vector<int> order_;
    std::vector<std::complex<double>> z_;
    std::vector<double> s_limit_;
    std::vector<double> dv_limit_;
    std::vector<int> prosumers_;
    std::vector<int> prosumer_of_node_;
    int pcc_ = 0;
    double v_ref_ = 1.0;
};

Grid build_grid(const std::vector<NodeSpec>& nodes, const std::vector<EdgeSpec>& edges,
                const std::string& pcc, double v_ref = 1.0);

struct Coalition {
    std::vector<int> members;   // prosumer indices, ascending
    std::vector<int> nodes;     // ascending node indices
    std::vector<int> edges;     // child node of each internal edge, ascending
    std::vector<int> boundary;  // ascending
    std::vector<int> internal;  // nodes \ boundary
    int top = -1;               // node closest to the PCC

    bool singleton() const { return members.size() == 1; }
    bool single_boundary() const { return boundary.size() == 1; }
    bool has_edge(int e) const;
    bool has_node(int n) const;
};

using Partition = std::vector<Coalition>;

Coalition coalition_from_prosumers(const Grid& grid, std::vector<int> members);

Coalition grand_coalition(const Grid& grid);

// Every coalition over a nonempty subset of parent's members whose subtree
// lies inside the parent's subtree, ordered by member list.
std::vector<Coalition> enumerate_connected_subcoalitions(const Grid& grid, const Coalition& parent);

inline constexpr int kDefaultPartitionCap = 10;

std::vector<Partition> enumerate_partitions(const Grid& grid, int cap = kDefaultPartitionCap);
// Partitions of the `active` prosumers; every other prosumer stays a singleton.
std::vector<Partition> enumerate_partitions(const Grid& grid, std::vector<int> active, int cap = kDefaultPartitionCap);

// Validates edge-disjointness and prosumer cover, then orders blocks.
Partition make_partition(const Grid& grid, const std::vector<std::vector<int>>& groups);

// Fewer blocks first, then lexicographic on the block index of each prosumer
// ({1,2}|{3} before {1}|{2,3}).
bool partition_less(const Partition& a, const Partition& b);
bool same_partition(const Partition& a, const Partition& b);

// Nodes that appear in more than one block.
std::vector<int> shared_nodes(const Grid& grid, const Partition& partition);

// Coalition restricted to its own subtree, rooted at the top node.
struct SubGrid {
    Grid grid;
    std::vector<int> node_map;      // sub node -> grid node
    std::vector<int> prosumer_map;  // sub prosumer -> grid prosumer
};
SubGrid extract_subgrid(const Grid& grid, const Coalition& coalition);

std::string coalition_label(const Grid& grid, const Coalition& coalition);
std::string partition_label(const Grid& grid, const Partition& partition);

// "1,2|3" -> [[1,2],[3]] in prosumer indices.
std::vector<std::vector<int>> parse_partition_spec(const Grid& grid, const std::string& spec);

}  // namespace lempart
