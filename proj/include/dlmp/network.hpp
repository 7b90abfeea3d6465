#pragma once

#include <Eigen/Dense>

#include <string>
#include <string_view>
#include <vector>

namespace dlmp {

struct BusSpec {
    int id = 0;
    std::string name;
};

struct LineSpec {
    int from = 0;
    int to = 0;
    double r_pu = 0.0;
    double x_pu = 0.0;
    double p_limit_pu = 0.0;
    double q_limit_pu = 0.0;
};

struct AggregatorSpec {
    std::string label;
    int node = 0;
};

// Feeder as written in a file: external bus ids, lines in any order.
struct FeederDescription {
    double base_mva = 1.0;
    double base_kv = 1.0;
    double v0_pu = 1.0;
    double angle0_rad = 0.0;
    double epsilon_pu = 0.05;
    std::vector<BusSpec> buses;
    std::vector<LineSpec> lines;
    std::vector<AggregatorSpec> aggregators;
};

// Validated radial feeder. Internal node 0 is the substation; nodes 1..N are in
// depth-first preorder so parent(k) < k. Per-line arrays have length N and
// entry i describes the line feeding node i + 1.
struct RadialNetwork {
    double base_mva = 1.0;
    double base_kv = 1.0;
    double v0 = 1.0;
    double delta0 = 0.0;
    double epsilon = 0.05;

    std::vector<int> bus_id;          // size N + 1, external id per internal node
    std::vector<std::string> bus_name; // size N + 1
    std::vector<int> parent;          // size N, internal parent of node i + 1
    std::vector<double> r, x, p_limit, q_limit;

    std::vector<std::string> aggregator_label;
    std::vector<int> aggregator_node; // internal node ids in 1..N

    std::size_t node_count() const { return parent.size(); }
    std::size_t aggregator_count() const { return aggregator_node.size(); }
    int parent_of(int node) const { return parent[static_cast<std::size_t>(node - 1)]; }
    // Internal node for an external bus id; throws FeederError if unknown.
    int internal_node(int external_id) const;

    bool operator==(const RadialNetwork&) const = default;
};

struct TopologyOperators {
    // Indexed by internal node (entry 0 is the substation). Sets hold internal
    // ids of non-substation nodes, sorted ascending.
    std::vector<std::vector<int>> downstream;
    std::vector<std::vector<int>> upstream;
    // N x N, row/column i correspond to node i + 1.
    Eigen::MatrixXd tree;
    // (E v)_k = v_{u(k)} - v_k with v_0 dropped; the substation term is
    // substation_offset * V0.
    Eigen::MatrixXd parent_difference;
    Eigen::VectorXd substation_offset;
};

RadialNetwork build_network(const FeederDescription& desc);
FeederDescription describe(const RadialNetwork& net);

RadialNetwork parse_feeder(std::string_view text);
RadialNetwork load_feeder(const std::string& path);
std::string serialize_feeder(const RadialNetwork& net);

TopologyOperators build_topology(const RadialNetwork& net);

// Path of the bundled modified IEEE 37-node feeder.
std::string bundled_feeder_path();

} // namespace dlmp
