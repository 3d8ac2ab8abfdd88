#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "hgmn/common.hpp"
#include "hgmn/tensor.hpp"

namespace hgmn {

using NodeId = std::int64_t;
using TypeId = std::int32_t;
using EdgeTypeId = std::int32_t;

/// Ordered node-type / edge-type sequence. Consecutive node types must match
/// each edge type's signature (forward, or reversed for symmetric types).
struct MetapathSchema {
    std::string name;
    std::vector<TypeId> node_types;      // length >= 2
    std::vector<EdgeTypeId> edge_types;  // length == node_types.size() - 1

    Index length() const { return static_cast<Index>(node_types.size()); }
};

/// A concrete typed walk conforming to a schema.
struct MetapathInstance {
    int schema_index = -1;
    std::vector<NodeId> nodes;
};

/// Per-node subgraph token: for each schema, the walks rooted at the target.
struct Token {
    NodeId target = -1;
    std::vector<std::vector<MetapathInstance>> per_schema;

    bool degenerate() const {
        for (const auto& list : per_schema)
            if (!list.empty()) return false;
        return true;
    }
    std::size_t instance_count() const {
        std::size_t n = 0;
        for (const auto& list : per_schema) n += list.size();
        return n;
    }
};

/// Node set touched by any instance of one schema (inspection view).
struct MetapathGraph {
    int schema_index = -1;
    std::vector<NodeId> nodes;  // sorted, unique
};

struct Splits {
    std::vector<NodeId> train, val, test;
};

struct EnumOptions {
    Index max_instances_per_node = 200;
    bool simple_paths_only = false;

    static EnumOptions unbounded() {
        return EnumOptions{std::numeric_limits<Index>::max(), false};
    }
};

/// Typed graph with per-edge-type CSR adjacency. Symmetric edge types store
/// both arc directions; asymmetric types store forward arcs only (with a
/// separate reverse view used for degree counting). Adjacency lists are
/// sorted by neighbor id. Immutable after load.
class HeteroGraph {
public:
    struct NodeTypeInfo {
        std::string name;
        Index feature_dim = 0;
    };
    struct EdgeTypeInfo {
        std::string name;
        TypeId src = -1;
        TypeId dst = -1;
        bool symmetric = false;
    };
    struct Csr {
        std::vector<Index> offsets;  // size n+1
        std::vector<NodeId> targets;

        std::span<const NodeId> neighbors(NodeId v) const {
            return {targets.data() + offsets[static_cast<std::size_t>(v)],
                    targets.data() + offsets[static_cast<std::size_t>(v) + 1]};
        }
    };

    std::vector<NodeTypeInfo> node_types;
    std::vector<EdgeTypeInfo> edge_types;
    std::vector<TypeId> node_type;                // per node
    std::vector<Eigen::VectorXd> features;        // per node, width per type
    std::vector<int> labels;                      // -1 when absent
    std::vector<Csr> adjacency;                   // per edge type (traversal arcs)
    std::vector<Index> total_degree;              // incident edges, all types
    std::vector<MetapathSchema> metapaths;
    Splits splits;

    Index num_nodes() const { return static_cast<Index>(node_type.size()); }
    Index num_node_types() const { return static_cast<Index>(node_types.size()); }
    Index num_edge_types() const { return static_cast<Index>(edge_types.size()); }
    TypeId type_of(NodeId v) const;
    std::vector<NodeId> nodes_of_type(TypeId t) const;
    std::optional<TypeId> node_type_id(const std::string& name) const;
    std::optional<EdgeTypeId> edge_type_id(const std::string& name) const;
    const MetapathSchema* find_metapath(const std::string& name) const;
    int num_classes() const;

    /// Whether the arc u -> (next hop) may be traversed under edge type e
    /// given the schema step (from, to). Symmetric types traverse both ways.
    bool step_allowed(EdgeTypeId e, TypeId from, TypeId to) const;
};

/// Parses and validates a UTF-8 JSON graph document.
HeteroGraph load_graph(const std::string& json_text);
HeteroGraph load_graph_file(const std::string& path);

/// All typed walks from `start` following `schema`, in lexicographic order
/// of node-id sequences, truncated at opts.max_instances_per_node.
std::vector<MetapathInstance> enumerate_instances(const HeteroGraph& g,
                                                  const MetapathSchema& schema, int schema_index,
                                                  NodeId start,
                                                  const EnumOptions& opts = {});

/// Sum of instance counts over the schemas whose start type matches the node.
Index count_instances(const HeteroGraph& g, std::span<const MetapathSchema> schemas, NodeId node,
                      const EnumOptions& opts = {});

Token build_token(const HeteroGraph& g, std::span<const MetapathSchema> schemas, NodeId node,
                  const EnumOptions& opts = {});

/// Total incident edge count across all edge types.
Index degree(const HeteroGraph& g, NodeId node);

MetapathGraph metapath_graph(const HeteroGraph& g, const MetapathSchema& schema, int schema_index,
                             const EnumOptions& opts = {});

}  // namespace hgmn
