#pragma once

#include "hgmn/hetgraph.hpp"
#include "hgmn/tensor.hpp"

namespace hgmn {

enum class InnerOrderMode { Count, Random };
enum class OuterOrderMode { Degree, Random };

/// Per-type node sequences, keyed by metapath-instance count: nodes with the
/// most instances sit at the end of the sequence, ties broken by node id.
struct OrderedGroups {
    std::vector<std::vector<NodeId>> order;  // per node type
    std::vector<std::vector<Index>> keys;    // count per position
};

/// One sequence over all nodes, keyed by total degree ascending; hubs last.
struct GlobalOrder {
    std::vector<NodeId> order;
    std::vector<Index> inverse;  // inverse[node] = position
    std::vector<Index> keys;
};

OrderedGroups inner_order(const HeteroGraph& g, std::span<const MetapathSchema> schemas,
                          InnerOrderMode mode, std::uint64_t seed = 0,
                          const EnumOptions& opts = {});

GlobalOrder outer_order(const HeteroGraph& g, OuterOrderMode mode, std::uint64_t seed = 0);

/// Gather per-node row vectors into sequence order.
Tensor apply_order(Tape& tape, const Tensor& per_node, std::span<const NodeId> order);

/// Inverse of apply_order; rows not named by `order` come back zero, so a
/// partition of the node set scatters back by summation.
Tensor scatter_back(Tape& tape, const Tensor& sequence, std::span<const NodeId> order,
                    Index num_rows);

}  // namespace hgmn
