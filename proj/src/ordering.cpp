#include "hgmn/ordering.hpp"

#include <algorithm>

namespace hgmn {

namespace {

// Fisher-Yates with explicit draws so shuffles are reproducible across
// standard libraries.
void seeded_shuffle(std::vector<NodeId>& ids, Rng& rng) {
    for (std::size_t i = ids.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(ids[i - 1], ids[j]);
    }
}

void stable_sort_by_key(std::vector<NodeId>& ids, const std::vector<Index>& key_of) {
    std::sort(ids.begin(), ids.end(), [&](NodeId a, NodeId b) {
        const Index ka = key_of[static_cast<std::size_t>(a)];
        const Index kb = key_of[static_cast<std::size_t>(b)];
        if (ka != kb) return ka < kb;
        return a < b;  // ascending id on ties
    });
}

}  // namespace

OrderedGroups inner_order(const HeteroGraph& g, std::span<const MetapathSchema> schemas,
                          InnerOrderMode mode, std::uint64_t seed, const EnumOptions& opts) {
    std::vector<Index> key_of(static_cast<std::size_t>(g.num_nodes()), 0);
    for (NodeId v = 0; v < g.num_nodes(); ++v)
        key_of[static_cast<std::size_t>(v)] = count_instances(g, schemas, v, opts);

    OrderedGroups groups;
    groups.order.resize(static_cast<std::size_t>(g.num_node_types()));
    groups.keys.resize(static_cast<std::size_t>(g.num_node_types()));
    for (TypeId t = 0; t < g.num_node_types(); ++t) {
        auto& ids = groups.order[static_cast<std::size_t>(t)];
        ids = g.nodes_of_type(t);
        if (mode == InnerOrderMode::Count) {
            stable_sort_by_key(ids, key_of);
        } else {
            Rng rng(seed + 0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(t + 1));
            seeded_shuffle(ids, rng);
        }
        auto& keys = groups.keys[static_cast<std::size_t>(t)];
        keys.reserve(ids.size());
        for (NodeId v : ids) keys.push_back(key_of[static_cast<std::size_t>(v)]);
    }
    return groups;
}

GlobalOrder outer_order(const HeteroGraph& g, OuterOrderMode mode, std::uint64_t seed) {
    GlobalOrder go;
    go.order.resize(static_cast<std::size_t>(g.num_nodes()));
    for (NodeId v = 0; v < g.num_nodes(); ++v) go.order[static_cast<std::size_t>(v)] = v;
    if (mode == OuterOrderMode::Degree) {
        std::vector<Index> key_of(g.total_degree.begin(), g.total_degree.end());
        stable_sort_by_key(go.order, key_of);
    } else {
        Rng rng(seed);
        seeded_shuffle(go.order, rng);
    }
    go.inverse.assign(go.order.size(), 0);
    go.keys.reserve(go.order.size());
    for (std::size_t pos = 0; pos < go.order.size(); ++pos) {
        go.inverse[static_cast<std::size_t>(go.order[pos])] = static_cast<Index>(pos);
        go.keys.push_back(g.total_degree[static_cast<std::size_t>(go.order[pos])]);
    }
    return go;
}

Tensor apply_order(Tape& tape, const Tensor& per_node, std::span<const NodeId> order) {
    std::vector<Index> ids(order.begin(), order.end());
    return gather_rows(tape, per_node, ids);
}

Tensor scatter_back(Tape& tape, const Tensor& sequence, std::span<const NodeId> order,
                    Index num_rows) {
    if (static_cast<Index>(order.size()) != sequence.rows())
        throw ContractError("scatter_back: order covers " + std::to_string(order.size()) +
                            " rows, sequence has " + std::to_string(sequence.rows()));
    std::vector<Index> ids(order.begin(), order.end());
    return scatter_rows(tape, sequence, ids, num_rows);
}

}  // namespace hgmn
