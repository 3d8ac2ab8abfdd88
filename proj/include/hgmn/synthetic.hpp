#pragma once

#include <string>

#include "hgmn/common.hpp"
#include "hgmn/tensor.hpp"

namespace hgmn {

/// Two node types ("item", "context"), an item-context incidence and a
/// context-context similarity relation. Item labels are planted so the
/// item-context-item metapath carries class signal of the configured
/// strength: with probability `signal` an edge stays within the class,
/// otherwise it is uniform.
struct SyntheticSpec {
    Index items = 240;
    Index contexts = 60;
    int num_classes = 3;
    double signal = 0.9;
    Index item_edges = 3;     // item-context edges per item
    Index context_edges = 2;  // context-context edges per context
    Index item_feature_dim = 8;
    Index context_feature_dim = 8;
    std::uint64_t seed = 0;

    static SyntheticSpec from_json(const std::string& text);
    void validate() const;
};

/// Deterministic per seed; emits a complete graph document (nodes, edges,
/// metapaths, 60/20/20 splits over items). Regenerates with a shifted seed
/// up to 10 times if any labeled node ends up without a metapath instance.
std::string gen_synthetic(const SyntheticSpec& spec);

}  // namespace hgmn
