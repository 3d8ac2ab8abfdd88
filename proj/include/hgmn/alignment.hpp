#pragma once

#include <optional>

#include "hgmn/hetgraph.hpp"
#include "hgmn/tensor.hpp"

namespace hgmn {

/// Per-node-type affine map into the shared latent space of width d'.
struct TypeProjector {
    std::vector<Tensor> weight;  // per type, (d_type x d')
    std::vector<Tensor> bias;    // per type, (d')
};

/// Optional trainable map applied after the mean instance encoder.
struct LinearInstanceEncoder {
    Tensor weight;  // (d' x d')
    Tensor bias;    // (d')
};

/// Shared transform + query scoring one vector per metapath.
struct SemanticAttention {
    Tensor weight;  // (d' x d_att)
    Tensor bias;    // (d_att)
    Tensor query;   // (d_att x 1)
};

struct AlignmentParams {
    Index hidden_dim = 0;
    Index num_heads = 1;
    TypeProjector projector;
    std::vector<Tensor> instance_attention;  // per metapath, (2*d')
    SemanticAttention semantic;
    std::optional<LinearInstanceEncoder> linear_encoder;
};

/// Head-banded views of each metapath's attention vector, rebuilt once per
/// forward pass and shared across tokens.
struct AlignmentContext {
    std::vector<Tensor> a_src;  // per metapath, (d' x heads)
    std::vector<Tensor> a_dst;  // per metapath, (d' x heads)
};

AlignmentContext prepare_alignment(Tape& tape, const AlignmentParams& params);

/// h = W_A x + b_A for a single node feature row (1 x d_A).
Tensor project_node(Tape& tape, const TypeProjector& proj, TypeId type, const Tensor& x);

/// Projects every node and assembles the (n x d') latent matrix.
Tensor project_all(Tape& tape, const TypeProjector& proj, const HeteroGraph& g);

/// Mean of the projected vectors along one walk (start, intermediates, end),
/// optionally followed by the trainable linear encoder.
Tensor encode_instance(Tape& tape, std::span<const NodeId> instance_nodes, const Tensor& projected,
                       const std::optional<LinearInstanceEncoder>& encoder);

/// Attention over one node's instances of one metapath. Rows of `encoded`
/// are re-gathered in ascending key order first, so the reduction order --
/// and therefore the output bits -- do not depend on the caller's listing.
/// Per head: score = leaky_relu(a . [h_s || h_inst]), softmax over
/// instances, weighted sum of encodings; heads are averaged and the result
/// passed through leaky_relu.
Tensor aggregate_instances(Tape& tape, const Tensor& a_src, const Tensor& a_dst,
                           const Tensor& h_target, const Tensor& encoded,
                           std::span<const std::vector<NodeId>> keys);

/// Softmax-weighted combination over per-metapath vectors (rows of
/// `per_metapath`): score_k = q . tanh(W h_k + b).
Tensor aggregate_metapaths(Tape& tape, const SemanticAttention& sem, const Tensor& per_metapath);

/// Full per-token composition. Tokens with no instances under any schema
/// fall back to the target's projected feature row.
Tensor align_token(Tape& tape, const AlignmentParams& params, const AlignmentContext& ctx,
                   const Tensor& projected, const Token& token);

}  // namespace hgmn
