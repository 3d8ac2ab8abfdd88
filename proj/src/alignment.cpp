#include "hgmn/alignment.hpp"

#include <algorithm>
#include <numeric>

namespace hgmn {

AlignmentContext prepare_alignment(Tape& tape, const AlignmentParams& params) {
    const Index d = params.hidden_dim;
    const Index heads = params.num_heads;
    if (heads <= 0 || d % heads != 0)
        throw ContractError("alignment: hidden_dim must be divisible by num_heads");
    const Index w = d / heads;
    AlignmentContext ctx;
    for (const Tensor& a : params.instance_attention) {
        if (a.numel() != 2 * d)
            throw DimensionError("alignment: attention vector has " + std::to_string(a.numel()) +
                                 " entries, expected " + std::to_string(2 * d));
        // band layout: head h owns a[h*2w .. h*2w+2w), target half first
        std::vector<Index> src_idx(static_cast<std::size_t>(d * heads), -1);
        std::vector<Index> dst_idx(static_cast<std::size_t>(d * heads), -1);
        for (Index h = 0; h < heads; ++h) {
            for (Index j = 0; j < w; ++j) {
                const Index r = h * w + j;
                src_idx[static_cast<std::size_t>(r * heads + h)] = h * 2 * w + j;
                dst_idx[static_cast<std::size_t>(r * heads + h)] = h * 2 * w + w + j;
            }
        }
        ctx.a_src.push_back(reindex(tape, a, {d, heads}, src_idx));
        ctx.a_dst.push_back(reindex(tape, a, {d, heads}, dst_idx));
    }
    return ctx;
}

Tensor project_node(Tape& tape, const TypeProjector& proj, TypeId type, const Tensor& x) {
    if (type < 0 || static_cast<std::size_t>(type) >= proj.weight.size())
        throw ContractError("project_node: unknown node type " + std::to_string(type));
    const Tensor& w = proj.weight[static_cast<std::size_t>(type)];
    if (x.cols() != w.rows())
        throw DimensionError("project_node: feature width " + std::to_string(x.cols()) +
                             " does not match type width " + std::to_string(w.rows()));
    return add(tape, matmul(tape, x, w), proj.bias[static_cast<std::size_t>(type)]);
}

Tensor project_all(Tape& tape, const TypeProjector& proj, const HeteroGraph& g) {
    if (proj.weight.size() != static_cast<std::size_t>(g.num_node_types()))
        throw ContractError("project_all: projector does not cover the graph's node types");
    const Index n = g.num_nodes();
    Tensor out;
    for (TypeId t = 0; t < g.num_node_types(); ++t) {
        const std::vector<NodeId> ids = g.nodes_of_type(t);
        if (ids.empty()) continue;
        const Index d_t = g.node_types[static_cast<std::size_t>(t)].feature_dim;
        Tensor x = Tensor::zeros({static_cast<Index>(ids.size()), d_t});
        for (std::size_t i = 0; i < ids.size(); ++i)
            for (Index j = 0; j < d_t; ++j)
                x.value_flat()[static_cast<Index>(i) * d_t + j] =
                    g.features[static_cast<std::size_t>(ids[i])][j];
        Tensor h = add(tape, matmul(tape, x, proj.weight[static_cast<std::size_t>(t)]),
                       proj.bias[static_cast<std::size_t>(t)]);
        std::vector<Index> rows(ids.begin(), ids.end());
        Tensor placed = scatter_rows(tape, h, rows, n);
        out = out.defined() ? add(tape, out, placed) : placed;
    }
    return out;
}

Tensor encode_instance(Tape& tape, std::span<const NodeId> instance_nodes,
                       const Tensor& projected,
                       const std::optional<LinearInstanceEncoder>& encoder) {
    if (instance_nodes.empty()) throw ContractError("encode_instance: empty instance");
    std::vector<Index> ids(instance_nodes.begin(), instance_nodes.end());
    Tensor m = gather_rows(tape, projected, ids);
    Tensor ones = Tensor::full({1, static_cast<Index>(ids.size())},
                               1.0 / static_cast<double>(ids.size()));
    Tensor mean = matmul(tape, ones, m);
    if (encoder)
        mean = add(tape, matmul(tape, mean, encoder->weight), encoder->bias);
    return mean;
}

Tensor aggregate_instances(Tape& tape, const Tensor& a_src, const Tensor& a_dst,
                           const Tensor& h_target, const Tensor& encoded,
                           std::span<const std::vector<NodeId>> keys) {
    const Index k = encoded.rows();
    if (k == 0) throw ContractError("aggregate_instances: empty instance list");
    if (static_cast<Index>(keys.size()) != k)
        throw ContractError("aggregate_instances: key count does not match instance count");
    const Index heads = a_src.cols();

    std::vector<Index> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::sort(perm.begin(), perm.end(), [&](Index a, Index b) {
        return keys[static_cast<std::size_t>(a)] < keys[static_cast<std::size_t>(b)];
    });
    Tensor e_sorted = gather_rows(tape, encoded, perm);

    Tensor e = leaky_relu(
        tape, add(tape, matmul(tape, e_sorted, a_dst), matmul(tape, h_target, a_src)));
    Tensor alpha = softmax_lastdim(tape, transpose(tape, e));  // (heads x k)
    Tensor head_out = matmul(tape, alpha, e_sorted);           // (heads x d')
    Tensor mean_row = Tensor::full({1, heads}, 1.0 / static_cast<double>(heads));
    return leaky_relu(tape, matmul(tape, mean_row, head_out));
}

Tensor aggregate_metapaths(Tape& tape, const SemanticAttention& sem,
                           const Tensor& per_metapath) {
    if (per_metapath.rows() < 1)
        throw ContractError("aggregate_metapaths: no metapath vectors");
    Tensor scores = matmul(
        tape, tanh(tape, add(tape, matmul(tape, per_metapath, sem.weight), sem.bias)),
        sem.query);                                            // (K x 1)
    Tensor beta = softmax_lastdim(tape, transpose(tape, scores));  // (1 x K)
    return matmul(tape, beta, per_metapath);
}

Tensor align_token(Tape& tape, const AlignmentParams& params, const AlignmentContext& ctx,
                   const Tensor& projected, const Token& token) {
    if (token.per_schema.size() != ctx.a_src.size())
        throw ContractError("align_token: token was built over a different schema list");
    Tensor h_target = gather_rows(tape, projected,
                                  std::vector<Index>{static_cast<Index>(token.target)});
    if (token.degenerate()) return h_target;

    std::vector<Tensor> per_metapath;
    for (std::size_t s = 0; s < token.per_schema.size(); ++s) {
        const auto& instances = token.per_schema[s];
        if (instances.empty()) continue;
        const Index walk_len = static_cast<Index>(instances.front().nodes.size());
        const Index k = static_cast<Index>(instances.size());

        // one gather per walk position, summed, beats per-instance encoding
        Tensor acc;
        for (Index pos = 0; pos < walk_len; ++pos) {
            std::vector<Index> ids;
            ids.reserve(static_cast<std::size_t>(k));
            for (const auto& inst : instances)
                ids.push_back(static_cast<Index>(inst.nodes[static_cast<std::size_t>(pos)]));
            Tensor gathered = gather_rows(tape, projected, ids);
            acc = acc.defined() ? add(tape, acc, gathered) : gathered;
        }
        Tensor encoded = scale(tape, acc, 1.0 / static_cast<double>(walk_len));
        if (params.linear_encoder)
            encoded = add(tape, matmul(tape, encoded, params.linear_encoder->weight),
                          params.linear_encoder->bias);

        std::vector<std::vector<NodeId>> keys;
        keys.reserve(instances.size());
        for (const auto& inst : instances) keys.push_back(inst.nodes);
        per_metapath.push_back(aggregate_instances(tape, ctx.a_src[s], ctx.a_dst[s], h_target,
                                                   encoded, keys));
    }
    Tensor stacked = stack_rows(tape, per_metapath);
    return aggregate_metapaths(tape, params.semantic, stacked);
}

}  // namespace hgmn
